//! Command implementations behind the `onset` binary: synthetic cohort
//! generation, example preparation, training, evaluation and feature
//! reports, all driven by a TOML [`RunConfig`].

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;

pub use commands::{evaluate, generate, prepare, report_features, train};
pub use config::{DiseaseEntry, RunConfig, Task, CKD_OUTCOME};
pub use manifest::{Manifest, MANIFEST_FILE};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] onset_core::Error),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 for configuration problems, 3 for data and
    /// file problems, 4 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        use onset_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Core(e) => match e {
                E::Config(_) | E::Parameter(_) | E::Length { .. } => 2,
                E::Numeric(_) | E::Nondeterministic { .. } | E::DegenerateBatch(_) => 4,
                E::Dimension(_)
                | E::Data(_)
                | E::Malformed { .. }
                | E::UnknownLab(_)
                | E::Format(_)
                | E::Io { .. }
                | E::Json(_) => 3,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
