//! Declarative run configuration, read from TOML.

use std::path::{Path, PathBuf};

use onset_core::data::{CkdConfig, SynthSpec, WindowConfig};
use onset_core::models::{Arch, BaselineConfig, Cnn1Spec, Cnn2Spec, LstmSpec};
use onset_core::training::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    #[default]
    Multidisease,
    Ckd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiseaseEntry {
    pub code: String,
    #[serde(default)]
    pub description: String,
}

/// Label of the single outcome in the kidney-failure task.
pub const CKD_OUTCOME: &str = "kidney_failure";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    /// Master seed; required by generate, prepare and train.
    pub seed: Option<u64>,
    /// Root of every artifact directory.
    pub out: PathBuf,
    /// Cohort CSV directory; defaults to `<out>/cohort`.
    pub cohort: Option<PathBuf>,
    pub window: WindowConfig,
    /// Lab codes forming the input rows; empty means the synthetic panel.
    pub labs: Vec<String>,
    /// Output diseases; empty means the planted synthetic diseases.
    pub diseases: Vec<DiseaseEntry>,
    /// Train, validation and test fractions of patients.
    pub split: [f64; 3],
    /// Compute normalization statistics from training patients only.
    pub stats_from_train: bool,
    pub synth: SynthSpec,
    pub ckd: CkdConfig,
    /// Models trained when `train` is given no `--arch`.
    pub models: Vec<Arch>,
    pub lstm: LstmSpec,
    pub cnn1: Cnn1Spec,
    pub cnn2: Cnn2Spec,
    pub train: TrainConfig,
    pub baseline: BaselineConfig,
    /// Features listed per disease by report-features.
    pub top_features: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: Task::Multidisease,
            seed: None,
            out: PathBuf::from("run"),
            cohort: None,
            window: WindowConfig::default(),
            labs: Vec::new(),
            diseases: Vec::new(),
            split: [0.7, 0.15, 0.15],
            stats_from_train: false,
            synth: SynthSpec::default(),
            ckd: CkdConfig::default(),
            models: vec![Arch::Lr, Arch::Lstm, Arch::Cnn1, Arch::Cnn2],
            lstm: LstmSpec::default(),
            cnn1: Cnn1Spec::default(),
            cnn2: Cnn2Spec::default(),
            train: TrainConfig::default(),
            baseline: BaselineConfig::default(),
            top_features: 10,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config("a seed is required (config `seed` or --seed)".into()))
    }

    pub fn cohort_dir(&self) -> PathBuf {
        self.cohort
            .clone()
            .unwrap_or_else(|| self.out.join("cohort"))
    }

    pub fn prepared_dir(&self) -> PathBuf {
        self.out.join("prepared")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.out.join("models")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.out.join("reports")
    }

    pub fn lab_codes(&self) -> Vec<String> {
        if self.labs.is_empty() {
            self.synth.lab_codes()
        } else {
            self.labs.clone()
        }
    }

    /// `(code, description)` of every output disease.
    pub fn disease_list(&self) -> Vec<(String, String)> {
        match self.task {
            Task::Ckd => vec![(CKD_OUTCOME.into(), "dialysis or kidney transplant".into())],
            Task::Multidisease if self.diseases.is_empty() => self
                .synth
                .diseases
                .iter()
                .map(|d| (d.code.clone(), d.description.clone()))
                .collect(),
            Task::Multidisease => self
                .diseases
                .iter()
                .map(|d| (d.code.clone(), d.description.clone()))
                .collect(),
        }
    }

    pub fn arch_spec(&self, arch: Arch) -> serde_json::Value {
        let v = match arch {
            Arch::Lstm => serde_json::to_value(&self.lstm),
            Arch::Cnn1 => serde_json::to_value(&self.cnn1),
            Arch::Cnn2 => serde_json::to_value(&self.cnn2),
            Arch::Lr => serde_json::to_value(&self.baseline),
        };
        v.expect("specs serialize")
    }

    /// Hash of everything that determines the artifacts; the output root is
    /// left out so identical runs in different directories agree.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        sha256_hex(
            serde_json::to_string(&c)
                .expect("config serializes")
                .as_bytes(),
        )
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn nested_sections_parse() {
        let c = RunConfig::parse(
            r#"
            task = "multidisease"
            seed = 4
            out = "x"
            models = ["cnn2", "lr"]

            [window]
            stride = 12

            [synth]
            patients = 10

            [[synth.diseases]]
            code = "T"
            kind = "temporal_order"
            first_lab = 0
            second_lab = 1

            [[baseline.grid]]
            l1 = inf
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, Some(4));
        assert_eq!(c.window.stride, 12);
        assert_eq!(c.window.window, 36);
        assert_eq!(c.synth.patients, 10);
        assert_eq!(c.disease_list(), [("T".to_string(), String::new())]);
        assert_eq!(c.models, [Arch::Cnn2, Arch::Lr]);
        assert_eq!(c.baseline.grid[0].l1, f64::INFINITY);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            RunConfig::parse("sede = 3"),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn hash_ignores_output_root_only() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.seed = Some(1);
        assert_ne!(a.hash(), b.hash());
    }
}
