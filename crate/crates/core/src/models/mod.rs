//! The predictors: multi-resolution CNN, lab-projection CNN, peephole LSTM,
//! the engineered-feature logistic regression, and the ensemble combiner.

mod baseline;
mod checkpoint;
mod cnn1;
mod cnn2;
mod ensemble;
mod layers;
mod lstm;
mod params;

pub use baseline::{
    baseline_feature_names, extract_baseline_features, fit_with_selection, BaselineConfig,
    BaselineModel, DiseaseFit, LogisticRegression, RegPoint,
};
pub use checkpoint::{checkpoint_arch, load_network, AnyNetwork};
pub use cnn1::{Cnn1, Cnn1Levels, Cnn1Spec};
pub use cnn2::{Cnn2, Cnn2Spec};
pub use ensemble::ensemble_predict;
pub use layers::Pass;
pub use lstm::{Lstm, LstmSpec};
pub use params::{Grads, Param, ParamKind, ParamSet, StatUpdate};

use serde::{Deserialize, Serialize};

use crate::data::Example;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::SeededRng;
use rand::SeedableRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Lr,
    Lstm,
    Cnn1,
    Cnn2,
}

impl Arch {
    pub const ALL: [Arch; 4] = [Arch::Lr, Arch::Lstm, Arch::Cnn1, Arch::Cnn2];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Lr => "lr",
            Arch::Lstm => "lstm",
            Arch::Cnn1 => "cnn1",
            Arch::Cnn2 => "cnn2",
        }
    }

    pub fn is_deep(self) -> bool {
        !matches!(self, Arch::Lr)
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown architecture {s:?}")))
    }
}

/// Input and output sizes shared by every architecture: `labs` rows (D),
/// `window` months (B) and `diseases` heads (M).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDims {
    pub labs: usize,
    pub window: usize,
    pub diseases: usize,
}

/// What to do when a kernel is longer than the sequence it is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClampPolicy {
    /// Shorten the kernel to the sequence length.
    #[default]
    Clamp,
    /// Refuse the configuration.
    Error,
}

impl ClampPolicy {
    pub(crate) fn kernel_for(self, kernel: usize, length: usize, what: &str) -> Result<usize> {
        if length == 0 {
            return Err(Error::Config(format!("{what}: sequence is empty")));
        }
        if kernel <= length {
            return Ok(kernel);
        }
        match self {
            ClampPolicy::Clamp => Ok(length),
            ClampPolicy::Error => Err(Error::Config(format!(
                "{what}: kernel of length {kernel} exceeds sequence length {length}"
            ))),
        }
    }
}

/// A network trained by backpropagation.
pub trait Network: Send + Sync {
    type Cache: Send;

    fn arch(&self) -> Arch;

    fn dims(&self) -> InputDims;

    fn params(&self) -> &ParamSet;

    fn params_mut(&mut self) -> &mut ParamSet;

    /// Architecture hyperparameters, stored alongside checkpoints.
    fn spec_json(&self) -> serde_json::Value;

    /// Stacks examples into the input layout this network expects.
    fn input(&self, examples: &[&Example]) -> Result<Tensor>;

    /// Returns `[batch × diseases]` probabilities.
    fn forward(&self, input: &Tensor, pass: &mut Pass) -> Result<(Tensor, Self::Cache)>;

    fn backward(&self, cache: &Self::Cache, grad_probs: &Tensor) -> Result<Grads>;

    /// Inference-mode probabilities for a set of examples, in chunks.
    fn predict(&self, examples: &[&Example]) -> Result<Tensor> {
        let m = self.dims().diseases;
        let mut out = Vec::with_capacity(examples.len() * m);
        // inference never draws from the generator
        let mut rng = SeededRng::seed_from_u64(0);
        for chunk in examples.chunks(1024) {
            let x = self.input(chunk)?;
            let mut pass = Pass::infer(&mut rng);
            let (probs, _) = self.forward(&x, &mut pass)?;
            out.extend_from_slice(probs.data());
        }
        Tensor::new(vec![examples.len(), m], out)
    }
}

/// `[batch, D, B]` input for the convolutional networks.
pub(crate) fn stack_lab_major(examples: &[&Example], dims: InputDims) -> Result<Tensor> {
    let per = dims.labs * dims.window;
    let mut data = Vec::with_capacity(examples.len() * per);
    for e in examples {
        e.x.expect_shape(&[dims.labs, dims.window])?;
        data.extend_from_slice(e.x.data());
    }
    Tensor::new(vec![examples.len(), dims.labs, dims.window], data)
}
