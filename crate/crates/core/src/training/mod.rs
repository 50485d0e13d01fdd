//! Weighted multi-task loss, Adadelta, and the epoch loop with
//! validation-AUC epoch selection.

mod adadelta;
mod check;
mod fit;
mod loss;

pub use adadelta::{adadelta_update, Adadelta};
pub use check::{network_grad_check, train_loss};
pub use fit::{batches, fit, fit_any, validation_aucs, EpochRecord, FitResult, TrainConfig};
pub use loss::{
    class_weights, compute_disease_weights, weighted_nll, DiseaseWeights, Nll, Weighting, CLIP,
};
