//! Multi-task prediction of disease onsets from longitudinal lab tests.
//!
//! The crate covers the whole pipeline: cohort ingestion and sliding-window
//! labeling ([`data`]), a small tensor library with hand-written backward
//! passes ([`tensor`]), the multi-resolution CNN, the lab-projection CNN,
//! a peephole LSTM and an engineered-feature logistic regression
//! ([`models`]), weighted multi-task training with Adadelta ([`training`]),
//! and AUC reporting ([`evaluation`]).

pub mod container;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{Mode, Tensor};

/// Deterministic RNG used for initialization, shuffling, dropout and synthesis.
pub type SeededRng = rand_chacha::ChaCha8Rng;
