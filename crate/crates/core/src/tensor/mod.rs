//! Dense row-major tensors and the differentiable primitives the models are
//! built from.
//!
//! Every primitive comes as a forward function returning its output plus a
//! cache, and a backward function consuming that cache. There is no tape:
//! the models chain the calls by hand.

mod activation;
mod affine;
mod batch_norm;
mod conv;
mod dropout;
mod gradcheck;
pub(crate) mod linalg;
mod pool;

pub use activation::{
    activation_backward, activation_forward, sigmoid, Activation, ActivationCache,
};
pub use affine::{affine_backward, affine_forward, AffineGrads};
pub use batch_norm::{
    batch_norm_backward, batch_norm_forward, BatchNormCache, BatchNormGrads, BnState, BN_EPSILON,
    BN_MOMENTUM,
};
pub use conv::{conv1d_backward, conv1d_forward, Conv1dGrads};
pub use dropout::{dropout_backward, dropout_forward, DropoutCache};
pub use gradcheck::{grad_check, GradCheckReport, ParamCheck};
pub use pool::{maxpool1d_backward, maxpool1d_forward, PoolCache};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether a forward pass runs with training-time behaviour (batch
/// statistics, random dropout) or deterministic inference behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Infer,
}

/// A dense row-major array of `f64` with shape metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// 1-d tensor from a vector.
    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Extent of axis `axis`.
    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Dimension(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.expect_shape(other.shape())?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    pub(crate) fn expect_shape(&self, shape: &[usize]) -> Result<()> {
        if self.shape != shape {
            return Err(Error::Dimension(format!(
                "expected shape {shape:?}, got {:?}",
                self.shape
            )));
        }
        Ok(())
    }

    pub(crate) fn expect_rank(&self, rank: usize, what: &str) -> Result<()> {
        if self.shape.len() != rank {
            return Err(Error::Dimension(format!(
                "{what} must have rank {rank}, got shape {:?}",
                self.shape
            )));
        }
        Ok(())
    }

    /// Views a rank-2 `[c, l]` tensor as `[1, c, l]`; rank-3 tensors pass through.
    pub(crate) fn as_ncl(&self, what: &str) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[c, l] => Ok((1, c, l)),
            &[n, c, l] => Ok((n, c, l)),
            other => Err(Error::Dimension(format!(
                "{what} must be [channels, length] or [batch, channels, length], got {other:?}"
            ))),
        }
    }
}
