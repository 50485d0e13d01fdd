use crate::error::{Error, Result};

use super::{Mode, Tensor};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Running statistics of one batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BnState {
    pub mean: Tensor,
    pub var: Tensor,
    pub momentum: f64,
}

impl BnState {
    pub fn new(features: usize) -> Self {
        Self {
            mean: Tensor::zeros(&[features]),
            var: Tensor::filled(&[features], 1.0),
            momentum: BN_MOMENTUM,
        }
    }

    /// Folds the batch statistics of a train-mode pass into the running averages.
    pub fn update(&mut self, cache: &BatchNormCache) {
        update_running_stats(&mut self.mean, &mut self.var, cache, self.momentum);
    }
}

/// Exponential moving average update; a no-op for infer-mode caches.
pub fn update_running_stats(
    mean: &mut Tensor,
    var: &mut Tensor,
    cache: &BatchNormCache,
    momentum: f64,
) {
    if cache.mode != Mode::Train {
        return;
    }
    for (r, b) in mean.data_mut().iter_mut().zip(&cache.batch_mean) {
        *r = (1.0 - momentum) * *r + momentum * b;
    }
    for (r, b) in var.data_mut().iter_mut().zip(&cache.batch_var) {
        *r = (1.0 - momentum) * *r + momentum * b;
    }
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    mode: Mode,
    shape: Vec<usize>,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
}

impl BatchNormCache {
    pub fn batch_mean(&self) -> &[f64] {
        &self.batch_mean
    }

    pub fn batch_var(&self) -> &[f64] {
        &self.batch_var
    }
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads {
    pub input: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

/// `[batch, features]` is treated as `[batch, features, 1]`.
fn ncl(input: &Tensor) -> Result<(usize, usize, usize)> {
    match input.shape() {
        &[n, c] => Ok((n, c, 1)),
        &[n, c, l] => Ok((n, c, l)),
        other => Err(Error::Dimension(format!(
            "batch norm input must be [batch, features] or [batch, channels, length], got {other:?}"
        ))),
    }
}

/// Batch normalization with statistics per feature (axis 1), pooled over the
/// batch axis and, for rank-3 input, the length axis.
///
/// Train mode normalizes by the biased batch variance; infer mode uses the
/// running statistics. Output is `gamma · x̂ + beta`.
pub fn batch_norm_forward(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    mode: Mode,
    running_mean: &Tensor,
    running_var: &Tensor,
) -> Result<(Tensor, BatchNormCache)> {
    let (n, c, l) = ncl(input)?;
    for t in [gamma, beta, running_mean, running_var] {
        t.expect_shape(&[c])?;
    }
    let count = n * l;
    let x = input.data();
    let at = |s: usize, f: usize, i: usize| (s * c + f) * l + i;

    let (batch_mean, batch_var) = match mode {
        Mode::Train => {
            if count < 2 {
                return Err(Error::DegenerateBatch(count));
            }
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for f in 0..c {
                let mut sum = 0.0;
                for s in 0..n {
                    for i in 0..l {
                        sum += x[at(s, f, i)];
                    }
                }
                let m = sum / count as f64;
                let mut sq = 0.0;
                for s in 0..n {
                    for i in 0..l {
                        let d = x[at(s, f, i)] - m;
                        sq += d * d;
                    }
                }
                mean[f] = m;
                var[f] = sq / count as f64;
            }
            (mean, var)
        }
        Mode::Infer => (running_mean.data().to_vec(), running_var.data().to_vec()),
    };

    let inv_std: Vec<f64> = batch_var
        .iter()
        .map(|v| 1.0 / (v + BN_EPSILON).sqrt())
        .collect();
    let mut xhat = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    for s in 0..n {
        for f in 0..c {
            for i in 0..l {
                let p = at(s, f, i);
                let h = (x[p] - batch_mean[f]) * inv_std[f];
                xhat[p] = h;
                out[p] = gamma.data()[f] * h + beta.data()[f];
            }
        }
    }
    Ok((
        Tensor::new(input.shape().to_vec(), out)?,
        BatchNormCache {
            mode,
            shape: input.shape().to_vec(),
            xhat,
            inv_std,
            batch_mean,
            batch_var,
        },
    ))
}

/// Exact backward pass, including the dependence of the batch statistics on
/// the input in train mode.
pub fn batch_norm_backward(
    cache: &BatchNormCache,
    gamma: &Tensor,
    grad_out: &Tensor,
) -> Result<BatchNormGrads> {
    grad_out.expect_shape(&cache.shape)?;
    let (n, c, l) = ncl(grad_out)?;
    gamma.expect_shape(&[c])?;
    let g = grad_out.data();
    let at = |s: usize, f: usize, i: usize| (s * c + f) * l + i;
    let m = (n * l) as f64;

    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for s in 0..n {
        for f in 0..c {
            for i in 0..l {
                let p = at(s, f, i);
                dgamma[f] += g[p] * cache.xhat[p];
                dbeta[f] += g[p];
            }
        }
    }

    let mut dx = vec![0.0; g.len()];
    for f in 0..c {
        let gm = gamma.data()[f];
        let inv = cache.inv_std[f];
        match cache.mode {
            Mode::Train => {
                // Σ dx̂ = γ·dβ and Σ dx̂·x̂ = γ·dγ
                let sum_dxhat = gm * dbeta[f];
                let sum_dxhat_xhat = gm * dgamma[f];
                for s in 0..n {
                    for i in 0..l {
                        let p = at(s, f, i);
                        let dxhat = g[p] * gm;
                        dx[p] = inv / m * (m * dxhat - sum_dxhat - cache.xhat[p] * sum_dxhat_xhat);
                    }
                }
            }
            Mode::Infer => {
                for s in 0..n {
                    for i in 0..l {
                        let p = at(s, f, i);
                        dx[p] = g[p] * gm * inv;
                    }
                }
            }
        }
    }

    Ok(BatchNormGrads {
        input: Tensor::new(cache.shape.clone(), dx)?,
        gamma: Tensor::from_vec(dgamma),
        beta: Tensor::from_vec(dbeta),
    })
}
