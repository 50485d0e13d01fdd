use crate::error::{Error, Result};
use crate::models::{Grads, ParamKind, ParamSet};
use crate::tensor::Tensor;

/// One Adadelta update of a flat parameter block, in place:
///
/// ```text
/// E[g²]  ← ρ·E[g²] + (1-ρ)·g²
/// Δx     ← -√(E[Δx²] + ε) / √(E[g²] + ε) · g
/// E[Δx²] ← ρ·E[Δx²] + (1-ρ)·Δx²
/// x      ← x + lr·Δx
/// ```
pub fn adadelta_update(
    x: &mut [f64],
    g: &[f64],
    sq_grad: &mut [f64],
    sq_delta: &mut [f64],
    rho: f64,
    eps: f64,
    lr: f64,
) {
    for k in 0..x.len() {
        sq_grad[k] = rho * sq_grad[k] + (1.0 - rho) * g[k] * g[k];
        let delta = -((sq_delta[k] + eps).sqrt() / (sq_grad[k] + eps).sqrt()) * g[k];
        sq_delta[k] = rho * sq_delta[k] + (1.0 - rho) * delta * delta;
        x[k] += lr * delta;
    }
}

/// Adadelta state for every trainable tensor of a parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct Adadelta {
    pub rho: f64,
    pub eps: f64,
    pub lr: f64,
    sq_grad: Vec<Option<Tensor>>,
    sq_delta: Vec<Option<Tensor>>,
}

impl Adadelta {
    pub fn new(params: &ParamSet, rho: f64, eps: f64, lr: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) || !(eps > 0.0) || !(lr > 0.0) {
            return Err(Error::Config(format!(
                "invalid Adadelta settings rho={rho} eps={eps} lr={lr}"
            )));
        }
        let zeros = |kind: ParamKind, t: &Tensor| {
            (kind == ParamKind::Trainable).then(|| Tensor::zeros(t.shape()))
        };
        let sq_grad: Vec<Option<Tensor>> = params
            .entries()
            .iter()
            .map(|p| zeros(p.kind, &p.tensor))
            .collect();
        Ok(Self {
            rho,
            eps,
            lr,
            sq_delta: sq_grad.clone(),
            sq_grad,
        })
    }

    /// Accumulated `E[g²]` for parameter `idx`.
    pub fn sq_grad(&self, idx: usize) -> Option<&Tensor> {
        self.sq_grad[idx].as_ref()
    }

    /// Accumulated `E[Δx²]` for parameter `idx`.
    pub fn sq_delta(&self, idx: usize) -> Option<&Tensor> {
        self.sq_delta[idx].as_ref()
    }

    /// Updates every trainable parameter. A missing gradient counts as zero.
    /// Non-finite gradients abort the step before anything changes.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Grads) -> Result<()> {
        for (idx, p) in params.trainable() {
            if let Some(g) = grads.get(idx) {
                if g.shape() != p.tensor.shape() {
                    return Err(Error::Dimension(format!(
                        "gradient for {} has shape {:?}",
                        p.name,
                        g.shape()
                    )));
                }
                if let Some(bad) = g.data().iter().position(|v| !v.is_finite()) {
                    return Err(Error::Numeric(format!(
                        "non-finite gradient {} at {}[{bad}]",
                        g.data()[bad],
                        p.name
                    )));
                }
            }
        }
        for idx in 0..params.len() {
            let (Some(sg), Some(sd)) = (self.sq_grad[idx].as_mut(), self.sq_delta[idx].as_mut())
            else {
                continue;
            };
            let zero;
            let g = match grads.get(idx) {
                Some(g) => g.data(),
                None => {
                    zero = vec![0.0; sg.len()];
                    &zero
                }
            };
            adadelta_update(
                params.get_mut(idx).data_mut(),
                g,
                sg.data_mut(),
                sd.data_mut(),
                self.rho,
                self.eps,
                self.lr,
            );
        }
        Ok(())
    }
}
