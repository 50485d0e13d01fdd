use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

#[derive(Debug, Clone)]
pub struct ActivationCache {
    kind: Activation,
    // relu keeps its input, sigmoid and tanh keep their output
    stored: Tensor,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activation_forward(input: &Tensor, kind: Activation) -> (Tensor, ActivationCache) {
    let out = match kind {
        Activation::Relu => input.map(|v| v.max(0.0)),
        Activation::Sigmoid => input.map(sigmoid),
        Activation::Tanh => input.map(f64::tanh),
    };
    let stored = match kind {
        Activation::Relu => input.clone(),
        _ => out.clone(),
    };
    (out, ActivationCache { kind, stored })
}

pub fn activation_backward(cache: &ActivationCache, grad_out: &Tensor) -> Result<Tensor> {
    grad_out.expect_shape(cache.stored.shape())?;
    let data = cache
        .stored
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&s, &g)| match cache.kind {
            Activation::Relu => {
                if s > 0.0 {
                    g
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => g * s * (1.0 - s),
            Activation::Tanh => g * (1.0 - s * s),
        })
        .collect();
    Tensor::new(grad_out.shape().to_vec(), data)
}
