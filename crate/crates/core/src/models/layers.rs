//! Building blocks shared by the three networks: convolution units,
//! fully connected units and the per-disease logistic heads.
//!
//! A layer followed by batch norm carries no bias of its own; the batch-norm
//! shift plays that role. With batch norm disabled the layer keeps its bias.

use crate::error::Result;
use crate::tensor::{
    activation_backward, activation_forward, affine_backward, affine_forward, batch_norm_backward,
    batch_norm_forward, conv1d_backward, conv1d_forward, dropout_backward, dropout_forward,
    Activation, ActivationCache, BatchNormCache, DropoutCache, Mode, Tensor,
};
use crate::SeededRng;

use super::params::{Grads, ParamKind, ParamSet, StatUpdate};

/// Per-pass state: mode, dropout probability, randomness, and the
/// running-statistics updates collected from batch-norm layers.
pub struct Pass<'a> {
    pub mode: Mode,
    pub dropout: f64,
    pub rng: &'a mut SeededRng,
    pub stats: Vec<StatUpdate>,
}

impl<'a> Pass<'a> {
    pub fn train(rng: &'a mut SeededRng, dropout: f64) -> Self {
        Self {
            mode: Mode::Train,
            dropout,
            rng,
            stats: Vec::new(),
        }
    }

    pub fn infer(rng: &'a mut SeededRng) -> Self {
        Self {
            mode: Mode::Infer,
            dropout: 0.0,
            rng,
            stats: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BnRef {
    gamma: usize,
    beta: usize,
    mean: usize,
    var: usize,
}

impl BnRef {
    pub(crate) fn register(params: &mut ParamSet, prefix: &str, features: usize) -> Self {
        Self {
            gamma: params.add(
                format!("{prefix}.bn.gamma"),
                Tensor::filled(&[features], 1.0),
                ParamKind::Trainable,
            ),
            beta: params.add(
                format!("{prefix}.bn.beta"),
                Tensor::zeros(&[features]),
                ParamKind::Trainable,
            ),
            mean: params.add(
                format!("{prefix}.bn.running_mean"),
                Tensor::zeros(&[features]),
                ParamKind::Buffer,
            ),
            var: params.add(
                format!("{prefix}.bn.running_var"),
                Tensor::filled(&[features], 1.0),
                ParamKind::Buffer,
            ),
        }
    }

    fn forward(
        &self,
        params: &ParamSet,
        x: &Tensor,
        pass: &mut Pass,
    ) -> Result<(Tensor, BatchNormCache)> {
        let (out, cache) = batch_norm_forward(
            x,
            params.get(self.gamma),
            params.get(self.beta),
            pass.mode,
            params.get(self.mean),
            params.get(self.var),
        )?;
        if pass.mode == Mode::Train {
            pass.stats.push(StatUpdate {
                mean: self.mean,
                var: self.var,
                batch_mean: cache.batch_mean().to_vec(),
                batch_var: cache.batch_var().to_vec(),
            });
        }
        Ok((out, cache))
    }

    fn backward(
        &self,
        params: &ParamSet,
        cache: &BatchNormCache,
        grad: &Tensor,
        grads: &mut Grads,
    ) -> Result<Tensor> {
        let g = batch_norm_backward(cache, params.get(self.gamma), grad)?;
        grads.accumulate(self.gamma, g.gamma)?;
        grads.accumulate(self.beta, g.beta)?;
        Ok(g.input)
    }
}

/// conv1d → batch norm → ReLU.
#[derive(Debug, Clone)]
pub(crate) struct ConvUnit {
    kernel: usize,
    bias: Option<usize>,
    bn: Option<BnRef>,
}

pub(crate) struct ConvUnitCache {
    input: Tensor,
    bn: Option<BatchNormCache>,
    act: ActivationCache,
}

impl ConvUnit {
    pub(crate) fn register(
        params: &mut ParamSet,
        prefix: &str,
        c_out: usize,
        c_in: usize,
        k: usize,
        batch_norm: bool,
        rng: &mut SeededRng,
    ) -> Self {
        let fan_in = c_in * k;
        let kernel = params.add_uniform(format!("{prefix}.kernel"), &[c_out, c_in, k], fan_in, rng);
        let (bias, bn) = if batch_norm {
            (None, Some(BnRef::register(params, prefix, c_out)))
        } else {
            (
                Some(params.add_uniform(format!("{prefix}.bias"), &[c_out], fan_in, rng)),
                None,
            )
        };
        Self { kernel, bias, bn }
    }

    pub(crate) fn kernel_index(&self) -> usize {
        self.kernel
    }

    pub(crate) fn bias_index(&self) -> Option<usize> {
        self.bias
    }

    pub(crate) fn forward(
        &self,
        params: &ParamSet,
        x: &Tensor,
        pass: &mut Pass,
    ) -> Result<(Tensor, ConvUnitCache)> {
        let z = conv1d_forward(x, params.get(self.kernel), self.bias.map(|b| params.get(b)))?;
        let (z, bn) = match &self.bn {
            Some(bn) => {
                let (o, c) = bn.forward(params, &z, pass)?;
                (o, Some(c))
            }
            None => (z, None),
        };
        let (out, act) = activation_forward(&z, Activation::Relu);
        Ok((
            out,
            ConvUnitCache {
                input: x.clone(),
                bn,
                act,
            },
        ))
    }

    pub(crate) fn backward(
        &self,
        params: &ParamSet,
        cache: &ConvUnitCache,
        grad: &Tensor,
        grads: &mut Grads,
    ) -> Result<Tensor> {
        let mut g = activation_backward(&cache.act, grad)?;
        if let (Some(bn), Some(bc)) = (&self.bn, &cache.bn) {
            g = bn.backward(params, bc, &g, grads)?;
        }
        let cg = conv1d_backward(
            &cache.input,
            params.get(self.kernel),
            self.bias.is_some(),
            &g,
        )?;
        grads.accumulate(self.kernel, cg.kernels)?;
        if let (Some(b), Some(db)) = (self.bias, cg.bias) {
            grads.accumulate(b, db)?;
        }
        Ok(cg.input)
    }
}

/// dropout → affine → batch norm → ReLU.
#[derive(Debug, Clone)]
pub(crate) struct DenseUnit {
    weight: usize,
    bias: Option<usize>,
    bn: Option<BnRef>,
}

pub(crate) struct DenseUnitCache {
    dropout: DropoutCache,
    input: Tensor,
    bn: Option<BatchNormCache>,
    act: ActivationCache,
}

impl DenseUnit {
    fn register(
        params: &mut ParamSet,
        prefix: &str,
        n_in: usize,
        n_out: usize,
        batch_norm: bool,
        rng: &mut SeededRng,
    ) -> Self {
        let weight = params.add_uniform(format!("{prefix}.weight"), &[n_in, n_out], n_in, rng);
        let (bias, bn) = if batch_norm {
            (None, Some(BnRef::register(params, prefix, n_out)))
        } else {
            (
                Some(params.add_uniform(format!("{prefix}.bias"), &[n_out], n_in, rng)),
                None,
            )
        };
        Self { weight, bias, bn }
    }

    fn forward(
        &self,
        params: &ParamSet,
        x: &Tensor,
        pass: &mut Pass,
    ) -> Result<(Tensor, DenseUnitCache)> {
        let (dropped, dropout) = dropout_forward(x, pass.dropout, pass.mode, pass.rng)?;
        let z = affine_forward(
            &dropped,
            params.get(self.weight),
            self.bias.map(|b| params.get(b)),
        )?;
        let (z, bn) = match &self.bn {
            Some(bn) => {
                let (o, c) = bn.forward(params, &z, pass)?;
                (o, Some(c))
            }
            None => (z, None),
        };
        let (out, act) = activation_forward(&z, Activation::Relu);
        Ok((
            out,
            DenseUnitCache {
                dropout,
                input: dropped,
                bn,
                act,
            },
        ))
    }

    fn backward(
        &self,
        params: &ParamSet,
        cache: &DenseUnitCache,
        grad: &Tensor,
        grads: &mut Grads,
    ) -> Result<Tensor> {
        let mut g = activation_backward(&cache.act, grad)?;
        if let (Some(bn), Some(bc)) = (&self.bn, &cache.bn) {
            g = bn.backward(params, bc, &g, grads)?;
        }
        let ag = affine_backward(
            &cache.input,
            params.get(self.weight),
            self.bias.is_some(),
            &g,
        )?;
        grads.accumulate(self.weight, ag.weight)?;
        if let (Some(b), Some(db)) = (self.bias, ag.bias) {
            grads.accumulate(b, db)?;
        }
        dropout_backward(&cache.dropout, &ag.input)
    }
}

/// Fully connected hidden layers followed by one sigmoid head per disease.
#[derive(Debug, Clone)]
pub(crate) struct HiddenStack {
    layers: Vec<DenseUnit>,
    head_weight: usize,
    head_bias: usize,
}

pub(crate) struct HiddenStackCache {
    layers: Vec<DenseUnitCache>,
    head_dropout: DropoutCache,
    head_input: Tensor,
    probs: Tensor,
}

impl HiddenStack {
    pub(crate) fn register(
        params: &mut ParamSet,
        n_in: usize,
        hidden: &[usize],
        diseases: usize,
        batch_norm: bool,
        rng: &mut SeededRng,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden.len());
        let mut width = n_in;
        for (i, &h) in hidden.iter().enumerate() {
            layers.push(DenseUnit::register(
                params,
                &format!("fc{}", i + 1),
                width,
                h,
                batch_norm,
                rng,
            ));
            width = h;
        }
        let head_weight = params.add_uniform("heads.weight", &[width, diseases], width, rng);
        let head_bias = params.add_uniform("heads.bias", &[diseases], width, rng);
        Self {
            layers,
            head_weight,
            head_bias,
        }
    }

    pub(crate) fn forward(
        &self,
        params: &ParamSet,
        rep: &Tensor,
        pass: &mut Pass,
    ) -> Result<(Tensor, HiddenStackCache)> {
        let mut x = rep.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (out, c) = layer.forward(params, &x, pass)?;
            caches.push(c);
            x = out;
        }
        let (dropped, head_dropout) = dropout_forward(&x, pass.dropout, pass.mode, pass.rng)?;
        let logits = affine_forward(
            &dropped,
            params.get(self.head_weight),
            Some(params.get(self.head_bias)),
        )?;
        let (probs, _) = activation_forward(&logits, Activation::Sigmoid);
        // keep saturated heads strictly inside (0, 1)
        let probs = probs.map(|p| p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0));
        Ok((
            probs.clone(),
            HiddenStackCache {
                layers: caches,
                head_dropout,
                head_input: dropped,
                probs,
            },
        ))
    }

    /// Returns the gradient with respect to the representation fed into the stack.
    pub(crate) fn backward(
        &self,
        params: &ParamSet,
        cache: &HiddenStackCache,
        grad_probs: &Tensor,
        grads: &mut Grads,
    ) -> Result<Tensor> {
        grad_probs.expect_shape(cache.probs.shape())?;
        let dlogits: Vec<f64> = cache
            .probs
            .data()
            .iter()
            .zip(grad_probs.data())
            .map(|(p, g)| g * p * (1.0 - p))
            .collect();
        let dlogits = Tensor::new(cache.probs.shape().to_vec(), dlogits)?;
        let ag = affine_backward(
            &cache.head_input,
            params.get(self.head_weight),
            true,
            &dlogits,
        )?;
        grads.accumulate(self.head_weight, ag.weight)?;
        grads.accumulate(self.head_bias, ag.bias.expect("head has a bias"))?;
        let mut g = dropout_backward(&cache.head_dropout, &ag.input)?;
        for (layer, c) in self.layers.iter().zip(&cache.layers).rev() {
            g = layer.backward(params, c, &g, grads)?;
        }
        Ok(g)
    }
}
