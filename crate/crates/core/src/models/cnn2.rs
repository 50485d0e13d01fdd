use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::data::Example;
use crate::error::{Error, Result};
use crate::tensor::{maxpool1d_backward, maxpool1d_forward, PoolCache, Tensor};
use crate::SeededRng;

use super::layers::{ConvUnit, ConvUnitCache, HiddenStack, HiddenStackCache, Pass};
use super::params::{Grads, ParamSet};
use super::{stack_lab_major, Arch, ClampPolicy, InputDims, Network};

/// Hyperparameters of the network that first projects the labs into a
/// latent space (vertical convolutions) and then convolves over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Cnn2Spec {
    /// Latent channels produced by each vertical layer.
    pub vertical_filters: usize,
    pub vertical_layers: usize,
    pub temporal_filters: usize,
    pub temporal_kernel: usize,
    pub pool: usize,
    pub hidden: Vec<usize>,
    pub clamp: ClampPolicy,
    pub batch_norm: bool,
}

impl Default for Cnn2Spec {
    fn default() -> Self {
        Self {
            vertical_filters: 64,
            vertical_layers: 2,
            temporal_filters: 64,
            temporal_kernel: 8,
            pool: 3,
            hidden: vec![100, 100],
            clamp: ClampPolicy::Clamp,
            batch_norm: true,
        }
    }
}

impl Cnn2Spec {
    pub fn validate(&self) -> Result<()> {
        if self.vertical_layers == 0 || self.vertical_filters == 0 {
            return Err(Error::Config(
                "cnn2 needs at least one vertical layer with one filter".into(),
            ));
        }
        if self.temporal_filters == 0 || self.temporal_kernel == 0 || self.pool == 0 {
            return Err(Error::Config(
                "cnn2 temporal filters, kernel and pool must be positive".into(),
            ));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(
                "cnn2 needs nonempty, positive hidden sizes".into(),
            ));
        }
        Ok(())
    }
}

/// Latent shapes as `(channels, length)`: after the vertical layers, after
/// pooling, and after the temporal convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cnn2Shapes {
    pub latent: (usize, usize),
    pub pooled: (usize, usize),
    pub temporal: (usize, usize),
    pub temporal_kernel: usize,
}

#[derive(Debug, Clone)]
pub struct Cnn2 {
    spec: Cnn2Spec,
    dims: InputDims,
    shapes: Cnn2Shapes,
    params: ParamSet,
    vertical: Vec<ConvUnit>,
    temporal: ConvUnit,
    stack: HiddenStack,
}

pub struct Cnn2Cache {
    vertical: Vec<ConvUnitCache>,
    pool: PoolCache,
    temporal: ConvUnitCache,
    stack: HiddenStackCache,
}

impl Cnn2 {
    pub fn new(spec: Cnn2Spec, dims: InputDims, seed: u64) -> Result<Self> {
        spec.validate()?;
        let pooled_len = dims.window / spec.pool;
        let temporal_kernel = spec.clamp.kernel_for(
            spec.temporal_kernel,
            pooled_len,
            "cnn2 temporal convolution",
        )?;
        let shapes = Cnn2Shapes {
            latent: (spec.vertical_filters, dims.window),
            pooled: (spec.vertical_filters, pooled_len),
            temporal: (spec.temporal_filters, pooled_len - temporal_kernel + 1),
            temporal_kernel,
        };

        let mut rng = SeededRng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let bn = spec.batch_norm;
        let mut vertical = Vec::with_capacity(spec.vertical_layers);
        let mut channels = dims.labs;
        for i in 0..spec.vertical_layers {
            vertical.push(ConvUnit::register(
                &mut params,
                &format!("vertical{}", i + 1),
                spec.vertical_filters,
                channels,
                1,
                bn,
                &mut rng,
            ));
            channels = spec.vertical_filters;
        }
        let temporal = ConvUnit::register(
            &mut params,
            "temporal",
            spec.temporal_filters,
            channels,
            temporal_kernel,
            bn,
            &mut rng,
        );
        let width = shapes.temporal.0 * shapes.temporal.1;
        let stack = HiddenStack::register(
            &mut params,
            width,
            &spec.hidden,
            dims.diseases,
            bn,
            &mut rng,
        );
        Ok(Self {
            spec,
            dims,
            shapes,
            params,
            vertical,
            temporal,
            stack,
        })
    }

    pub fn spec(&self) -> &Cnn2Spec {
        &self.spec
    }

    pub fn shapes(&self) -> Cnn2Shapes {
        self.shapes
    }

    /// Output of the first vertical layer, `[batch, vertical_filters, B]`.
    pub fn vertical_output(&self, input: &Tensor, pass: &mut Pass) -> Result<Tensor> {
        Ok(self.vertical[0].forward(&self.params, input, pass)?.0)
    }

    /// Indices of the first vertical layer's kernel and (when batch norm is off) bias.
    pub fn first_vertical_indices(&self) -> (usize, Option<usize>) {
        (
            self.vertical[0].kernel_index(),
            self.vertical[0].bias_index(),
        )
    }
}

impl Network for Cnn2 {
    type Cache = Cnn2Cache;

    fn arch(&self) -> Arch {
        Arch::Cnn2
    }

    fn dims(&self) -> InputDims {
        self.dims
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn spec_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.spec).expect("spec serializes")
    }

    fn input(&self, examples: &[&Example]) -> Result<Tensor> {
        stack_lab_major(examples, self.dims)
    }

    fn forward(&self, input: &Tensor, pass: &mut Pass) -> Result<(Tensor, Cnn2Cache)> {
        input.expect_shape(&[input.dim(0), self.dims.labs, self.dims.window])?;
        let batch = input.dim(0);
        let mut x = input.clone();
        let mut vertical = Vec::with_capacity(self.vertical.len());
        for unit in &self.vertical {
            let (out, c) = unit.forward(&self.params, &x, pass)?;
            vertical.push(c);
            x = out;
        }
        let (pooled, pool) = maxpool1d_forward(&x, self.spec.pool)?;
        let (t, temporal) = self.temporal.forward(&self.params, &pooled, pass)?;
        let width = t.len() / batch.max(1);
        let rep = t.reshape(&[batch, width])?;
        let (probs, stack) = self.stack.forward(&self.params, &rep, pass)?;
        Ok((
            probs,
            Cnn2Cache {
                vertical,
                pool,
                temporal,
                stack,
            },
        ))
    }

    fn backward(&self, cache: &Cnn2Cache, grad_probs: &Tensor) -> Result<Grads> {
        let mut grads = Grads::for_params(&self.params);
        let grep = self
            .stack
            .backward(&self.params, &cache.stack, grad_probs, &mut grads)?;
        let batch = grep.dim(0);
        let (tc, tl) = self.shapes.temporal;
        let gt = grep.reshape(&[batch, tc, tl])?;
        let gp = self
            .temporal
            .backward(&self.params, &cache.temporal, &gt, &mut grads)?;
        let mut g = maxpool1d_backward(&cache.pool, &gp)?;
        for (unit, c) in self.vertical.iter().zip(&cache.vertical).rev() {
            g = unit.backward(&self.params, c, &g, &mut grads)?;
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scale_shapes() {
        let net = Cnn2::new(
            Cnn2Spec::default(),
            InputDims {
                labs: 18,
                window: 36,
                diseases: 3,
            },
            1,
        )
        .unwrap();
        let s = net.shapes();
        assert_eq!(s.latent, (64, 36));
        assert_eq!(s.pooled, (64, 12));
        assert_eq!(s.temporal, (64, 5));
    }

    #[test]
    fn error_policy_rejects_long_temporal_kernel() {
        let spec = Cnn2Spec {
            clamp: ClampPolicy::Error,
            ..Cnn2Spec::default()
        };
        let dims = InputDims {
            labs: 3,
            window: 12,
            diseases: 1,
        };
        assert!(matches!(Cnn2::new(spec, dims, 0), Err(Error::Config(_))));
        assert!(Cnn2::new(Cnn2Spec::default(), dims, 0).is_ok());
    }
}
