use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::data::Example;
use crate::error::{Error, Result};
use crate::tensor::{maxpool1d_backward, maxpool1d_forward, PoolCache, Tensor};
use crate::SeededRng;

use super::layers::{ConvUnit, ConvUnitCache, HiddenStack, HiddenStackCache, Pass};
use super::params::{Grads, ParamSet};
use super::{stack_lab_major, Arch, ClampPolicy, InputDims, Network};

/// Hyperparameters of the multi-resolution convolutional network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Cnn1Spec {
    /// Filters per convolution (J).
    pub num_filters: usize,
    /// Temporal kernel length (L).
    pub kernel_len: usize,
    /// Pooling step (p); the coarse level pools by p².
    pub pool: usize,
    pub hidden: Vec<usize>,
    pub clamp: ClampPolicy,
    pub batch_norm: bool,
}

impl Default for Cnn1Spec {
    fn default() -> Self {
        Self {
            num_filters: 64,
            kernel_len: 8,
            pool: 3,
            hidden: vec![100, 100],
            clamp: ClampPolicy::Clamp,
            batch_norm: true,
        }
    }
}

/// Per-lab sequence lengths at every stage of the three resolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cnn1Levels {
    /// Input pooled by p².
    pub coarse_pooled: usize,
    pub coarse_kernel: usize,
    /// C1.
    pub coarse: usize,
    /// Input pooled by p.
    pub mid_pooled: usize,
    pub mid_kernel: usize,
    /// C2.
    pub mid: usize,
    pub fine_kernel: usize,
    /// C3.
    pub fine: usize,
    /// C4 = MaxPool(C3, p).
    pub fine_pooled: usize,
    pub top_kernel: usize,
    /// C5.
    pub top: usize,
}

impl Cnn1Spec {
    pub fn validate(&self) -> Result<()> {
        if self.num_filters == 0 || self.kernel_len == 0 {
            return Err(Error::Config(
                "cnn1 needs at least one filter of length >= 1".into(),
            ));
        }
        if self.pool < 2 {
            return Err(Error::Config(format!(
                "cnn1 pool step must be >= 2, got {}",
                self.pool
            )));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(
                "cnn1 needs nonempty, positive hidden sizes".into(),
            ));
        }
        Ok(())
    }

    pub fn levels(&self, window: usize) -> Result<Cnn1Levels> {
        self.validate()?;
        let p = self.pool;
        if window < p * p {
            return Err(Error::Config(format!(
                "window of {window} months is shorter than p² = {}",
                p * p
            )));
        }
        let clamp = self.clamp;
        let coarse_pooled = window / (p * p);
        let coarse_kernel = clamp.kernel_for(self.kernel_len, coarse_pooled, "cnn1 level 1")?;
        let mid_pooled = window / p;
        let mid_kernel = clamp.kernel_for(self.kernel_len, mid_pooled, "cnn1 level 2")?;
        let fine_kernel = clamp.kernel_for(self.kernel_len, window, "cnn1 level 3")?;
        let fine = window - fine_kernel + 1;
        let fine_pooled = fine / p;
        let top_kernel = clamp.kernel_for(
            self.kernel_len,
            fine_pooled,
            "cnn1 level 3 second convolution",
        )?;
        Ok(Cnn1Levels {
            coarse_pooled,
            coarse_kernel,
            coarse: coarse_pooled - coarse_kernel + 1,
            mid_pooled,
            mid_kernel,
            mid: mid_pooled - mid_kernel + 1,
            fine_kernel,
            fine,
            fine_pooled,
            top_kernel,
            top: fine_pooled - top_kernel + 1,
        })
    }
}

/// Temporal filters shared across labs at three resolutions, concatenated
/// and fed through fully connected layers into per-disease sigmoid heads.
#[derive(Debug, Clone)]
pub struct Cnn1 {
    spec: Cnn1Spec,
    dims: InputDims,
    levels: Cnn1Levels,
    params: ParamSet,
    coarse: ConvUnit,
    mid: ConvUnit,
    fine: ConvUnit,
    top: ConvUnit,
    stack: HiddenStack,
}

pub struct Cnn1Cache {
    batch: usize,
    coarse: ConvUnitCache,
    mid: ConvUnitCache,
    fine: ConvUnitCache,
    fine_pool: PoolCache,
    top: ConvUnitCache,
    stack: HiddenStackCache,
}

struct Features {
    rep: Tensor,
    coarse: ConvUnitCache,
    mid: ConvUnitCache,
    fine: ConvUnitCache,
    fine_pool: PoolCache,
    top: ConvUnitCache,
}

impl Cnn1 {
    pub fn new(spec: Cnn1Spec, dims: InputDims, seed: u64) -> Result<Self> {
        let levels = spec.levels(dims.window)?;
        let mut rng = SeededRng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let j = spec.num_filters;
        let bn = spec.batch_norm;
        let coarse = ConvUnit::register(
            &mut params,
            "conv1",
            j,
            1,
            levels.coarse_kernel,
            bn,
            &mut rng,
        );
        let mid = ConvUnit::register(&mut params, "conv2", j, 1, levels.mid_kernel, bn, &mut rng);
        let fine = ConvUnit::register(&mut params, "conv3", j, 1, levels.fine_kernel, bn, &mut rng);
        let top = ConvUnit::register(&mut params, "conv5", j, j, levels.top_kernel, bn, &mut rng);
        let width = dims.labs * j * (levels.coarse + levels.mid + levels.top);
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
            levels,
            params,
            coarse,
            mid,
            fine,
            top,
            stack,
        })
    }

    pub fn spec(&self) -> &Cnn1Spec {
        &self.spec
    }

    pub fn levels(&self) -> Cnn1Levels {
        self.levels
    }

    /// Width of the concatenated representation `C = [C1, C2, C5]`.
    pub fn representation_width(&self) -> usize {
        self.dims.labs
            * self.spec.num_filters
            * (self.levels.coarse + self.levels.mid + self.levels.top)
    }

    fn features(&self, input: &Tensor, pass: &mut Pass) -> Result<Features> {
        let d = self.dims;
        input.expect_shape(&[input.dim(0), d.labs, d.window])?;
        let batch = input.dim(0);
        let p = self.spec.pool;
        // every lab row becomes its own single-channel sequence
        let rows = input.clone().reshape(&[batch * d.labs, 1, d.window])?;

        // the raw input needs no gradient, so the pooling caches of the
        // first two levels are dropped
        let (pooled, _) = maxpool1d_forward(&rows, p * p)?;
        let (c1, coarse) = self.coarse.forward(&self.params, &pooled, pass)?;
        let (pooled, _) = maxpool1d_forward(&rows, p)?;
        let (c2, mid) = self.mid.forward(&self.params, &pooled, pass)?;
        let (c3, fine) = self.fine.forward(&self.params, &rows, pass)?;
        let (c4, fine_pool) = maxpool1d_forward(&c3, p)?;
        let (c5, top) = self.top.forward(&self.params, &c4, pass)?;

        let blocks = [&c1, &c2, &c5];
        let per: Vec<usize> = blocks.iter().map(|t| t.len() / batch.max(1)).collect();
        let width: usize = per.iter().sum();
        let mut rep = Vec::with_capacity(batch * width);
        for s in 0..batch {
            for (t, &n) in blocks.iter().zip(&per) {
                rep.extend_from_slice(&t.data()[s * n..(s + 1) * n]);
            }
        }
        Ok(Features {
            rep: Tensor::new(vec![batch, width], rep)?,
            coarse,
            mid,
            fine,
            fine_pool,
            top,
        })
    }

    /// The concatenated convolution output `[batch, D·J·(|C1|+|C2|+|C5|)]`,
    /// laid out level by level, then lab, then filter, then position.
    pub fn conv_features(&self, input: &Tensor, pass: &mut Pass) -> Result<Tensor> {
        Ok(self.features(input, pass)?.rep)
    }
}

impl Network for Cnn1 {
    type Cache = Cnn1Cache;

    fn arch(&self) -> Arch {
        Arch::Cnn1
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

    fn forward(&self, input: &Tensor, pass: &mut Pass) -> Result<(Tensor, Cnn1Cache)> {
        let f = self.features(input, pass)?;
        let (probs, stack) = self.stack.forward(&self.params, &f.rep, pass)?;
        Ok((
            probs,
            Cnn1Cache {
                batch: input.dim(0),
                coarse: f.coarse,
                mid: f.mid,
                fine: f.fine,
                fine_pool: f.fine_pool,
                top: f.top,
                stack,
            },
        ))
    }

    fn backward(&self, cache: &Cnn1Cache, grad_probs: &Tensor) -> Result<Grads> {
        let mut grads = Grads::for_params(&self.params);
        let grep = self
            .stack
            .backward(&self.params, &cache.stack, grad_probs, &mut grads)?;

        let batch = cache.batch;
        let rows = batch * self.dims.labs;
        let j = self.spec.num_filters;
        let lv = self.levels;
        let lens = [lv.coarse, lv.mid, lv.top];
        let per: Vec<usize> = lens.iter().map(|l| self.dims.labs * j * l).collect();
        let width: usize = per.iter().sum();
        let mut split: Vec<Vec<f64>> = per.iter().map(|n| Vec::with_capacity(n * batch)).collect();
        for s in 0..batch {
            let row = &grep.data()[s * width..(s + 1) * width];
            let mut off = 0;
            for (buf, &n) in split.iter_mut().zip(&per) {
                buf.extend_from_slice(&row[off..off + n]);
                off += n;
            }
        }
        let mut split = split.into_iter();
        let g1 = Tensor::new(vec![rows, j, lv.coarse], split.next().unwrap())?;
        let g2 = Tensor::new(vec![rows, j, lv.mid], split.next().unwrap())?;
        let g5 = Tensor::new(vec![rows, j, lv.top], split.next().unwrap())?;

        // input gradients of the first convolutions are discarded
        self.coarse
            .backward(&self.params, &cache.coarse, &g1, &mut grads)?;
        self.mid
            .backward(&self.params, &cache.mid, &g2, &mut grads)?;
        let g4 = self
            .top
            .backward(&self.params, &cache.top, &g5, &mut grads)?;
        let g3 = maxpool1d_backward(&cache.fine_pool, &g4)?;
        self.fine
            .backward(&self.params, &cache.fine, &g3, &mut grads)?;
        Ok(grads)
    }
}
