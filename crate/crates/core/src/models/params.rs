use rand::Rng;

use crate::container::NamedTensors;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Trainable,
    /// Carried state such as batch-norm running statistics; never receives gradients.
    Buffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
    pub kind: ParamKind,
}

/// Named parameters of one network, in registration order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    entries: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor, kind: ParamKind) -> usize {
        self.entries.push(Param {
            name: name.into(),
            tensor,
            kind,
        });
        self.entries.len() - 1
    }

    /// Registers a trainable tensor drawn uniformly from `±1/sqrt(fan_in)`.
    pub(crate) fn add_uniform(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut SeededRng,
    ) -> usize {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        self.add(
            name,
            Tensor::new(shape.to_vec(), data).expect("shape matches data"),
            ParamKind::Trainable,
        )
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Tensor {
        &self.entries[idx].tensor
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Tensor {
        &mut self.entries[idx].tensor
    }

    pub fn entries(&self) -> &[Param] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [Param] {
        &mut self.entries
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|p| p.name == name)
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| self.get(i))
    }

    pub fn trainable(&self) -> impl Iterator<Item = (usize, &Param)> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, p)| p.kind == ParamKind::Trainable)
    }

    pub fn num_trainable_values(&self) -> usize {
        self.trainable().map(|(_, p)| p.tensor.len()).sum()
    }

    pub fn to_named(&self, meta: serde_json::Value) -> NamedTensors {
        let mut out = NamedTensors::new(meta);
        for p in &self.entries {
            out.push(p.name.clone(), p.tensor.clone());
        }
        out
    }

    /// Replaces every tensor with the stored one of the same name, requiring
    /// identical names and shapes.
    pub fn load_from(&mut self, stored: &NamedTensors) -> Result<()> {
        if stored.tensors.len() != self.entries.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} tensors, architecture expects {}",
                stored.tensors.len(),
                self.entries.len()
            )));
        }
        for p in &mut self.entries {
            let t = stored
                .get(&p.name)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks tensor {:?}", p.name)))?;
            if t.shape() != p.tensor.shape() {
                return Err(Error::Config(format!(
                    "tensor {:?} has shape {:?} in checkpoint, architecture expects {:?}",
                    p.name,
                    t.shape(),
                    p.tensor.shape()
                )));
            }
            p.tensor = t.clone();
        }
        Ok(())
    }
}

/// Gradients aligned with a [`ParamSet`]; buffers and untouched parameters stay `None`.
#[derive(Debug, Clone)]
pub struct Grads {
    slots: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn for_params(params: &ParamSet) -> Self {
        Self {
            slots: vec![None; params.len()],
        }
    }

    pub fn accumulate(&mut self, idx: usize, grad: Tensor) -> Result<()> {
        match &mut self.slots[idx] {
            Some(existing) => existing.add_assign(&grad),
            slot @ None => {
                *slot = Some(grad);
                Ok(())
            }
        }
    }

    pub fn get(&self, idx: usize) -> Option<&Tensor> {
        self.slots[idx].as_ref()
    }

    /// Gradient for `idx`, or zeros shaped like the parameter.
    pub fn get_or_zeros(&self, idx: usize, params: &ParamSet) -> Tensor {
        self.slots[idx]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(params.get(idx).shape()))
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

/// Running-statistics update produced by a train-mode batch-norm layer.
#[derive(Debug, Clone)]
pub struct StatUpdate {
    pub mean: usize,
    pub var: usize,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

impl ParamSet {
    pub fn apply_stat_updates(&mut self, updates: &[StatUpdate], momentum: f64) {
        for u in updates {
            for (r, b) in self
                .get_mut(u.mean)
                .data_mut()
                .iter_mut()
                .zip(&u.batch_mean)
            {
                *r = (1.0 - momentum) * *r + momentum * b;
            }
            for (r, b) in self.get_mut(u.var).data_mut().iter_mut().zip(&u.batch_var) {
                *r = (1.0 - momentum) * *r + momentum * b;
            }
        }
    }
}
