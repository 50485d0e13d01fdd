//! Network checkpoints: the parameter set in a named-tensor container whose
//! metadata records `{"arch", "spec", "dims"}`.

use std::path::Path;

use serde_json::json;

use super::{Arch, Cnn1, Cnn1Spec, Cnn2, Cnn2Spec, InputDims, Lstm, LstmSpec, Network, ParamSet};
use crate::container::NamedTensors;
use crate::data::Example;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Any of the three networks, for code that picks the architecture at run time.
#[derive(Debug, Clone)]
pub enum AnyNetwork {
    Lstm(Lstm),
    Cnn1(Cnn1),
    Cnn2(Cnn2),
}

macro_rules! dispatch {
    ($self:expr, $net:ident => $body:expr) => {
        match $self {
            AnyNetwork::Lstm($net) => $body,
            AnyNetwork::Cnn1($net) => $body,
            AnyNetwork::Cnn2($net) => $body,
        }
    };
}

impl AnyNetwork {
    /// Builds a freshly initialized network from a JSON spec (missing fields
    /// take their defaults).
    pub fn build(arch: Arch, spec: serde_json::Value, dims: InputDims, seed: u64) -> Result<Self> {
        let spec = if spec.is_null() { json!({}) } else { spec };
        let bad = |e: serde_json::Error| Error::Config(format!("{arch} spec: {e}"));
        Ok(match arch {
            Arch::Lstm => AnyNetwork::Lstm(Lstm::new(
                serde_json::from_value::<LstmSpec>(spec).map_err(bad)?,
                dims,
                seed,
            )?),
            Arch::Cnn1 => AnyNetwork::Cnn1(Cnn1::new(
                serde_json::from_value::<Cnn1Spec>(spec).map_err(bad)?,
                dims,
                seed,
            )?),
            Arch::Cnn2 => AnyNetwork::Cnn2(Cnn2::new(
                serde_json::from_value::<Cnn2Spec>(spec).map_err(bad)?,
                dims,
                seed,
            )?),
            Arch::Lr => return Err(Error::Config("the baseline is not a network".into())),
        })
    }

    pub fn arch(&self) -> Arch {
        dispatch!(self, n => n.arch())
    }

    pub fn dims(&self) -> InputDims {
        dispatch!(self, n => n.dims())
    }

    pub fn params(&self) -> &ParamSet {
        dispatch!(self, n => n.params())
    }

    pub fn spec_json(&self) -> serde_json::Value {
        dispatch!(self, n => n.spec_json())
    }

    pub fn predict(&self, examples: &[&Example]) -> Result<Tensor> {
        dispatch!(self, n => n.predict(examples))
    }

    pub fn to_named(&self) -> NamedTensors {
        let meta = json!({
            "arch": self.arch(),
            "spec": self.spec_json(),
            "dims": self.dims(),
        });
        self.params().to_named(meta)
    }

    pub fn from_named(stored: &NamedTensors) -> Result<Self> {
        let field = |k: &str| {
            stored
                .meta
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Format(format!("checkpoint metadata lacks {k:?}")))
        };
        let arch: Arch = serde_json::from_value(field("arch")?)?;
        let dims: InputDims = serde_json::from_value(field("dims")?)?;
        let mut net = Self::build(arch, field("spec")?, dims, 0)?;
        dispatch!(&mut net, n => n.params_mut().load_from(stored))?;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_named().write(path)
    }
}

pub fn load_network(path: &Path) -> Result<AnyNetwork> {
    AnyNetwork::from_named(&NamedTensors::read(path)?)
}

/// Architecture recorded in a checkpoint file (networks and baseline alike).
pub fn checkpoint_arch(stored: &NamedTensors) -> Result<Arch> {
    let arch = stored
        .meta
        .get("arch")
        .cloned()
        .ok_or_else(|| Error::Format("checkpoint metadata lacks \"arch\"".into()))?;
    Ok(serde_json::from_value(arch)?)
}
