#![allow(dead_code)]

pub mod oracle;

use onset_core::data::{Example, Label};
use onset_core::models::{Cnn1, Cnn1Spec, Cnn2, Cnn2Spec, InputDims, Lstm, LstmSpec};
use onset_core::training::DiseaseWeights;
use onset_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TINY: InputDims = InputDims {
    labs: 3,
    window: 12,
    diseases: 2,
};

pub fn random_examples(n: usize, dims: InputDims, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let cells = dims.labs * dims.window;
            let mask: Vec<f64> = (0..cells)
                .map(|_| rng.random_bool(0.7) as u8 as f64)
                .collect();
            let x: Vec<f64> = mask
                .iter()
                .map(|&m| m * rng.random_range(-2.0..2.0))
                .collect();
            let y = (0..dims.diseases)
                .map(|_| match rng.random_range(0..5) {
                    0 => Label::Excluded,
                    1 | 2 => Label::Pos,
                    _ => Label::Neg,
                })
                .collect();
            Example {
                patient_id: i as u64,
                t: 40,
                x: Tensor::new(vec![dims.labs, dims.window], x).unwrap(),
                mask: Tensor::new(vec![dims.labs, dims.window], mask).unwrap(),
                y,
            }
        })
        .collect()
}

pub fn uneven_weights(m: usize) -> DiseaseWeights {
    DiseaseWeights {
        pos: (0..m).map(|d| 1.5 + d as f64).collect(),
        neg: (0..m).map(|d| 0.75 / (1.0 + d as f64)).collect(),
        trainable: vec![true; m],
        prevalence: vec![Some(0.3); m],
    }
}

pub fn tiny_cnn1(batch_norm: bool, seed: u64) -> Cnn1 {
    let spec = Cnn1Spec {
        num_filters: 4,
        kernel_len: 3,
        pool: 2,
        hidden: vec![8],
        batch_norm,
        ..Cnn1Spec::default()
    };
    Cnn1::new(spec, TINY, seed).unwrap()
}

pub fn tiny_cnn2(batch_norm: bool, seed: u64) -> Cnn2 {
    let spec = Cnn2Spec {
        vertical_filters: 4,
        vertical_layers: 2,
        temporal_filters: 4,
        temporal_kernel: 3,
        pool: 2,
        hidden: vec![8],
        batch_norm,
        ..Cnn2Spec::default()
    };
    Cnn2::new(spec, TINY, seed).unwrap()
}

pub fn tiny_lstm(batch_norm: bool, include_mask: bool, seed: u64) -> Lstm {
    let spec = LstmSpec {
        hidden_size: 4,
        include_mask,
        hidden: vec![8],
        batch_norm,
    };
    Lstm::new(spec, TINY, seed).unwrap()
}
