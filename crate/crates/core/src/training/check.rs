use rand::SeedableRng;

use super::loss::{weighted_nll, DiseaseWeights};
use crate::data::{Example, Label};
use crate::error::Result;
use crate::models::{Network, Pass};
use crate::tensor::{grad_check, GradCheckReport, Tensor};
use crate::SeededRng;

/// Weighted loss of `net` on `examples` in train mode. Dropout masks come
/// from a generator seeded with `seed`, so repeated calls agree bitwise.
pub fn train_loss<N: Network>(
    net: &N,
    examples: &[&Example],
    weights: &DiseaseWeights,
    dropout: f64,
    seed: u64,
) -> Result<f64> {
    let x = net.input(examples)?;
    let mut rng = SeededRng::seed_from_u64(seed);
    let mut pass = Pass::train(&mut rng, dropout);
    let (probs, _) = net.forward(&x, &mut pass)?;
    let labels: Vec<&[Label]> = examples.iter().map(|e| e.y.as_slice()).collect();
    Ok(weighted_nll(&probs, &labels, weights)?.loss)
}

/// Compares the backward pass of a whole network against central
/// differences of [`train_loss`], for every trainable parameter.
pub fn network_grad_check<N: Network + Clone>(
    net: &N,
    examples: &[&Example],
    weights: &DiseaseWeights,
    dropout: f64,
    h: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let x = net.input(examples)?;
    let seed = 17;
    let mut rng = SeededRng::seed_from_u64(seed);
    let mut pass = Pass::train(&mut rng, dropout);
    let (probs, cache) = net.forward(&x, &mut pass)?;
    let labels: Vec<&[Label]> = examples.iter().map(|e| e.y.as_slice()).collect();
    let nll = weighted_nll(&probs, &labels, weights)?;
    let grads = net.backward(&cache, &nll.grad)?;

    let trainable: Vec<usize> = net.params().trainable().map(|(i, _)| i).collect();
    let names: Vec<String> = trainable
        .iter()
        .map(|&i| net.params().entries()[i].name.clone())
        .collect();
    let analytic: Vec<Tensor> = trainable
        .iter()
        .map(|&i| grads.get_or_zeros(i, net.params()))
        .collect();
    let params: Vec<(&str, &Tensor)> = trainable
        .iter()
        .zip(&names)
        .map(|(&i, n)| (n.as_str(), net.params().get(i)))
        .collect();
    let analytic_refs: Vec<&Tensor> = analytic.iter().collect();

    let mut probe = net.clone();
    grad_check(
        |point| {
            for (&i, t) in trainable.iter().zip(point) {
                *probe.params_mut().get_mut(i) = t.clone();
            }
            train_loss(&probe, examples, weights, dropout, seed)
        },
        &params,
        &analytic_refs,
        h,
        tolerance,
    )
}
