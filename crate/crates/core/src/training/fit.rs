use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::adadelta::Adadelta;
use super::loss::{compute_disease_weights, weighted_nll, DiseaseWeights, Weighting};
use crate::data::{Example, Label};
use crate::error::{Error, Result};
use crate::evaluation::auc_masked;
use crate::models::{AnyNetwork, Network, Pass};
use crate::tensor::BN_MOMENTUM;
use crate::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Scale applied to every Adadelta step.
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub weighting: Weighting,
    pub dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            learning_rate: 0.1,
            rho: 0.95,
            epsilon: 1e-6,
            max_epochs: 20,
            seed: 0,
            weighting: Weighting::InverseFrequency,
            dropout: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if !(self.rho > 0.0 && self.rho < 1.0)
            || !(self.epsilon > 0.0)
            || !(self.learning_rate > 0.0)
        {
            return Err(Error::Config(
                "need 0 < rho < 1, epsilon > 0 and a positive learning rate".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub mean_val_auc: f64,
    pub val_aucs: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Epoch whose parameters were kept; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    pub history: Vec<EpochRecord>,
    pub weights: DiseaseWeights,
}

impl FitResult {
    /// `epoch,train_loss,mean_val_auc,val_auc_<code>...`; undefined AUCs are empty.
    pub fn history_csv(&self, diseases: &[String]) -> String {
        let mut out = String::from("epoch,train_loss,mean_val_auc");
        for d in diseases {
            let _ = write!(out, ",val_auc_{d}");
        }
        out.push('\n');
        for r in &self.history {
            let _ = write!(out, "{},{},{}", r.epoch, r.train_loss, r.mean_val_auc);
            for a in &r.val_aucs {
                match a {
                    Some(v) => {
                        let _ = write!(out, ",{v}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Splits shuffled indices into batches, folding a trailing singleton into
/// the previous batch so train-mode batch norm always sees two samples.
pub fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() >= 2 && out[out.len() - 1].len() == 1 {
        out.pop();
        let start = (out.len() - 1) * size;
        let last = out.len() - 1;
        out[last] = &order[start..];
    }
    out
}

/// Per-disease validation AUC of a network, over trainable diseases only.
pub fn validation_aucs<N: Network>(
    net: &N,
    val: &[&Example],
    trainable: &[bool],
) -> Result<Vec<Option<f64>>> {
    let probs = net.predict(val)?;
    let m = trainable.len();
    Ok((0..m)
        .map(|d| {
            if !trainable[d] {
                return None;
            }
            let scores: Vec<f64> = (0..val.len()).map(|i| probs.data()[i * m + d]).collect();
            let labels: Vec<Option<bool>> = val
                .iter()
                .map(|e| e.y[d].target().map(|t| t == 1.0))
                .collect();
            auc_masked(&scores, &labels)
        })
        .collect())
}

fn mean_defined(aucs: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = aucs.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Mini-batch training with the weighted loss and Adadelta. After every
/// epoch the mean validation AUC over trainable diseases is recorded; the
/// network ends up holding the parameters of the best epoch (earliest on
/// ties).
pub fn fit<N: Network>(
    net: &mut N,
    train: &[&Example],
    val: &[&Example],
    cfg: &TrainConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    let m = net.dims().diseases;
    let labels: Vec<&[Label]> = train.iter().map(|e| e.y.as_slice()).collect();
    let weights = compute_disease_weights(&labels, m, cfg.weighting);
    for (d, ok) in weights.trainable.iter().enumerate() {
        if !ok {
            log::warn!(
                "disease {d} has a single class in training data and is left out of the loss"
            );
        }
    }
    let mut result = FitResult {
        best_epoch: None,
        history: Vec::new(),
        weights,
    };
    if cfg.max_epochs == 0 {
        return Ok(result);
    }
    if !result.weights.trainable.iter().any(|&t| t) {
        return Err(Error::Data(
            "no disease has both classes in the training data".into(),
        ));
    }
    if train.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }

    let mut rng = SeededRng::seed_from_u64(cfg.seed);
    let mut opt = Adadelta::new(net.params(), cfg.rho, cfg.epsilon, cfg.learning_rate)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, crate::models::ParamSet)> = None;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut n_batches = 0usize;
        for batch in batches(&order, cfg.batch_size) {
            let examples: Vec<&Example> = batch.iter().map(|&i| train[i]).collect();
            let x = net.input(&examples)?;
            let mut pass = Pass::train(&mut rng, cfg.dropout);
            let (probs, cache) = net.forward(&x, &mut pass)?;
            let stats = std::mem::take(&mut pass.stats);
            let batch_labels: Vec<&[Label]> = examples.iter().map(|e| e.y.as_slice()).collect();
            let nll = weighted_nll(&probs, &batch_labels, &result.weights)?;
            if !nll.loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss became {} in epoch {epoch}",
                    nll.loss
                )));
            }
            let grads = net.backward(&cache, &nll.grad)?;
            opt.step(net.params_mut(), &grads)?;
            net.params_mut().apply_stat_updates(&stats, BN_MOMENTUM);
            loss_sum += nll.loss;
            n_batches += 1;
        }
        let val_aucs = validation_aucs(net, val, &result.weights.trainable)?;
        let mean = mean_defined(&val_aucs)
            .ok_or_else(|| Error::Data("validation AUC is undefined for every disease".into()))?;
        log::info!(
            "epoch {epoch}: train loss {:.5}, mean validation AUC {mean:.4}",
            loss_sum / n_batches as f64
        );
        result.history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n_batches as f64,
            mean_val_auc: mean,
            val_aucs,
        });
        if best.as_ref().is_none_or(|(b, _)| mean > *b) {
            best = Some((mean, net.params().clone()));
            result.best_epoch = Some(epoch);
        }
    }
    if let Some((_, params)) = best {
        *net.params_mut() = params;
    }
    Ok(result)
}

/// [`fit`] for a network chosen at run time.
pub fn fit_any(
    net: &mut AnyNetwork,
    train: &[&Example],
    val: &[&Example],
    cfg: &TrainConfig,
) -> Result<FitResult> {
    match net {
        AnyNetwork::Lstm(n) => fit(n, train, val, cfg),
        AnyNetwork::Cnn1(n) => fit(n, train, val, cfg),
        AnyNetwork::Cnn2(n) => fit(n, train, val, cfg),
    }
}
