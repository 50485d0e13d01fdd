//! Engineered-feature baseline: per lab the minimum, maximum and latest
//! observed value plus increasing/decreasing trend indicators, fed to one
//! regularized logistic regression per disease.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::NamedTensors;
use crate::data::{lab_label, Example};
use crate::error::{Error, Result};
use crate::evaluation::auc_masked;
use crate::tensor::{sigmoid, Tensor};
use crate::training::class_weights;
use crate::SeededRng;

const FEATURE_SUFFIXES: [&str; 5] = ["minimum", "maximum", "latest", "increasing", "decreasing"];

pub fn baseline_feature_names(labs: &[String]) -> Vec<String> {
    labs.iter()
        .flat_map(|code| {
            let label = lab_label(code);
            FEATURE_SUFFIXES
                .iter()
                .map(move |s| format!("{label} -{s}"))
        })
        .collect()
}

/// Least-squares slope of `(month, value)` pairs, zero for fewer than two
/// points or when it vanishes up to rounding.
fn slope(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let scale = points.iter().map(|p| p.1.abs()).fold(1.0, f64::max);
    let b = sxy / sxx;
    if b.abs() <= 1e-12 * scale {
        0.0
    } else {
        b
    }
}

/// `5 × D` features from the observed cells of an example.
pub fn extract_baseline_features(example: &Example) -> Vec<f64> {
    let (d, b) = (example.x.dim(0), example.x.dim(1));
    let mut out = Vec::with_capacity(5 * d);
    for lab in 0..d {
        let points: Vec<(f64, f64)> = (0..b)
            .filter(|&j| example.mask.data()[lab * b + j] != 0.0)
            .map(|j| (j as f64, example.x.data()[lab * b + j]))
            .collect();
        if points.is_empty() {
            out.extend([0.0; 5]);
            continue;
        }
        let min = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let max = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let latest = points[points.len() - 1].1;
        let s = slope(&points);
        out.extend([
            min,
            max,
            latest,
            (s > 0.0) as u8 as f64,
            (s < 0.0) as u8 as f64,
        ]);
    }
    out
}

/// One regularization setting: L1 strength (proximal step), L2 strength
/// (weight decay) and input-dropout probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RegPoint {
    pub l1: f64,
    pub l2: f64,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub grid: Vec<RegPoint>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        let p = |l1, l2, dropout| RegPoint { l1, l2, dropout };
        Self {
            grid: vec![
                p(0.0, 0.0, 0.0),
                p(1e-3, 0.0, 0.0),
                p(1e-2, 0.0, 0.0),
                p(0.0, 1e-3, 0.0),
                p(0.0, 1e-2, 0.0),
                p(0.0, 0.0, 0.2),
            ],
            learning_rate: 0.05,
            epochs: 30,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Config("regularization grid is empty".into()));
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::Config(
                "baseline batch size and learning rate must be positive".into(),
            ));
        }
        for p in &self.grid {
            if !(p.l1 >= 0.0) || !(p.l2 >= 0.0) || !(0.0..1.0).contains(&p.dropout) {
                return Err(Error::Config(format!("invalid regularization point {p:?}")));
            }
        }
        Ok(())
    }
}

/// Logistic regression over standardized inputs. Features that are constant
/// on the training data get scale 0 and never contribute.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    /// Weights on the standardized features.
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticRegression {
    fn standardize(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = if self.scale[k] == 0.0 {
                0.0
            } else {
                (x[k] - self.center[k]) / self.scale[k]
            };
        }
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        let mut z = vec![0.0; x.len()];
        self.standardize(x, &mut z);
        self.bias + z.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.score(x))
    }

    /// Mini-batch SGD on the class-balanced log loss. `ys` holds 0/1 targets.
    pub fn fit(
        xs: &[Vec<f64>],
        ys: &[f64],
        point: RegPoint,
        cfg: &BaselineConfig,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let n = xs.len();
        let f = xs.first().map_or(0, Vec::len);
        let pos = ys.iter().filter(|&&y| y == 1.0).count();
        let (w_pos, w_neg) = class_weights(pos as f64 / n.max(1) as f64)
            .ok_or_else(|| Error::Data("logistic regression needs both classes".into()))?;

        let mut center = vec![0.0; f];
        let mut scale = vec![0.0; f];
        for k in 0..f {
            let mean = xs.iter().map(|x| x[k]).sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x[k] - mean).powi(2)).sum::<f64>() / n as f64;
            center[k] = mean;
            scale[k] = var.sqrt();
        }
        let mut model = Self {
            center,
            scale,
            weights: vec![0.0; f],
            bias: 0.0,
        };
        let z: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| {
                let mut s = vec![0.0; f];
                model.standardize(x, &mut s);
                s
            })
            .collect();

        let lr = cfg.learning_rate;
        let keep = 1.0 - point.dropout;
        let mut order: Vec<usize> = (0..n).collect();
        let mut input = vec![0.0; f];
        for _ in 0..cfg.epochs {
            order.shuffle(rng);
            for batch in order.chunks(cfg.batch_size) {
                let mut gw = vec![0.0; f];
                let mut gb = 0.0;
                for &i in batch {
                    for k in 0..f {
                        input[k] = if point.dropout > 0.0 {
                            if rng.random_bool(keep) {
                                z[i][k] / keep
                            } else {
                                0.0
                            }
                        } else {
                            z[i][k]
                        };
                    }
                    let s = model.bias
                        + input
                            .iter()
                            .zip(&model.weights)
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    let c = if ys[i] == 1.0 { w_pos } else { w_neg };
                    let r = c * (sigmoid(s) - ys[i]);
                    for k in 0..f {
                        gw[k] += r * input[k];
                    }
                    gb += r;
                }
                let m = batch.len() as f64;
                for k in 0..f {
                    let g = gw[k] / m + point.l2 * model.weights[k];
                    let w = model.weights[k] - lr * g;
                    // proximal step for the L1 penalty
                    model.weights[k] = w.signum() * (w.abs() - lr * point.l1).max(0.0);
                }
                model.bias -= lr * gb / m;
            }
        }
        if !model.bias.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numeric("logistic regression diverged".into()));
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiseaseFit {
    pub point: RegPoint,
    pub model: LogisticRegression,
    pub val_auc: Option<f64>,
}

/// Fits every grid point and keeps the one with the best validation AUC,
/// the earliest on ties (or the first point when no validation AUC is
/// defined). Entries labelled `None` are ignored. Returns `None` when the
/// training labels hold a single class.
pub fn fit_with_selection(
    train_x: &[Vec<f64>],
    train_y: &[Option<bool>],
    val_x: &[Vec<f64>],
    val_y: &[Option<bool>],
    cfg: &BaselineConfig,
    seed: u64,
) -> Result<Option<DiseaseFit>> {
    cfg.validate()?;
    let (xs, ys): (Vec<Vec<f64>>, Vec<f64>) = train_x
        .iter()
        .zip(train_y)
        .filter_map(|(x, y)| y.map(|y| (x.clone(), if y { 1.0 } else { 0.0 })))
        .unzip();
    let pos = ys.iter().filter(|&&y| y == 1.0).count();
    if pos == 0 || pos == ys.len() {
        return Ok(None);
    }
    let mut best: Option<DiseaseFit> = None;
    for (g, &point) in cfg.grid.iter().enumerate() {
        let mut rng = SeededRng::seed_from_u64(seed.wrapping_add(g as u64));
        let model = LogisticRegression::fit(&xs, &ys, point, cfg, &mut rng)?;
        let scores: Vec<f64> = val_x.iter().map(|x| model.predict(x)).collect();
        let val_auc = auc_masked(&scores, val_y);
        let better = match &best {
            None => true,
            Some(b) => {
                val_auc.unwrap_or(f64::NEG_INFINITY) > b.val_auc.unwrap_or(f64::NEG_INFINITY)
            }
        };
        if better {
            best = Some(DiseaseFit {
                point,
                model,
                val_auc,
            });
        }
    }
    Ok(best)
}

/// One fitted logistic regression per disease; `None` marks a disease that
/// had no positive (or no negative) training example.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    feature_names: Vec<String>,
    diseases: Vec<String>,
    fits: Vec<Option<DiseaseFit>>,
}

fn labels_of(examples: &[&Example], m: usize) -> Vec<Option<bool>> {
    examples
        .iter()
        .map(|e| e.y[m].target().map(|t| t == 1.0))
        .collect()
}

impl BaselineModel {
    pub fn fit(
        train: &[&Example],
        val: &[&Example],
        labs: &[String],
        diseases: &[String],
        cfg: &BaselineConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let train_x: Vec<Vec<f64>> = train
            .par_iter()
            .map(|e| extract_baseline_features(e))
            .collect();
        let val_x: Vec<Vec<f64>> = val
            .par_iter()
            .map(|e| extract_baseline_features(e))
            .collect();
        let fits = (0..diseases.len())
            .into_par_iter()
            .map(|m| {
                let fit = fit_with_selection(
                    &train_x,
                    &labels_of(train, m),
                    &val_x,
                    &labels_of(val, m),
                    cfg,
                    cfg.seed.wrapping_add(1000 * m as u64),
                )?;
                if fit.is_none() {
                    log::warn!(
                        "disease {}: a single class in training data, baseline skipped",
                        diseases[m]
                    );
                }
                Ok(fit)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            feature_names: baseline_feature_names(labs),
            diseases: diseases.to_vec(),
            fits,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn diseases(&self) -> &[String] {
        &self.diseases
    }

    pub fn fits(&self) -> &[Option<DiseaseFit>] {
        &self.fits
    }

    /// `[n, M]` probabilities; skipped diseases are NaN.
    pub fn predict(&self, examples: &[&Example]) -> Result<Tensor> {
        let m = self.diseases.len();
        let rows: Vec<Vec<f64>> = examples
            .par_iter()
            .map(|e| {
                let x = extract_baseline_features(e);
                if x.len() != self.feature_names.len() {
                    return Err(Error::Dimension(format!(
                        "example gives {} features, model expects {}",
                        x.len(),
                        self.feature_names.len()
                    )));
                }
                Ok(self
                    .fits
                    .iter()
                    .map(|f| f.as_ref().map_or(f64::NAN, |f| f.model.predict(&x)))
                    .collect())
            })
            .collect::<Result<_>>()?;
        Tensor::new(vec![examples.len(), m], rows.concat())
    }

    pub fn to_named(&self) -> Result<NamedTensors> {
        let fitted: Vec<bool> = self.fits.iter().map(Option::is_some).collect();
        let aucs: Vec<Option<f64>> = self
            .fits
            .iter()
            .map(|f| f.as_ref().and_then(|f| f.val_auc))
            .collect();
        let meta = serde_json::json!({
            "arch": "lr",
            "feature_names": self.feature_names,
            "diseases": self.diseases,
            "fitted": fitted,
            "val_auc": aucs,
        });
        let mut nt = NamedTensors::new(meta);
        let f = self.feature_names.len();
        for (m, fit) in self.fits.iter().enumerate() {
            if let Some(fit) = fit {
                nt.push(
                    format!("{m}.center"),
                    Tensor::new(vec![f], fit.model.center.clone())?,
                );
                nt.push(
                    format!("{m}.scale"),
                    Tensor::new(vec![f], fit.model.scale.clone())?,
                );
                nt.push(
                    format!("{m}.weights"),
                    Tensor::new(vec![f], fit.model.weights.clone())?,
                );
                nt.push(format!("{m}.bias"), Tensor::from_vec(vec![fit.model.bias]));
                // the payload keeps an infinite L1 strength, JSON would not
                let p = fit.point;
                nt.push(
                    format!("{m}.point"),
                    Tensor::from_vec(vec![p.l1, p.l2, p.dropout]),
                );
            }
        }
        Ok(nt)
    }

    pub fn from_named(mut nt: NamedTensors) -> Result<Self> {
        let meta = nt.meta.clone();
        let field = |k: &str| {
            meta.get(k)
                .cloned()
                .ok_or_else(|| Error::Format(format!("baseline checkpoint lacks {k:?}")))
        };
        let feature_names: Vec<String> = serde_json::from_value(field("feature_names")?)?;
        let diseases: Vec<String> = serde_json::from_value(field("diseases")?)?;
        let fitted: Vec<bool> = serde_json::from_value(field("fitted")?)?;
        let aucs: Vec<Option<f64>> = serde_json::from_value(field("val_auc")?)?;
        if fitted.len() != diseases.len() || aucs.len() != diseases.len() {
            return Err(Error::Format(
                "baseline checkpoint disease count mismatch".into(),
            ));
        }
        let mut fits = Vec::with_capacity(diseases.len());
        for (m, fitted) in fitted.into_iter().enumerate() {
            fits.push(match fitted {
                false => None,
                true => Some(DiseaseFit {
                    point: match nt.take(&format!("{m}.point"))?.data() {
                        &[l1, l2, dropout] => RegPoint { l1, l2, dropout },
                        _ => {
                            return Err(Error::Format(format!(
                                "regularization point of disease {m} needs 3 values"
                            )))
                        }
                    },
                    model: LogisticRegression {
                        center: nt.take(&format!("{m}.center"))?.into_data(),
                        scale: nt.take(&format!("{m}.scale"))?.into_data(),
                        weights: nt.take(&format!("{m}.weights"))?.into_data(),
                        bias: nt.take(&format!("{m}.bias"))?.data()[0],
                    },
                    val_auc: aucs[m],
                }),
            });
        }
        Ok(Self {
            feature_names,
            diseases,
            fits,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_named()?.write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_named(NamedTensors::read(path)?)
    }
}
