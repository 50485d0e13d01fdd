use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Probabilities are clipped to `[CLIP, 1 - CLIP]` before taking logs.
pub const CLIP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Balance each disease's positive and negative contributions.
    #[default]
    InverseFrequency,
    /// Every known entry weighs 1.
    None,
}

/// `(w⁺, w⁻) = (1/(2f), 1/(2(1-f)))`, or `None` when `f` is 0 or 1.
pub fn class_weights(prevalence: f64) -> Option<(f64, f64)> {
    if prevalence > 0.0 && prevalence < 1.0 {
        Some((1.0 / (2.0 * prevalence), 1.0 / (2.0 * (1.0 - prevalence))))
    } else {
        None
    }
}

/// Per-disease class weights. Diseases without both classes among the
/// known training labels are untrainable and left out of the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct DiseaseWeights {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
    pub trainable: Vec<bool>,
    /// Positive fraction among known labels, `None` when there are none.
    pub prevalence: Vec<Option<f64>>,
}

impl DiseaseWeights {
    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            pos: self.pos.iter().map(|w| w * c).collect(),
            neg: self.neg.iter().map(|w| w * c).collect(),
            ..self.clone()
        }
    }

    fn weight(&self, m: usize, label: Label) -> Option<f64> {
        if !self.trainable[m] {
            return None;
        }
        match label {
            Label::Pos => Some(self.pos[m]),
            Label::Neg => Some(self.neg[m]),
            Label::Excluded => None,
        }
    }
}

pub fn compute_disease_weights(
    labels: &[&[Label]],
    diseases: usize,
    mode: Weighting,
) -> DiseaseWeights {
    let mut w = DiseaseWeights {
        pos: vec![0.0; diseases],
        neg: vec![0.0; diseases],
        trainable: vec![false; diseases],
        prevalence: vec![None; diseases],
    };
    for m in 0..diseases {
        let pos = labels.iter().filter(|y| y[m] == Label::Pos).count();
        let known = labels.iter().filter(|y| y[m].is_known()).count();
        if known == 0 {
            continue;
        }
        let f = pos as f64 / known as f64;
        w.prevalence[m] = Some(f);
        if let Some((wp, wn)) = class_weights(f) {
            w.trainable[m] = true;
            (w.pos[m], w.neg[m]) = match mode {
                Weighting::InverseFrequency => (wp, wn),
                Weighting::None => (1.0, 1.0),
            };
        }
    }
    w
}

#[derive(Debug, Clone, PartialEq)]
pub struct Nll {
    /// Weighted loss averaged over the counted entries.
    pub loss: f64,
    /// Gradient of `loss` with respect to the probabilities.
    pub grad: Tensor,
    /// Unnormalized weighted loss from positive entries.
    pub positive: f64,
    /// Unnormalized weighted loss from negative entries.
    pub negative: f64,
    /// Entries that entered the loss.
    pub count: usize,
}

/// Weighted negative log-likelihood over `[batch, M]` probabilities.
/// Excluded labels and untrainable diseases contribute nothing.
pub fn weighted_nll(probs: &Tensor, labels: &[&[Label]], weights: &DiseaseWeights) -> Result<Nll> {
    let m = weights.len();
    let n = labels.len();
    probs.expect_shape(&[n, m])?;
    if labels.iter().any(|y| y.len() != m) {
        return Err(Error::Dimension(format!(
            "label rows must have {m} entries"
        )));
    }
    let mut positive = 0.0;
    let mut negative = 0.0;
    let mut count = 0usize;
    let mut grad = vec![0.0; n * m];
    for (i, y) in labels.iter().enumerate() {
        for (d, &label) in y.iter().enumerate() {
            let Some(w) = weights.weight(d, label) else {
                continue;
            };
            let p = probs.data()[i * m + d].clamp(CLIP, 1.0 - CLIP);
            count += 1;
            if label == Label::Pos {
                positive -= w * p.ln();
                grad[i * m + d] = -w / p;
            } else {
                negative -= w * (1.0 - p).ln();
                grad[i * m + d] = w / (1.0 - p);
            }
        }
    }
    if count == 0 {
        log::warn!("every label in the batch is masked; loss and gradient are zero");
        return Ok(Nll {
            loss: 0.0,
            grad: Tensor::zeros(&[n, m]),
            positive: 0.0,
            negative: 0.0,
            count: 0,
        });
    }
    let c = count as f64;
    for g in &mut grad {
        *g /= c;
    }
    Ok(Nll {
        loss: (positive + negative) / c,
        grad: Tensor::new(vec![n, m], grad)?,
        positive,
        negative,
        count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::*;

    #[test]
    fn weight_examples() {
        assert_eq!(class_weights(0.5), Some((1.0, 1.0)));
        let (wp, wn) = class_weights(0.01).unwrap();
        assert!((wp - 50.0).abs() < 1e-12);
        assert!((wn - 0.505050505050505).abs() < 1e-12);
        assert_eq!(class_weights(0.0), None);
        assert_eq!(class_weights(1.0), None);
    }

    #[test]
    fn prevalence_ignores_excluded() {
        let rows: Vec<Vec<Label>> = vec![
            vec![Pos, Neg],
            vec![Neg, Neg],
            vec![Excluded, Neg],
            vec![Neg, Excluded],
        ];
        let refs: Vec<&[Label]> = rows.iter().map(|r| r.as_slice()).collect();
        let w = compute_disease_weights(&refs, 2, Weighting::InverseFrequency);
        assert_eq!(w.prevalence[0], Some(1.0 / 3.0));
        assert!(w.trainable[0]);
        assert!((w.pos[0] - 1.5).abs() < 1e-15);
        assert!(!w.trainable[1]);
        assert_eq!(w.prevalence[1], Some(0.0));
    }

    fn all_trainable(m: usize) -> DiseaseWeights {
        DiseaseWeights {
            pos: vec![1.0; m],
            neg: vec![1.0; m],
            trainable: vec![true; m],
            prevalence: vec![Some(0.5); m],
        }
    }

    #[test]
    fn single_entry_is_ln2() {
        let p = Tensor::new(vec![1, 1], vec![0.5]).unwrap();
        let rows = [vec![Pos]];
        let refs: Vec<&[Label]> = rows.iter().map(|r| r.as_slice()).collect();
        let nll = weighted_nll(&p, &refs, &all_trainable(1)).unwrap();
        assert!((nll.loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(nll.grad.data(), &[-2.0]);
    }

    #[test]
    fn perfect_prediction_is_near_zero() {
        let p = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let rows = [vec![Pos, Neg], vec![Neg, Pos]];
        let refs: Vec<&[Label]> = rows.iter().map(|r| r.as_slice()).collect();
        let nll = weighted_nll(&p, &refs, &all_trainable(2)).unwrap();
        assert!(nll.loss < 1e-11);
    }

    #[test]
    fn fully_masked_batch_is_zero() {
        let p = Tensor::new(vec![1, 2], vec![0.3, 0.9]).unwrap();
        let rows = [vec![Excluded, Excluded]];
        let refs: Vec<&[Label]> = rows.iter().map(|r| r.as_slice()).collect();
        let nll = weighted_nll(&p, &refs, &all_trainable(2)).unwrap();
        assert_eq!(nll.loss, 0.0);
        assert!(nll.grad.data().iter().all(|&g| g == 0.0));
    }
}
