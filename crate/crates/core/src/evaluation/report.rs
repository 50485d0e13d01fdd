use std::fmt::Write as _;

use crate::data::{Example, Label};
use crate::error::{Error, Result};
use crate::models::{ensemble_predict, Arch, BaselineModel};
use crate::tensor::Tensor;

use super::auc::auc_masked;

/// Probabilities `[n, M]` from one model over the evaluation examples. A
/// disease whose column contains NaN is treated as not predicted.
#[derive(Debug, Clone)]
pub struct ModelScores {
    pub arch: Arch,
    pub probs: Tensor,
}

/// Report columns, in CSV order.
pub const MODEL_COLUMNS: [&str; 5] = ["auc_lr", "auc_lstm", "auc_cnn1", "auc_cnn2", "auc_ens"];

#[derive(Debug, Clone, PartialEq)]
pub struct DiseaseRow {
    pub code: String,
    pub description: String,
    pub positives: usize,
    /// LR, LSTM, CNN1, CNN2, ensemble.
    pub aucs: [Option<f64>; 5],
    pub improved: bool,
}

impl DiseaseRow {
    pub fn max_auc(&self) -> f64 {
        self.aucs
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn auc_of(&self, arch: Arch) -> Option<f64> {
        self.aucs[column(arch)]
    }

    pub fn ensemble(&self) -> Option<f64> {
        self.aucs[4]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<DiseaseRow>,
    /// Diseases no model could be scored on (a single class among the
    /// known labels).
    pub omitted: Vec<String>,
}

fn column(arch: Arch) -> usize {
    match arch {
        Arch::Lr => 0,
        Arch::Lstm => 1,
        Arch::Cnn1 => 2,
        Arch::Cnn2 => 3,
    }
}

/// Minimum gain of the best deep model over the baseline that flags a row.
pub const IMPROVEMENT: f64 = 0.05;

/// Scores every disease for every model plus the ensemble (the mean of the
/// deep models, or of all models when none is deep), then sorts rows by
/// their best AUC, highest first, ties by code.
pub fn evaluate(
    models: &[ModelScores],
    examples: &[&Example],
    diseases: &[(String, String)],
) -> Result<EvalReport> {
    if models.is_empty() {
        return Err(Error::Config("evaluation needs at least one model".into()));
    }
    let (n, m) = (examples.len(), diseases.len());
    for s in models {
        if s.probs.shape() != [n, m] {
            return Err(Error::Dimension(format!(
                "{} scores have shape {:?}, expected [{n}, {m}]",
                s.arch,
                s.probs.shape()
            )));
        }
    }
    let mut seen = [false; 4];
    for s in models {
        if std::mem::replace(&mut seen[column(s.arch)], true) {
            return Err(Error::Config(format!("model {} given twice", s.arch)));
        }
    }
    let deep: Vec<&Tensor> = models
        .iter()
        .filter(|s| s.arch.is_deep())
        .map(|s| &s.probs)
        .collect();
    let members: Vec<&Tensor> = if deep.is_empty() {
        models.iter().map(|s| &s.probs).collect()
    } else {
        deep
    };
    let ensemble = ensemble_predict(&members)?;

    let mut report = EvalReport::default();
    for (d, (code, description)) in diseases.iter().enumerate() {
        let labels: Vec<Option<bool>> = examples
            .iter()
            .map(|e| e.y[d].target().map(|t| t == 1.0))
            .collect();
        let positives = examples.iter().filter(|e| e.y[d] == Label::Pos).count();
        let column_of = |t: &Tensor| -> Vec<f64> { (0..n).map(|i| t.data()[i * m + d]).collect() };
        let mut aucs = [None; 5];
        for s in models {
            aucs[column(s.arch)] = auc_masked(&column_of(&s.probs), &labels);
        }
        aucs[4] = auc_masked(&column_of(&ensemble), &labels);
        if aucs.iter().all(Option::is_none) {
            log::warn!("disease {code}: no model could be scored, row omitted");
            report.omitted.push(code.clone());
            continue;
        }
        let best_deep = aucs[1..4]
            .iter()
            .flatten()
            .copied()
            .fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |a| a.max(v)))
            });
        let improved =
            matches!((best_deep, aucs[0]), (Some(deep), Some(lr)) if deep - lr >= IMPROVEMENT);
        report.rows.push(DiseaseRow {
            code: code.clone(),
            description: description.clone(),
            positives,
            aucs,
            improved,
        });
    }
    report.rows.sort_by(|a, b| {
        b.max_auc()
            .total_cmp(&a.max_auc())
            .then_with(|| a.code.cmp(&b.code))
    });
    Ok(report)
}

impl EvalReport {
    pub fn row(&self, code: &str) -> Option<&DiseaseRow> {
        self.rows.iter().find(|r| r.code == code)
    }

    /// CSV with a fixed column order; AUCs with three decimals unless
    /// `full_precision`, absent values as empty fields.
    pub fn to_csv(&self, full_precision: bool) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["icd9", "description", "pos"];
        header.extend(MODEL_COLUMNS);
        header.push("improved");
        let wrap = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(&header).map_err(wrap)?;
        for r in &self.rows {
            let mut rec = vec![
                r.code.clone(),
                r.description.clone(),
                r.positives.to_string(),
            ];
            for a in r.aucs {
                rec.push(match a {
                    None => String::new(),
                    Some(v) if full_precision => format!("{v}"),
                    Some(v) => format!("{v:.3}"),
                });
            }
            rec.push(if r.improved { "1" } else { "0" }.to_string());
            w.write_record(&rec).map_err(wrap)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopFeature {
    pub name: String,
    pub weight: f64,
}

/// Per disease (in model order, skipped diseases omitted), the `k` features
/// with the largest absolute weight, ties broken by name.
pub fn report_top_features(model: &BaselineModel, k: usize) -> Vec<(String, Vec<TopFeature>)> {
    let names = model.feature_names();
    model
        .diseases()
        .iter()
        .zip(model.fits())
        .filter_map(|(code, fit)| fit.as_ref().map(|f| (code, f)))
        .map(|(code, fit)| {
            let mut ranked: Vec<TopFeature> = names
                .iter()
                .zip(&fit.model.weights)
                .map(|(n, &w)| TopFeature {
                    name: n.clone(),
                    weight: w,
                })
                .collect();
            ranked.sort_by(|a, b| {
                b.weight
                    .abs()
                    .total_cmp(&a.weight.abs())
                    .then_with(|| a.name.cmp(&b.name))
            });
            ranked.truncate(k);
            (code.clone(), ranked)
        })
        .collect()
}

/// `icd9,rank,feature,weight` rows with full-precision weights.
pub fn write_top_features(top: &[(String, Vec<TopFeature>)]) -> String {
    let mut out = String::from("icd9,rank,feature,weight\n");
    for (code, feats) in top {
        for (i, f) in feats.iter().enumerate() {
            let _ = writeln!(
                out,
                "{code},{},\"{}\",{}",
                i + 1,
                f.name.replace('"', "\"\""),
                f.weight
            );
        }
    }
    out
}
