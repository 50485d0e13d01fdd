use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::record::PatientRecord;
use crate::error::{Error, Result};

/// Keeps patients with at least one lab value in each of three consecutive
/// 12-month blocks, blocks anchored at the patient's first lab month.
pub fn filter_cohort(records: Vec<PatientRecord>) -> Vec<PatientRecord> {
    records.into_iter().filter(passes_filter).collect()
}

pub fn passes_filter(record: &PatientRecord) -> bool {
    let months = record.lab_months();
    let Some(&first) = months.first() else {
        return false;
    };
    let mut blocks: Vec<u32> = months.iter().map(|m| (m - first) / 12).collect();
    blocks.dedup();
    blocks
        .windows(3)
        .any(|w| w[1] == w[0] + 1 && w[2] == w[1] + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

impl LabStats {
    pub fn is_constant(&self) -> bool {
        self.std == 0.0
    }

    pub fn apply(&self, value: f64) -> f64 {
        if self.is_constant() {
            0.0
        } else {
            (value - self.mean) / self.std
        }
    }
}

/// Per-lab mean and standard deviation over every stored value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NormStats {
    pub labs: BTreeMap<String, LabStats>,
}

impl NormStats {
    pub fn get(&self, code: &str) -> Result<&LabStats> {
        self.labs
            .get(code)
            .ok_or_else(|| Error::UnknownLab(code.to_string()))
    }

    pub fn normalize_value(&self, code: &str, value: f64) -> Result<f64> {
        Ok(self.get(code)?.apply(value))
    }
}

pub fn compute_norm_stats(records: &[PatientRecord]) -> NormStats {
    let mut values: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in records {
        for (code, s) in &r.labs {
            values
                .entry(code)
                .or_default()
                .extend(s.iter().map(|e| e.1));
        }
    }
    let labs = values
        .into_iter()
        .map(|(code, v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            (
                code.to_string(),
                LabStats {
                    mean,
                    std: var.sqrt(),
                    count: v.len(),
                },
            )
        })
        .collect();
    NormStats { labs }
}

/// Replaces every lab value with its z-score under `stats`.
pub fn normalize(records: &[PatientRecord], stats: &NormStats) -> Result<Vec<PatientRecord>> {
    records
        .iter()
        .map(|r| {
            let mut out = r.clone();
            for (code, s) in out.labs.iter_mut() {
                let st = stats.get(code)?;
                for e in s.iter_mut() {
                    e.1 = st.apply(e.1);
                }
            }
            Ok(out)
        })
        .collect()
}
