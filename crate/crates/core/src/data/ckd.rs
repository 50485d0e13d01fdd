//! Kidney-failure case study: patients with advanced kidney disease, one
//! example per eGFR observation month `s` covering the input year
//! `[s, s + 11]`, outcome = dialysis or transplant code in the outcome year
//! that starts `gap` months after the input year ends.

use serde::{Deserialize, Serialize};

use super::cohort::NormStats;
use super::record::{PatientId, PatientRecord};
use super::window::{Example, Label};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CkdConfig {
    pub egfr_codes: Vec<String>,
    /// Inclusive range of qualifying eGFR values.
    pub egfr_low: f64,
    pub egfr_high: f64,
    /// Minimum spacing in months between the two qualifying eGFR values.
    pub min_separation: u32,
    /// Every run of this many consecutive months of the input year needs an eGFR.
    pub density_span: u32,
    pub year: u32,
    pub gap: u32,
    pub outcome_len: u32,
    /// Procedure codes for dialysis or kidney transplant.
    pub outcome_codes: Vec<String>,
    pub labs: Vec<String>,
    pub drug_classes: Vec<String>,
    pub diagnoses: Vec<String>,
    /// Calendar year of month index 0, used for age.
    pub base_year: i32,
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for CkdConfig {
    fn default() -> Self {
        Self {
            egfr_codes: strings(&["33914-3", "48642-3", "48643-1"]),
            egfr_low: 15.0,
            egfr_high: 30.0,
            min_separation: 3,
            density_span: 4,
            year: 12,
            gap: 3,
            outcome_len: 12,
            outcome_codes: strings(&[
                "90935", "90937", "90945", "90947", "90999", "50360", "50365",
            ]),
            labs: strings(&[
                "33914-3", "48642-3", "48643-1", "2160-0", "1751-7", "17861-6", "2028-9", "9318-7",
                "2777-1", "3094-0", "2075-0", "4544-3", "718-7", "2823-3",
            ]),
            drug_classes: strings(&[
                "BETA-ADRENERGIC BLOCKING AGENTS",
                "LOOP DIURETICS",
                "HMG-COA REDUCTASE INHIBITORS",
                "DIHYDROPYRIDINES",
                "ANGIOTENSIN-CONVERTING ENZYME INHIBITORS",
                "ANGIOTENSIN II RECEPTOR ANTAGONISTS",
                "VITAMIN D",
                "DIRECT VASODILATORS",
                "THIAZIDE DIURETICS",
                "CHOLESTEROL ABSORPTION INHIBITORS",
                "THIAZIDE-LIKE DIURETICS",
                "PHOSPHATE-REMOVING AGENTS",
                "CENTRAL ALPHA-AGONISTS",
                "HEMATOPOIETIC AGENTS",
                "ALPHA-ADRENERGIC BLOCKING AGENTS",
            ]),
            diagnoses: strings(&[
                "403.11", "403.91", "285.21", "588.81", "V72.81", "786.50", "600.00", "244.9",
                "599.0", "250.02", "250.01", "530.81", "V58.61", "780.79", "562.10",
            ]),
            base_year: 2000,
        }
    }
}

impl CkdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.egfr_codes.is_empty() || self.year == 0 || self.outcome_len == 0 {
            return Err(Error::Config(
                "eGFR codes, input year and outcome window must be non-empty".into(),
            ));
        }
        if self.density_span == 0 || self.density_span > self.year {
            return Err(Error::Config(format!(
                "density span {} must be in 1..={}",
                self.density_span, self.year
            )));
        }
        Ok(())
    }

    /// Row names of the feature matrix, in order.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.labs.iter().map(|c| format!("lab:{c}")).collect();
        names.extend(self.drug_classes.iter().map(|c| format!("drug:{c}")));
        names.extend(self.diagnoses.iter().map(|c| format!("dx:{c}")));
        names.push("female".into());
        names.push("age".into());
        names
    }

    /// First month of the outcome window for an input year starting at `s`.
    pub fn outcome_start(&self, s: u32) -> u32 {
        s + self.year + self.gap
    }

    fn egfr_months(&self, record: &PatientRecord) -> Vec<(u32, f64)> {
        let mut all: Vec<(u32, f64)> = self
            .egfr_codes
            .iter()
            .filter_map(|c| record.labs.get(c))
            .flat_map(|s| s.iter().copied())
            .collect();
        all.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        all
    }
}

/// Cohort rule: two eGFR values in range at least `min_separation` months apart.
pub fn ckd_eligible(record: &PatientRecord, cfg: &CkdConfig) -> bool {
    let qualifying: Vec<u32> = cfg
        .egfr_months(record)
        .into_iter()
        .filter(|&(_, v)| v >= cfg.egfr_low && v <= cfg.egfr_high)
        .map(|e| e.0)
        .collect();
    match (qualifying.first(), qualifying.last()) {
        (Some(&a), Some(&b)) => b - a >= cfg.min_separation,
        _ => false,
    }
}

/// Density rule: every `density_span`-month run inside `[s, s + year - 1]`
/// holds at least one eGFR month.
pub fn dense_enough(egfr_months: &[u32], s: u32, cfg: &CkdConfig) -> bool {
    (s..=s + cfg.year - cfg.density_span).all(|a| {
        let i = egfr_months.partition_point(|&m| m < a);
        i < egfr_months.len() && egfr_months[i] < a + cfg.density_span
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CkdExample {
    pub patient_id: PatientId,
    /// First month of the input year.
    pub start: u32,
    /// `[features, year]`.
    pub x: Tensor,
    pub y: bool,
}

impl CkdExample {
    /// Single-disease view with a fully observed mask, for the networks.
    pub fn to_example(&self) -> Example {
        Example {
            patient_id: self.patient_id,
            t: self.start + self.x.dim(1) as u32 - 1,
            x: self.x.clone(),
            mask: Tensor::filled(self.x.shape(), 1.0),
            y: vec![if self.y { Label::Pos } else { Label::Neg }],
        }
    }
}

fn features(
    record: &PatientRecord,
    s: u32,
    cfg: &CkdConfig,
    stats: Option<&NormStats>,
) -> Result<Tensor> {
    let year = cfg.year as usize;
    let rows = cfg.labs.len() + cfg.drug_classes.len() + cfg.diagnoses.len() + 2;
    let mut x = vec![0.0; rows * year];
    let in_year = |m: u32| m >= s && m < s + cfg.year;
    let mut row = 0;
    for code in &cfg.labs {
        if let Some(series) = record.labs.get(code) {
            for &(m, v) in series.iter().filter(|e| in_year(e.0)) {
                let v = match stats {
                    Some(st) => st.normalize_value(code, v)?,
                    None => v,
                };
                x[row * year + (m - s) as usize] = v;
            }
        }
        row += 1;
    }
    for (codes, events) in [
        (&cfg.drug_classes, &record.prescriptions),
        (&cfg.diagnoses, &record.diagnoses),
    ] {
        for code in codes {
            for (m, _) in events.iter().filter(|e| &e.1 == code && in_year(e.0)) {
                x[row * year + (m - s) as usize] = 1.0;
            }
            row += 1;
        }
    }
    let female = if record.gender.as_deref() == Some("F") {
        1.0
    } else {
        0.0
    };
    x[row * year..(row + 1) * year].fill(female);
    row += 1;
    let age = record
        .birth_year
        .map(|b| (cfg.base_year - b) as f64 + s as f64 / 12.0)
        .unwrap_or(0.0);
    x[row * year..(row + 1) * year].fill(age);
    Tensor::new(vec![rows, year], x)
}

/// Examples for every eligible patient and every eGFR month passing the
/// density rule, minus those with an outcome code before the outcome
/// window. Lab rows are monthly values, normalized when `stats` is given;
/// a patient without a birth year gets age 0.
pub fn build_ckd_examples(
    records: &[PatientRecord],
    cfg: &CkdConfig,
    stats: Option<&NormStats>,
) -> Result<Vec<CkdExample>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for record in records.iter().filter(|r| ckd_eligible(r, cfg)) {
        let mut months: Vec<u32> = cfg.egfr_months(record).into_iter().map(|e| e.0).collect();
        months.dedup();
        let outcome: Vec<u32> = record
            .procedures
            .iter()
            .filter(|e| cfg.outcome_codes.contains(&e.1))
            .map(|e| e.0)
            .collect();
        for &s in &months {
            if !dense_enough(&months, s, cfg) {
                continue;
            }
            let lo = cfg.outcome_start(s);
            let hi = lo + cfg.outcome_len;
            if outcome.iter().any(|&m| m < lo) {
                continue;
            }
            out.push(CkdExample {
                patient_id: record.patient_id,
                start: s,
                x: features(record, s, cfg, stats)?,
                y: outcome.iter().any(|&m| m < hi),
            });
        }
    }
    out.sort_by_key(|e| (e.patient_id, e.start));
    Ok(out)
}
