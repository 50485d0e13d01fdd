use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cohort::NormStats;
use super::record::{PatientId, PatientRecord};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-disease state of one example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    Pos,
    Neg,
    /// A diagnosis was already recorded by the end of the gap; the entry
    /// carries no loss and no evaluation credit.
    Excluded,
}

impl Label {
    /// 1 for positive, 0 for negative, -1 for excluded.
    pub fn code(self) -> f64 {
        match self {
            Label::Pos => 1.0,
            Label::Neg => 0.0,
            Label::Excluded => -1.0,
        }
    }

    pub fn from_code(v: f64) -> Result<Self> {
        match v {
            x if x == 1.0 => Ok(Label::Pos),
            x if x == 0.0 => Ok(Label::Neg),
            x if x == -1.0 => Ok(Label::Excluded),
            other => Err(Error::Format(format!("invalid label code {other}"))),
        }
    }

    pub fn is_known(self) -> bool {
        self != Label::Excluded
    }

    /// Target value for unmasked entries.
    pub fn target(self) -> Option<f64> {
        match self {
            Label::Pos => Some(1.0),
            Label::Neg => Some(0.0),
            Label::Excluded => None,
        }
    }
}

/// One (patient, t) instance: the backward window of normalized lab values
/// (`D × B`, unobserved cells 0), its observation mask, and one label per
/// tracked disease.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub patient_id: PatientId,
    pub t: u32,
    pub x: Tensor,
    pub mask: Tensor,
    pub y: Vec<Label>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    /// Months of input history ending at `t` inclusive.
    pub window: usize,
    /// Months after `t` that still count towards exclusion.
    pub gap: u32,
    /// Length of the prediction window following the gap.
    pub horizon: u32,
    pub stride: u32,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window: 36,
            gap: 3,
            horizon: 12,
            stride: 1,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.stride == 0 || self.horizon == 0 {
            return Err(Error::Config(
                "window, horizon and stride must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Label for one disease given the months of its diagnoses: excluded if any
/// falls at or before `t + gap`; positive if at least two distinct months
/// fall in `(t + gap, t + gap + horizon]`; negative otherwise.
pub fn label_at(dx_months: &[u32], t: u32, cfg: &WindowConfig) -> Label {
    let start = t as u64 + cfg.gap as u64;
    let end = start + cfg.horizon as u64;
    if dx_months.iter().any(|&m| m as u64 <= start) {
        return Label::Excluded;
    }
    let mut inside: Vec<u32> = dx_months
        .iter()
        .copied()
        .filter(|&m| m as u64 <= end)
        .collect();
    inside.sort_unstable();
    inside.dedup();
    if inside.len() >= 2 {
        Label::Pos
    } else {
        Label::Neg
    }
}

/// Window ends for one patient: from `first + B - 1` to the last lab month,
/// stepping by `stride`, keeping those with at least one observation of a
/// tracked lab inside the window.
pub fn window_ends(record: &PatientRecord, labs: &[String], cfg: &WindowConfig) -> Vec<u32> {
    let mut months: Vec<u32> = labs
        .iter()
        .filter_map(|c| record.labs.get(c))
        .flat_map(|s| s.iter().map(|e| e.0))
        .collect();
    months.sort_unstable();
    months.dedup();
    let (Some(&first), Some(&last)) = (months.first(), months.last()) else {
        return Vec::new();
    };
    let b = cfg.window as u32;
    let mut ends = Vec::new();
    let mut t = first + b - 1;
    while t <= last {
        let lo = t + 1 - b;
        let i = months.partition_point(|&m| m < lo);
        if i < months.len() && months[i] <= t {
            ends.push(t);
        }
        t += cfg.stride;
    }
    ends
}

fn patient_examples(
    record: &PatientRecord,
    stats: &NormStats,
    cfg: &WindowConfig,
    labs: &[String],
    diseases: &[String],
) -> Result<Vec<Example>> {
    let (d, b) = (labs.len(), cfg.window);
    let dx: Vec<Vec<u32>> = diseases
        .iter()
        .map(|code| {
            record
                .diagnoses
                .iter()
                .filter(|e| &e.1 == code)
                .map(|e| e.0)
                .collect()
        })
        .collect();
    let mut series = Vec::with_capacity(d);
    for code in labs {
        let st = stats.get(code)?;
        series.push(
            record
                .labs
                .get(code)
                .map(|s| s.iter().map(|&(m, v)| (m, st.apply(v))).collect::<Vec<_>>())
                .unwrap_or_default(),
        );
    }
    let mut out = Vec::new();
    for t in window_ends(record, labs, cfg) {
        let lo = t + 1 - b as u32;
        let mut x = vec![0.0; d * b];
        let mut mask = vec![0.0; d * b];
        for (row, s) in series.iter().enumerate() {
            let start = s.partition_point(|e| e.0 < lo);
            for &(m, v) in s[start..].iter().take_while(|e| e.0 <= t) {
                let col = (m - lo) as usize;
                x[row * b + col] = v;
                mask[row * b + col] = 1.0;
            }
        }
        out.push(Example {
            patient_id: record.patient_id,
            t,
            x: Tensor::new(vec![d, b], x)?,
            mask: Tensor::new(vec![d, b], mask)?,
            y: dx.iter().map(|months| label_at(months, t, cfg)).collect(),
        });
    }
    Ok(out)
}

/// Builds every example of every patient, ordered by `(patient_id, t)`.
/// Lab values are normalized with `stats`; a tracked lab missing from the
/// stats is an error.
pub fn build_examples(
    records: &[PatientRecord],
    stats: &NormStats,
    cfg: &WindowConfig,
    labs: &[String],
    diseases: &[String],
) -> Result<Vec<Example>> {
    cfg.validate()?;
    let per: Vec<Vec<Example>> = records
        .par_iter()
        .map(|r| patient_examples(r, stats, cfg, labs, diseases))
        .collect::<Result<_>>()?;
    let mut all: Vec<Example> = per.into_iter().flatten().collect();
    all.sort_by_key(|e| (e.patient_id, e.t));
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::cohort::LabStats;

    fn cfg() -> WindowConfig {
        WindowConfig::default()
    }

    #[test]
    fn labeling_examples() {
        let t = 40;
        assert_eq!(label_at(&[t + 4, t + 7], t, &cfg()), Label::Pos);
        assert_eq!(label_at(&[t + 5, t + 5], t, &cfg()), Label::Neg);
        assert_eq!(label_at(&[t + 2], t, &cfg()), Label::Excluded);
        assert_eq!(label_at(&[t + 16], t, &cfg()), Label::Neg);
        assert_eq!(label_at(&[t + 3, t + 8, t + 9], t, &cfg()), Label::Excluded);
        assert_eq!(label_at(&[t + 4, t + 15], t, &cfg()), Label::Pos);
        assert_eq!(label_at(&[], t, &cfg()), Label::Neg);
    }

    fn identity_stats(codes: &[&str]) -> NormStats {
        NormStats {
            labs: codes
                .iter()
                .map(|c| {
                    (
                        c.to_string(),
                        LabStats {
                            mean: 0.0,
                            std: 1.0,
                            count: 1,
                        },
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn window_matrix_layout() {
        let mut r = PatientRecord::new(9);
        r.add_lab("A", 10, 2.0);
        r.add_lab("B", 12, -1.0);
        r.add_lab("A", 13, 4.0);
        r.canonicalize();
        let c = WindowConfig { window: 3, ..cfg() };
        let labs = vec!["A".to_string(), "B".to_string()];
        let ex = build_examples(&[r], &identity_stats(&["A", "B"]), &c, &labs, &[]).unwrap();
        assert_eq!(ex.iter().map(|e| e.t).collect::<Vec<_>>(), vec![12, 13]);
        // t = 12 covers months 10, 11, 12
        assert_eq!(ex[0].x.data(), &[2.0, 0.0, 0.0, 0.0, 0.0, -1.0]);
        assert_eq!(ex[0].mask.data(), &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(ex[1].x.data(), &[0.0, 0.0, 4.0, 0.0, -1.0, 0.0]);
    }

    #[test]
    fn empty_windows_are_skipped() {
        let mut r = PatientRecord::new(1);
        r.add_lab("A", 0, 1.0);
        r.add_lab("A", 10, 1.0);
        r.canonicalize();
        let c = WindowConfig { window: 3, ..cfg() };
        let ends = window_ends(&r, &["A".to_string()], &c);
        assert_eq!(ends, vec![2, 10]);
    }

    #[test]
    fn short_history_yields_nothing() {
        let mut r = PatientRecord::new(1);
        r.add_lab("A", 0, 1.0);
        r.add_lab("A", 20, 1.0);
        r.canonicalize();
        assert!(window_ends(&r, &["A".to_string()], &cfg()).is_empty());
    }

    #[test]
    fn missing_stats_is_unknown_lab() {
        let mut r = PatientRecord::new(1);
        r.add_lab("A", 0, 1.0);
        r.canonicalize();
        let err = build_examples(&[r], &NormStats::default(), &cfg(), &["A".to_string()], &[])
            .unwrap_err();
        assert!(matches!(err, Error::UnknownLab(_)));
    }

    #[test]
    fn label_codes_round_trip() {
        for l in [Label::Pos, Label::Neg, Label::Excluded] {
            assert_eq!(Label::from_code(l.code()).unwrap(), l);
        }
        assert!(Label::from_code(0.5).is_err());
    }
}
