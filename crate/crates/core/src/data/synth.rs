//! Synthetic cohorts with planted label mechanisms.
//!
//! Every patient has exactly `history` months of labs starting at a random
//! offset, with the first and last month observed for every lab and every
//! 12-month block non-empty, so each patient passes the cohort filter and
//! yields a single window when `history` equals the model window.
//!
//! Generators:
//! * `linear`: positive with probability `sigmoid(sharpness·(z - threshold))`
//!   where `z` is the latest standardized value of one lab.
//! * `temporal_order`: each of two labs carries a mirrored pair of bumps at
//!   months `τ` and `history-1-τ`; the patient is positive with probability
//!   `agreement` when the first lab's pair sits further out (`τ_a < τ_b`) and
//!   `1 - agreement` otherwise. Reflection symmetry of every series keeps
//!   the min, max, latest and trend features class-independent.
//! * `null`: positive with fixed probability, independent of the labs.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::panel::lab_codes;
use super::record::PatientRecord;
use crate::error::{Error, Result};
use crate::tensor::sigmoid;
use crate::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Linear {
        lab: usize,
        #[serde(default)]
        threshold: f64,
        #[serde(default = "default_sharpness")]
        sharpness: f64,
    },
    TemporalOrder {
        first_lab: usize,
        second_lab: usize,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_agreement")]
        agreement: f64,
    },
    Null {
        prevalence: f64,
    },
}

fn default_sharpness() -> f64 {
    8.0
}

fn default_amplitude() -> f64 {
    3.0
}

fn default_agreement() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedDisease {
    pub code: String,
    #[serde(default)]
    pub description: String,
    #[serde(flatten)]
    pub generator: Generator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub patients: usize,
    pub labs: usize,
    /// Months of lab history per patient.
    pub history: usize,
    /// Probability that a lab is observed in a given month.
    pub obs_prob: f64,
    /// Standard deviation of month-to-month noise around a patient's level.
    pub noise: f64,
    /// History start is drawn uniformly from `0..=max_offset`.
    pub max_offset: u32,
    pub gap: u32,
    pub horizon: u32,
    /// Fraction of patients per disease with a diagnosis before the gap ends.
    pub exclusion_rate: f64,
    /// Fraction of negatives with one stray diagnosis in the prediction window.
    pub stray_rate: f64,
    pub first_id: u64,
    pub diseases: Vec<PlantedDisease>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            patients: 1000,
            labs: 6,
            history: 36,
            obs_prob: 0.5,
            noise: 0.5,
            max_offset: 24,
            gap: 3,
            horizon: 12,
            exclusion_rate: 0.05,
            stray_rate: 0.05,
            first_id: 1,
            diseases: vec![
                PlantedDisease {
                    code: "401.9".into(),
                    description: "Hypertension NOS".into(),
                    generator: Generator::Linear {
                        lab: 2,
                        threshold: 0.0,
                        sharpness: default_sharpness(),
                    },
                },
                PlantedDisease {
                    code: "428.0".into(),
                    description: "CHF NOS".into(),
                    generator: Generator::TemporalOrder {
                        first_lab: 0,
                        second_lab: 1,
                        amplitude: default_amplitude(),
                        agreement: default_agreement(),
                    },
                },
                PlantedDisease {
                    code: "V70.0".into(),
                    description: "Routine medical exam".into(),
                    generator: Generator::Null { prevalence: 0.4 },
                },
            ],
        }
    }
}

/// Smallest history that leaves room for two non-overlapping bump positions.
const MIN_TEMPORAL_HISTORY: usize = 18;

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.labs == 0 {
            return bad("synthetic cohort needs at least one lab".into());
        }
        if !(self.obs_prob > 0.0 && self.obs_prob <= 1.0) {
            return bad(format!(
                "observation probability {} must be in (0, 1]",
                self.obs_prob
            ));
        }
        if self.history < 25 {
            return bad(format!(
                "history of {} months cannot cover three yearly blocks",
                self.history
            ));
        }
        if !(self.noise >= 0.0) {
            return bad("noise must be non-negative".into());
        }
        for (name, r) in [
            ("exclusion_rate", self.exclusion_rate),
            ("stray_rate", self.stray_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("{name} {r} outside [0, 1]"));
            }
        }
        if self.horizon < 2 {
            return bad("prediction horizon must allow two distinct diagnosis months".into());
        }
        for d in &self.diseases {
            match d.generator {
                Generator::Linear { lab, sharpness, .. } => {
                    if lab >= self.labs || !(sharpness > 0.0) {
                        return bad(format!("disease {}: invalid linear generator", d.code));
                    }
                }
                Generator::TemporalOrder {
                    first_lab,
                    second_lab,
                    agreement,
                    ..
                } => {
                    if first_lab >= self.labs || second_lab >= self.labs || first_lab == second_lab
                    {
                        return bad(format!(
                            "disease {}: temporal generator needs two distinct labs",
                            d.code
                        ));
                    }
                    if !(0.5..=1.0).contains(&agreement) {
                        return bad(format!("disease {}: agreement must be in [0.5, 1]", d.code));
                    }
                    if self.history < MIN_TEMPORAL_HISTORY {
                        return bad(format!(
                            "disease {}: history too short for bump pairs",
                            d.code
                        ));
                    }
                }
                Generator::Null { prevalence } => {
                    if !(0.0..=1.0).contains(&prevalence) {
                        return bad(format!("disease {}: prevalence outside [0, 1]", d.code));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn lab_codes(&self) -> Vec<String> {
        lab_codes(self.labs)
    }

    pub fn disease_codes(&self) -> Vec<String> {
        self.diseases.iter().map(|d| d.code.clone()).collect()
    }
}

/// Draws two bump positions in `[2, history/2 - 3]` at least four months apart.
fn bump_positions(rng: &mut SeededRng, history: usize) -> (usize, usize) {
    let hi = history / 2 - 3;
    loop {
        let a = rng.random_range(2..=hi);
        let b = rng.random_range(2..=hi);
        if a.abs_diff(b) >= 4 {
            return (a, b);
        }
    }
}

fn add_bump(series: &mut [f64], at: usize, amplitude: f64) {
    series[at] += amplitude;
    series[at - 1] += amplitude / 2.0;
    series[at + 1] += amplitude / 2.0;
}

fn observation_mask(rng: &mut SeededRng, history: usize, obs_prob: f64) -> Vec<bool> {
    let mut mask: Vec<bool> = (0..history).map(|_| rng.random_bool(obs_prob)).collect();
    mask[0] = true;
    mask[history - 1] = true;
    for start in (0..history).step_by(12) {
        let end = (start + 12).min(history);
        if !mask[start..end].iter().any(|&o| o) {
            let m = rng.random_range(start..end);
            mask[m] = true;
        }
    }
    mask
}

/// Generates `spec.patients` records; identical seeds give identical cohorts.
pub fn synthesize_cohort(spec: &SynthSpec, seed: u64) -> Result<Vec<PatientRecord>> {
    spec.validate()?;
    let mut rng = SeededRng::seed_from_u64(seed);
    let codes = spec.lab_codes();
    let w = spec.history;
    let mut out = Vec::with_capacity(spec.patients);
    for p in 0..spec.patients {
        let id = spec.first_id + p as u64;
        let start: u32 = rng.random_range(0..=spec.max_offset);
        let t = start + w as u32 - 1;
        let mut record = PatientRecord::new(id);
        record.gender = Some(if rng.random_bool(0.5) { "F" } else { "M" }.to_string());
        record.birth_year = Some(rng.random_range(1930..=1980));

        let mut z: Vec<Vec<f64>> = (0..spec.labs)
            .map(|_| {
                let level: f64 = StandardNormal.sample(&mut rng);
                (0..w)
                    .map(|_| {
                        level
                            + spec.noise * {
                                let e: f64 = StandardNormal.sample(&mut rng);
                                e
                            }
                    })
                    .collect()
            })
            .collect();

        let mut risk = Vec::with_capacity(spec.diseases.len());
        for d in &spec.diseases {
            match d.generator {
                Generator::TemporalOrder {
                    first_lab,
                    second_lab,
                    amplitude,
                    agreement,
                } => {
                    let (ta, tb) = bump_positions(&mut rng, w);
                    for (lab, tau) in [(first_lab, ta), (second_lab, tb)] {
                        add_bump(&mut z[lab], tau, amplitude);
                        add_bump(&mut z[lab], w - 1 - tau, amplitude);
                    }
                    risk.push(if ta < tb { agreement } else { 1.0 - agreement });
                }
                Generator::Null { prevalence } => risk.push(prevalence),
                // the latest value is only final after all bumps are placed
                Generator::Linear { .. } => risk.push(f64::NAN),
            }
        }
        for (d, r) in spec.diseases.iter().zip(risk.iter_mut()) {
            if let Generator::Linear {
                lab,
                threshold,
                sharpness,
            } = d.generator
            {
                *r = sigmoid(sharpness * (z[lab][w - 1] - threshold));
            }
        }

        for (lab, series) in z.iter().enumerate() {
            let mask = observation_mask(&mut rng, w, spec.obs_prob);
            let center = 10.0 * (lab + 1) as f64;
            let scale = 1.0 + (lab % 3) as f64;
            for (m, (&v, &observed)) in series.iter().zip(&mask).enumerate() {
                if observed {
                    record.add_lab(&codes[lab], start + m as u32, center + scale * v);
                }
            }
        }

        let window_lo = t + spec.gap + 1;
        for (d, &p_pos) in spec.diseases.iter().zip(&risk) {
            let positive = rng.random_bool(p_pos);
            if rng.random_bool(spec.exclusion_rate) {
                let m = rng.random_range(start..=t + spec.gap);
                record.diagnoses.push((m, d.code.clone()));
            } else if positive {
                let a = rng.random_range(0..spec.horizon);
                let mut b = rng.random_range(0..spec.horizon - 1);
                if b >= a {
                    b += 1;
                }
                record.diagnoses.push((window_lo + a, d.code.clone()));
                record.diagnoses.push((window_lo + b, d.code.clone()));
            } else if rng.random_bool(spec.stray_rate) {
                let m = window_lo + rng.random_range(0..spec.horizon);
                record.diagnoses.push((m, d.code.clone()));
            }
        }
        record.canonicalize();
        out.push(record);
    }
    Ok(out)
}
