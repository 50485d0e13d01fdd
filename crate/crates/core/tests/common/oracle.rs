//! Brute-force reference for the sliding-window labeler: enumerates every
//! month and applies the rules directly.

#![allow(dead_code)]

use std::collections::BTreeSet;

use onset_core::data::{Label, PatientRecord, WindowConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn oracle_label(record: &PatientRecord, code: &str, t: u32, cfg: &WindowConfig) -> Label {
    let mut excluded = false;
    let mut window_months = BTreeSet::new();
    for (m, c) in &record.diagnoses {
        if c != code {
            continue;
        }
        if *m <= t + cfg.gap {
            excluded = true;
        } else if *m <= t + cfg.gap + cfg.horizon {
            window_months.insert(*m);
        }
    }
    if excluded {
        Label::Excluded
    } else if window_months.len() >= 2 {
        Label::Pos
    } else {
        Label::Neg
    }
}

/// Window ends by enumeration of every month up to the last lab month.
pub fn oracle_ends(record: &PatientRecord, labs: &[String], cfg: &WindowConfig) -> Vec<u32> {
    let months: Vec<u32> = labs
        .iter()
        .filter_map(|l| record.labs.get(l))
        .flat_map(|s| s.iter().map(|e| e.0))
        .collect();
    let (Some(&first), Some(&last)) = (months.iter().min(), months.iter().max()) else {
        return vec![];
    };
    let b = cfg.window as u32;
    (0..=last)
        .filter(|&t| t + 1 >= first + b)
        .filter(|&t| (t + 1 - first - b) % cfg.stride == 0)
        .filter(|&t| months.iter().any(|&m| m + b > t && m <= t))
        .collect()
}

/// Patients with sparse labs over up to ~8 years and dense, clustered
/// diagnoses of `diseases` codes so every label state is common.
pub fn random_patient(
    id: u64,
    labs: &[String],
    diseases: &[String],
    rng: &mut ChaCha8Rng,
) -> PatientRecord {
    let mut r = PatientRecord::new(id);
    let start = rng.random_range(0..30u32);
    let span = rng.random_range(1..100u32);
    let density = rng.random_range(0.02..0.6);
    for lab in labs {
        for m in start..start + span {
            if rng.random_bool(density) {
                r.add_lab(lab, m, rng.random_range(-5.0..5.0));
            }
        }
    }
    for code in diseases {
        let events = rng.random_range(0..6);
        let center = rng.random_range(0..start + span + 20);
        for _ in 0..events {
            let m = (center + rng.random_range(0..10)).saturating_sub(5);
            r.diagnoses.push((m, code.clone()));
        }
    }
    r.canonicalize();
    r
}

pub fn random_cohort(
    n: usize,
    labs: &[String],
    diseases: &[String],
    seed: u64,
) -> Vec<PatientRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| random_patient(i as u64 + 1, labs, diseases, &mut rng))
        .collect()
}

pub fn strings(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}
