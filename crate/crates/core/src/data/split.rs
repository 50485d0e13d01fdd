use rand::seq::SliceRandom;
use rand::SeedableRng;

use super::record::PatientId;
use crate::error::{Error, Result};
use crate::SeededRng;

/// Disjoint patient partition.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    pub train: Vec<PatientId>,
    pub val: Vec<PatientId>,
    pub test: Vec<PatientId>,
}

impl Split {
    pub fn part_of(&self, id: PatientId) -> Option<SplitPart> {
        if self.train.binary_search(&id).is_ok() {
            Some(SplitPart::Train)
        } else if self.val.binary_search(&id).is_ok() {
            Some(SplitPart::Val)
        } else if self.test.binary_search(&id).is_ok() {
            Some(SplitPart::Test)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

/// Shuffles the (deduplicated, sorted) ids with `seed` and cuts them into
/// train/val/test of sizes `round(f·n)`, the test part taking the rest.
/// Each part comes back sorted.
pub fn split_by_patient(ids: &[PatientId], fractions: [f64; 3], seed: u64) -> Result<Split> {
    if ids.is_empty() {
        return Err(Error::Data("cannot split an empty cohort".into()));
    }
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f))
        || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::Config(format!(
            "split fractions {fractions:?} must be in [0,1] and sum to 1"
        )));
    }
    let mut order: Vec<PatientId> = ids.to_vec();
    order.sort_unstable();
    order.dedup();
    let mut rng = SeededRng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n = order.len();
    let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    let mut test = order.split_off(n_train + n_val);
    let mut val = order.split_off(n_train);
    let mut train = order;
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, val, test })
}
