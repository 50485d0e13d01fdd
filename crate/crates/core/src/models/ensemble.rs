use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Entry-wise mean of member probabilities. Each entry's values are summed
/// in sorted order so the result does not depend on member order.
pub fn ensemble_predict(members: &[&Tensor]) -> Result<Tensor> {
    let first = members
        .first()
        .ok_or_else(|| Error::Parameter("ensemble needs at least one member".into()))?;
    for m in members {
        if m.shape() != first.shape() {
            return Err(Error::Dimension(format!(
                "ensemble member shape {:?} differs from {:?}",
                m.shape(),
                first.shape()
            )));
        }
    }
    let k = members.len() as f64;
    let mut column = vec![0.0; members.len()];
    let data = (0..first.len())
        .map(|i| {
            for (c, m) in column.iter_mut().zip(members) {
                *c = m.data()[i];
            }
            column.sort_by(f64::total_cmp);
            column.iter().sum::<f64>() / k
        })
        .collect();
    Tensor::new(first.shape().to_vec(), data)
}
