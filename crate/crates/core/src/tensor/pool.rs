use crate::error::{Error, Result};

use super::Tensor;

/// Argmax positions recorded by [`maxpool1d_forward`].
#[derive(Debug, Clone)]
pub struct PoolCache {
    input_shape: Vec<usize>,
    /// Flat input index of the winner for every output element.
    argmax: Vec<usize>,
}

impl PoolCache {
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

/// Non-overlapping max pooling along the last axis with window and step `step`.
///
/// Output length is `floor(length / step)`; trailing elements that do not
/// fill a window are dropped. Ties go to the first maximal index.
pub fn maxpool1d_forward(input: &Tensor, step: usize) -> Result<(Tensor, PoolCache)> {
    if step == 0 {
        return Err(Error::Parameter("pooling step must be at least 1".into()));
    }
    let (n, c, len) = input.as_ncl("maxpool1d input")?;
    let out_len = len / step;
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * out_len);
    let mut argmax = Vec::with_capacity(n * c * out_len);
    for row in 0..n * c {
        let base = row * len;
        for i in 0..out_len {
            let start = base + i * step;
            let mut best = start;
            for p in start + 1..start + step {
                if x[p] > x[best] {
                    best = p;
                }
            }
            out.push(x[best]);
            argmax.push(best);
        }
    }
    let shape = if input.rank() == 2 {
        vec![c, out_len]
    } else {
        vec![n, c, out_len]
    };
    Ok((
        Tensor::new(shape, out)?,
        PoolCache {
            input_shape: input.shape().to_vec(),
            argmax,
        },
    ))
}

/// Routes each upstream gradient to the recorded argmax position.
pub fn maxpool1d_backward(cache: &PoolCache, grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.len() != cache.argmax.len() {
        return Err(Error::Dimension(format!(
            "pool gradient has {} elements, forward produced {}",
            grad_out.len(),
            cache.argmax.len()
        )));
    }
    let mut dx = Tensor::zeros(&cache.input_shape);
    let d = dx.data_mut();
    for (&idx, &g) in cache.argmax.iter().zip(grad_out.data()) {
        d[idx] += g;
    }
    Ok(dx)
}
