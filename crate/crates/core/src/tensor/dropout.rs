use rand::Rng;

use crate::error::{Error, Result};

use super::{Mode, Tensor};

/// Per-element multipliers applied in the forward pass: `0` for dropped
/// elements, `1 / (1 - p)` for survivors. `None` means identity.
#[derive(Debug, Clone)]
pub struct DropoutCache {
    scale: Option<Vec<f64>>,
}

impl DropoutCache {
    pub fn mask(&self) -> Option<&[f64]> {
        self.scale.as_deref()
    }
}

/// Inverted dropout. Train mode zeroes each element with probability `p` and
/// rescales survivors by `1 / (1 - p)`; infer mode is the identity.
pub fn dropout_forward<R: Rng + ?Sized>(
    input: &Tensor,
    p: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor, DropoutCache)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Parameter(format!(
            "dropout probability must lie in [0, 1), got {p}"
        )));
    }
    if mode == Mode::Infer || p == 0.0 {
        return Ok((input.clone(), DropoutCache { scale: None }));
    }
    let keep = 1.0 / (1.0 - p);
    let scale: Vec<f64> = (0..input.len())
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    let out = input
        .data()
        .iter()
        .zip(&scale)
        .map(|(x, s)| x * s)
        .collect();
    Ok((
        Tensor::new(input.shape().to_vec(), out)?,
        DropoutCache { scale: Some(scale) },
    ))
}

pub fn dropout_backward(cache: &DropoutCache, grad_out: &Tensor) -> Result<Tensor> {
    match &cache.scale {
        None => Ok(grad_out.clone()),
        Some(scale) => {
            if scale.len() != grad_out.len() {
                return Err(Error::Dimension(format!(
                    "dropout gradient has {} elements, mask has {}",
                    grad_out.len(),
                    scale.len()
                )));
            }
            let data = grad_out
                .data()
                .iter()
                .zip(scale)
                .map(|(g, s)| g * s)
                .collect();
            Tensor::new(grad_out.shape().to_vec(), data)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_probability_and_inference_are_identity() {
        let x = Tensor::from_vec(vec![1.0, -2.0, 3.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (p, mode) in [
            (0.0, Mode::Train),
            (0.0, Mode::Infer),
            (0.5, Mode::Infer),
            (0.9, Mode::Infer),
        ] {
            let (out, cache) = dropout_forward(&x, p, mode, &mut rng).unwrap();
            assert_eq!(out, x);
            assert_eq!(dropout_backward(&cache, &x).unwrap(), x);
        }
    }

    #[test]
    fn invalid_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::from_vec(vec![1.0]);
        assert!(dropout_forward(&x, 1.0, Mode::Train, &mut rng).is_err());
        assert!(dropout_forward(&x, -0.1, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn drop_fraction_is_close_to_p() {
        let x = Tensor::filled(&[100_000], 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (out, _) = dropout_forward(&x, 0.5, Mode::Train, &mut rng).unwrap();
        let dropped = out.data().iter().filter(|&&v| v == 0.0).count() as f64 / 100_000.0;
        assert!((dropped - 0.5).abs() < 0.02, "{dropped}");
        assert!(out.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn backward_scales_surviving_positions() {
        let x = Tensor::filled(&[1000], 1.0);
        let g = Tensor::new(
            vec![1000],
            (0..1000).map(|i| (i as f64 * 0.1).sin()).collect(),
        )
        .unwrap();
        let p = 0.3;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (out, cache) = dropout_forward(&x, p, Mode::Train, &mut rng).unwrap();
        let dx = dropout_backward(&cache, &g).unwrap();
        let expected: f64 = g
            .data()
            .iter()
            .zip(out.data())
            .filter(|(_, &o)| o != 0.0)
            .map(|(gv, _)| gv / (1.0 - p))
            .sum();
        assert!((dx.sum() - expected).abs() < 1e-9);
    }

    #[test]
    fn same_seed_same_mask() {
        let x = Tensor::filled(&[64], 1.0);
        let (a, _) =
            dropout_forward(&x, 0.5, Mode::Train, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let (b, _) =
            dropout_forward(&x, 0.5, Mode::Train, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }
}
