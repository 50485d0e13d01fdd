use rayon::prelude::*;

use crate::error::{Error, Result};

use super::Tensor;

/// Gradients of a 1-d convolution.
#[derive(Debug, Clone)]
pub struct Conv1dGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Option<Tensor>,
}

fn check_shapes(
    input: &Tensor,
    kernels: &Tensor,
    bias: Option<&Tensor>,
) -> Result<(usize, usize, usize, usize, usize)> {
    let (n, c_in, len) = input.as_ncl("conv1d input")?;
    kernels.expect_rank(3, "conv1d kernels")?;
    let (c_out, kc, k) = (kernels.dim(0), kernels.dim(1), kernels.dim(2));
    if kc != c_in {
        return Err(Error::Dimension(format!(
            "kernels expect {kc} input channels, input has {c_in}"
        )));
    }
    if let Some(b) = bias {
        b.expect_shape(&[c_out])?;
    }
    if k == 0 || k > len {
        return Err(Error::Length {
            kernel: k,
            length: len,
        });
    }
    Ok((n, c_in, len, c_out, k))
}

fn out_shape(input: &Tensor, c_out: usize, out_len: usize) -> Vec<usize> {
    if input.rank() == 2 {
        vec![c_out, out_len]
    } else {
        vec![input.dim(0), c_out, out_len]
    }
}

/// Valid-mode, stride-1 cross-correlation:
/// `out[o][i] = bias[o] + Σ_c Σ_j kernels[o][c][j] · input[c][i + j]`.
///
/// Accepts `[channels, length]` or a batch `[batch, channels, length]`;
/// the output has the same rank.
pub fn conv1d_forward(input: &Tensor, kernels: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let (n, c_in, len, c_out, k) = check_shapes(input, kernels, bias)?;
    let out_len = len - k + 1;
    let x = input.data();
    let w = kernels.data();
    let mut out = vec![0.0; n * c_out * out_len];
    if out_len > 0 {
        out.par_chunks_mut(c_out * out_len)
            .enumerate()
            .for_each(|(s, out_s)| {
                let x_s = &x[s * c_in * len..(s + 1) * c_in * len];
                for o in 0..c_out {
                    let row = &mut out_s[o * out_len..(o + 1) * out_len];
                    if let Some(b) = bias {
                        row.fill(b.data()[o]);
                    }
                    for c in 0..c_in {
                        let x_c = &x_s[c * len..(c + 1) * len];
                        for j in 0..k {
                            let wv = w[(o * c_in + c) * k + j];
                            for (r, xv) in row.iter_mut().zip(&x_c[j..j + out_len]) {
                                *r += wv * xv;
                            }
                        }
                    }
                }
            });
    }
    Tensor::new(out_shape(input, c_out, out_len), out)
}

/// Exact gradients of [`conv1d_forward`] given the upstream gradient.
pub fn conv1d_backward(
    input: &Tensor,
    kernels: &Tensor,
    with_bias: bool,
    grad_out: &Tensor,
) -> Result<Conv1dGrads> {
    let (n, c_in, len, c_out, k) = check_shapes(input, kernels, None)?;
    let out_len = len - k + 1;
    grad_out.expect_shape(&out_shape(input, c_out, out_len))?;
    let x = input.data();
    let w = kernels.data();
    let g = grad_out.data();

    let mut dx = vec![0.0; n * c_in * len];
    dx.par_chunks_mut(c_in * len)
        .enumerate()
        .for_each(|(s, dx_s)| {
            let g_s = &g[s * c_out * out_len..(s + 1) * c_out * out_len];
            for o in 0..c_out {
                let g_o = &g_s[o * out_len..(o + 1) * out_len];
                for c in 0..c_in {
                    let dx_c = &mut dx_s[c * len..(c + 1) * len];
                    for j in 0..k {
                        let wv = w[(o * c_in + c) * k + j];
                        for (d, gv) in dx_c[j..j + out_len].iter_mut().zip(g_o) {
                            *d += wv * gv;
                        }
                    }
                }
            }
        });

    let mut dw = vec![0.0; c_out * c_in * k];
    dw.par_chunks_mut(c_in * k)
        .enumerate()
        .for_each(|(o, dw_o)| {
            for s in 0..n {
                let g_o = &g[(s * c_out + o) * out_len..(s * c_out + o + 1) * out_len];
                for c in 0..c_in {
                    let x_c = &x[(s * c_in + c) * len..(s * c_in + c + 1) * len];
                    for j in 0..k {
                        let dot: f64 = g_o
                            .iter()
                            .zip(&x_c[j..j + out_len])
                            .map(|(a, b)| a * b)
                            .sum();
                        dw_o[c * k + j] += dot;
                    }
                }
            }
        });

    let bias = with_bias.then(|| {
        let mut db = vec![0.0; c_out];
        for s in 0..n {
            for (o, d) in db.iter_mut().enumerate() {
                *d += g[(s * c_out + o) * out_len..(s * c_out + o + 1) * out_len]
                    .iter()
                    .sum::<f64>();
            }
        }
        Tensor::from_vec(db)
    });

    Ok(Conv1dGrads {
        input: Tensor::new(input.shape().to_vec(), dx)?,
        kernels: Tensor::new(kernels.shape().to_vec(), dw)?,
        bias,
    })
}
