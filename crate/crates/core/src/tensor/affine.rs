use crate::error::{Error, Result};

use super::linalg::{matmul, matmul_nt, matmul_tn};
use super::Tensor;

#[derive(Debug, Clone)]
pub struct AffineGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

fn dims(input: &Tensor, weight: &Tensor) -> Result<(usize, usize, usize)> {
    input.expect_rank(2, "affine input")?;
    weight.expect_rank(2, "affine weight")?;
    let (batch, n_in) = (input.dim(0), input.dim(1));
    if weight.dim(0) != n_in {
        return Err(Error::Dimension(format!(
            "input has {n_in} features, weight expects {}",
            weight.dim(0)
        )));
    }
    Ok((batch, n_in, weight.dim(1)))
}

/// `input[batch × n_in] · weight[n_in × n_out] + bias[n_out]`.
pub fn affine_forward(input: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let (batch, n_in, n_out) = dims(input, weight)?;
    let mut out = matmul(input.data(), weight.data(), batch, n_in, n_out);
    if let Some(b) = bias {
        b.expect_shape(&[n_out])?;
        for row in out.chunks_mut(n_out.max(1)) {
            for (o, bv) in row.iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
    }
    Tensor::new(vec![batch, n_out], out)
}

pub fn affine_backward(
    input: &Tensor,
    weight: &Tensor,
    with_bias: bool,
    grad_out: &Tensor,
) -> Result<AffineGrads> {
    let (batch, n_in, n_out) = dims(input, weight)?;
    grad_out.expect_shape(&[batch, n_out])?;
    let g = grad_out.data();
    let dx = matmul_nt(g, weight.data(), batch, n_out, n_in);
    let dw = matmul_tn(input.data(), g, batch, n_in, n_out);
    let bias = with_bias.then(|| {
        let mut db = vec![0.0; n_out];
        for row in g.chunks(n_out.max(1)) {
            for (d, gv) in db.iter_mut().zip(row) {
                *d += gv;
            }
        }
        Tensor::from_vec(db)
    });
    Ok(AffineGrads {
        input: Tensor::new(vec![batch, n_in], dx)?,
        weight: Tensor::new(vec![n_in, n_out], dw)?,
        bias,
    })
}
