//! Small dense matrix kernels on row-major slices.
//!
//! Every output row is produced by a single thread with a fixed summation
//! order, so results do not depend on the size of the rayon pool.

use rayon::prelude::*;

const PAR_THRESHOLD: usize = 1 << 14;

/// `a[m×k] · b[k×n]`.
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![0.0; m * n];
    if n == 0 {
        return out;
    }
    let row = |(i, out_row): (usize, &mut [f64])| {
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        out.chunks_mut(n).enumerate().for_each(row);
    }
    out
}

/// `aᵀ · b` for `a[m×k]`, `b[m×n]`, giving `[k×n]`.
pub(crate) fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    let mut out = vec![0.0; k * n];
    if n == 0 {
        return out;
    }
    let row = |(r, out_row): (usize, &mut [f64])| {
        for i in 0..m {
            let av = a[i * k + r];
            if av == 0.0 {
                continue;
            }
            let b_row = &b[i * n..(i + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        out.chunks_mut(n).enumerate().for_each(row);
    }
    out
}

/// `a · bᵀ` for `a[m×n]`, `b[k×n]`, giving `[m×k]`.
pub(crate) fn matmul_nt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![0.0; m * k];
    if k == 0 {
        return out;
    }
    let row = |(i, out_row): (usize, &mut [f64])| {
        let a_row = &a[i * n..(i + 1) * n];
        for (r, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[r * n..(r + 1) * n];
            *o = a_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
        }
    };
    if m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(k).enumerate().for_each(row);
    } else {
        out.chunks_mut(k).enumerate().for_each(row);
    }
    out
}
