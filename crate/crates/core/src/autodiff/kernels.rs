//! Raw array kernels. Parallelism is over output rows only; every output
//! element is accumulated by a single worker in a fixed order.

use rayon::prelude::*;

use crate::scalar::Scalar;

const PAR_THRESHOLD: usize = 1 << 15;

/// `out[m×n] = a[m×k] · b[k×n]`.
pub fn matmul<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * n];
    if n == 0 {
        return out;
    }
    let row = |(i, orow): (usize, &mut [S])| {
        let arow = &a[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            if av == S::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + av * bv;
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

/// Transpose of a row-major `m×n` block.
pub fn transpose<S: Scalar>(a: &[S], m: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

/// `a[m×k] · bᵀ` where `b` is stored `n×k`.
pub fn matmul_nt<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let bt = transpose(b, n, k);
    matmul(a, &bt, m, k, n)
}

/// `aᵀ · b` where `a` is stored `m×k` and `b` is `m×n`; result `k×n`.
pub fn matmul_tn<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let at = transpose(a, m, k);
    matmul(&at, b, k, m, n)
}

/// Numerically stabilized softmax over each row of an `m×n` block.
pub fn row_softmax<S: Scalar>(x: &[S], m: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * n];
    if n == 0 {
        return out;
    }
    for i in 0..m {
        let xr = &x[i * n..(i + 1) * n];
        let or = &mut out[i * n..(i + 1) * n];
        let mx = xr.iter().copied().fold(S::neg_infinity(), S::max);
        let mut total = S::zero();
        for (o, &v) in or.iter_mut().zip(xr) {
            *o = (v - mx).exp();
            total = total + *o;
        }
        for o in or.iter_mut() {
            *o = *o / total;
        }
    }
    out
}
