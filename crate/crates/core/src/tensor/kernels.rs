#![allow(clippy::too_many_arguments)] // raw kernels take flat scalar geometry

//! Raw numeric kernels shared by the graph ops.
//!
//! The inner summation order is fixed (ascending k) on every path, so the
//! sequential and parallel variants produce bit-identical results. `_seq` and
//! `_par` entry points exist for the benchmark suite; library code goes
//! through the size-aware dispatching wrappers.

use crate::exec;

/// out[r][j] = sum_k a[r][k] * b_block[k][j], grouped.
///
/// `a` is [g, n, k] row-major (g*n rows), `b` is [k, p] when `b_shared`,
/// otherwise [g, k, p]. `out` is [g, n, p].
pub fn matmul(a: &[f64], b: &[f64], out: &mut [f64], _g: usize, n: usize, k: usize, p: usize, b_shared: bool) {
    exec::rows_mut(out, p, 2 * k * p, |r, row| {
        matmul_row(a, b, row, r, n, k, p, b_shared);
    });
}

pub fn matmul_seq(a: &[f64], b: &[f64], out: &mut [f64], g: usize, n: usize, k: usize, p: usize, b_shared: bool) {
    let _ = g;
    for (r, row) in out.chunks_mut(p).enumerate() {
        matmul_row(a, b, row, r, n, k, p, b_shared);
    }
}

#[cfg(feature = "parallel")]
pub fn matmul_par(a: &[f64], b: &[f64], out: &mut [f64], g: usize, n: usize, k: usize, p: usize, b_shared: bool) {
    use rayon::prelude::*;
    let _ = g;
    out.par_chunks_mut(p)
        .enumerate()
        .for_each(|(r, row)| matmul_row(a, b, row, r, n, k, p, b_shared));
}

#[inline]
fn matmul_row(a: &[f64], b: &[f64], row: &mut [f64], r: usize, n: usize, k: usize, p: usize, b_shared: bool) {
    let gi = r / n;
    let a_row = &a[r * k..r * k + k];
    let b_block = if b_shared { b } else { &b[gi * k * p..(gi + 1) * k * p] };
    row.fill(0.0);
    for (kk, &av) in a_row.iter().enumerate() {
        if av == 0.0 {
            continue;
        }
        let b_row = &b_block[kk * p..kk * p + p];
        for (o, &bv) in row.iter_mut().zip(b_row) {
            *o += av * bv;
        }
    }
}

/// out[r][c] += sum_j a[r][j] * b_block[c][j], i.e. A · Bᵀ, grouped.
///
/// `a` is [g, n, m], `b` is [p, m] when shared else [g, p, m]; out [g, n, p].
/// Accumulates into `out` (backward-pass semantics).
pub fn matmul_nt_acc(a: &[f64], b: &[f64], out: &mut [f64], g: usize, n: usize, m: usize, p: usize, b_shared: bool) {
    let _ = g;
    exec::rows_mut(out, p, 2 * m * p, |r, row| {
        let gi = r / n;
        let a_row = &a[r * m..r * m + m];
        let b_block = if b_shared { b } else { &b[gi * p * m..(gi + 1) * p * m] };
        for (c, o) in row.iter_mut().enumerate() {
            let b_row = &b_block[c * m..c * m + m];
            let mut acc = 0.0;
            for (&x, &y) in a_row.iter().zip(b_row) {
                acc += x * y;
            }
            *o += acc;
        }
    });
}

/// db[gi][kk][j] += sum_i a[gi][i][kk] * gout[gi][i][j], the per-group Aᵀ·G.
pub fn matmul_tn_grouped_acc(a: &[f64], gout: &[f64], db: &mut [f64], g: usize, n: usize, k: usize, p: usize) {
    let _ = g;
    exec::rows_mut(db, p, 2 * n * p, |r, row| {
        let gi = r / k;
        let kk = r % k;
        for i in 0..n {
            let av = a[gi * n * k + i * k + kk];
            if av == 0.0 {
                continue;
            }
            let g_row = &gout[gi * n * p + i * p..gi * n * p + i * p + p];
            for (o, &gv) in row.iter_mut().zip(g_row) {
                *o += av * gv;
            }
        }
    });
}

/// acc[kk][j] += sum_g sum_i a[g][i][kk] * gout[g][i][j]  (Aᵀ·G, groups summed).
///
/// Parallel over the k rows of `acc`; each row accumulates g,i in ascending
/// order so the result does not depend on the thread count.
pub fn matmul_tn_acc(a: &[f64], gout: &[f64], acc: &mut [f64], g: usize, n: usize, k: usize, p: usize) {
    exec::rows_mut(acc, p, 2 * g * n * p, |kk, row| {
        for gi in 0..g {
            for i in 0..n {
                let av = a[gi * n * k + i * k + kk];
                if av == 0.0 {
                    continue;
                }
                let g_row = &gout[gi * n * p + i * p..gi * n * p + i * p + p];
                for (o, &gv) in row.iter_mut().zip(g_row) {
                    *o += av * gv;
                }
            }
        }
    });
}

/// Row-wise numerically stable softmax with an optional additive mask row.
///
/// A row whose entries are all -inf maps to the zero row.
pub fn softmax_rows<'a, F>(x: &[f64], out: &mut [f64], m: usize, mask_row: F)
where
    F: Fn(usize) -> Option<&'a [f64]> + Sync,
{
    exec::rows_mut(out, m, 8 * m, |r, row| {
        let x_row = &x[r * m..r * m + m];
        softmax_row(x_row, row, mask_row(r));
    });
}

pub fn softmax_rows_seq<'a, F>(x: &[f64], out: &mut [f64], m: usize, mask_row: F)
where
    F: Fn(usize) -> Option<&'a [f64]>,
{
    for (r, row) in out.chunks_mut(m).enumerate() {
        softmax_row(&x[r * m..r * m + m], row, mask_row(r));
    }
}

#[cfg(feature = "parallel")]
pub fn softmax_rows_par<'a, F>(x: &[f64], out: &mut [f64], m: usize, mask_row: F)
where
    F: Fn(usize) -> Option<&'a [f64]> + Sync,
{
    use rayon::prelude::*;
    out.par_chunks_mut(m)
        .enumerate()
        .for_each(|(r, row)| softmax_row(&x[r * m..r * m + m], row, mask_row(r)));
}

#[inline]
fn softmax_row(x_row: &[f64], out_row: &mut [f64], mask: Option<&[f64]>) {
    let mut max = f64::NEG_INFINITY;
    for (j, &v) in x_row.iter().enumerate() {
        let z = v + mask.map_or(0.0, |m| m[j]);
        if z > max {
            max = z;
        }
    }
    if max == f64::NEG_INFINITY {
        out_row.fill(0.0);
        return;
    }
    let mut sum = 0.0;
    for (j, o) in out_row.iter_mut().enumerate() {
        let z = x_row[j] + mask.map_or(0.0, |m| m[j]);
        let e = if z == f64::NEG_INFINITY { 0.0 } else { (z - max).exp() };
        *o = e;
        sum += e;
    }
    let inv = 1.0 / sum;
    for o in out_row.iter_mut() {
        *o *= inv;
    }
}

/// dx += y ⊙ (g − <g, y>) per row, the softmax VJP. Masked entries have y = 0
/// and therefore receive zero gradient.
pub fn softmax_backward_rows_acc(y: &[f64], gout: &[f64], dx: &mut [f64], m: usize) {
    exec::rows_mut(dx, m, 4 * m, |r, row| {
        let y_row = &y[r * m..r * m + m];
        let g_row = &gout[r * m..r * m + m];
        let mut dot = 0.0;
        for (&yv, &gv) in y_row.iter().zip(g_row) {
            dot += yv * gv;
        }
        for ((o, &yv), &gv) in row.iter_mut().zip(y_row).zip(g_row) {
            *o += yv * (gv - dot);
        }
    });
}

/// Row-wise layer norm forward: out = gamma ⊙ (x − mean)/sqrt(var + eps) + beta.
pub fn layernorm_rows(x: &[f64], gamma: &[f64], beta: &[f64], out: &mut [f64], d: usize, eps: f64) {
    exec::rows_mut(out, d, 8 * d, |r, row| {
        let x_row = &x[r * d..r * d + d];
        let (mean, inv_std) = row_moments(x_row, eps);
        for j in 0..d {
            row[j] = gamma[j] * (x_row[j] - mean) * inv_std + beta[j];
        }
    });
}

#[inline]
pub fn row_moments(x_row: &[f64], eps: f64) -> (f64, f64) {
    let d = x_row.len() as f64;
    let mut mean = 0.0;
    for &v in x_row {
        mean += v;
    }
    mean /= d;
    let mut var = 0.0;
    for &v in x_row {
        let c = v - mean;
        var += c * c;
    }
    var /= d;
    (mean, 1.0 / (var + eps).sqrt())
}

pub const GELU_C: f64 = 0.7978845608028654; // sqrt(2/pi)
pub const GELU_A: f64 = 0.044715;

#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
