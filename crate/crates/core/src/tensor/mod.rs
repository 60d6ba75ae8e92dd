//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! A [`Graph`] is an eager tape: every op computes its value immediately and
//! records how to backpropagate through it. Tensors are immutable once built;
//! a graph is confined to one thread, but independent graphs can run in
//! parallel (the kernels themselves fan out row-wise when `parallel` is on).
//!
//! Shapes are rank 1–3. Rank-3 tensors `[g, n, d]` are batches of `g`
//! independent matrices; matrix ops treat rank-2 as `g = 1`.

pub mod kernels;

mod gradcheck;
pub use gradcheck::finite_diff_check;

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Clamp floor applied to probabilities before logs in [`kl_divergence`].
pub const KL_LOG_CLAMP: f64 = 1e-12;

/// Tolerance for "sums to one" when validating probability simplices.
pub const SIMPLEX_TOL: f64 = 1e-6;

/// A dense row-major f64 tensor.
///
/// `grad` is populated by [`Graph::backward`] for tensors that require
/// gradients; it always has the same length as `data`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
    pub grad: Option<Vec<f64>>,
    pub requires_grad: bool,
}

impl Tensor {
    pub fn new(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::shape(format!("dims must be positive, got {dims:?}")));
        }
        let numel: usize = dims.iter().product();
        if numel != data.len() {
            return Err(Error::shape(format!(
                "dims {:?} imply {} elements, got {}",
                dims,
                numel,
                data.len()
            )));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data,
            grad: None,
            requires_grad: false,
        })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let numel = dims.iter().product();
        Tensor::new(dims, vec![0.0; numel]).expect("positive dims")
    }

    pub fn full(dims: &[usize], value: f64) -> Self {
        let numel = dims.iter().product();
        Tensor::new(dims, vec![value; numel]).expect("positive dims")
    }

    /// Seeded Gaussian init, used for model weights.
    pub fn randn<R: Rng>(dims: &[usize], std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("std > 0");
        let numel: usize = dims.iter().product();
        let data = (0..numel).map(|_| normal.sample(rng)).collect();
        Tensor::new(dims, data).expect("positive dims")
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::new(&[1, 1], vec![value]).expect("scalar")
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    /// Last dimension (row length for row-wise ops).
    pub fn last_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// View as `(groups, rows, cols)` with rank-1/2 promoted to g = 1.
    pub fn mat3(&self) -> (usize, usize, usize) {
        match self.dims.len() {
            1 => (1, 1, self.dims[0]),
            2 => (1, self.dims[0], self.dims[1]),
            _ => (
                self.dims[..self.dims.len() - 2].iter().product(),
                self.dims[self.dims.len() - 2],
                self.dims[self.dims.len() - 1],
            ),
        }
    }

    pub fn at2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.last_dim() + j]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// KL(p‖q) = Σ p_k ln(p_k / q_k), natural log, entries clamped to ≥ 1e-12.
///
/// Both inputs must lie on the probability simplex (non-negative, sum within
/// 1e-6 of one) or a validation error is returned.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    validate_simplex(p)?;
    validate_simplex(q)?;
    if p.len() != q.len() {
        return Err(Error::shape(format!(
            "kl_divergence length mismatch: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        let pc = pi.max(KL_LOG_CLAMP);
        let qc = qi.max(KL_LOG_CLAMP);
        kl += pc * (pc / qc).ln();
    }
    Ok(kl)
}

pub fn validate_simplex(s: &[f64]) -> Result<()> {
    if s.iter().any(|&v| v.is_nan() || v < 0.0 || !v.is_finite()) {
        return Err(Error::validation(format!(
            "distribution entries must be finite and non-negative: {s:?}"
        )));
    }
    let sum: f64 = s.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::validation(format!(
            "distribution must sum to 1 (got {sum})"
        )));
    }
    Ok(())
}

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// How a softmax mask row maps onto the rows of the input.
#[derive(Debug, Clone, Copy)]
enum MaskMap {
    /// mask has exactly one row per input row
    PerRow,
    /// a single mask row shared by every input row
    Single,
    /// x is [g, n, m], mask is [n, m]: row r uses mask row r % n
    PerInner(usize),
    /// x is [g, n, m], mask is [g, 1, m]: row r uses mask row r / n
    PerGroup(usize),
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// [.., n, d] + [1, d] broadcast over all rows
    AddRow(Var, Var),
    /// [g, n, d] + [n, d] broadcast over groups
    AddBcast(Var, Var),
    /// [g, n, m] ⊙ [n, m] broadcast over groups
    MulBcast(Var, Var),
    Scale(Var, f64),
    /// tensor * scalar var ([1,1])
    MulScalar(Var, Var),
    MatMul(Var, Var),
    Transpose(Var),
    Sigmoid(Var),
    Gelu(Var),
    Exp(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    },
    /// Concat along the row axis; rank-2 parts broadcast across groups.
    ConcatTokens(Vec<Var>),
    SliceRows {
        x: Var,
        start: usize,
        len: usize,
    },
    SliceCols {
        x: Var,
        start: usize,
        len: usize,
    },
    /// Concat along the last dim; parts share leading dims.
    ConcatCols(Vec<Var>),
    /// table [v, d] gathered by ids, one row per id, grouped [g, n, d]
    Embed {
        table: Var,
        ids: Vec<u32>,
    },
    NormalizeRows(Var),
    MeanRows(Var),
    SumAll(Var),
    TakeDiag(Var),
    MaskedLseRows {
        x: Var,
        keep: Vec<bool>,
    },
    AddConst(Var),
    Reshape(Var),
}

struct Node {
    op: Op,
    out: Tensor,
    needs_grad: bool,
}

/// An eager autodiff tape. Nodes are appended in execution order, which is
/// also a topological order, so backward is a single reverse sweep that
/// visits each node exactly once.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Insert a leaf tensor. Gradients are tracked iff `requires_grad`.
    pub fn leaf(&mut self, mut t: Tensor, requires_grad: bool) -> Var {
        t.requires_grad = requires_grad;
        t.grad = None;
        self.push(Op::Leaf, t, requires_grad)
    }

    /// Insert a constant (no gradient tracking).
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].out
    }

    /// Accumulated gradient of `v`, present after `backward` if the node
    /// requires grad and participates in the seed's history.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].out.grad.as_deref()
    }

    /// Drop all accumulated gradients.
    pub fn reset_grads(&mut self) {
        for n in &mut self.nodes {
            n.out.grad = None;
        }
    }

    fn push(&mut self, op: Op, out: Tensor, needs_grad: bool) -> Var {
        self.nodes.push(Node { op, out, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].out
    }

    // ---- elementwise ----

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = zip_tensors(self.val(a), self.val(b), |x, y| x + y);
        Ok(self.push(Op::Add(a, b), out, self.needs(a) || self.needs(b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let out = zip_tensors(self.val(a), self.val(b), |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), out, self.needs(a) || self.needs(b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = zip_tensors(self.val(a), self.val(b), |x, y| x * y);
        Ok(self.push(Op::Mul(a, b), out, self.needs(a) || self.needs(b)))
    }

    /// `a[.., n, d] + row[1, d]`, the bias/broadcast add.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let d = self.val(a).last_dim();
        let rd = self.val(row).dims();
        if rd != [1, d] {
            return Err(Error::shape(format!(
                "add_row expects [1, {d}] row, got {rd:?}"
            )));
        }
        let av = self.val(a);
        let rv = self.val(row);
        let mut data = av.data.clone();
        for chunk in data.chunks_mut(d) {
            for (o, &r) in chunk.iter_mut().zip(&rv.data) {
                *o += r;
            }
        }
        let out = Tensor::new(av.dims(), data)?;
        Ok(self.push(Op::AddRow(a, row), out, self.needs(a) || self.needs(row)))
    }

    /// `a[g, n, d] + b[n, d]` broadcast over groups.
    pub fn add_bcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let (g, n, d) = self.val(a).mat3();
        if self.val(b).dims() != [n, d] {
            return Err(Error::shape(format!(
                "add_bcast expects [{n}, {d}], got {:?}",
                self.val(b).dims()
            )));
        }
        let av = self.val(a);
        let bv = self.val(b);
        let mut data = av.data.clone();
        for gi in 0..g {
            let chunk = &mut data[gi * n * d..(gi + 1) * n * d];
            for (o, &r) in chunk.iter_mut().zip(&bv.data) {
                *o += r;
            }
        }
        let out = Tensor::new(av.dims(), data)?;
        Ok(self.push(Op::AddBcast(a, b), out, self.needs(a) || self.needs(b)))
    }

    /// `a[g, n, m] ⊙ b[n, m]` broadcast over groups.
    pub fn mul_bcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let (g, n, m) = self.val(a).mat3();
        if self.val(b).dims() != [n, m] {
            return Err(Error::shape(format!(
                "mul_bcast expects [{n}, {m}], got {:?}",
                self.val(b).dims()
            )));
        }
        let av = self.val(a);
        let bv = self.val(b);
        let mut data = av.data.clone();
        for gi in 0..g {
            let chunk = &mut data[gi * n * m..(gi + 1) * n * m];
            for (o, &r) in chunk.iter_mut().zip(&bv.data) {
                *o *= r;
            }
        }
        let out = Tensor::new(av.dims(), data)?;
        Ok(self.push(Op::MulBcast(a, b), out, self.needs(a) || self.needs(b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = map_tensor(self.val(a), |x| x * c);
        self.push(Op::Scale(a, c), out, self.needs(a))
    }

    /// Multiply every entry of `a` by the scalar var `s` ([1,1]).
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.val(s).numel() != 1 {
            return Err(Error::shape("mul_scalar expects a [1,1] scalar"));
        }
        let sv = self.val(s).data[0];
        let out = map_tensor(self.val(a), |x| x * sv);
        Ok(self.push(Op::MulScalar(a, s), out, self.needs(a) || self.needs(s)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = map_tensor(self.val(a), kernels::sigmoid);
        self.push(Op::Sigmoid(a), out, self.needs(a))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = map_tensor(self.val(a), kernels::gelu);
        self.push(Op::Gelu(a), out, self.needs(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = map_tensor(self.val(a), f64::exp);
        self.push(Op::Exp(a), out, self.needs(a))
    }

    // ---- matrix ops ----

    /// Matrix product. Accepts `[n,k]·[k,p]`, `[g,n,k]·[k,p]` (shared rhs)
    /// and `[g,n,k]·[g,k,p]` (batched).
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ga, n, k) = self.val(a).mat3();
        let (gb, kb, p) = self.val(b).mat3();
        if k != kb {
            return Err(Error::shape(format!(
                "matmul inner dims disagree: {:?} × {:?}",
                self.val(a).dims(),
                self.val(b).dims()
            )));
        }
        let b_shared = gb == 1;
        if !b_shared && gb != ga {
            return Err(Error::shape(format!(
                "matmul group counts disagree: {ga} vs {gb}"
            )));
        }
        let mut out_dims: Vec<usize> = self.val(a).dims().to_vec();
        let r = out_dims.len();
        out_dims[r - 1] = p;
        let mut data = vec![0.0; ga * n * p];
        kernels::matmul(
            &self.val(a).data,
            &self.val(b).data,
            &mut data,
            ga,
            n,
            k,
            p,
            b_shared,
        );
        let out = Tensor::new(&out_dims, data)?;
        Ok(self.push(Op::MatMul(a, b), out, self.needs(a) || self.needs(b)))
    }

    /// Transpose the last two dims.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (g, n, m) = self.val(a).mat3();
        if self.val(a).rank() < 2 {
            return Err(Error::shape("transpose needs rank ≥ 2"));
        }
        let av = self.val(a);
        let mut dims = av.dims().to_vec();
        let r = dims.len();
        dims.swap(r - 1, r - 2);
        let mut data = vec![0.0; av.numel()];
        for gi in 0..g {
            let src = &av.data[gi * n * m..(gi + 1) * n * m];
            let dst = &mut data[gi * n * m..(gi + 1) * n * m];
            for i in 0..n {
                for j in 0..m {
                    dst[j * n + i] = src[i * m + j];
                }
            }
        }
        let out = Tensor::new(&dims, data)?;
        Ok(self.push(Op::Transpose(a), out, self.needs(a)))
    }

    /// Row-wise softmax over the last dim with an optional additive mask.
    ///
    /// Mask entries must be finite or −∞; −∞ forces probability 0. A row with
    /// every entry masked returns the zero row. Mask shapes: same as `x`,
    /// `[n, m]` against `[g, n, m]` (per-inner-row), or `[g, 1, m]`
    /// (per-group key mask).
    pub fn masked_softmax(&mut self, x: Var, mask: Option<&Tensor>) -> Result<Var> {
        let xv = self.val(x);
        let m = xv.last_dim();
        let rows = xv.numel() / m;
        let (g, n, _) = xv.mat3();
        let map = match mask {
            None => MaskMap::Single, // unused
            Some(mk) => {
                if mk.last_dim() != m {
                    return Err(Error::shape(format!(
                        "mask last dim {} != input last dim {m}",
                        mk.last_dim()
                    )));
                }
                if mk.data.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
                    return Err(Error::validation(
                        "mask entries must be finite or -inf",
                    ));
                }
                let mask_rows = mk.numel() / m;
                if mask_rows == rows {
                    MaskMap::PerRow
                } else if mask_rows == 1 {
                    MaskMap::Single
                } else if xv.rank() == 3 && mk.dims() == [n, m] {
                    MaskMap::PerInner(n)
                } else if xv.rank() == 3 && mk.dims() == [g, 1, m] {
                    MaskMap::PerGroup(n)
                } else {
                    return Err(Error::shape(format!(
                        "mask shape {:?} does not broadcast onto {:?}",
                        mk.dims(),
                        xv.dims()
                    )));
                }
            }
        };
        let mut data = vec![0.0; xv.numel()];
        {
            let mask_data = mask.map(|t| t.data());
            let fetch = |r: usize| -> Option<&[f64]> {
                mask_data.map(|md| match map {
                    MaskMap::PerRow => &md[r * m..r * m + m],
                    MaskMap::Single => &md[..m],
                    MaskMap::PerInner(n) => {
                        let i = r % n;
                        &md[i * m..i * m + m]
                    }
                    MaskMap::PerGroup(n) => {
                        let gi = r / n;
                        &md[gi * m..gi * m + m]
                    }
                })
            };
            kernels::softmax_rows(&xv.data, &mut data, m, fetch);
        }
        let out = Tensor::new(self.val(x).dims(), data)?;
        Ok(self.push(Op::Softmax(x), out, self.needs(x)))
    }

    /// Softmax without a mask.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        self.masked_softmax(x, None)
    }

    /// Row-wise layer norm with learnable gain/shift ([1, d] each).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let d = self.val(x).last_dim();
        if self.val(gamma).dims() != [1, d] || self.val(beta).dims() != [1, d] {
            return Err(Error::shape(format!(
                "layer_norm gain/shift must be [1, {d}]"
            )));
        }
        let xv = self.val(x);
        let mut data = vec![0.0; xv.numel()];
        kernels::layernorm_rows(
            &xv.data,
            &self.val(gamma).data,
            &self.val(beta).data,
            &mut data,
            d,
            eps,
        );
        let out = Tensor::new(self.val(x).dims(), data)?;
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(Op::LayerNorm { x, gamma, beta, eps }, out, needs))
    }

    /// Concatenate parts along the row axis. Rank-3 parts must share the
    /// group count; rank-2 parts are broadcast to every group. If all parts
    /// are rank-2 the result is rank-2.
    pub fn concat_tokens(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat_tokens needs at least one part"));
        }
        let d = self.val(parts[0]).last_dim();
        let mut g: Option<usize> = None;
        for &p in parts {
            let t = self.val(p);
            if t.last_dim() != d {
                return Err(Error::shape("concat_tokens parts disagree on last dim"));
            }
            if t.rank() == 3 {
                let pg = t.dims()[0];
                if *g.get_or_insert(pg) != pg {
                    return Err(Error::shape("concat_tokens parts disagree on groups"));
                }
            } else if t.rank() != 2 {
                return Err(Error::shape("concat_tokens parts must be rank 2 or 3"));
            }
        }
        let groups = g.unwrap_or(1);
        let total_n: usize = parts
            .iter()
            .map(|&p| {
                let t = self.val(p);
                if t.rank() == 3 { t.dims()[1] } else { t.dims()[0] }
            })
            .sum();
        let mut data = vec![0.0; groups * total_n * d];
        let mut row_off = 0;
        for &p in parts {
            let t = self.val(p);
            let (pn, grouped) = if t.rank() == 3 {
                (t.dims()[1], true)
            } else {
                (t.dims()[0], false)
            };
            for gi in 0..groups {
                let src = if grouped {
                    &t.data[gi * pn * d..(gi + 1) * pn * d]
                } else {
                    &t.data[..]
                };
                let dst_start = gi * total_n * d + row_off * d;
                data[dst_start..dst_start + pn * d].copy_from_slice(src);
            }
            row_off += pn;
        }
        let dims: Vec<usize> = if g.is_some() {
            vec![groups, total_n, d]
        } else {
            vec![total_n, d]
        };
        let out = Tensor::new(&dims, data)?;
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Op::ConcatTokens(parts.to_vec()), out, needs))
    }

    /// Take rows `start..start+len` (per group for rank-3).
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (g, n, d) = self.val(x).mat3();
        if start + len > n {
            return Err(Error::shape(format!(
                "slice_rows {start}..{} out of {n} rows",
                start + len
            )));
        }
        let xv = self.val(x);
        if xv.rank() < 2 {
            return Err(Error::shape("slice_rows needs rank ≥ 2"));
        }
        let mut dims = xv.dims().to_vec();
        let r = dims.len();
        dims[r - 2] = len;
        let mut data = vec![0.0; g * len * d];
        for gi in 0..g {
            let src = &xv.data[gi * n * d + start * d..gi * n * d + (start + len) * d];
            data[gi * len * d..(gi + 1) * len * d].copy_from_slice(src);
        }
        let out = Tensor::new(&dims, data)?;
        Ok(self.push(Op::SliceRows { x, start, len }, out, self.needs(x)))
    }

    /// Take columns `start..start+len` of the last dim.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.val(x);
        let m = xv.last_dim();
        if start + len > m {
            return Err(Error::shape(format!(
                "slice_cols {start}..{} out of {m} cols",
                start + len
            )));
        }
        let rows = xv.numel() / m;
        let mut dims = xv.dims().to_vec();
        *dims.last_mut().unwrap() = len;
        let mut data = vec![0.0; rows * len];
        for r in 0..rows {
            data[r * len..(r + 1) * len]
                .copy_from_slice(&xv.data[r * m + start..r * m + start + len]);
        }
        let out = Tensor::new(&dims, data)?;
        Ok(self.push(Op::SliceCols { x, start, len }, out, self.needs(x)))
    }

    /// Concatenate along the last dim; all parts must share leading dims.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat_cols needs at least one part"));
        }
        let lead = {
            let d0 = self.val(parts[0]).dims();
            d0[..d0.len() - 1].to_vec()
        };
        let mut total_m = 0;
        for &p in parts {
            let d = self.val(p).dims();
            if d[..d.len() - 1] != lead[..] {
                return Err(Error::shape("concat_cols parts disagree on leading dims"));
            }
            total_m += self.val(p).last_dim();
        }
        let rows: usize = lead.iter().product();
        let mut data = vec![0.0; rows * total_m];
        let mut col_off = 0;
        for &p in parts {
            let t = self.val(p);
            let m = t.last_dim();
            for r in 0..rows {
                data[r * total_m + col_off..r * total_m + col_off + m]
                    .copy_from_slice(&t.data[r * m..(r + 1) * m]);
            }
            col_off += m;
        }
        let mut dims = lead;
        dims.push(total_m);
        let out = Tensor::new(&dims, data)?;
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Op::ConcatCols(parts.to_vec()), out, needs))
    }

    /// Gather rows of `table` [v, d] by token id, producing [g, n, d].
    /// `ids` is flattened group-major with `n` ids per group.
    pub fn embed(&mut self, table: Var, ids: &[u32], groups: usize, n: usize) -> Result<Var> {
        let tv = self.val(table);
        if tv.rank() != 2 {
            return Err(Error::shape("embed table must be rank 2"));
        }
        let (vocab, d) = (tv.dims()[0], tv.dims()[1]);
        if ids.len() != groups * n {
            return Err(Error::shape(format!(
                "embed expects {groups}×{n} ids, got {}",
                ids.len()
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= vocab) {
            return Err(Error::validation(format!(
                "token id {bad} out of vocabulary (size {vocab})"
            )));
        }
        let mut data = vec![0.0; groups * n * d];
        for (r, &id) in ids.iter().enumerate() {
            data[r * d..(r + 1) * d].copy_from_slice(&tv.data[id as usize * d..(id as usize + 1) * d]);
        }
        let out = Tensor::new(&[groups, n, d], data)?;
        Ok(self.push(
            Op::Embed {
                table,
                ids: ids.to_vec(),
            },
            out,
            self.needs(table),
        ))
    }

    /// L2-normalize each row. Errors on (near-)zero rows.
    pub fn l2_normalize_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.val(x);
        let d = xv.last_dim();
        let mut data = xv.data.clone();
        for row in data.chunks_mut(d) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-12 {
                return Err(Error::validation("cannot normalize a zero-norm row"));
            }
            let inv = 1.0 / norm;
            for v in row.iter_mut() {
                *v *= inv;
            }
        }
        let out = Tensor::new(self.val(x).dims(), data)?;
        Ok(self.push(Op::NormalizeRows(x), out, self.needs(x)))
    }

    /// Mean over rows: [g, n, d] → [g, 1, d] (or [n, d] → [1, d]).
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (g, n, d) = self.val(x).mat3();
        if self.val(x).rank() < 2 {
            return Err(Error::shape("mean_rows needs rank ≥ 2"));
        }
        let xv = self.val(x);
        let mut dims = xv.dims().to_vec();
        let r = dims.len();
        dims[r - 2] = 1;
        let mut data = vec![0.0; g * d];
        for gi in 0..g {
            let dst = &mut data[gi * d..(gi + 1) * d];
            for i in 0..n {
                let src = &xv.data[gi * n * d + i * d..gi * n * d + (i + 1) * d];
                for (o, &v) in dst.iter_mut().zip(src) {
                    *o += v;
                }
            }
            let inv = 1.0 / n as f64;
            for o in dst.iter_mut() {
                *o *= inv;
            }
        }
        let out = Tensor::new(&dims, data)?;
        Ok(self.push(Op::MeanRows(x), out, self.needs(x)))
    }

    /// Sum of all entries → [1, 1].
    pub fn sum_all(&mut self, x: Var) -> Var {
        let s: f64 = self.val(x).data.iter().sum();
        self.push(Op::SumAll(x), Tensor::scalar(s), self.needs(x))
    }

    /// Diagonal of a square matrix [b, b] → [b, 1].
    pub fn take_diag(&mut self, x: Var) -> Result<Var> {
        let xv = self.val(x);
        if xv.rank() != 2 || xv.dims()[0] != xv.dims()[1] {
            return Err(Error::shape(format!(
                "take_diag needs a square matrix, got {:?}",
                xv.dims()
            )));
        }
        let b = xv.dims()[0];
        let data: Vec<f64> = (0..b).map(|i| xv.data[i * b + i]).collect();
        let out = Tensor::new(&[b, 1], data)?;
        Ok(self.push(Op::TakeDiag(x), out, self.needs(x)))
    }

    /// Row-wise log-sum-exp over the entries where `keep` is true → [n, 1].
    /// Every row must keep at least one entry.
    pub fn masked_lse_rows(&mut self, x: Var, keep: &[bool]) -> Result<Var> {
        let xv = self.val(x);
        if xv.rank() != 2 {
            return Err(Error::shape("masked_lse_rows needs rank 2"));
        }
        let (n, m) = (xv.dims()[0], xv.dims()[1]);
        if keep.len() != n * m {
            return Err(Error::shape("keep mask size mismatch"));
        }
        let mut data = vec![0.0; n];
        for i in 0..n {
            let row = &xv.data[i * m..(i + 1) * m];
            let krow = &keep[i * m..(i + 1) * m];
            let mut any = false;
            let mut max = f64::NEG_INFINITY;
            for (j, &v) in row.iter().enumerate() {
                if krow[j] {
                    any = true;
                    // NaN poisons the row rather than vanishing in comparisons
                    if v > max || v.is_nan() {
                        max = v;
                    }
                }
            }
            if !any {
                return Err(Error::validation(format!(
                    "masked_lse_rows: row {i} keeps no entries"
                )));
            }
            let mut sum = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if krow[j] {
                    sum += (v - max).exp();
                }
            }
            data[i] = max + sum.ln();
        }
        let out = Tensor::new(&[n, 1], data)?;
        Ok(self.push(
            Op::MaskedLseRows {
                x,
                keep: keep.to_vec(),
            },
            out,
            self.needs(x),
        ))
    }

    /// Add a constant tensor (same shape) to `x`.
    pub fn add_const(&mut self, x: Var, c: &Tensor) -> Result<Var> {
        if self.val(x).dims() != c.dims() {
            return Err(Error::shape("add_const shape mismatch"));
        }
        let xv = self.val(x);
        let data: Vec<f64> = xv.data.iter().zip(&c.data).map(|(&a, &b)| a + b).collect();
        let out = Tensor::new(xv.dims(), data)?;
        Ok(self.push(Op::AddConst(x), out, self.needs(x)))
    }

    pub fn reshape(&mut self, x: Var, dims: &[usize]) -> Result<Var> {
        let numel: usize = dims.iter().product();
        if numel != self.val(x).numel() {
            return Err(Error::shape(format!(
                "reshape {:?} → {:?} changes element count",
                self.val(x).dims(),
                dims
            )));
        }
        let out = Tensor::new(dims, self.val(x).data.clone())?;
        Ok(self.push(Op::Reshape(x), out, self.needs(x)))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.val(a).dims() != self.val(b).dims() {
            return Err(Error::shape(format!(
                "{what} shape mismatch: {:?} vs {:?}",
                self.val(a).dims(),
                self.val(b).dims()
            )));
        }
        Ok(())
    }

    /// Reverse sweep from a scalar `seed`, accumulating ∂seed/∂tensor into the
    /// `grad` of every node with `requires_grad`. Repeated calls accumulate.
    pub fn backward(&mut self, seed: Var) -> Result<()> {
        if self.val(seed).numel() != 1 {
            return Err(Error::shape(format!(
                "backward seed must be scalar, got {:?}",
                self.val(seed).dims()
            )));
        }
        if !self.needs(seed) {
            return Ok(()); // nothing requires grad anywhere upstream
        }
        let mut adj: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[seed.0] = Some(vec![1.0]);

        for idx in (0..=seed.0).rev() {
            let g_out = match adj[idx].take() {
                Some(g) => g,
                None => continue,
            };
            if !self.nodes[idx].needs_grad {
                continue;
            }
            self.backprop_node(idx, &g_out, &mut adj);
            if matches!(self.nodes[idx].op, Op::Leaf) && self.nodes[idx].out.requires_grad {
                let numel = self.nodes[idx].out.numel();
                let slot = self.nodes[idx]
                    .out
                    .grad
                    .get_or_insert_with(|| vec![0.0; numel]);
                for (s, &g) in slot.iter_mut().zip(&g_out) {
                    *s += g;
                }
            }
        }
        Ok(())
    }

    fn backprop_node(&self, idx: usize, g_out: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let acc = |adj: &mut [Option<Vec<f64>>], v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.needs(v) {
                return;
            }
            let numel = self.val(v).numel();
            let buf = adj[v.0].get_or_insert_with(|| vec![0.0; numel]);
            f(buf);
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(adj, *a, &mut |buf| add_into(buf, g_out, 1.0));
                acc(adj, *b, &mut |buf| add_into(buf, g_out, 1.0));
            }
            Op::Sub(a, b) => {
                acc(adj, *a, &mut |buf| add_into(buf, g_out, 1.0));
                acc(adj, *b, &mut |buf| add_into(buf, g_out, -1.0));
            }
            Op::Mul(a, b) => {
                let av = &self.val(*a).data;
                let bv = &self.val(*b).data;
                acc(adj, *a, &mut |buf| {
                    for ((o, &g), &y) in buf.iter_mut().zip(g_out).zip(bv) {
                        *o += g * y;
                    }
                });
                acc(adj, *b, &mut |buf| {
                    for ((o, &g), &x) in buf.iter_mut().zip(g_out).zip(av) {
                        *o += g * x;
                    }
                });
            }
            Op::AddRow(a, row) => {
                let d = self.val(*row).last_dim();
                acc(adj, *a, &mut |buf| add_into(buf, g_out, 1.0));
                acc(adj, *row, &mut |buf| {
                    for chunk in g_out.chunks(d) {
                        for (o, &g) in buf.iter_mut().zip(chunk) {
                            *o += g;
                        }
                    }
                });
            }
            Op::AddBcast(a, b) => {
                let nb = self.val(*b).numel();
                acc(adj, *a, &mut |buf| add_into(buf, g_out, 1.0));
                acc(adj, *b, &mut |buf| {
                    for chunk in g_out.chunks(nb) {
                        for (o, &g) in buf.iter_mut().zip(chunk) {
                            *o += g;
                        }
                    }
                });
            }
            Op::MulBcast(a, b) => {
                let bv = &self.val(*b).data;
                let av = &self.val(*a).data;
                let nb = bv.len();
                acc(adj, *a, &mut |buf| {
                    for (ci, chunk) in buf.chunks_mut(nb).enumerate() {
                        let g_chunk = &g_out[ci * nb..(ci + 1) * nb];
                        for ((o, &g), &y) in chunk.iter_mut().zip(g_chunk).zip(bv) {
                            *o += g * y;
                        }
                    }
                });
                acc(adj, *b, &mut |buf| {
                    for (ci, a_chunk) in av.chunks(nb).enumerate() {
                        let g_chunk = &g_out[ci * nb..(ci + 1) * nb];
                        for ((o, &g), &x) in buf.iter_mut().zip(g_chunk).zip(a_chunk) {
                            *o += g * x;
                        }
                    }
                });
            }
            Op::Scale(a, c) => {
                let c = *c;
                acc(adj, *a, &mut |buf| add_into(buf, g_out, c));
            }
            Op::MulScalar(a, s) => {
                let sv = self.val(*s).data[0];
                let av = &self.val(*a).data;
                acc(adj, *a, &mut |buf| add_into(buf, g_out, sv));
                acc(adj, *s, &mut |buf| {
                    let mut dot = 0.0;
                    for (&g, &x) in g_out.iter().zip(av) {
                        dot += g * x;
                    }
                    buf[0] += dot;
                });
            }
            Op::MatMul(a, b) => {
                let (ga, n, k) = self.val(*a).mat3();
                let (gb, _, p) = self.val(*b).mat3();
                let b_shared = gb == 1;
                let av = &self.val(*a).data;
                let bv = &self.val(*b).data;
                // da += g · bᵀ
                acc(adj, *a, &mut |buf| {
                    kernels::matmul_nt_acc(g_out, bv, buf, ga, n, p, k, b_shared);
                });
                // db += aᵀ · g (summed over groups when shared)
                acc(adj, *b, &mut |buf| {
                    if b_shared {
                        kernels::matmul_tn_acc(av, g_out, buf, ga, n, k, p);
                    } else {
                        kernels::matmul_tn_grouped_acc(av, g_out, buf, ga, n, k, p);
                    }
                });
            }
            Op::Transpose(a) => {
                let (g, n, m) = self.val(*a).mat3();
                acc(adj, *a, &mut |buf| {
                    // g_out is [g, m, n]; buf is [g, n, m]
                    for gi in 0..g {
                        let src = &g_out[gi * n * m..(gi + 1) * n * m];
                        let dst = &mut buf[gi * n * m..(gi + 1) * n * m];
                        for j in 0..m {
                            for i in 0..n {
                                dst[i * m + j] += src[j * n + i];
                            }
                        }
                    }
                });
            }
            Op::Sigmoid(a) => {
                let yv = &node.out.data;
                acc(adj, *a, &mut |buf| {
                    for ((o, &g), &y) in buf.iter_mut().zip(g_out).zip(yv) {
                        *o += g * y * (1.0 - y);
                    }
                });
            }
            Op::Gelu(a) => {
                let xv = &self.val(*a).data;
                acc(adj, *a, &mut |buf| {
                    for ((o, &g), &x) in buf.iter_mut().zip(g_out).zip(xv) {
                        *o += g * kernels::gelu_grad(x);
                    }
                });
            }
            Op::Exp(a) => {
                let yv = &node.out.data;
                acc(adj, *a, &mut |buf| {
                    for ((o, &g), &y) in buf.iter_mut().zip(g_out).zip(yv) {
                        *o += g * y;
                    }
                });
            }
            Op::Softmax(x) => {
                let m = node.out.last_dim();
                let yv = &node.out.data;
                acc(adj, *x, &mut |buf| {
                    kernels::softmax_backward_rows_acc(yv, g_out, buf, m);
                });
            }
            Op::LayerNorm { x, gamma, beta, eps } => {
                let d = node.out.last_dim();
                let xv = &self.val(*x).data;
                let gv = &self.val(*gamma).data;
                let eps = *eps;
                acc(adj, *x, &mut |buf| {
                    for (r, brow) in buf.chunks_mut(d).enumerate() {
                        let x_row = &xv[r * d..(r + 1) * d];
                        let g_row = &g_out[r * d..(r + 1) * d];
                        let (mean, inv_std) = kernels::row_moments(x_row, eps);
                        // dl/dxhat_j = g_j * gamma_j; xhat = (x - mean) * inv_std
                        let mut sum_gx = 0.0;
                        let mut sum_gx_xhat = 0.0;
                        for j in 0..d {
                            let xhat = (x_row[j] - mean) * inv_std;
                            let gx = g_row[j] * gv[j];
                            sum_gx += gx;
                            sum_gx_xhat += gx * xhat;
                        }
                        let nd = d as f64;
                        for j in 0..d {
                            let xhat = (x_row[j] - mean) * inv_std;
                            let gx = g_row[j] * gv[j];
                            brow[j] += inv_std * (gx - sum_gx / nd - xhat * sum_gx_xhat / nd);
                        }
                    }
                });
                acc(adj, *gamma, &mut |buf| {
                    for (r, g_row) in g_out.chunks(d).enumerate() {
                        let x_row = &xv[r * d..(r + 1) * d];
                        let (mean, inv_std) = kernels::row_moments(x_row, eps);
                        for j in 0..d {
                            buf[j] += g_row[j] * (x_row[j] - mean) * inv_std;
                        }
                    }
                });
                acc(adj, *beta, &mut |buf| {
                    for g_row in g_out.chunks(d) {
                        for (o, &g) in buf.iter_mut().zip(g_row) {
                            *o += g;
                        }
                    }
                });
            }
            Op::ConcatTokens(parts) => {
                let d = node.out.last_dim();
                let (groups, total_n, _) = node.out.mat3();
                let mut row_off = 0;
                for &p in parts {
                    let t = self.val(p);
                    let (pn, grouped) = if t.rank() == 3 {
                        (t.dims()[1], true)
                    } else {
                        (t.dims()[0], false)
                    };
                    acc(adj, p, &mut |buf| {
                        for gi in 0..groups {
                            let src = &g_out[gi * total_n * d + row_off * d
                                ..gi * total_n * d + (row_off + pn) * d];
                            let dst = if grouped {
                                &mut buf[gi * pn * d..(gi + 1) * pn * d]
                            } else {
                                &mut buf[..]
                            };
                            for (o, &g) in dst.iter_mut().zip(src) {
                                *o += g;
                            }
                        }
                    });
                    row_off += pn;
                }
            }
            Op::SliceRows { x, start, len } => {
                let (g, n, d) = self.val(*x).mat3();
                let (start, len) = (*start, *len);
                acc(adj, *x, &mut |buf| {
                    for gi in 0..g {
                        let src = &g_out[gi * len * d..(gi + 1) * len * d];
                        let dst = &mut buf[gi * n * d + start * d..gi * n * d + (start + len) * d];
                        for (o, &gv) in dst.iter_mut().zip(src) {
                            *o += gv;
                        }
                    }
                });
            }
            Op::SliceCols { x, start, len } => {
                let m = self.val(*x).last_dim();
                let rows = self.val(*x).numel() / m;
                let (start, len) = (*start, *len);
                acc(adj, *x, &mut |buf| {
                    for r in 0..rows {
                        let src = &g_out[r * len..(r + 1) * len];
                        let dst = &mut buf[r * m + start..r * m + start + len];
                        for (o, &g) in dst.iter_mut().zip(src) {
                            *o += g;
                        }
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let total_m = node.out.last_dim();
                let rows = node.out.numel() / total_m;
                let mut col_off = 0;
                for &p in parts {
                    let m = self.val(p).last_dim();
                    acc(adj, p, &mut |buf| {
                        for r in 0..rows {
                            let src = &g_out[r * total_m + col_off..r * total_m + col_off + m];
                            let dst = &mut buf[r * m..(r + 1) * m];
                            for (o, &g) in dst.iter_mut().zip(src) {
                                *o += g;
                            }
                        }
                    });
                    col_off += m;
                }
            }
            Op::Embed { table, ids } => {
                let d = node.out.last_dim();
                acc(adj, *table, &mut |buf| {
                    for (r, &id) in ids.iter().enumerate() {
                        let src = &g_out[r * d..(r + 1) * d];
                        let dst = &mut buf[id as usize * d..(id as usize + 1) * d];
                        for (o, &g) in dst.iter_mut().zip(src) {
                            *o += g;
                        }
                    }
                });
            }
            Op::NormalizeRows(x) => {
                let d = node.out.last_dim();
                let xv = &self.val(*x).data;
                let yv = &node.out.data;
                acc(adj, *x, &mut |buf| {
                    for (r, brow) in buf.chunks_mut(d).enumerate() {
                        let x_row = &xv[r * d..(r + 1) * d];
                        let y_row = &yv[r * d..(r + 1) * d];
                        let g_row = &g_out[r * d..(r + 1) * d];
                        let norm = x_row.iter().map(|v| v * v).sum::<f64>().sqrt();
                        let mut gy = 0.0;
                        for (&g, &y) in g_row.iter().zip(y_row) {
                            gy += g * y;
                        }
                        for j in 0..d {
                            brow[j] += (g_row[j] - y_row[j] * gy) / norm;
                        }
                    }
                });
            }
            Op::MeanRows(x) => {
                let (g, n, d) = self.val(*x).mat3();
                let inv = 1.0 / n as f64;
                acc(adj, *x, &mut |buf| {
                    for gi in 0..g {
                        let src = &g_out[gi * d..(gi + 1) * d];
                        for i in 0..n {
                            let dst = &mut buf[gi * n * d + i * d..gi * n * d + (i + 1) * d];
                            for (o, &gv) in dst.iter_mut().zip(src) {
                                *o += gv * inv;
                            }
                        }
                    }
                });
            }
            Op::SumAll(x) => {
                let g = g_out[0];
                acc(adj, *x, &mut |buf| {
                    for o in buf.iter_mut() {
                        *o += g;
                    }
                });
            }
            Op::TakeDiag(x) => {
                let b = self.val(*x).dims()[0];
                acc(adj, *x, &mut |buf| {
                    for i in 0..b {
                        buf[i * b + i] += g_out[i];
                    }
                });
            }
            Op::MaskedLseRows { x, keep } => {
                let (n, m) = (self.val(*x).dims()[0], self.val(*x).dims()[1]);
                let xv = &self.val(*x).data;
                let lse = &node.out.data;
                acc(adj, *x, &mut |buf| {
                    for i in 0..n {
                        let gi = g_out[i];
                        if gi == 0.0 {
                            continue;
                        }
                        for j in 0..m {
                            if keep[i * m + j] {
                                buf[i * m + j] += gi * (xv[i * m + j] - lse[i]).exp();
                            }
                        }
                    }
                });
            }
            Op::AddConst(x) => {
                acc(adj, *x, &mut |buf| add_into(buf, g_out, 1.0));
            }
            Op::Reshape(x) => {
                acc(adj, *x, &mut |buf| add_into(buf, g_out, 1.0));
            }
        }
    }
}

fn add_into(buf: &mut [f64], g: &[f64], scale: f64) {
    for (o, &v) in buf.iter_mut().zip(g) {
        *o += v * scale;
    }
}

fn map_tensor(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let data = t.data.iter().map(|&v| f(v)).collect();
    Tensor::new(t.dims(), data).expect("same dims")
}

fn zip_tensors(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.dims(), data).expect("same dims")
}

#[cfg(test)]
mod tests;
