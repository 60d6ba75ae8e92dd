//! Attention variants: canonical scaled dot-product attention, the
//! subject-aware masked form that splits attention mass between a context
//! stream and a subject-restricted stream, and the subject-prompt token
//! built from positional embeddings.
//!
//! Token order throughout is `[patch_0 .. patch_{m-1}, cls, hmn]`, so a
//! sequence over `m` patches has `m + 2` rows: `cls` at index `m` and `hmn`
//! at index `m + 1`.

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Sorted, deduplicated indices of the image patches containing the subject.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SubjectIndexSet {
    indices: Vec<usize>,
}

impl SubjectIndexSet {
    /// Build from arbitrary order; duplicates collapse, order is normalized.
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        SubjectIndexSet { indices }
    }

    pub fn empty() -> Self {
        SubjectIndexSet::default()
    }

    pub fn full(m: usize) -> Self {
        SubjectIndexSet {
            indices: (0..m).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if let Some(&bad) = self.indices.iter().find(|&&i| i >= m) {
            return Err(Error::validation(format!(
                "subject patch index {bad} out of range for m = {m}"
            )));
        }
        Ok(())
    }
}

/// The (m+2)×(m+2) additive attention mask with entries in {0, −∞}.
///
/// Block layout over token order `[patches, cls, hmn]`:
/// patch/cls rows and columns among themselves are all zero; the hmn row
/// masks non-subject patches and cls; the hmn column masks non-subject
/// patches (cls may still read hmn); hmn attends to itself.
#[derive(Debug, Clone)]
pub struct MaskMatrix {
    m: usize,
    tensor: Tensor,
}

impl MaskMatrix {
    pub fn size(&self) -> usize {
        self.m + 2
    }

    pub fn patch_count(&self) -> usize {
        self.m
    }

    pub fn cls_index(&self) -> usize {
        self.m
    }

    pub fn hmn_index(&self) -> usize {
        self.m + 1
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.tensor.at2(row, col)
    }
}

/// Build the subject attention mask for `m` patches and subject set `P`.
pub fn build_mask_matrix(m: usize, subject: &SubjectIndexSet) -> Result<MaskMatrix> {
    if m == 0 {
        return Err(Error::validation("mask matrix needs at least one patch"));
    }
    subject.validate(m)?;
    let n = m + 2;
    let hmn = m + 1;
    let cls = m;
    let mut data = vec![0.0; n * n];
    for i in 0..m {
        if !subject.contains(i) {
            data[i * n + hmn] = f64::NEG_INFINITY; // patch i may not feed hmn
            data[hmn * n + i] = f64::NEG_INFINITY; // hmn may not read patch i
        }
    }
    data[hmn * n + cls] = f64::NEG_INFINITY; // hmn never reads cls
    let tensor = Tensor::new(&[n, n], data)?;
    Ok(MaskMatrix { m, tensor })
}

/// Stack per-group masks into one [g, n, n] additive mask tensor.
pub fn stack_masks(masks: &[MaskMatrix]) -> Result<Tensor> {
    if masks.is_empty() {
        return Err(Error::shape("stack_masks needs at least one mask"));
    }
    let n = masks[0].size();
    let mut data = Vec::with_capacity(masks.len() * n * n);
    for mk in masks {
        if mk.size() != n {
            return Err(Error::shape("stack_masks sizes disagree"));
        }
        data.extend_from_slice(mk.tensor().data());
    }
    Tensor::new(&[masks.len(), n, n], data)
}

/// softmax(QKᵀ/√d)·V over the last two dims; rank-3 inputs are batched.
pub fn canonical_attention(g: &mut Graph, q: Var, k: Var, v: Var) -> Result<Var> {
    let s = attention_weights(g, q, k, None)?;
    g.matmul(s, v)
}

/// The row-stochastic attention matrix softmax((QKᵀ + M)/√d), with the mask
/// applied inside the scaling. For {0, −∞} masks the scaling is a no-op on
/// the mask entries.
pub fn attention_weights(g: &mut Graph, q: Var, k: Var, mask: Option<&Tensor>) -> Result<Var> {
    let d = g.value(q).last_dim();
    if g.value(k).last_dim() != d {
        return Err(Error::shape("attention q/k feature dims disagree"));
    }
    let kt = g.transpose(k)?;
    let scores = g.matmul(q, kt)?;
    let inv = 1.0 / (d as f64).sqrt();
    let scaled = g.scale(scores, inv);
    match mask {
        Some(m) => {
            let scaled_mask = scale_mask(m, inv);
            g.masked_softmax(scaled, Some(&scaled_mask))
        }
        None => g.softmax(scaled),
    }
}

fn scale_mask(m: &Tensor, inv: f64) -> Tensor {
    let data = m.data().iter().map(|&v| v * inv).collect();
    Tensor::new(m.dims(), data).expect("same dims")
}

/// U = softmax((QKᵀ + M)/√d): the subject-restricted weight matrix. The hmn
/// row of U is exactly zero outside `P ∪ {hmn}`.
pub fn subject_weight_matrix(g: &mut Graph, q: Var, k: Var, mask: &MaskMatrix) -> Result<Var> {
    let n = g.value(q).mat3().1;
    if n != mask.size() {
        return Err(Error::shape(format!(
            "subject_weight_matrix expects {} rows, got {n}",
            mask.size()
        )));
    }
    attention_weights(g, q, k, Some(mask.tensor()))
}

/// Batched variant taking a pre-stacked [g, n, n] mask tensor.
pub fn subject_weight_matrix_stacked(g: &mut Graph, q: Var, k: Var, masks: &Tensor) -> Result<Var> {
    attention_weights(g, q, k, Some(masks))
}

/// Subject-aware attention:
///
/// `(S ⊙ (J − A))·V + (S ⊙ A)·(U·V)` with `S = softmax(QKᵀ/√d)`,
/// `J` all-ones and `A ∈ [0,1]` elementwise. At `A = 0` this reduces exactly
/// to canonical attention; at `A = J` all attention mass routes through the
/// subject stream `U`.
pub fn saam_attention(g: &mut Graph, q: Var, k: Var, v: Var, u: Var, a: Var) -> Result<Var> {
    let av = g.value(a);
    if av.data().iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::validation(
            "saam_attention requires A entries in [0, 1]",
        ));
    }
    let (_, n, n2) = av.mat3();
    let (_, qs, _) = g.value(q).mat3();
    if n != n2 || n != qs {
        return Err(Error::shape(format!(
            "saam_attention A must be [{qs}, {qs}], got {:?}",
            av.dims()
        )));
    }
    let s = attention_weights(g, q, k, None)?;
    let ones = g.constant(Tensor::full(&[n, n], 1.0));
    let j_minus_a = g.sub(ones, a)?;
    let context_w = mul_maybe_bcast(g, s, j_minus_a)?;
    let context = g.matmul(context_w, v)?;
    let subject_w = mul_maybe_bcast(g, s, a)?;
    let uv = g.matmul(u, v)?;
    let subject = g.matmul(subject_w, uv)?;
    g.add(context, subject)
}

/// Elementwise multiply with group broadcast when `a` is batched and `b` 2-D.
fn mul_maybe_bcast(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    if g.value(a).rank() == 3 && g.value(b).rank() == 2 {
        g.mul_bcast(a, b)
    } else {
        g.mul(a, b)
    }
}

/// The subject-prompt token: the exact sum of positional embeddings over the
/// subject patches. Empty `P` yields the zero vector.
pub fn sap_token(e: &Tensor, subject: &SubjectIndexSet) -> Result<Tensor> {
    if e.rank() != 2 {
        return Err(Error::shape(format!(
            "sap_token expects [m, d] embeddings, got {:?}",
            e.dims()
        )));
    }
    let (m, d) = (e.dims()[0], e.dims()[1]);
    subject.validate(m)?;
    let mut out = vec![0.0; d];
    for &i in subject.indices() {
        for (o, &v) in out.iter_mut().zip(&e.data()[i * d..(i + 1) * d]) {
            *o += v;
        }
    }
    Tensor::new(&[d], out)
}

/// Row indicator matrix [g, 1, m] selecting each group's subject patches,
/// for computing sap tokens in-graph as `indicator · E`.
pub fn sap_indicator(subjects: &[SubjectIndexSet], m: usize) -> Result<Tensor> {
    let g = subjects.len();
    if g == 0 {
        return Err(Error::shape("sap_indicator needs at least one group"));
    }
    let mut data = vec![0.0; g * m];
    for (gi, s) in subjects.iter().enumerate() {
        s.validate(m)?;
        for &i in s.indices() {
            data[gi * m + i] = 1.0;
        }
    }
    Tensor::new(&[g, 1, m], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::finite_diff_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const NEG_INF: f64 = f64::NEG_INFINITY;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (i, (&x, &y)) in a.iter().zip(b).enumerate() {
            assert!((x - y).abs() <= tol, "index {i}: {x} vs {y}");
        }
    }

    /// Independent per-row oracle: plain loops, no graph machinery.
    fn attention_oracle(
        q: &[f64],
        k: &[f64],
        v: &[f64],
        n: usize,
        d: usize,
        mask: Option<&[f64]>,
    ) -> Vec<f64> {
        let mut out = vec![0.0; n * d];
        let inv = 1.0 / (d as f64).sqrt();
        for i in 0..n {
            let mut logits = vec![0.0; n];
            for j in 0..n {
                let mut dot = 0.0;
                for c in 0..d {
                    dot += q[i * d + c] * k[j * d + c];
                }
                let m = mask.map_or(0.0, |mm| mm[i * n + j]);
                logits[j] = (dot + m) * inv;
            }
            let max = logits.iter().cloned().fold(NEG_INF, f64::max);
            let exps: Vec<f64> = logits
                .iter()
                .map(|&l| if l == NEG_INF { 0.0 } else { (l - max).exp() })
                .collect();
            let z: f64 = exps.iter().sum();
            for j in 0..n {
                let w = exps[j] / z;
                for c in 0..d {
                    out[i * d + c] += w * v[j * d + c];
                }
            }
        }
        out
    }

    #[test]
    fn canonical_single_row_returns_v() {
        let mut g = Graph::new();
        let q = g.constant(Tensor::new(&[1, 4], vec![0.3, -1.0, 2.0, 0.5]).unwrap());
        let k = g.constant(Tensor::new(&[1, 4], vec![1.0, 1.0, 1.0, 1.0]).unwrap());
        let v = g.constant(Tensor::new(&[1, 4], vec![9.0, -2.0, 0.5, 3.0]).unwrap());
        let out = canonical_attention(&mut g, q, k, v).unwrap();
        assert_eq!(g.value(out).data(), &[9.0, -2.0, 0.5, 3.0]);
    }

    #[test]
    fn canonical_equal_logits_average_v() {
        // zero keys give equal logits for every query
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = Graph::new();
        let q = g.constant(Tensor::randn(&[3, 4], 1.0, &mut rng));
        let k = g.constant(Tensor::zeros(&[3, 4]));
        let v = g.constant(Tensor::new(&[3, 4], (0..12).map(|x| x as f64).collect()).unwrap());
        let out = canonical_attention(&mut g, q, k, v).unwrap();
        let mean: Vec<f64> = (0..4).map(|c| (c as f64 + (c + 4) as f64 + (c + 8) as f64) / 3.0).collect();
        for row in 0..3 {
            assert_close(&g.value(out).data()[row * 4..(row + 1) * 4], &mean, 1e-12);
        }
    }

    #[test]
    fn canonical_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = Tensor::randn(&[4, 8], 1.0, &mut rng);
        let k = Tensor::randn(&[4, 8], 1.0, &mut rng);
        let v = Tensor::randn(&[4, 8], 1.0, &mut rng);
        let expect = attention_oracle(q.data(), k.data(), v.data(), 4, 8, None);
        let mut g = Graph::new();
        let (vq, vk, vv) = (g.constant(q), g.constant(k), g.constant(v));
        let out = canonical_attention(&mut g, vq, vk, vv).unwrap();
        assert_close(g.value(out).data(), &expect, 1e-12);
    }

    #[test]
    fn mask_matrix_blocks_for_p_1_3() {
        let m = 4;
        let mask = build_mask_matrix(m, &SubjectIndexSet::new(vec![1, 3])).unwrap();
        let (cls, hmn) = (4, 5);
        // hmn row: subject patches and self stay, others and cls masked
        assert_eq!(mask.at(hmn, 1), 0.0);
        assert_eq!(mask.at(hmn, 3), 0.0);
        assert_eq!(mask.at(hmn, hmn), 0.0);
        assert_eq!(mask.at(hmn, 0), NEG_INF);
        assert_eq!(mask.at(hmn, 2), NEG_INF);
        assert_eq!(mask.at(hmn, cls), NEG_INF);
        // hmn column: only non-subject patches masked
        assert_eq!(mask.at(1, hmn), 0.0);
        assert_eq!(mask.at(3, hmn), 0.0);
        assert_eq!(mask.at(0, hmn), NEG_INF);
        assert_eq!(mask.at(2, hmn), NEG_INF);
        assert_eq!(mask.at(cls, hmn), 0.0);
        // patch/cls block all zero
        for i in 0..=cls {
            for j in 0..=cls {
                assert_eq!(mask.at(i, j), 0.0);
            }
        }
    }

    #[test]
    fn mask_matrix_empty_subject_isolates_hmn() {
        let mask = build_mask_matrix(4, &SubjectIndexSet::empty()).unwrap();
        let hmn = 5;
        for j in 0..5 {
            assert_eq!(mask.at(hmn, j), NEG_INF);
        }
        assert_eq!(mask.at(hmn, hmn), 0.0);
    }

    #[test]
    fn mask_matrix_full_subject_masks_only_cls_read() {
        let m = 4;
        let mask = build_mask_matrix(m, &SubjectIndexSet::full(m)).unwrap();
        let (cls, hmn) = (4, 5);
        let n = m + 2;
        for i in 0..n {
            for j in 0..n {
                let expect = if (i, j) == (hmn, cls) { NEG_INF } else { 0.0 };
                assert_eq!(mask.at(i, j), expect, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn mask_matrix_rejects_out_of_range() {
        let err = build_mask_matrix(4, &SubjectIndexSet::new(vec![4]));
        assert!(matches!(err, Err(crate::Error::Validation(_))));
    }

    #[test]
    fn subject_weights_zero_outside_subject() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = 4;
        let n = m + 2;
        let subject = SubjectIndexSet::new(vec![1, 3]);
        let mask = build_mask_matrix(m, &subject).unwrap();
        let mut g = Graph::new();
        let q = g.constant(Tensor::randn(&[n, 8], 1.0, &mut rng));
        let k = g.constant(Tensor::randn(&[n, 8], 1.0, &mut rng));
        let u = subject_weight_matrix(&mut g, q, k, &mask).unwrap();
        let uv = g.value(u);
        let hmn = 5;
        for j in 0..n {
            let w = uv.at2(hmn, j);
            if subject.contains(j) || j == hmn {
                assert!(w > 0.0);
            } else {
                assert_eq!(w, 0.0, "U[hmn][{j}] must be exactly zero");
            }
        }
        // every row sums to 1 over unmasked entries
        for i in 0..n {
            let s: f64 = (0..n).map(|j| uv.at2(i, j)).sum();
            assert!((s - 1.0).abs() <= 1e-12, "row {i} sums to {s}");
        }
    }

    #[test]
    fn subject_weights_match_mask_then_softmax_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = 3;
        let n = m + 2;
        let subject = SubjectIndexSet::new(vec![0, 2]);
        let mask = build_mask_matrix(m, &subject).unwrap();
        let q = Tensor::randn(&[n, 6], 1.0, &mut rng);
        let k = Tensor::randn(&[n, 6], 1.0, &mut rng);
        // oracle: logits + mask, then per-row softmax with plain loops
        let inv = 1.0 / 6f64.sqrt();
        let mut expect = vec![0.0; n * n];
        for i in 0..n {
            let mut row = vec![0.0; n];
            for (j, slot) in row.iter_mut().enumerate() {
                let mut dot = 0.0;
                for c in 0..6 {
                    dot += q.data()[i * 6 + c] * k.data()[j * 6 + c];
                }
                *slot = (dot + mask.at(i, j)) * inv;
            }
            let mx = row.iter().cloned().fold(NEG_INF, f64::max);
            let ex: Vec<f64> = row
                .iter()
                .map(|&l| if l == NEG_INF { 0.0 } else { (l - mx).exp() })
                .collect();
            let z: f64 = ex.iter().sum();
            for j in 0..n {
                expect[i * n + j] = ex[j] / z;
            }
        }
        let mut g = Graph::new();
        let (vq, vk) = (g.constant(q), g.constant(k));
        let u = subject_weight_matrix(&mut g, vq, vk, &mask).unwrap();
        assert_close(g.value(u).data(), &expect, 1e-12);
    }

    #[test]
    fn saam_reduces_to_canonical_at_a_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let n = 5;
            let q = Tensor::randn(&[n, 8], 1.0, &mut rng);
            let k = Tensor::randn(&[n, 8], 1.0, &mut rng);
            let v = Tensor::randn(&[n, 8], 1.0, &mut rng);
            let mask = build_mask_matrix(n - 2, &SubjectIndexSet::new(vec![0, 2])).unwrap();
            let mut g = Graph::new();
            let (vq, vk, vv) = (g.constant(q), g.constant(k), g.constant(v));
            let u = subject_weight_matrix(&mut g, vq, vk, &mask).unwrap();
            let a = g.constant(Tensor::zeros(&[n, n]));
            let masked = saam_attention(&mut g, vq, vk, vv, u, a).unwrap();
            let plain = canonical_attention(&mut g, vq, vk, vv).unwrap();
            assert_close(g.value(masked).data(), g.value(plain).data(), 1e-12);
        }
    }

    #[test]
    fn saam_full_redirection_at_a_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 4;
        let q = Tensor::randn(&[n, 4], 1.0, &mut rng);
        let k = Tensor::randn(&[n, 4], 1.0, &mut rng);
        let v = Tensor::randn(&[n, 4], 1.0, &mut rng);
        let mask = build_mask_matrix(n - 2, &SubjectIndexSet::full(n - 2)).unwrap();
        let mut g = Graph::new();
        let (vq, vk, vv) = (g.constant(q), g.constant(k), g.constant(v));
        let u = subject_weight_matrix(&mut g, vq, vk, &mask).unwrap();
        let a = g.constant(Tensor::full(&[n, n], 1.0));
        let out = saam_attention(&mut g, vq, vk, vv, u, a).unwrap();
        // expect S·(U·V)
        let s = attention_weights(&mut g, vq, vk, None).unwrap();
        let uv = g.matmul(u, vv).unwrap();
        let expect = g.matmul(s, uv).unwrap();
        assert_close(g.value(out).data(), g.value(expect).data(), 1e-12);
    }

    #[test]
    fn saam_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = 3;
        let n = m + 2;
        let d = 6;
        let subject = SubjectIndexSet::new(vec![1]);
        let mask = build_mask_matrix(m, &subject).unwrap();
        let q = Tensor::randn(&[n, d], 1.0, &mut rng);
        let k = Tensor::randn(&[n, d], 1.0, &mut rng);
        let v = Tensor::randn(&[n, d], 1.0, &mut rng);
        // random A in (0,1)
        let a_data: Vec<f64> = (0..n * n).map(|_| {
            use rand::Rng;
            rng.random::<f64>() * 0.998 + 0.001
        }).collect();
        let a = Tensor::new(&[n, n], a_data.clone()).unwrap();

        // loop oracle
        let s = attention_oracle_weights(q.data(), k.data(), n, d, None);
        let u = attention_oracle_weights(q.data(), k.data(), n, d, Some(mask.tensor().data()));
        let mut uv = vec![0.0; n * d];
        for i in 0..n {
            for j in 0..n {
                for c in 0..d {
                    uv[i * d + c] += u[i * n + j] * v.data()[j * d + c];
                }
            }
        }
        let mut expect = vec![0.0; n * d];
        for i in 0..n {
            for j in 0..n {
                let sw = s[i * n + j];
                let aw = a_data[i * n + j];
                for c in 0..d {
                    expect[i * d + c] += sw * (1.0 - aw) * v.data()[j * d + c];
                    expect[i * d + c] += sw * aw * uv[j * d + c];
                }
            }
        }

        let mut g = Graph::new();
        let (vq, vk, vv) = (g.constant(q), g.constant(k), g.constant(v));
        let vu = subject_weight_matrix(&mut g, vq, vk, &mask).unwrap();
        let va = g.constant(a);
        let out = saam_attention(&mut g, vq, vk, vv, vu, va).unwrap();
        assert_close(g.value(out).data(), &expect, 1e-12);
    }

    fn attention_oracle_weights(
        q: &[f64],
        k: &[f64],
        n: usize,
        d: usize,
        mask: Option<&[f64]>,
    ) -> Vec<f64> {
        let inv = 1.0 / (d as f64).sqrt();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let mut row = vec![0.0; n];
            for j in 0..n {
                let mut dot = 0.0;
                for c in 0..d {
                    dot += q[i * d + c] * k[j * d + c];
                }
                row[j] = (dot + mask.map_or(0.0, |mm| mm[i * n + j])) * inv;
            }
            let mx = row.iter().cloned().fold(NEG_INF, f64::max);
            let ex: Vec<f64> = row
                .iter()
                .map(|&l| if l == NEG_INF { 0.0 } else { (l - mx).exp() })
                .collect();
            let z: f64 = ex.iter().sum();
            for j in 0..n {
                out[i * n + j] = ex[j] / z;
            }
        }
        out
    }

    #[test]
    fn saam_rejects_a_outside_unit_interval() {
        let mut g = Graph::new();
        let q = g.constant(Tensor::zeros(&[3, 2]));
        let u = g.constant(Tensor::zeros(&[3, 3]));
        let a = g.constant(Tensor::full(&[3, 3], 1.5));
        assert!(matches!(
            saam_attention(&mut g, q, q, q, u, a),
            Err(crate::Error::Validation(_))
        ));
    }

    #[test]
    fn sap_token_basics() {
        let e = Tensor::new(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let single = sap_token(&e, &SubjectIndexSet::new(vec![0])).unwrap();
        assert_eq!(single.data(), &[1.0, 2.0]);
        let empty = sap_token(&e, &SubjectIndexSet::empty()).unwrap();
        assert_eq!(empty.data(), &[0.0, 0.0]);
        // permutation invariance
        let fwd = sap_token(&e, &SubjectIndexSet::new(vec![0, 2])).unwrap();
        let rev = sap_token(&e, &SubjectIndexSet::new(vec![2, 0])).unwrap();
        assert_eq!(fwd.data(), rev.data());
        assert_eq!(fwd.data(), &[6.0, 8.0]);
        // additive over disjoint sets
        let left = sap_token(&e, &SubjectIndexSet::new(vec![0])).unwrap();
        let right = sap_token(&e, &SubjectIndexSet::new(vec![1, 2])).unwrap();
        let both = sap_token(&e, &SubjectIndexSet::new(vec![0, 1, 2])).unwrap();
        for c in 0..2 {
            assert!((left.data()[c] + right.data()[c] - both.data()[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn saam_gradients_pass_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = 2;
        let n = m + 2;
        let d = 4;
        let mask = build_mask_matrix(m, &SubjectIndexSet::new(vec![1])).unwrap();
        let q = Tensor::randn(&[n, d], 0.7, &mut rng);
        let k = Tensor::randn(&[n, d], 0.7, &mut rng);
        let v = Tensor::randn(&[n, d], 0.7, &mut rng);
        let a_raw = Tensor::randn(&[n, n], 1.0, &mut rng);
        let build = |g: &mut Graph, vars: &[Var]| {
            let (q, k, v, a_raw) = (vars[0], vars[1], vars[2], vars[3]);
            let u = subject_weight_matrix(g, q, k, &mask)?;
            let a = g.sigmoid(a_raw);
            let out = saam_attention(g, q, k, v, u, a)?;
            let sq = g.mul(out, out)?;
            Ok(g.sum_all(sq))
        };
        let err = finite_diff_check(&build, &[q, k, v, a_raw], 1e-5).unwrap();
        assert!(err < 1e-4, "saam grad error {err}");
    }
}
