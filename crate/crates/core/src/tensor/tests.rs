use super::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn t2(rows: usize, cols: usize, data: &[f64]) -> Tensor {
    Tensor::new(&[rows, cols], data.to_vec()).unwrap()
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (&x, &y)) in a.iter().zip(b).enumerate() {
        assert!(
            (x - y).abs() <= tol,
            "index {i}: {x} vs {y} (tol {tol})"
        );
    }
}

// ---- matmul ----

#[test]
fn matmul_identity_is_exact() {
    let mut g = Graph::new();
    let eye = g.constant(t2(2, 2, &[1.0, 0.0, 0.0, 1.0]));
    let m = g.constant(t2(2, 2, &[3.5, -1.25, 0.75, 2.0]));
    let out = g.matmul(eye, m).unwrap();
    assert_eq!(g.value(out).data(), g.value(m).data());
}

#[test]
fn matmul_hand_arithmetic() {
    let mut g = Graph::new();
    let a = g.constant(t2(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    let b = g.constant(t2(2, 1, &[1.0, 1.0]));
    let out = g.matmul(a, b).unwrap();
    assert_eq!(g.value(out).data(), &[3.0, 7.0]);
}

/// Independent oracle: naive triple loop, j-inner.
fn matmul_oracle(a: &[f64], b: &[f64], n: usize, k: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * p];
    for i in 0..n {
        for j in 0..p {
            let mut acc = 0.0;
            for kk in 0..k {
                acc += a[i * k + kk] * b[kk * p + j];
            }
            out[i * p + j] = acc;
        }
    }
    out
}

#[test]
fn matmul_matches_triple_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = Tensor::randn(&[3, 4], 1.0, &mut rng);
    let b = Tensor::randn(&[4, 2], 1.0, &mut rng);
    let expect = matmul_oracle(a.data(), b.data(), 3, 4, 2);
    let mut g = Graph::new();
    let (va, vb) = (g.constant(a), g.constant(b));
    let out = g.matmul(va, vb).unwrap();
    assert_close(g.value(out).data(), &expect, 1e-12);
}

#[test]
fn matmul_grouped_matches_per_group_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let a = Tensor::randn(&[3, 4, 5], 1.0, &mut rng);
    let b = Tensor::randn(&[5, 2], 1.0, &mut rng);
    let b3 = Tensor::randn(&[3, 5, 2], 1.0, &mut rng);
    let mut g = Graph::new();
    let (va, vb, vb3) = (g.constant(a.clone()), g.constant(b.clone()), g.constant(b3.clone()));
    let shared = g.matmul(va, vb).unwrap();
    let grouped = g.matmul(va, vb3).unwrap();
    for gi in 0..3 {
        let asl = &a.data()[gi * 20..(gi + 1) * 20];
        let e1 = matmul_oracle(asl, b.data(), 4, 5, 2);
        assert_close(&g.value(shared).data()[gi * 8..(gi + 1) * 8], &e1, 1e-12);
        let e2 = matmul_oracle(asl, &b3.data()[gi * 10..(gi + 1) * 10], 4, 5, 2);
        assert_close(&g.value(grouped).data()[gi * 8..(gi + 1) * 8], &e2, 1e-12);
    }
}

#[test]
fn matmul_shape_mismatch_errors() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros(&[2, 3]));
    let b = g.constant(Tensor::zeros(&[4, 2]));
    assert!(matches!(g.matmul(a, b), Err(Error::Shape(_))));
}

// ---- masked softmax ----

#[test]
fn softmax_uniform() {
    let mut g = Graph::new();
    let x = g.constant(t2(1, 3, &[0.0, 0.0, 0.0]));
    let y = g.softmax(x).unwrap();
    assert_close(g.value(y).data(), &[1.0 / 3.0; 3], 1e-15);
}

#[test]
fn softmax_direct_evaluation() {
    let mut g = Graph::new();
    let x = g.constant(t2(1, 3, &[1.0, 2.0, 3.0]));
    let y = g.softmax(x).unwrap();
    assert_close(g.value(y).data(), &[0.09003, 0.24473, 0.66524], 1e-5);
}

#[test]
fn softmax_neg_inf_forces_zero() {
    // -inf in the input itself
    let mut g = Graph::new();
    let x = g.constant(t2(1, 3, &[5.0, f64::NEG_INFINITY, 5.0]));
    let y = g.softmax(x).unwrap();
    assert_eq!(g.value(y).data(), &[0.5, 0.0, 0.5]);

    // -inf via the additive mask
    let x2 = g.constant(t2(1, 3, &[5.0, 5.0, 5.0]));
    let mask = t2(1, 3, &[0.0, f64::NEG_INFINITY, 0.0]);
    let y2 = g.masked_softmax(x2, Some(&mask)).unwrap();
    assert_eq!(g.value(y2).data(), &[0.5, 0.0, 0.5]);
}

#[test]
fn softmax_all_masked_row_is_zero() {
    let mut g = Graph::new();
    let x = g.constant(t2(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    let mask = t2(2, 2, &[f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0, 0.0]);
    let y = g.masked_softmax(x, Some(&mask)).unwrap();
    let v = g.value(y).data();
    assert_eq!(&v[..2], &[0.0, 0.0]);
    assert!((v[2] + v[3] - 1.0).abs() < 1e-12);
}

proptest::proptest! {
    #[test]
    fn softmax_rows_sum_to_one(
        rows in 1usize..6,
        cols in 2usize..9,
        raw in proptest::collection::vec(-30.0f64..30.0, 48),
    ) {
        let x = Tensor::new(&[rows, cols], raw[..rows * cols].to_vec()).unwrap();
        let mut g = Graph::new();
        let vx = g.constant(x);
        let y = g.softmax(vx).unwrap();
        for r in 0..rows {
            let s: f64 = g.value(y).data()[r * cols..(r + 1) * cols].iter().sum();
            proptest::prop_assert!((s - 1.0).abs() <= 1e-12, "row sum {}", s);
        }
    }
}

#[test]
fn softmax_group_broadcast_masks() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = Tensor::randn(&[2, 3, 4], 1.0, &mut rng);
    // [n, m] mask shared across groups
    let mut inner = Tensor::zeros(&[3, 4]);
    inner.data_mut()[3] = f64::NEG_INFINITY; // row 0, col 3
    let mut g = Graph::new();
    let vx = g.constant(x.clone());
    let y = g.masked_softmax(vx, Some(&inner)).unwrap();
    for gi in 0..2 {
        assert_eq!(g.value(y).data()[gi * 12 + 3], 0.0);
    }
    // [g, 1, m] per-group key mask
    let mut per_group = Tensor::zeros(&[2, 1, 4]);
    per_group.data_mut()[4 + 1] = f64::NEG_INFINITY; // group 1, col 1
    let y2 = g.masked_softmax(vx, Some(&per_group)).unwrap();
    for i in 0..3 {
        assert_eq!(g.value(y2).data()[12 + i * 4 + 1], 0.0);
        assert!(g.value(y2).data()[i * 4 + 1] > 0.0);
    }
}

// ---- KL divergence ----

const UNIFORM7: [f64; 7] = [1.0 / 7.0; 7];
const PEAKED7: [f64; 7] = [0.4, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1];

#[test]
fn kl_identity_is_zero() {
    assert_eq!(kl_divergence(&PEAKED7, &PEAKED7).unwrap(), 0.0);
}

#[test]
fn kl_hand_computed_pair() {
    // Hand-derived: (1/7)ln((1/7)/0.4) + 6·(1/7)·ln((1/7)/0.1) = 0.158633
    let kl = kl_divergence(&UNIFORM7, &PEAKED7).unwrap();
    assert!((kl - 0.158633).abs() < 1e-5, "kl = {kl}");
    // Reverse direction: 0.4·ln(2.8) + 0.6·ln(0.7) = 0.197843
    let rev = kl_divergence(&PEAKED7, &UNIFORM7).unwrap();
    assert!((rev - 0.197843).abs() < 1e-5, "rev = {rev}");
    assert!((kl - rev).abs() > 1e-3, "KL should be asymmetric here");
}

#[test]
fn kl_rejects_non_simplex() {
    let bad = [0.5, 0.5, 0.5];
    assert!(matches!(
        kl_divergence(&bad, &[1.0 / 3.0; 3]),
        Err(Error::Validation(_))
    ));
}

proptest::proptest! {
    #[test]
    fn kl_non_negative_on_random_simplex_pairs(
        pw in proptest::collection::vec(1e-9f64..1.0, 7),
        qw in proptest::collection::vec(1e-9f64..1.0, 7),
    ) {
        let norm = |v: &[f64]| {
            let s: f64 = v.iter().sum();
            v.iter().map(|x| x / s).collect::<Vec<f64>>()
        };
        let kl = kl_divergence(&norm(&pw), &norm(&qw)).unwrap();
        proptest::prop_assert!(kl >= 0.0, "Gibbs violated: {}", kl);
    }
}

// ---- backward ----

#[test]
fn backward_product_rule() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::scalar(3.0), true);
    let y = g.leaf(Tensor::scalar(5.0), true);
    let p = g.mul(x, y).unwrap();
    g.backward(p).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[5.0]);
    assert_eq!(g.grad(y).unwrap(), &[3.0]);
}

#[test]
fn backward_accumulates_without_reset() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::scalar(3.0), true);
    let y = g.scale(x, 2.0);
    g.backward(y).unwrap();
    g.backward(y).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[4.0]);
    g.reset_grads();
    g.backward(y).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[2.0]);
}

#[test]
fn backward_softmax_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x = Tensor::randn(&[1, 5], 1.0, &mut rng);
    // f = softmax(x)[0], extracted with a one-hot dot product
    let build = |g: &mut Graph, vars: &[Var]| {
        let y = g.softmax(vars[0])?;
        let pick = g.constant(t2(1, 5, &[1.0, 0.0, 0.0, 0.0, 0.0]));
        let prod = g.mul(y, pick)?;
        Ok(g.sum_all(prod))
    };
    let err = finite_diff_check(&build, &[x], 1e-5).unwrap();
    assert!(err < 1e-6, "softmax grad error {err}");
}

#[test]
fn backward_seed_must_be_scalar() {
    let mut g = Graph::new();
    let x = g.leaf(t2(2, 2, &[1.0; 4]), true);
    let y = g.scale(x, 1.0);
    assert!(matches!(g.backward(y), Err(Error::Shape(_))));
}

#[test]
fn frozen_tensor_gets_no_grad() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::scalar(2.0), false);
    let y = g.leaf(Tensor::scalar(4.0), true);
    let p = g.mul(x, y).unwrap();
    g.backward(p).unwrap();
    assert!(g.grad(x).is_none());
    assert_eq!(g.grad(y).unwrap(), &[2.0]);
}

// ---- finite_diff_check edge cases ----

#[test]
fn gradcheck_quadratic_is_tight() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Tensor::randn(&[2, 3], 1.0, &mut rng);
    let build = |g: &mut Graph, vars: &[Var]| {
        let sq = g.mul(vars[0], vars[0])?;
        Ok(g.sum_all(sq))
    };
    let err = finite_diff_check(&build, &[x], 1e-5).unwrap();
    assert!(err < 1e-9, "quadratic error {err}");
}

#[test]
fn gradcheck_constant_function_is_zero() {
    let x = Tensor::zeros(&[2, 2]);
    let build = |g: &mut Graph, _vars: &[Var]| {
        let c = g.constant(Tensor::scalar(7.0));
        Ok(g.scale(c, 1.0))
    };
    let err = finite_diff_check(&build, &[x], 1e-5).unwrap();
    assert_eq!(err, 0.0);
}

// ---- composite op gradients ----

#[test]
fn gradcheck_composite_pipeline() {
    // Exercises matmul, add_row, layer_norm, gelu, sigmoid, transpose,
    // mul_bcast, concat, slices, mean_rows, normalize, exp, mul_scalar.
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let x = Tensor::randn(&[2, 3, 4], 0.8, &mut rng);
    let w = Tensor::randn(&[4, 4], 0.5, &mut rng);
    let bias = Tensor::randn(&[1, 4], 0.5, &mut rng);
    let gamma = Tensor::full(&[1, 4], 1.0);
    let beta = Tensor::zeros(&[1, 4]);
    let amat = Tensor::randn(&[3, 3], 0.5, &mut rng);
    let scal = Tensor::scalar(0.7);

    let build = |g: &mut Graph, v: &[Var]| {
        let (x, w, bias, gamma, beta, amat, scal) = (v[0], v[1], v[2], v[3], v[4], v[5], v[6]);
        let h = g.matmul(x, w)?;
        let h = g.add_row(h, bias)?;
        let h = g.layer_norm(h, gamma, beta, 1e-5)?;
        let h = g.gelu(h);
        let kt = g.transpose(h)?;
        let scores = g.matmul(h, kt)?; // [2,3,3]
        let a = g.sigmoid(amat);
        let mixed = g.mul_bcast(scores, a)?; // [2,3,3]
        let attn = g.softmax(mixed)?;
        let out = g.matmul(attn, h)?; // [2,3,4]
        let lo = g.slice_cols(out, 0, 2)?;
        let hi = g.slice_cols(out, 2, 2)?;
        let cat = g.concat_cols(&[hi, lo])?;
        let pooled = g.mean_rows(cat)?; // [2,1,4]
        let pooled = g.reshape(pooled, &[2, 4])?;
        let unit = g.l2_normalize_rows(pooled)?;
        let es = g.exp(scal);
        let scaled = g.mul_scalar(unit, es)?;
        Ok(g.sum_all(scaled))
    };
    let err = finite_diff_check(&build, &[x, w, bias, gamma, beta, amat, scal], 1e-5).unwrap();
    assert!(err < 1e-7, "composite pipeline grad error {err}");
}

#[test]
fn gradcheck_embed_concat_tokens_lse_diag() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let table = Tensor::randn(&[6, 4], 0.8, &mut rng);
    let cls = Tensor::randn(&[1, 4], 0.8, &mut rng);
    let build = |g: &mut Graph, v: &[Var]| {
        let emb = g.embed(v[0], &[1, 2, 5, 2], 2, 2)?; // [2,2,4]
        let toks = g.concat_tokens(&[emb, v[1]])?; // [2,3,4]
        let flat = g.reshape(toks, &[6, 4])?;
        let t = g.transpose(flat)?;
        let logits = g.matmul(flat, t)?; // [6,6]
        let keep: Vec<bool> = (0..36).map(|i| i % 7 != 1).collect();
        let lse = g.masked_lse_rows(logits, &keep)?;
        let diag = g.take_diag(logits)?;
        let nll = g.sub(lse, diag)?;
        Ok(g.sum_all(nll))
    };
    let err = finite_diff_check(&build, &[table, cls], 1e-5).unwrap();
    assert!(err < 1e-7, "embed/lse grad error {err}");
}

#[test]
fn ops_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let x = Tensor::randn(&[4, 6, 8], 1.0, &mut rng);
    let w = Tensor::randn(&[8, 8], 1.0, &mut rng);
    let run = || {
        let mut g = Graph::new();
        let vx = g.constant(x.clone());
        let vw = g.constant(w.clone());
        let h = g.matmul(vx, vw).unwrap();
        let s = g.softmax(h).unwrap();
        let o = g.matmul(s, vw).unwrap();
        g.value(o).data().to_vec()
    };
    let a = run();
    let b = run();
    assert_eq!(a, b, "identical inputs must give bit-identical outputs");
}

#[test]
fn no_nan_after_forward_on_finite_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let x = Tensor::randn(&[3, 5], 30.0, &mut rng); // large scale stresses exp
    let mut g = Graph::new();
    let vx = g.constant(x);
    let y = g.softmax(vx).unwrap();
    assert!(g.value(y).is_finite());
}
