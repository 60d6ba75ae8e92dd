//! The dual-encoder model: parameter registry, forward passes, and
//! single-item convenience encoders.

use super::config::{AttentionMode, ModelConfig, TemporalMode};
use crate::attention::{
    build_mask_matrix, sap_indicator, stack_masks, subject_weight_matrix_stacked, saam_attention,
    SubjectIndexSet,
};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

/// Initial value of the log inverse temperature: ln(1/0.07).
pub const LOGIT_SCALE_INIT: f64 = 2.6592600369327783;
/// Upper clamp for the log inverse temperature: ln(100).
pub const LOGIT_SCALE_MAX: f64 = 4.605170185988092;

const LN_EPS: f64 = 1e-5;

/// One clip of raw visual input: pixels in [0,1] plus binary subject masks.
#[derive(Debug, Clone)]
pub struct FrameInput {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    /// t·h·w·3 floats, frame-major, row-major pixels, channels innermost.
    pub pixels: Vec<f64>,
    /// t·h·w values in {0, 1}.
    pub masks: Vec<u8>,
}

impl FrameInput {
    pub fn validate(&self) -> Result<()> {
        if self.t == 0 {
            return Err(Error::validation("clip needs at least one frame"));
        }
        if self.pixels.len() != self.t * self.h * self.w * 3 {
            return Err(Error::validation("pixel buffer length mismatch"));
        }
        if self.masks.len() != self.t * self.h * self.w {
            return Err(Error::validation("mask buffer length mismatch"));
        }
        if self.masks.iter().any(|&m| m > 1) {
            return Err(Error::validation("masks must be binary"));
        }
        if self.pixels.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::validation("pixels must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn frame_pixels(&self, ti: usize) -> &[f64] {
        let n = self.h * self.w * 3;
        &self.pixels[ti * n..(ti + 1) * n]
    }

    pub fn frame_mask(&self, ti: usize) -> &[u8] {
        let n = self.h * self.w;
        &self.masks[ti * n..(ti + 1) * n]
    }
}

/// Extract non-overlapping patches in row-major patch order (top-left first).
///
/// Returns an `[m, patch²·3]` matrix; within a patch, pixels are row-major
/// with channels innermost.
pub fn patchify(frame: &[f64], h: usize, w: usize, patch: usize) -> Result<Tensor> {
    if !h.is_multiple_of(patch) || !w.is_multiple_of(patch) {
        return Err(Error::validation(format!(
            "frame {h}×{w} not divisible by patch size {patch}"
        )));
    }
    if frame.len() != h * w * 3 {
        return Err(Error::shape("frame buffer length mismatch"));
    }
    let (ph, pw) = (h / patch, w / patch);
    let m = ph * pw;
    let dp = patch * patch * 3;
    let mut data = vec![0.0; m * dp];
    for pr in 0..ph {
        for pc in 0..pw {
            let pi = pr * pw + pc;
            let dst = &mut data[pi * dp..(pi + 1) * dp];
            let mut o = 0;
            for dy in 0..patch {
                let y = pr * patch + dy;
                for dx in 0..patch {
                    let x = pc * patch + dx;
                    let src = (y * w + x) * 3;
                    dst[o..o + 3].copy_from_slice(&frame[src..src + 3]);
                    o += 3;
                }
            }
        }
    }
    Tensor::new(&[m, dp], data)
}

/// A named model weight.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
}

/// Ordered parameter registry. Registration order is fixed by construction,
/// which pins both the RNG consumption order at init and the optimizer's
/// traversal order.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        debug_assert!(!self.index.contains_key(&name), "duplicate param {name}");
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Param { name, tensor });
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.params[i].tensor)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).copied().map(move |i| &mut self.params[i].tensor)
    }

    /// Insert every parameter into `g` as a leaf. A parameter is frozen
    /// (no gradient) when `frozen` returns true for its name.
    pub fn bind<F: Fn(&str) -> bool>(&self, g: &mut Graph, frozen: F) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|p| g.leaf(p.tensor.clone(), !frozen(&p.name)))
            .collect();
        Bound {
            vars: self.index.clone(),
            ordered: vars,
        }
    }
}

/// Per-graph binding of parameters to leaf vars, aligned with the registry.
pub struct Bound {
    vars: HashMap<String, usize>,
    ordered: Vec<Var>,
}

impl Bound {
    /// Assemble from an explicit name → slot map and ordered vars; used when
    /// something else (e.g. the gradient checker) owns the leaf insertion.
    pub fn from_parts(vars: HashMap<String, usize>, ordered: Vec<Var>) -> Self {
        Bound { vars, ordered }
    }

    pub fn var(&self, name: &str) -> Var {
        self.ordered[*self.vars.get(name).unwrap_or_else(|| panic!("unknown param {name}"))]
    }

    pub fn ordered(&self) -> &[Var] {
        &self.ordered
    }
}

/// The dual-encoder model.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamSet,
}

impl Model {
    /// Build with seeded Gaussian init (σ = 0.02 weights, zero biases,
    /// unit gains). `a_raw` starts at −4 so the subject stream opens near
    /// canonical attention; the logit scale starts at ln(1/0.07).
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = build_params(&config, &mut rng);
        Ok(Model { config, params })
    }

    /// All-zero weights; used as the shell that checkpoint loading fills.
    pub fn zeroed(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::default();
        for (name, dims) in param_specs(&config) {
            params.add(name, Tensor::zeros(&dims));
        }
        Ok(Model { config, params })
    }

    /// Bind parameters into a graph, honoring the freeze flags.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        let freeze_frame = self.config.freeze_frame;
        let freeze_text = self.config.freeze_text;
        self.params.bind(g, move |name| {
            (freeze_frame && name.starts_with("frame.")) || (freeze_text && name.starts_with("text."))
        })
    }

    /// Pull accumulated gradients for every parameter out of `g`, in
    /// registry order (`None` for frozen parameters).
    pub fn grads(&self, g: &Graph, bound: &Bound) -> Vec<Option<Vec<f64>>> {
        self.params
            .iter()
            .map(|p| g.grad(bound.var(&p.name)).map(|s| s.to_vec()))
            .collect()
    }

    // ---- batched forward passes ----

    /// Encode a batch of clips to unit-norm video embeddings `[b, d]`.
    ///
    /// `patches` is `[b·t, m, patch²·3]` (clip-major) and `subjects` has one
    /// entry per frame. Returns the var of the normalized embedding matrix.
    pub fn forward_video(
        &self,
        g: &mut Graph,
        bound: &Bound,
        patches: &Tensor,
        subjects: &[SubjectIndexSet],
        b: usize,
    ) -> Result<Var> {
        let reps = self.forward_frames(g, bound, patches, subjects, None)?;
        let t = self.config.t;
        let d = self.config.d;
        if b * t != g.value(reps).dims()[0] {
            return Err(Error::shape("clip count disagrees with frame groups"));
        }
        let frames = g.reshape(reps, &[b, t, d])?;
        let pooled = match self.config.temporal_mode {
            TemporalMode::Transformer => {
                let cls = bound.var("temporal.cls_token");
                let toks = g.concat_tokens(&[cls, frames])?;
                let pos = bound.var("temporal.pos_embed");
                let mut x = g.add_bcast(toks, pos)?;
                for i in 0..self.config.temporal_layers {
                    x = self.block(g, bound, x, &format!("temporal.blocks.{i}"), BlockKind::Plain, None)?;
                }
                let x = self.final_ln(g, bound, x, "temporal")?;
                let cls_out = g.slice_rows(x, 0, 1)?;
                g.reshape(cls_out, &[b, d])?
            }
            TemporalMode::Meanpool => {
                let mean = g.mean_rows(frames)?;
                g.reshape(mean, &[b, d])?
            }
        };
        g.l2_normalize_rows(pooled)
    }

    /// Encode every frame group to its cls representation `[b·t, d]`.
    /// When `profile` is given, per-layer effective attention matrices
    /// (head-averaged) are pushed into it.
    fn forward_frames(
        &self,
        g: &mut Graph,
        bound: &Bound,
        patches: &Tensor,
        subjects: &[SubjectIndexSet],
        mut profile: Option<&mut Vec<Tensor>>,
    ) -> Result<Var> {
        let cfg = &self.config;
        let m = cfg.m();
        let groups = patches.dims()[0];
        if patches.rank() != 3 || patches.dims()[1] != m || patches.dims()[2] != cfg.patch_dim() {
            return Err(Error::shape(format!(
                "patches must be [g, {m}, {}], got {:?}",
                cfg.patch_dim(),
                patches.dims()
            )));
        }
        if subjects.len() != groups {
            return Err(Error::shape("one subject set per frame group required"));
        }
        for s in subjects {
            s.validate(m)?;
        }

        let px = g.constant(patches.clone());
        let wp = bound.var("frame.patch_proj.weight");
        let bp = bound.var("frame.patch_proj.bias");
        let proj = g.matmul(px, wp)?;
        let proj = g.add_row(proj, bp)?;

        let pos = bound.var("frame.pos_embed");
        let cls = bound.var("frame.cls_token");

        let (toks, pos_eff) = match cfg.attention_mode {
            AttentionMode::Vanilla | AttentionMode::Saam => {
                let hmn = bound.var("frame.hmn_token");
                let toks = g.concat_tokens(&[proj, cls, hmn])?;
                (toks, pos)
            }
            AttentionMode::Sap => {
                let e = g.slice_rows(pos, 0, m)?;
                let ind = g.constant(sap_indicator(subjects, m)?);
                let hmn = g.matmul(ind, e)?;
                let toks = g.concat_tokens(&[proj, cls, hmn])?;
                // the hmn row carries no extra learned positional term
                let pos_pc = g.slice_rows(pos, 0, m + 1)?;
                let zero = g.constant(Tensor::zeros(&[1, cfg.d]));
                let pos_eff = g.concat_tokens(&[pos_pc, zero])?;
                (toks, pos_eff)
            }
        };
        let mut x = g.add_bcast(toks, pos_eff)?;

        let masks = if cfg.attention_mode == AttentionMode::Saam {
            let per_frame: Vec<_> = subjects
                .iter()
                .map(|s| build_mask_matrix(m, s))
                .collect::<Result<Vec<_>>>()?;
            Some(stack_masks(&per_frame)?)
        } else {
            None
        };

        for i in 0..cfg.n_layers {
            let saam_here = cfg.attention_mode == AttentionMode::Saam
                && cfg.saam_fusion_layer.is_none_or(|l| i < l);
            let kind = if saam_here {
                BlockKind::Saam(masks.as_ref().unwrap())
            } else {
                BlockKind::Plain
            };
            x = self.block(
                g,
                bound,
                x,
                &format!("frame.blocks.{i}"),
                kind,
                profile.as_deref_mut(),
            )?;
        }
        let x = self.final_ln(g, bound, x, "frame")?;
        let cls_out = g.slice_rows(x, m, 1)?;
        g.reshape(cls_out, &[groups, cfg.d])
    }

    /// Encode a batch of token sequences to unit-norm text embeddings `[b, d]`.
    pub fn forward_text(&self, g: &mut Graph, bound: &Bound, ids: &[Vec<u32>]) -> Result<Var> {
        let cfg = &self.config;
        let b = ids.len();
        if b == 0 {
            return Err(Error::validation("text batch must be non-empty"));
        }
        let max_len = cfg.max_text_len;
        for seq in ids {
            if seq.len() > max_len {
                return Err(Error::validation(format!(
                    "token sequence length {} exceeds max_text_len {max_len}",
                    seq.len()
                )));
            }
        }
        let width = max_len + 1; // cls + tokens/padding
        let mut padded = vec![super::tokenizer::PAD_ID; b * max_len];
        let mut key_mask = Tensor::zeros(&[b, 1, width]);
        for (gi, seq) in ids.iter().enumerate() {
            for (j, &id) in seq.iter().enumerate() {
                padded[gi * max_len + j] = id;
            }
            for j in seq.len()..max_len {
                key_mask.data_mut()[gi * width + 1 + j] = f64::NEG_INFINITY;
            }
        }

        let table = bound.var("text.token_embed");
        let emb = g.embed(table, &padded, b, max_len)?;
        let cls = bound.var("text.cls_token");
        let toks = g.concat_tokens(&[cls, emb])?;
        let pos = bound.var("text.pos_embed");
        let mut x = g.add_bcast(toks, pos)?;
        for i in 0..cfg.text_layers {
            x = self.block_masked(g, bound, x, &format!("text.blocks.{i}"), Some(&key_mask))?;
        }
        let x = self.final_ln(g, bound, x, "text")?;
        let cls_out = g.slice_rows(x, 0, 1)?;
        let flat = g.reshape(cls_out, &[b, cfg.d])?;
        g.l2_normalize_rows(flat)
    }

    /// exp(logit_scale) as a scalar var; multiplies similarity logits.
    pub fn inv_tau(&self, g: &mut Graph, bound: &Bound) -> Var {
        let ls = bound.var("logit_scale");
        g.exp(ls)
    }

    // ---- transformer blocks ----

    fn block(
        &self,
        g: &mut Graph,
        bound: &Bound,
        x: Var,
        prefix: &str,
        kind: BlockKind<'_>,
        profile: Option<&mut Vec<Tensor>>,
    ) -> Result<Var> {
        match kind {
            BlockKind::Plain => self.block_inner(g, bound, x, prefix, None, None, profile),
            BlockKind::Saam(masks) => {
                let a_raw = bound.var(&format!("{prefix}.attn.a_raw"));
                self.block_inner(g, bound, x, prefix, None, Some((masks, a_raw)), profile)
            }
        }
    }

    fn block_masked(
        &self,
        g: &mut Graph,
        bound: &Bound,
        x: Var,
        prefix: &str,
        key_mask: Option<&Tensor>,
    ) -> Result<Var> {
        self.block_inner(g, bound, x, prefix, key_mask, None, None)
    }

    /// Pre-norm transformer block. `key_mask` is an additive softmax mask
    /// (text padding); `saam` carries the stacked subject masks and the raw
    /// attention-mixing parameter.
    #[allow(clippy::too_many_arguments)]
    fn block_inner(
        &self,
        g: &mut Graph,
        bound: &Bound,
        x: Var,
        prefix: &str,
        key_mask: Option<&Tensor>,
        saam: Option<(&Tensor, Var)>,
        mut profile: Option<&mut Vec<Tensor>>,
    ) -> Result<Var> {
        let d = self.config.d;
        let heads = self.config.n_heads;
        let dh = d / heads;

        let ln1g = bound.var(&format!("{prefix}.ln1.gain"));
        let ln1b = bound.var(&format!("{prefix}.ln1.bias"));
        let h = g.layer_norm(x, ln1g, ln1b, LN_EPS)?;

        let q = self.linear(g, bound, h, &format!("{prefix}.attn.wq"), &format!("{prefix}.attn.bq"))?;
        let k = self.linear(g, bound, h, &format!("{prefix}.attn.wk"), &format!("{prefix}.attn.bk"))?;
        let v = self.linear(g, bound, h, &format!("{prefix}.attn.wv"), &format!("{prefix}.attn.bv"))?;

        let mut head_outs = Vec::with_capacity(heads);
        let mut head_weights: Vec<Var> = Vec::new();
        for hi in 0..heads {
            let qh = g.slice_cols(q, hi * dh, dh)?;
            let kh = g.slice_cols(k, hi * dh, dh)?;
            let vh = g.slice_cols(v, hi * dh, dh)?;
            match saam {
                Some((masks, a_raw)) => {
                    let u = subject_weight_matrix_stacked(g, qh, kh, masks)?;
                    let a = g.sigmoid(a_raw);
                    let out = saam_attention(g, qh, kh, vh, u, a)?;
                    head_outs.push(out);
                    if profile.is_some() {
                        head_weights.push(self.effective_saam_weights(g, qh, kh, u, a)?);
                    }
                }
                None => {
                    let s = crate::attention::attention_weights(g, qh, kh, key_mask)?;
                    let out = g.matmul(s, vh)?;
                    head_outs.push(out);
                    if profile.is_some() {
                        head_weights.push(s);
                    }
                }
            }
        }
        let merged = if heads == 1 {
            head_outs[0]
        } else {
            g.concat_cols(&head_outs)?
        };
        if let Some(p) = profile.as_mut() {
            p.push(average_weights(g, &head_weights)?);
        }

        let attn_out = self.linear(g, bound, merged, &format!("{prefix}.attn.wo"), &format!("{prefix}.attn.bo"))?;
        let x = g.add(x, attn_out)?;

        let ln2g = bound.var(&format!("{prefix}.ln2.gain"));
        let ln2b = bound.var(&format!("{prefix}.ln2.bias"));
        let h2 = g.layer_norm(x, ln2g, ln2b, LN_EPS)?;
        let up = self.linear(g, bound, h2, &format!("{prefix}.mlp.w1"), &format!("{prefix}.mlp.b1"))?;
        let act = g.gelu(up);
        let down = self.linear(g, bound, act, &format!("{prefix}.mlp.w2"), &format!("{prefix}.mlp.b2"))?;
        g.add(x, down)
    }

    /// Effective attention of the subject-aware block:
    /// `S ⊙ (J−A) + (S ⊙ A)·U`, the matrix that actually mixes the values.
    fn effective_saam_weights(&self, g: &mut Graph, qh: Var, kh: Var, u: Var, a: Var) -> Result<Var> {
        let s = crate::attention::attention_weights(g, qh, kh, None)?;
        let n = g.value(a).dims()[0];
        let ones = g.constant(Tensor::full(&[n, n], 1.0));
        let jma = g.sub(ones, a)?;
        let ctx = g.mul_bcast(s, jma)?;
        let sa = g.mul_bcast(s, a)?;
        let routed = g.matmul(sa, u)?;
        g.add(ctx, routed)
    }

    fn linear(&self, g: &mut Graph, bound: &Bound, x: Var, w: &str, b: &str) -> Result<Var> {
        let wv = bound.var(w);
        let bv = bound.var(b);
        let y = g.matmul(x, wv)?;
        g.add_row(y, bv)
    }


    fn final_ln(&self, g: &mut Graph, bound: &Bound, x: Var, scope: &str) -> Result<Var> {
        let gain = bound.var(&format!("{scope}.ln_out.gain"));
        let bias = bound.var(&format!("{scope}.ln_out.bias"));
        g.layer_norm(x, gain, bias, LN_EPS)
    }

    // ---- single-item conveniences (forward only) ----

    /// Patchify one clip into the `[t, m, patch²·3]` group tensor.
    pub fn clip_patches(&self, clip: &FrameInput) -> Result<Tensor> {
        clip.validate()?;
        if clip.h != self.config.image_size || clip.w != self.config.image_size {
            return Err(Error::validation(format!(
                "clip is {}×{}, model expects {}×{}",
                clip.h, clip.w, self.config.image_size, self.config.image_size
            )));
        }
        if clip.t != self.config.t {
            return Err(Error::validation(format!(
                "clip has {} frames, model expects {}",
                clip.t, self.config.t
            )));
        }
        let m = self.config.m();
        let dp = self.config.patch_dim();
        let mut data = Vec::with_capacity(clip.t * m * dp);
        for ti in 0..clip.t {
            let p = patchify(clip.frame_pixels(ti), clip.h, clip.w, self.config.patch_size)?;
            data.extend_from_slice(p.data());
        }
        Tensor::new(&[clip.t, m, dp], data)
    }

    /// Encode one clip to its unit-norm video embedding.
    pub fn encode_video(&self, clip: &FrameInput, subjects: &[SubjectIndexSet]) -> Result<Vec<f64>> {
        if subjects.len() != clip.t {
            return Err(Error::validation("one subject set per frame required"));
        }
        let patches = self.clip_patches(clip)?;
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g, |_| true);
        let v = self.forward_video(&mut g, &bound, &patches, subjects, 1)?;
        Ok(g.value(v).data().to_vec())
    }

    /// Encode a single frame to its cls representation (no temporal pooling).
    pub fn encode_frame(&self, frame: &[f64], subject: &SubjectIndexSet) -> Result<Vec<f64>> {
        let side = self.config.image_size;
        let p = patchify(frame, side, side, self.config.patch_size)?;
        let m = self.config.m();
        let dp = self.config.patch_dim();
        let patches = Tensor::new(&[1, m, dp], p.data().to_vec())?;
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g, |_| true);
        let reps = self.forward_frames(&mut g, &bound, &patches, std::slice::from_ref(subject), None)?;
        Ok(g.value(reps).data().to_vec())
    }

    /// Encode one token sequence to its unit-norm text embedding.
    pub fn encode_text(&self, ids: &[u32]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g, |_| true);
        let t = self.forward_text(&mut g, &bound, &[ids.to_vec()])?;
        Ok(g.value(t).data().to_vec())
    }

    /// Per-layer attention mass of the hmn token on the subject patches,
    /// averaged over frames (and heads). Vanilla mode has no meaningful hmn
    /// role and is rejected.
    pub fn hmn_attention_profile(
        &self,
        clip: &FrameInput,
        subjects: &[SubjectIndexSet],
    ) -> Result<Vec<f64>> {
        if self.config.attention_mode == AttentionMode::Vanilla {
            return Err(Error::validation(
                "attention profile needs sap or saam mode; vanilla has a free hmn token",
            ));
        }
        if subjects.len() != clip.t {
            return Err(Error::validation("one subject set per frame required"));
        }
        let patches = self.clip_patches(clip)?;
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g, |_| true);
        let mut layers: Vec<Tensor> = Vec::new();
        self.forward_frames(&mut g, &bound, &patches, subjects, Some(&mut layers))?;

        let n = self.config.seq_len();
        let hmn = n - 1;
        let mut profile = Vec::with_capacity(layers.len());
        for weights in &layers {
            // weights: [t, n, n]
            let mut total = 0.0;
            for (ti, subject) in subjects.iter().enumerate() {
                let row = &weights.data()[ti * n * n + hmn * n..ti * n * n + (hmn + 1) * n];
                let mass: f64 = subject.indices().iter().map(|&j| row[j]).sum();
                total += mass;
            }
            profile.push(total / clip.t as f64);
        }
        Ok(profile)
    }
}

enum BlockKind<'a> {
    Plain,
    Saam(&'a Tensor),
}

fn average_weights(g: &mut Graph, heads: &[Var]) -> Result<Tensor> {
    if heads.len() == 1 {
        return Ok(g.value(heads[0]).clone());
    }
    let mut acc = g.value(heads[0]).clone();
    for &h in &heads[1..] {
        let hv = g.value(h);
        for (o, &v) in acc.data_mut().iter_mut().zip(hv.data()) {
            *o += v;
        }
    }
    let inv = 1.0 / heads.len() as f64;
    for o in acc.data_mut().iter_mut() {
        *o *= inv;
    }
    Ok(acc)
}

/// Every parameter name and shape for a config, in registration order.
pub fn param_specs(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let d = cfg.d;
    let n = cfg.seq_len();
    let r = cfg.mlp_ratio * d;
    let mut specs: Vec<(String, Vec<usize>)> = Vec::new();

    let block = |specs: &mut Vec<(String, Vec<usize>)>, prefix: &str, with_a_raw: bool| {
        specs.push((format!("{prefix}.ln1.gain"), vec![1, d]));
        specs.push((format!("{prefix}.ln1.bias"), vec![1, d]));
        for wn in ["wq", "wk", "wv", "wo"] {
            specs.push((format!("{prefix}.attn.{wn}"), vec![d, d]));
            specs.push((format!("{prefix}.attn.b{}", &wn[1..]), vec![1, d]));
        }
        if with_a_raw {
            specs.push((format!("{prefix}.attn.a_raw"), vec![n, n]));
        }
        specs.push((format!("{prefix}.ln2.gain"), vec![1, d]));
        specs.push((format!("{prefix}.ln2.bias"), vec![1, d]));
        specs.push((format!("{prefix}.mlp.w1"), vec![d, r]));
        specs.push((format!("{prefix}.mlp.b1"), vec![1, r]));
        specs.push((format!("{prefix}.mlp.w2"), vec![r, d]));
        specs.push((format!("{prefix}.mlp.b2"), vec![1, d]));
    };

    specs.push(("frame.patch_proj.weight".into(), vec![cfg.patch_dim(), d]));
    specs.push(("frame.patch_proj.bias".into(), vec![1, d]));
    specs.push(("frame.pos_embed".into(), vec![n, d]));
    specs.push(("frame.cls_token".into(), vec![1, d]));
    if cfg.attention_mode != AttentionMode::Sap {
        specs.push(("frame.hmn_token".into(), vec![1, d]));
    }
    for i in 0..cfg.n_layers {
        block(
            &mut specs,
            &format!("frame.blocks.{i}"),
            cfg.attention_mode == AttentionMode::Saam,
        );
    }
    specs.push(("frame.ln_out.gain".into(), vec![1, d]));
    specs.push(("frame.ln_out.bias".into(), vec![1, d]));

    if cfg.temporal_mode == TemporalMode::Transformer {
        specs.push(("temporal.cls_token".into(), vec![1, d]));
        specs.push(("temporal.pos_embed".into(), vec![cfg.t + 1, d]));
        for i in 0..cfg.temporal_layers {
            block(&mut specs, &format!("temporal.blocks.{i}"), false);
        }
        specs.push(("temporal.ln_out.gain".into(), vec![1, d]));
        specs.push(("temporal.ln_out.bias".into(), vec![1, d]));
    }

    specs.push(("text.token_embed".into(), vec![cfg.vocab_size, d]));
    specs.push(("text.pos_embed".into(), vec![cfg.max_text_len + 1, d]));
    specs.push(("text.cls_token".into(), vec![1, d]));
    for i in 0..cfg.text_layers {
        block(&mut specs, &format!("text.blocks.{i}"), false);
    }
    specs.push(("text.ln_out.gain".into(), vec![1, d]));
    specs.push(("text.ln_out.bias".into(), vec![1, d]));

    specs.push(("logit_scale".into(), vec![1, 1]));
    specs
}

fn build_params(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> ParamSet {
    let mut params = ParamSet::default();
    for (name, dims) in param_specs(cfg) {
        let tensor = init_tensor(&name, &dims, rng);
        params.add(name, tensor);
    }
    params
}

fn init_tensor(name: &str, dims: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    if name == "logit_scale" {
        Tensor::scalar(LOGIT_SCALE_INIT)
    } else if name.ends_with(".a_raw") {
        // sigmoid(-4) ≈ 0.018: training starts near canonical attention
        Tensor::full(dims, -4.0)
    } else if name.ends_with(".gain") {
        Tensor::full(dims, 1.0)
    } else if name.ends_with(".bias") || name.contains(".attn.b") || name.ends_with(".b1") || name.ends_with(".b2") {
        Tensor::zeros(dims)
    } else {
        Tensor::randn(dims, 0.02, rng)
    }
}
