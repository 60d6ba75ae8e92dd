//! Model configuration.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionMode {
    /// Canonical attention; the hmn token is a free learnable token.
    Vanilla,
    /// Subject-aware attention masking: a learnable fraction of attention
    /// mass routes through the subject-restricted weight matrix.
    Saam,
    /// Subject-aware prompting: the hmn token is the sum of subject-patch
    /// positional embeddings.
    Sap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemporalMode {
    /// Small transformer over frame representations with a video cls token.
    Transformer,
    /// Order-invariant mean over frame representations.
    Meanpool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// Seeded Gaussian (σ = 0.02) weights, zero biases.
    Random,
    /// Load all weights from a checkpoint file.
    Checkpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Shared embedding width.
    pub d: usize,
    pub patch_size: usize,
    /// Frames are square `image_size × image_size`.
    pub image_size: usize,
    /// Frames per clip.
    pub t: usize,
    /// Frame-encoder depth.
    pub n_layers: usize,
    #[serde(default = "default_heads")]
    pub n_heads: usize,
    pub attention_mode: AttentionMode,
    #[serde(default = "default_temporal_mode")]
    pub temporal_mode: TemporalMode,
    /// Token vocabulary size including pad/unk; usually derived from the
    /// training corpus by the tokenizer.
    #[serde(default)]
    pub vocab_size: usize,
    #[serde(default = "default_max_text_len")]
    pub max_text_len: usize,
    #[serde(default = "default_aux_layers")]
    pub text_layers: usize,
    #[serde(default = "default_aux_layers")]
    pub temporal_layers: usize,
    #[serde(default = "default_mlp_ratio")]
    pub mlp_ratio: usize,
    #[serde(default)]
    pub freeze_text: bool,
    #[serde(default)]
    pub freeze_frame: bool,
    #[serde(default = "default_init_mode")]
    pub init_mode: InitMode,
    /// Checkpoint to load when `init_mode` is `checkpoint`.
    #[serde(default)]
    pub init_checkpoint: Option<String>,
    /// Apply the subject-aware mask only in layers below this index
    /// (saam mode); `None` applies it in every layer.
    #[serde(default)]
    pub saam_fusion_layer: Option<usize>,
}

fn default_heads() -> usize {
    1
}
fn default_temporal_mode() -> TemporalMode {
    TemporalMode::Transformer
}
fn default_max_text_len() -> usize {
    12
}
fn default_aux_layers() -> usize {
    2
}
fn default_mlp_ratio() -> usize {
    4
}
fn default_init_mode() -> InitMode {
    InitMode::Random
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 32,
            patch_size: 16,
            image_size: 32,
            t: 8,
            n_layers: 3,
            n_heads: 1,
            attention_mode: AttentionMode::Sap,
            temporal_mode: TemporalMode::Transformer,
            vocab_size: 0,
            max_text_len: 12,
            text_layers: 2,
            temporal_layers: 2,
            mlp_ratio: 4,
            freeze_text: false,
            freeze_frame: false,
            init_mode: InitMode::Random,
            init_checkpoint: None,
            saam_fusion_layer: None,
        }
    }
}

impl ModelConfig {
    /// Patches per frame.
    pub fn m(&self) -> usize {
        let side = self.image_size / self.patch_size;
        side * side
    }

    /// Flattened patch width (`patch² · 3`).
    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * 3
    }

    /// Frame token count: patches + cls + hmn.
    pub fn seq_len(&self) -> usize {
        self.m() + 2
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("d", self.d),
            ("patch_size", self.patch_size),
            ("image_size", self.image_size),
            ("t", self.t),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("max_text_len", self.max_text_len),
            ("text_layers", self.text_layers),
            ("mlp_ratio", self.mlp_ratio),
        ] {
            if v == 0 {
                return Err(Error::validation(format!("{name} must be positive")));
            }
        }
        if !self.image_size.is_multiple_of(self.patch_size) {
            return Err(Error::validation(format!(
                "image_size {} not divisible by patch_size {}",
                self.image_size, self.patch_size
            )));
        }
        if !self.d.is_multiple_of(self.n_heads) {
            return Err(Error::validation(format!(
                "d {} not divisible by n_heads {}",
                self.d, self.n_heads
            )));
        }
        if self.vocab_size < 2 {
            return Err(Error::validation(
                "vocab_size must be at least 2 (pad + unk); build the tokenizer first",
            ));
        }
        if self.temporal_mode == TemporalMode::Transformer && self.temporal_layers == 0 {
            return Err(Error::validation("temporal_layers must be positive"));
        }
        Ok(())
    }
}
