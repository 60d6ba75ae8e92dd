//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "ECLP" | version u32 | tensor_count u32
//! per tensor, ordered lexicographically by name:
//!   name_len u16 | name utf-8 | rank u8 | dims u32 × rank | payload f64 × numel
//! ```
//!
//! The model's architecture is carried in a reserved rank-1 tensor named
//! `meta.config` so a checkpoint is self-describing.

use super::config::{AttentionMode, InitMode, ModelConfig, TemporalMode};
use super::model::{param_specs, Model};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"ECLP";
pub const VERSION: u32 = 1;

/// Reserved tensor name carrying the encoded [`ModelConfig`].
pub const META_CONFIG: &str = "meta.config";

/// Serialize named tensors; entries are sorted by name before writing.
pub fn save_tensors(path: &Path, entries: &[(String, Tensor)]) -> Result<()> {
    let mut sorted: Vec<&(String, Tensor)> = entries.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    for win in sorted.windows(2) {
        if win[0].0 == win[1].0 {
            return Err(Error::validation(format!(
                "duplicate tensor name {}",
                win[0].0
            )));
        }
    }

    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(sorted.len() as u32).to_le_bytes());
    for (name, tensor) in sorted {
        let nb = name.as_bytes();
        if nb.len() > u16::MAX as usize {
            return Err(Error::validation(format!("tensor name too long: {name}")));
        }
        buf.extend_from_slice(&(nb.len() as u16).to_le_bytes());
        buf.extend_from_slice(nb);
        let dims = tensor.dims();
        if dims.len() > u8::MAX as usize {
            return Err(Error::validation("tensor rank exceeds u8"));
        }
        buf.push(dims.len() as u8);
        for &d in dims {
            if d > u32::MAX as usize {
                return Err(Error::validation("tensor dim exceeds u32"));
            }
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::format(
                format!("truncated checkpoint: expected {n} bytes for {what}"),
                Some(self.pos as u64),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u8v(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
}

/// Parse a checkpoint file. Validates magic, version, name ordering, and
/// that every payload fits the remaining bytes before allocating.
pub fn load_tensors(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let buf = std::fs::read(path)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    let magic = c.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::format(
            format!("bad magic {magic:?}, expected {MAGIC:?}"),
            Some(0),
        ));
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(Error::format(
            format!("unsupported checkpoint version {version}"),
            Some(4),
        ));
    }
    let count = c.u32("tensor count")? as usize;
    let mut entries = Vec::with_capacity(count.min(4096));
    let mut prev_name: Option<String> = None;
    for ti in 0..count {
        let name_len = c.u16("name length")? as usize;
        let name_off = c.pos;
        let name_bytes = c.take(name_len, "name")?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|_| Error::format(format!("tensor {ti} name is not utf-8"), Some(name_off as u64)))?
            .to_string();
        if let Some(prev) = &prev_name {
            if *prev >= name {
                return Err(Error::format(
                    format!("tensor names out of order: {prev:?} then {name:?}"),
                    Some(name_off as u64),
                ));
            }
        }
        let rank = c.u8v("rank")? as usize;
        if rank == 0 {
            return Err(Error::format(
                format!("tensor {name} has rank 0"),
                Some((c.pos - 1) as u64),
            ));
        }
        let mut dims = Vec::with_capacity(rank);
        let mut numel: u64 = 1;
        for _ in 0..rank {
            let d = c.u32("dim")? as u64;
            if d == 0 {
                return Err(Error::format(
                    format!("tensor {name} has a zero dim"),
                    Some((c.pos - 4) as u64),
                ));
            }
            numel = numel.saturating_mul(d);
            dims.push(d as usize);
        }
        let payload_bytes = numel.saturating_mul(8);
        if (c.pos as u64).saturating_add(payload_bytes) > buf.len() as u64 {
            return Err(Error::format(
                format!("tensor {name} payload ({payload_bytes} bytes) exceeds file size"),
                Some(c.pos as u64),
            ));
        }
        let raw = c.take(payload_bytes as usize, "payload")?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let tensor = Tensor::new(&dims, data)
            .map_err(|e| Error::format(format!("tensor {name}: {e}"), Some(c.pos as u64)))?;
        prev_name = Some(name.clone());
        entries.push((name, tensor));
    }
    if c.pos != buf.len() {
        return Err(Error::format(
            format!("{} trailing bytes after last tensor", buf.len() - c.pos),
            Some(c.pos as u64),
        ));
    }
    Ok(entries)
}

const META_SCHEMA: f64 = 1.0;

fn encode_config(cfg: &ModelConfig) -> Tensor {
    let attn = match cfg.attention_mode {
        AttentionMode::Vanilla => 0.0,
        AttentionMode::Saam => 1.0,
        AttentionMode::Sap => 2.0,
    };
    let temporal = match cfg.temporal_mode {
        TemporalMode::Transformer => 0.0,
        TemporalMode::Meanpool => 1.0,
    };
    let fusion = cfg.saam_fusion_layer.map_or(-1.0, |l| l as f64);
    let v = vec![
        META_SCHEMA,
        cfg.d as f64,
        cfg.patch_size as f64,
        cfg.image_size as f64,
        cfg.t as f64,
        cfg.n_layers as f64,
        cfg.n_heads as f64,
        attn,
        temporal,
        cfg.vocab_size as f64,
        cfg.max_text_len as f64,
        cfg.text_layers as f64,
        cfg.temporal_layers as f64,
        cfg.mlp_ratio as f64,
        fusion,
    ];
    let len = v.len();
    Tensor::new(&[len], v).expect("meta vector")
}

fn decode_config(t: &Tensor) -> Result<ModelConfig> {
    let v = t.data();
    if t.rank() != 1 || v.len() != 15 || v[0] != META_SCHEMA {
        return Err(Error::format(
            format!("unrecognized {META_CONFIG} layout"),
            None,
        ));
    }
    let attn = match v[7] as i64 {
        0 => AttentionMode::Vanilla,
        1 => AttentionMode::Saam,
        2 => AttentionMode::Sap,
        x => return Err(Error::format(format!("bad attention mode {x}"), None)),
    };
    let temporal = match v[8] as i64 {
        0 => TemporalMode::Transformer,
        1 => TemporalMode::Meanpool,
        x => return Err(Error::format(format!("bad temporal mode {x}"), None)),
    };
    Ok(ModelConfig {
        d: v[1] as usize,
        patch_size: v[2] as usize,
        image_size: v[3] as usize,
        t: v[4] as usize,
        n_layers: v[5] as usize,
        n_heads: v[6] as usize,
        attention_mode: attn,
        temporal_mode: temporal,
        vocab_size: v[9] as usize,
        max_text_len: v[10] as usize,
        text_layers: v[11] as usize,
        temporal_layers: v[12] as usize,
        mlp_ratio: v[13] as usize,
        freeze_text: false,
        freeze_frame: false,
        init_mode: InitMode::Random,
        init_checkpoint: None,
        saam_fusion_layer: if v[14] < 0.0 { None } else { Some(v[14] as usize) },
    })
}

impl Model {
    /// Write all weights plus the `meta.config` descriptor.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut entries: Vec<(String, Tensor)> = self
            .params
            .iter()
            .map(|p| (p.name.clone(), strip_grad(&p.tensor)))
            .collect();
        entries.push((META_CONFIG.to_string(), encode_config(&self.config)));
        save_tensors(path, &entries)
    }

    /// Rebuild a model from a checkpoint. Every architectural parameter must
    /// be present with the exact recorded shape.
    pub fn from_checkpoint(path: &Path) -> Result<Self> {
        let entries = load_tensors(path)?;
        let mut map: HashMap<String, Tensor> = entries.into_iter().collect();
        let meta = map
            .remove(META_CONFIG)
            .ok_or_else(|| Error::format(format!("checkpoint is missing {META_CONFIG}"), None))?;
        let config = decode_config(&meta)?;
        let mut model = Model::zeroed(config)?;
        for (name, dims) in param_specs(&model.config) {
            let t = map.remove(&name).ok_or_else(|| {
                Error::validation(format!("checkpoint is missing tensor {name}"))
            })?;
            if t.dims() != dims {
                return Err(Error::validation(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    t.dims(),
                    dims
                )));
            }
            *model.params.get_mut(&name).unwrap() = t;
        }
        if let Some(extra) = map.keys().next() {
            return Err(Error::validation(format!(
                "checkpoint contains unexpected tensor {extra}"
            )));
        }
        Ok(model)
    }

    /// Apply `init_mode`: fresh seeded weights or a compatible checkpoint.
    pub fn from_config(config: &ModelConfig, seed: u64) -> Result<Self> {
        match config.init_mode {
            InitMode::Random => Model::new(config.clone(), seed),
            InitMode::Checkpoint => {
                let path = config.init_checkpoint.as_ref().ok_or_else(|| {
                    Error::validation("init_mode=checkpoint requires init_checkpoint")
                })?;
                let loaded = Model::from_checkpoint(Path::new(path))?;
                ensure_architecture_matches(config, &loaded.config)?;
                let mut model = loaded;
                model.config.freeze_text = config.freeze_text;
                model.config.freeze_frame = config.freeze_frame;
                model.config.init_mode = InitMode::Checkpoint;
                model.config.init_checkpoint = config.init_checkpoint.clone();
                Ok(model)
            }
        }
    }
}

fn ensure_architecture_matches(want: &ModelConfig, got: &ModelConfig) -> Result<()> {
    let mismatch = want.d != got.d
        || want.patch_size != got.patch_size
        || want.image_size != got.image_size
        || want.t != got.t
        || want.n_layers != got.n_layers
        || want.n_heads != got.n_heads
        || want.attention_mode != got.attention_mode
        || want.temporal_mode != got.temporal_mode
        || (want.vocab_size != 0 && want.vocab_size != got.vocab_size)
        || want.max_text_len != got.max_text_len
        || want.text_layers != got.text_layers
        || want.temporal_layers != got.temporal_layers
        || want.mlp_ratio != got.mlp_ratio;
    if mismatch {
        return Err(Error::validation(
            "checkpoint architecture does not match the requested config",
        ));
    }
    Ok(())
}

fn strip_grad(t: &Tensor) -> Tensor {
    let mut t = t.clone();
    t.grad = None;
    t.requires_grad = false;
    t
}
