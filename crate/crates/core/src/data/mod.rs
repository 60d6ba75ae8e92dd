//! Synthetic paired video/text data: generation, on-disk formats,
//! mask-to-patch conversion, and batch assembly.

pub mod batch;
pub mod format;
pub mod generator;

pub use batch::{make_batches, Batch, BatchStrategy};
pub use generator::{generate_synthetic_dataset, ClassCoding, DatasetSummary, GeneratorSpec};

use crate::attention::SubjectIndexSet;
use crate::encoders::{FrameInput, SentimentDistribution};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::BufRead;
use std::path::{Path, PathBuf};

/// One paired clip: pixels, subject masks, caption, and optional
/// precomputed sentiment / class label (the label is for probing only and
/// never reaches the contrastive objective).
#[derive(Debug, Clone)]
pub struct ClipRecord {
    pub id: String,
    pub t: usize,
    pub h: usize,
    pub w: usize,
    /// t·h·w·3 bytes.
    pub pixels: Vec<u8>,
    /// t·h·w bytes in {0, 1}.
    pub masks: Vec<u8>,
    pub caption: String,
    pub sentiment: Option<SentimentDistribution>,
    pub label: Option<u8>,
}

impl ClipRecord {
    /// Convert to the model-facing float representation (pixels / 255).
    pub fn frame_input(&self) -> FrameInput {
        FrameInput {
            t: self.t,
            h: self.h,
            w: self.w,
            pixels: self.pixels.iter().map(|&p| p as f64 / 255.0).collect(),
            masks: self.masks.clone(),
        }
    }

    /// Per-frame subject patch sets.
    pub fn subjects(&self, patch_size: usize, threshold: f64) -> Result<Vec<SubjectIndexSet>> {
        let n = self.h * self.w;
        (0..self.t)
            .map(|ti| {
                mask_to_patch_indices(
                    &self.masks[ti * n..(ti + 1) * n],
                    self.h,
                    self.w,
                    patch_size,
                    threshold,
                )
            })
            .collect()
    }
}

/// Convert a binary mask to the set of patch indices whose subject-pixel
/// fraction exceeds `threshold`. Patch indexing is row-major, matching
/// `patchify`.
pub fn mask_to_patch_indices(
    mask: &[u8],
    h: usize,
    w: usize,
    patch_size: usize,
    threshold: f64,
) -> Result<SubjectIndexSet> {
    if !h.is_multiple_of(patch_size) || !w.is_multiple_of(patch_size) {
        return Err(Error::validation(format!(
            "mask {h}×{w} not divisible by patch size {patch_size}"
        )));
    }
    if mask.len() != h * w {
        return Err(Error::shape("mask buffer length mismatch"));
    }
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::validation(format!(
            "threshold must lie in [0, 1), got {threshold}"
        )));
    }
    if let Some(pos) = mask.iter().position(|&m| m > 1) {
        return Err(Error::validation(format!(
            "mask value {} at index {pos} is not binary",
            mask[pos]
        )));
    }
    let (ph, pw) = (h / patch_size, w / patch_size);
    let area = (patch_size * patch_size) as f64;
    let mut indices = Vec::new();
    for pr in 0..ph {
        for pc in 0..pw {
            let mut count = 0usize;
            for dy in 0..patch_size {
                let y = pr * patch_size + dy;
                for dx in 0..patch_size {
                    count += mask[y * w + pc * patch_size + dx] as usize;
                }
            }
            if count as f64 / area > threshold {
                indices.push(pr * pw + pc);
            }
        }
    }
    Ok(SubjectIndexSet::new(indices))
}

/// One line of `manifest.jsonl`. Paths are relative to the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub frames: String,
    pub masks: String,
    pub caption: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sentiment: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
}

/// Streaming dataset reader over `manifest.jsonl`.
pub struct DatasetReader {
    root: PathBuf,
    lines: std::io::Lines<std::io::BufReader<std::fs::File>>,
    line_no: u64,
}

/// Open a dataset directory for streaming reads.
pub fn load_dataset(path: &Path) -> Result<DatasetReader> {
    let manifest = path.join("manifest.jsonl");
    let file = std::fs::File::open(&manifest).map_err(|e| {
        Error::format(
            format!("cannot open manifest {}: {e}", manifest.display()),
            None,
        )
    })?;
    Ok(DatasetReader {
        root: path.to_path_buf(),
        lines: std::io::BufReader::new(file).lines(),
        line_no: 0,
    })
}

/// Read the full dataset into memory.
pub fn load_all(path: &Path) -> Result<Vec<ClipRecord>> {
    load_dataset(path)?.collect()
}

impl DatasetReader {
    fn read_record(&self, rec: ManifestRecord) -> Result<ClipRecord> {
        let frames_path = self.root.join(&rec.frames);
        let frames = format::read_frames(&frames_path).map_err(|e| match e {
            Error::Io(_) => Error::format(
                format!("record {}: frames file {} is missing or unreadable", rec.id, rec.frames),
                None,
            ),
            other => other,
        })?;
        let masks_path = self.root.join(&rec.masks);
        let masks = format::read_masks(&masks_path).map_err(|e| match e {
            Error::Io(_) => Error::format(
                format!("record {}: masks file {} is missing or unreadable", rec.id, rec.masks),
                None,
            ),
            other => other,
        })?;
        if masks.t != frames.t || masks.h != frames.h || masks.w != frames.w {
            return Err(Error::format(
                format!("record {}: mask dims disagree with frames", rec.id),
                None,
            ));
        }
        if rec.caption.trim().is_empty() {
            return Err(Error::format(
                format!("record {}: caption must be non-empty", rec.id),
                None,
            ));
        }
        let sentiment = match rec.sentiment {
            Some(v) => Some(SentimentDistribution::from_slice(&v).map_err(|e| {
                Error::format(format!("record {}: bad sentiment: {e}", rec.id), None)
            })?),
            None => None,
        };
        Ok(ClipRecord {
            id: rec.id,
            t: frames.t,
            h: frames.h,
            w: frames.w,
            pixels: frames.data,
            masks: masks.data,
            caption: rec.caption,
            sentiment,
            label: rec.label,
        })
    }
}

impl Iterator for DatasetReader {
    type Item = Result<ClipRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.line_no += 1;
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            if line.trim().is_empty() {
                continue;
            }
            let rec: ManifestRecord = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(e) => {
                    return Some(Err(Error::format(
                        format!("manifest line {}: {e}", self.line_no),
                        None,
                    )))
                }
            };
            return Some(self.read_record(rec));
        }
    }
}

#[cfg(test)]
mod tests;
