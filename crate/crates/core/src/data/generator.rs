//! Deterministic synthetic clip generator.
//!
//! Every clip pairs a rendered video (moving rectangular subject over a
//! static noisy background) with a caption whose emotion words match the
//! sentiment lexicon, so same-class clips in a batch are genuine false
//! negatives. Two class codings exist:
//!
//! - `appearance`: the subject's color encodes the class; any frame reveals it.
//! - `temporal`: every clip visits the same set of subject positions and the
//!   class is the visiting ORDER, so an order-invariant temporal pool sees
//!   identical frame multisets across classes.

use super::format;
use super::ManifestRecord;
use crate::encoders::sentiment::{LEXICON, SENTIMENT_CLASSES};
use crate::error::{Error, Result};
use crate::exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassCoding {
    Appearance,
    Temporal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    #[serde(default = "default_t")]
    pub t: usize,
    #[serde(default = "default_side")]
    pub height: usize,
    #[serde(default = "default_side")]
    pub width: usize,
    #[serde(default = "default_coding")]
    pub coding: ClassCoding,
}

fn default_t() -> usize {
    8
}
fn default_side() -> usize {
    32
}
fn default_coding() -> ClassCoding {
    ClassCoding::Appearance
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            t: 8,
            height: 32,
            width: 32,
            coding: ClassCoding::Appearance,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.t == 0 || self.height < 8 || self.width < 8 {
            return Err(Error::validation(
                "generator needs t ≥ 1 and frames at least 8×8",
            ));
        }
        if self.coding == ClassCoding::Temporal {
            let patterns = 2 * (1..self.t).filter(|&s| gcd(s, self.t) == 1).count();
            if patterns < SENTIMENT_CLASSES {
                return Err(Error::validation(format!(
                    "temporal coding with t = {} yields only {patterns} distinct orderings, need {SENTIMENT_CLASSES}",
                    self.t
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetSummary {
    pub n: usize,
    pub per_class: [usize; SENTIMENT_CLASSES],
}

/// Saturated subject color per class, as u8 RGB.
pub const CLASS_COLORS: [[u8; 3]; SENTIMENT_CLASSES] = [
    [230, 25, 25],   // anger
    [40, 200, 40],   // disgust
    [150, 50, 210],  // fear
    [240, 215, 25],  // joy
    [140, 140, 140], // neutral
    [35, 60, 220],   // sadness
    [245, 140, 20],  // surprise
];

const CAPTION_TEMPLATES: [&str; 4] = [
    "a {0} person looks {1} and {2} in the room",
    "the {0} face seems {1} almost {2} today",
    "someone {0} and {1} stands there looking {2}",
    "a clearly {0} figure appears {1} even {2} here",
];

struct Rendered {
    id: String,
    pixels: Vec<u8>,
    masks: Vec<u8>,
    caption: String,
    label: u8,
}

/// Generate `n` clips under `spec` into `out_dir` (creates `frames/`,
/// `masks/`, `manifest.jsonl`, and `genspec.json`). The same arguments
/// always produce byte-identical files.
pub fn generate_synthetic_dataset(
    out_dir: &Path,
    n: usize,
    spec: &GeneratorSpec,
    seed: u64,
) -> Result<DatasetSummary> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir.join("frames"))?;
    std::fs::create_dir_all(out_dir.join("masks"))?;

    // balanced class assignment with a seeded rotation: exactly uniform
    let class_offset = (crate::exec::mix_seed(seed) % SENTIMENT_CLASSES as u64) as usize;

    let rendered = exec::map_indexed(n, |i| {
        let class = (i + class_offset) % SENTIMENT_CLASSES;
        render_clip(spec, seed, i, class)
    });

    let mut per_class = [0usize; SENTIMENT_CLASSES];
    let mut manifest = std::io::BufWriter::new(std::fs::File::create(out_dir.join("manifest.jsonl"))?);
    for r in &rendered {
        per_class[r.label as usize] += 1;
        let frames_rel = format!("frames/{}.evid", r.id);
        let masks_rel = format!("masks/{}.emsk", r.id);
        format::write_frames(&out_dir.join(&frames_rel), spec.t, spec.height, spec.width, &r.pixels)?;
        format::write_masks(&out_dir.join(&masks_rel), spec.t, spec.height, spec.width, &r.masks)?;
        let line = serde_json::to_string(&ManifestRecord {
            id: r.id.clone(),
            frames: frames_rel,
            masks: masks_rel,
            caption: r.caption.clone(),
            sentiment: None,
            label: Some(r.label),
        })?;
        manifest.write_all(line.as_bytes())?;
        manifest.write_all(b"\n")?;
    }
    manifest.flush()?;
    let genspec = serde_json::to_string_pretty(spec)?;
    std::fs::write(out_dir.join("genspec.json"), genspec)?;
    Ok(DatasetSummary { n, per_class })
}

/// Render one clip. Deterministic in (spec, seed, index, class).
fn render_clip(spec: &GeneratorSpec, seed: u64, index: usize, class: usize) -> Rendered {
    let mut rng = ChaCha8Rng::seed_from_u64(crate::exec::mix_seed(seed ^ crate::exec::mix_seed(index as u64)));
    let (t, h, w) = (spec.t, spec.height, spec.width);

    // static per-clip background: mid-gray with mild noise
    let mut background = vec![0u8; h * w * 3];
    for px in background.chunks_mut(3) {
        let v = 70 + rng.random_range(0..50) as u8;
        px[0] = v;
        px[1] = v;
        px[2] = v;
    }

    let (positions, side, color) = match spec.coding {
        ClassCoding::Appearance => {
            let side = rng.random_range(h * 5 / 16..=h / 2);
            let max_y = (h - side) as i64;
            let max_x = (w - side) as i64;
            let mut y = rng.random_range(0..=max_y);
            let mut x = rng.random_range(0..=max_x);
            let mut vy = rng.random_range(-2..=2i64);
            let mut vx = rng.random_range(-2..=2i64);
            let mut positions = Vec::with_capacity(t);
            for _ in 0..t {
                positions.push((y as usize, x as usize));
                y += vy;
                x += vx;
                if y < 0 || y > max_y {
                    vy = -vy;
                    y = y.clamp(0, max_y);
                }
                if x < 0 || x > max_x {
                    vx = -vx;
                    x = x.clamp(0, max_x);
                }
            }
            (positions, side, CLASS_COLORS[class])
        }
        ClassCoding::Temporal => {
            // same anchor set for every class; the class picks the tour order
            let side = h * 3 / 8;
            let anchors = anchor_positions(t, h - side, w - side);
            let (step, off) = tour_params(t, class);
            let positions = (0..t).map(|ti| anchors[(ti * step + off) % t]).collect();
            // fixed subject color: appearance carries no class signal at all
            (positions, side, [90, 110, 200])
        }
    };

    let mut pixels = vec![0u8; t * h * w * 3];
    let mut masks = vec![0u8; t * h * w];
    for (ti, &(sy, sx)) in positions.iter().enumerate() {
        let frame = &mut pixels[ti * h * w * 3..(ti + 1) * h * w * 3];
        frame.copy_from_slice(&background);
        let mask = &mut masks[ti * h * w..(ti + 1) * h * w];
        for y in sy..sy + side {
            for x in sx..sx + side {
                let p = (y * w + x) * 3;
                frame[p..p + 3].copy_from_slice(&color);
                mask[y * w + x] = 1;
            }
        }
    }

    let caption = render_caption(&mut rng, class);
    Rendered {
        id: format!("clip_{index:06}"),
        pixels,
        masks,
        caption,
        label: class as u8,
    }
}

/// `count` positions spread over the rectangle `[0, max_y] × [0, max_x]`,
/// walking the perimeter so consecutive anchors are distinct.
fn anchor_positions(count: usize, max_y: usize, max_x: usize) -> Vec<(usize, usize)> {
    (0..count)
        .map(|i| {
            let frac = i as f64 / count as f64;
            // perimeter parameterization: top edge, right edge, bottom, left
            let p = frac * 4.0;
            if p < 1.0 {
                (0, (p * max_x as f64) as usize)
            } else if p < 2.0 {
                (((p - 1.0) * max_y as f64) as usize, max_x)
            } else if p < 3.0 {
                (max_y, max_x - ((p - 2.0) * max_x as f64) as usize)
            } else {
                (max_y - ((p - 3.0) * max_y as f64) as usize, 0)
            }
        })
        .collect()
}

/// The class'th (step, offset) pair with gcd(step, t) = 1, enumerated
/// deterministically; each pair is a distinct tour of the anchors.
fn tour_params(t: usize, class: usize) -> (usize, usize) {
    let mut found = 0;
    for step in 1..t {
        if gcd(step, t) != 1 {
            continue;
        }
        for off in [0usize, t / 2] {
            if found == class {
                return (step, off);
            }
            found += 1;
        }
    }
    // validate() guarantees enough patterns; spread leftovers by offset
    (1, class % t)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn render_caption(rng: &mut ChaCha8Rng, class: usize) -> String {
    let words = LEXICON[class];
    let mut picks = [0usize; 3];
    picks[0] = rng.random_range(0..words.len());
    loop {
        picks[1] = rng.random_range(0..words.len());
        if picks[1] != picks[0] {
            break;
        }
    }
    loop {
        picks[2] = rng.random_range(0..words.len());
        if picks[2] != picks[0] && picks[2] != picks[1] {
            break;
        }
    }
    let template = CAPTION_TEMPLATES[rng.random_range(0..CAPTION_TEMPLATES.len())];
    template
        .replace("{0}", words[picks[0]])
        .replace("{1}", words[picks[1]])
        .replace("{2}", words[picks[2]])
}
