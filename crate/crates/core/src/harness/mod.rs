//! Training loop, linear-probe evaluation, metrics, attention diagnostics,
//! and ablation orchestration.

pub mod ablate;
pub mod gradcheck;
pub mod metrics;
pub mod optim;
pub mod probe;
pub mod train;

pub use ablate::{run_ablation, AblationCell, AblationGrid};
pub use gradcheck::full_model_gradcheck;
pub use metrics::{compute_metrics, MetricReport, ProbeTask, TaskLabels};
pub use optim::{AdamW, OptimizerParams};
pub use probe::{extract_features, linear_probe, probe_features, ProbeOptions};
pub use train::{train, TrainConfig, TrainParams, TrainReport};

use crate::data::ClipRecord;
use crate::encoders::Model;
use crate::error::{Error, Result};

/// Per-layer attention mass of the hmn token on the subject patches for one
/// clip, found by id in `records`.
pub fn attention_profile(
    model: &Model,
    records: &[ClipRecord],
    clip_id: &str,
    mask_threshold: f64,
) -> Result<Vec<f64>> {
    let rec = records
        .iter()
        .find(|r| r.id == clip_id)
        .ok_or_else(|| Error::validation(format!("no clip with id {clip_id}")))?;
    let clip = rec.frame_input();
    let subjects = rec.subjects(model.config.patch_size, mask_threshold)?;
    model.hmn_attention_profile(&clip, &subjects)
}
