//! Ablation orchestration: a grid over attention mode × reweighting strength
//! × temporal mode, trained and probed with shared seeds.

use super::metrics::{MetricReport, ProbeTask};
use super::probe::{linear_probe, ProbeOptions};
use super::train::{train, TrainConfig};
use crate::data::ClipRecord;
use crate::encoders::{AttentionMode, TemporalMode};
use crate::error::Result;
use crate::exec;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationGrid {
    /// Base configuration every cell starts from.
    pub config: TrainConfig,
    pub attention_modes: Vec<AttentionMode>,
    pub betas: Vec<f64>,
    pub temporal_modes: Vec<TemporalMode>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_task")]
    pub probe_task: ProbeTask,
}

fn default_task() -> ProbeTask {
    ProbeTask::Multiclass
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationCell {
    pub attention_mode: AttentionMode,
    pub beta: f64,
    pub temporal_mode: TemporalMode,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<MetricReport>,
    pub mean: MetricReport,
}

/// Run every cell of the grid (each cell trains once per seed and probes the
/// result). Cells run in parallel; each run is deterministic in its seed, so
/// the result table does not depend on scheduling.
pub fn run_ablation(grid: &AblationGrid, records: &[ClipRecord], out_dir: &Path) -> Result<Vec<AblationCell>> {
    std::fs::create_dir_all(out_dir)?;
    let mut cells: Vec<(AttentionMode, f64, TemporalMode)> = Vec::new();
    for &am in &grid.attention_modes {
        for &beta in &grid.betas {
            for &tm in &grid.temporal_modes {
                cells.push((am, beta, tm));
            }
        }
    }

    let mut runs: Vec<(usize, u64)> = Vec::new();
    for ci in 0..cells.len() {
        for &seed in &grid.seeds {
            runs.push((ci, seed));
        }
    }

    let results = exec::map_indexed(runs.len(), |ri| -> Result<MetricReport> {
        let (ci, seed) = runs[ri];
        let (am, beta, tm) = cells[ci];
        let mut cfg = grid.config.clone();
        cfg.model.attention_mode = am;
        cfg.model.temporal_mode = tm;
        cfg.train.beta = beta;
        cfg.train.seed = seed;
        let mut log = std::io::sink();
        let (model, _report) = train(&cfg, records, &mut log)?;
        let ckpt = out_dir.join(format!(
            "ckpt_{}_{}_beta{}_seed{}.eclp",
            mode_tag(am),
            temporal_tag(tm),
            beta,
            seed
        ));
        model.save(&ckpt)?;
        let opts = ProbeOptions {
            mask_threshold: cfg.train.mask_threshold,
            ..ProbeOptions::new(grid.probe_task, seed)
        };
        linear_probe(&model, records, &opts)
    });

    let mut reports: Vec<Vec<MetricReport>> = vec![Vec::new(); cells.len()];
    for (ri, res) in results.into_iter().enumerate() {
        let (ci, _) = runs[ri];
        reports[ci].push(res?);
    }

    let table: Vec<AblationCell> = cells
        .iter()
        .zip(reports)
        .map(|(&(am, beta, tm), per_seed)| AblationCell {
            attention_mode: am,
            beta,
            temporal_mode: tm,
            seeds: grid.seeds.clone(),
            mean: mean_report(&per_seed),
            per_seed,
        })
        .collect();

    std::fs::write(
        out_dir.join("results.json"),
        serde_json::to_string_pretty(&table)?,
    )?;
    let mut txt = std::fs::File::create(out_dir.join("table.txt"))?;
    write_text_table(&mut txt, &table)?;
    Ok(table)
}

fn mode_tag(m: AttentionMode) -> &'static str {
    match m {
        AttentionMode::Vanilla => "vanilla",
        AttentionMode::Saam => "saam",
        AttentionMode::Sap => "sap",
    }
}

fn temporal_tag(m: TemporalMode) -> &'static str {
    match m {
        TemporalMode::Transformer => "transformer",
        TemporalMode::Meanpool => "meanpool",
    }
}

fn mean_of(values: Vec<Option<f64>>) -> Option<f64> {
    let xs: Vec<f64> = values.into_iter().flatten().collect();
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

pub fn mean_report(reports: &[MetricReport]) -> MetricReport {
    MetricReport {
        map: mean_of(reports.iter().map(|r| r.map).collect()),
        auc: mean_of(reports.iter().map(|r| r.auc).collect()),
        r2: mean_of(reports.iter().map(|r| r.r2).collect()),
        accuracy: mean_of(reports.iter().map(|r| r.accuracy).collect()),
        weighted_f1: mean_of(reports.iter().map(|r| r.weighted_f1).collect()),
        mse: mean_of(reports.iter().map(|r| r.mse).collect()),
        skipped_classes: Vec::new(),
    }
}

/// Aligned plain-text rendering of the result table.
pub fn write_text_table(w: &mut dyn Write, table: &[AblationCell]) -> Result<()> {
    writeln!(
        w,
        "{:<10} {:<12} {:>8} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "attention", "temporal", "beta", "acc", "w_f1", "map", "auc", "r2", "mse"
    )?;
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    for cell in table {
        writeln!(
            w,
            "{:<10} {:<12} {:>8} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
            mode_tag(cell.attention_mode),
            temporal_tag(cell.temporal_mode),
            format!("{}", cell.beta),
            fmt(cell.mean.accuracy),
            fmt(cell.mean.weighted_f1),
            fmt(cell.mean.map),
            fmt(cell.mean.auc),
            fmt(cell.mean.r2),
            fmt(cell.mean.mse),
        )?;
    }
    Ok(())
}
