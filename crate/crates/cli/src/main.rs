//! Command-line entry points for data generation, training, probing,
//! gradient checking, attention diagnostics, and ablation grids.
//!
//! Exit codes: 0 on success, 1 on validation (or other) errors, 2 on
//! malformed on-disk data.

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use sgclip::data::{generate_synthetic_dataset, load_all, load_dataset, GeneratorSpec};
use sgclip::encoders::Model;
use sgclip::error::Error;
use sgclip::harness::{
    attention_profile, full_model_gradcheck, linear_probe, run_ablation, train, AblationGrid,
    ProbeOptions, ProbeTask, TrainConfig,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sgclip", about = "Subject-aware, sentiment-guided video-text contrastive learning", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic paired video/text dataset.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Generator spec JSON; defaults to 8×32×32 appearance coding.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Train a model and write a checkpoint plus a JSON-lines loss log.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Loss log path (default: <out>.log.jsonl).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Linear-probe a frozen checkpoint on a labeled dataset.
    Probe {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Verify model gradients against central differences.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-layer attention mass of the hmn token on the subject patches.
    AttnProfile {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        clip: String,
        #[arg(long)]
        data: PathBuf,
    },
    /// Run an ablation grid and emit JSON + text result tables.
    Ablate {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TaskArg {
    Multilabel,
    Multiclass,
    Regression,
}

impl From<TaskArg> for ProbeTask {
    fn from(t: TaskArg) -> ProbeTask {
        match t {
            TaskArg::Multilabel => ProbeTask::Multilabel,
            TaskArg::Multiclass => ProbeTask::Multiclass,
            TaskArg::Regression => ProbeTask::Regression,
        }
    }
}

/// Grid file: the dataset path plus the cell axes.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    data: String,
    #[serde(flatten)]
    grid: AblationGrid,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Format { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::format(format!("cannot read {}: {e}", path.display()), None))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::format(format!("{}: {e}", path.display()), None))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenData { out, n, seed, spec } => {
            let spec: GeneratorSpec = match spec {
                Some(p) => read_json(&p)?,
                None => GeneratorSpec::default(),
            };
            let summary = generate_synthetic_dataset(&out, n, &spec, seed)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
        Command::Train { config, data, out, log } => {
            let cfg: TrainConfig = read_json(&config)?;
            let records = load_all(&data)?;
            let log_path = log.unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".log.jsonl");
                PathBuf::from(p)
            });
            let mut log_file = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
            let (model, report) = train(&cfg, &records, &mut log_file)?;
            model.save(&out)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            eprintln!("checkpoint: {}", out.display());
            eprintln!("loss log:   {}", log_path.display());
            Ok(())
        }
        Command::Probe { ckpt, data, task, seed } => {
            let model = Model::from_checkpoint(&ckpt)?;
            let records = load_all(&data)?;
            let report = linear_probe(&model, &records, &ProbeOptions::new(task.into(), seed))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Gradcheck { config, seed } => {
            let cfg: TrainConfig = read_json(&config)?;
            let err = full_model_gradcheck(&cfg.model, seed, cfg.train.beta)?;
            println!("{}", serde_json::json!({ "max_relative_error": err }));
            if err < 1e-4 {
                Ok(())
            } else {
                Err(Error::validation(format!(
                    "gradient check failed: max relative error {err:.3e} ≥ 1e-4"
                )))
            }
        }
        Command::AttnProfile { ckpt, clip, data } => {
            let model = Model::from_checkpoint(&ckpt)?;
            // streaming read, stop at the requested clip
            let mut found = None;
            for rec in load_dataset(&data)? {
                let rec = rec?;
                if rec.id == clip {
                    found = Some(rec);
                    break;
                }
            }
            let rec = found.ok_or_else(|| Error::validation(format!("no clip with id {clip}")))?;
            let profile = attention_profile(&model, std::slice::from_ref(&rec), &clip, 0.0)?;
            println!(
                "{}",
                serde_json::json!({ "clip": clip, "per_layer_subject_mass": profile })
            );
            Ok(())
        }
        Command::Ablate { grid, out } => {
            let gf: GridFile = read_json(&grid)?;
            let records = load_all(Path::new(&gf.data))?;
            let table = run_ablation(&gf.grid, &records, &out)?;
            let mut txt = Vec::new();
            sgclip::harness::ablate::write_text_table(&mut txt, &table)?;
            print!("{}", String::from_utf8_lossy(&txt));
            eprintln!("results: {}", out.join("results.json").display());
            Ok(())
        }
    }
}
