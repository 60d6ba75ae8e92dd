//! End-to-end CLI tests: exercise every subcommand through the binary and
//! check the documented exit codes.

use std::path::Path;
use std::process::{Command, Output};
use tempfile::tempdir;

fn sgclip(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgclip"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_tiny_config(path: &Path) {
    let cfg = serde_json::json!({
        "model": {
            "d": 16, "patch_size": 8, "image_size": 16, "t": 4,
            "n_layers": 1, "n_heads": 1,
            "attention_mode": "sap", "temporal_mode": "transformer",
            "max_text_len": 10, "text_layers": 1, "temporal_layers": 1, "mlp_ratio": 2
        },
        "train": { "epochs": 1, "batch_size": 4, "seed": 1 }
    });
    std::fs::write(path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
}

fn write_tiny_spec(path: &Path) {
    std::fs::write(
        path,
        r#"{ "t": 4, "height": 16, "width": 16, "coding": "appearance" }"#,
    )
    .unwrap();
}

#[test]
fn full_pipeline_via_cli() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("data");
    let spec = dir.path().join("spec.json");
    let config = dir.path().join("train.json");
    let ckpt = dir.path().join("model.eclp");
    write_tiny_spec(&spec);
    write_tiny_config(&config);

    let out = sgclip(&[
        "gen-data",
        "--out",
        data.to_str().unwrap(),
        "--n",
        "16",
        "--seed",
        "3",
        "--spec",
        spec.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "gen-data: {}", String::from_utf8_lossy(&out.stderr));
    assert!(data.join("manifest.jsonl").exists());

    let out = sgclip(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "train: {}", String::from_utf8_lossy(&out.stderr));
    assert!(ckpt.exists());
    let log = dir.path().join("model.eclp.log.jsonl");
    assert!(log.exists());
    let log_lines = std::fs::read_to_string(&log).unwrap().lines().count();
    assert_eq!(log_lines, 4, "⌊16/4⌋ steps logged");

    let out = sgclip(&[
        "probe",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--task",
        "multiclass",
    ]);
    assert!(out.status.success(), "probe: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["accuracy"].is_f64());

    let out = sgclip(&[
        "attn-profile",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--clip",
        "clip_000002",
        "--data",
        data.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "attn-profile: {}", String::from_utf8_lossy(&out.stderr));
    let profile: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(profile["per_layer_subject_mass"].as_array().unwrap().len(), 1);
}

#[test]
fn gradcheck_command_passes_on_tiny_model() {
    let dir = tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    let cfg = serde_json::json!({
        "model": {
            "d": 8, "patch_size": 4, "image_size": 8, "t": 2,
            "n_layers": 1, "n_heads": 1,
            "attention_mode": "saam",
            "max_text_len": 6, "text_layers": 1, "temporal_layers": 1, "mlp_ratio": 2,
            "vocab_size": 12
        },
        "train": { "beta": 1.0 }
    });
    std::fs::write(&config, cfg.to_string()).unwrap();
    let out = sgclip(&["gradcheck", "--config", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["max_relative_error"].as_f64().unwrap() < 1e-4);
}

#[test]
fn exit_codes_match_error_classes() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("data");
    let spec = dir.path().join("spec.json");
    write_tiny_spec(&spec);
    let out = sgclip(&[
        "gen-data",
        "--out",
        data.to_str().unwrap(),
        "--n",
        "6",
        "--seed",
        "1",
        "--spec",
        spec.to_str().unwrap(),
    ]);
    assert!(out.status.success());

    // corrupt a payload: format error, exit code 2
    let frames = data.join("frames/clip_000000.evid");
    let mut bytes = std::fs::read(&frames).unwrap();
    bytes[0] = b'X';
    std::fs::write(&frames, &bytes).unwrap();
    let config = dir.path().join("train.json");
    write_tiny_config(&config);
    let ckpt = dir.path().join("m.eclp");
    let out = sgclip(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "format errors exit 2");

    // validation error: batch size larger than the dataset, exit code 1
    let data2 = dir.path().join("data2");
    let out = sgclip(&[
        "gen-data",
        "--out",
        data2.to_str().unwrap(),
        "--n",
        "2",
        "--seed",
        "1",
        "--spec",
        spec.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let out = sgclip(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--data",
        data2.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "validation errors exit 1");

    // missing config file is a format error
    let out = sgclip(&[
        "train",
        "--config",
        dir.path().join("nope.json").to_str().unwrap(),
        "--data",
        data2.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ablate_command_writes_tables() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("data");
    let spec = dir.path().join("spec.json");
    write_tiny_spec(&spec);
    let out = sgclip(&[
        "gen-data",
        "--out",
        data.to_str().unwrap(),
        "--n",
        "8",
        "--seed",
        "2",
        "--spec",
        spec.to_str().unwrap(),
    ]);
    assert!(out.status.success());

    let grid = serde_json::json!({
        "data": data.to_str().unwrap(),
        "config": {
            "model": {
                "d": 16, "patch_size": 8, "image_size": 16, "t": 4,
                "n_layers": 1, "n_heads": 1,
                "attention_mode": "sap",
                "max_text_len": 10, "text_layers": 1, "temporal_layers": 1, "mlp_ratio": 2
            },
            "train": { "epochs": 1, "batch_size": 4 }
        },
        "attention_modes": ["vanilla", "sap"],
        "betas": [0.0],
        "temporal_modes": ["transformer"],
        "seeds": [1],
        "probe_task": "multiclass"
    });
    let grid_path = dir.path().join("grid.json");
    std::fs::write(&grid_path, grid.to_string()).unwrap();
    let out_dir = dir.path().join("ablation");
    let out = sgclip(&[
        "ablate",
        "--grid",
        grid_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("results.json").exists());
    assert!(out_dir.join("table.txt").exists());
    let table: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("results.json")).unwrap())
            .unwrap();
    assert_eq!(table.as_array().unwrap().len(), 2);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("vanilla") && stdout.contains("sap"));
}
