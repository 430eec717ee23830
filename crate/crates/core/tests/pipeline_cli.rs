use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gpzsl::pipeline::{ablate, run_all, run_pipeline, RunConfig, Stage, Sweep, OUTPUT_PREFIXES};

const SMALL: &[(&str, &str)] = &[
    ("synth", "n_feature=16,min_per_class=6,seed=3"),
    ("latent_dim", "12"),
    ("episodes", "40"),
    ("gp_epochs", "30"),
];

fn small_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    for (k, v) in SMALL {
        cfg.set(k, v).unwrap();
    }
    cfg
}

fn small_flags() -> Vec<String> {
    SMALL
        .iter()
        .flat_map(|(k, v)| [format!("--{}", k.replace('_', "-")), v.to_string()])
        .collect()
}

fn gpzsl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpzsl")).args(args).output().unwrap()
}

#[test]
fn manifest_lists_every_setting_and_stage() {
    let cfg = small_config();
    let out = run_all(&cfg).unwrap();
    let manifest = out.manifest();
    for (key, value) in cfg.to_pairs() {
        assert!(manifest.lines().any(|l| l == format!("{key}={value}")), "{key} missing");
    }
    for stage in ["embed", "validation_regression", "final_regression", "calibrate", "evaluate"] {
        assert!(manifest.contains(&format!("timing.{stage}=")), "{stage} timing missing");
    }
    assert!(manifest.contains("result.H="));

    let mut again = RunConfig::default();
    again.apply_text(&manifest, "manifest.txt").unwrap();
    let rerun = run_all(&again).unwrap();
    let (a, b) = (out.report.unwrap(), rerun.report.unwrap());
    assert_eq!(a.metrics_csv(), b.metrics_csv());
    assert_eq!(a.curve_csv(), b.curve_csv());
    assert_eq!(a.per_class_csv(), b.per_class_csv());
    assert!(manifest
        .lines()
        .filter(|l| OUTPUT_PREFIXES.iter().any(|p| l.starts_with(p)))
        .count() > 10);
}

#[test]
fn other_modes_and_frozen_final_gp_run() {
    for (k, v) in [
        ("mode", "standard-triplet,gp"),
        ("mode", "balanced-triplet,krr"),
        ("mode", "no-embedding,krr"),
        ("freeze_final_gp", "true"),
    ] {
        let mut cfg = small_config();
        cfg.set(k, v).unwrap();
        let out = run_all(&cfg).unwrap_or_else(|e| panic!("{k}={v}: {e}"));
        let r = out.report.unwrap();
        assert!((0.0..=1.0).contains(&r.h), "{k}={v}");
        if v.ends_with("krr") {
            assert!(out.final_gp.is_none());
        }
    }
}

#[test]
fn stages_stop_where_asked() {
    let cfg = small_config();
    let out = run_pipeline(&cfg, Stage::Embedding, None).unwrap();
    assert!(out.val_gp.is_none() && out.gamma.is_none() && out.report.is_none());
    let out = run_pipeline(&cfg, Stage::Calibrate, None).unwrap();
    assert!(out.gamma.is_some() && out.report.is_none());
}

#[test]
fn ablation_reports_one_row_per_value() {
    let cfg = small_config();
    let sweep: Sweep = "clip=none,7".parse().unwrap();
    let rows = ablate(&cfg, &sweep).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.result.is_ok()));
}

#[test]
fn missing_data_directory_exits_with_two() {
    let out = gpzsl(&["run-all", "--data", "/definitely/not/here"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/definitely/not/here"), "{err}");
}

#[test]
fn bad_settings_exit_with_two() {
    assert_eq!(gpzsl(&["run-all", "--mode", "bogus"]).status.code(), Some(2));
    assert_eq!(gpzsl(&["ablate", "--sweep", "delta="]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "delta=4\nno_such_key=1\n").unwrap();
    let out = gpzsl(&["run-all", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2:"));
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn cli_stages_share_one_embedding() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let emb_dir = dir.path().join("emb");
    let eval_dir = dir.path().join("eval");
    let full_dir = dir.path().join("full");
    let flags = small_flags();
    let flags: Vec<&str> = flags.iter().map(String::as_str).collect();

    let synth = ["synth", "--synth", SMALL[0].1, "--out", data.to_str().unwrap()];
    assert!(gpzsl(&synth).status.success());
    assert!(data.join("features.csv").is_file());

    // same data from a directory: the flags after --data replace the synth spec
    let data_flags = ["--data", data.to_str().unwrap()];
    let mut args = vec!["train-embedding", "--out", emb_dir.to_str().unwrap()];
    args.extend(&flags[2..]);
    args.extend(data_flags);
    assert!(gpzsl(&args).status.success());

    let emb = emb_dir.join("embedding.txt");
    let mut args = vec!["evaluate", "--embedding", emb.to_str().unwrap(), "--out", eval_dir.to_str().unwrap()];
    args.extend(&flags[2..]);
    args.extend(data_flags);
    let out = gpzsl(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("metric,value"));

    let mut args = vec!["run-all", "--out", full_dir.to_str().unwrap()];
    args.extend(&flags[2..]);
    args.extend(data_flags);
    assert!(gpzsl(&args).status.success());

    assert_eq!(read(&eval_dir, "embedding.txt"), read(&full_dir, "embedding.txt"));
    assert_eq!(read(&eval_dir, "report.csv"), read(&full_dir, "report.csv"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# comment\ndelta=2\nseed=5\n").unwrap();
    let out_dir = dir.path().join("out");
    let flags = small_flags();
    let mut args = vec![
        "train-embedding",
        "--config",
        cfg.to_str().unwrap(),
        "--delta",
        "3",
        "--out",
        out_dir.to_str().unwrap(),
    ];
    args.extend(flags.iter().map(String::as_str));
    assert!(gpzsl(&args).status.success());
    let manifest = read(&out_dir, "manifest.txt");
    assert!(manifest.lines().any(|l| l == "delta=3"));
    assert!(manifest.lines().any(|l| l == "seed=5"));
}
