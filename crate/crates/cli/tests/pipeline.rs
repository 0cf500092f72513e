use std::fs;
use std::path::Path;

use lengen_cli::{run, run_args, CliError};

const DATA: [&str; 8] = [
    "--data.task",
    "copy:random_tokens",
    "--data.length_threshold",
    "4",
    "--data.train_count",
    "120",
    "--data.test_count",
    "40",
];

const TINY: [&str; 10] = [
    "--train.steps",
    "4",
    "--train.batch_size",
    "4",
    "--train.model.num_layers",
    "1",
    "--train.model.model_dim",
    "16",
    "--train.model.num_heads",
    "2",
];

fn args<'a>(cmd: &'a str, out: &'a Path, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["lengen", cmd, "--out", out.to_str().unwrap()];
    v.extend_from_slice(extra);
    v
}

#[test]
fn gen_data_is_reproducible_and_seed_sensitive() {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (i, d) in dirs.iter().enumerate() {
        let seed = if i == 2 { "9" } else { "0" };
        let mut extra = DATA.to_vec();
        extra.extend(["--data.seed", seed]);
        run_args(args("gen-data", d.path(), &extra)).unwrap();
    }
    let read = |d: &Path, seed: &str| fs::read(d.join(format!("datasets/copy-random_tokens_L4_seed{seed}.test.jsonl"))).unwrap();
    assert_eq!(read(dirs[0].path(), "0"), read(dirs[1].path(), "0"));
    assert_ne!(read(dirs[0].path(), "0"), read(dirs[2].path(), "9"));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dirs[0].path().join("gen-data.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "gen-data");
    assert_eq!(manifest["config"]["data"]["length_threshold"], 4);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["artifacts"].as_array().unwrap().len(), 3);
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path();
    assert_eq!(run(["lengen", "frobnicate"]), 2);
    assert_eq!(run(args("train", out, &["--train.steps"])), 2);
    assert_eq!(run(args("gen-data", out, &["--data.no_such_key", "1"])), 3);
    // Training without naming the scheme is a config error.
    assert_eq!(run(args("train", out, &DATA)), 3);
    assert_eq!(run(args("eval", out, &DATA)), 3);

    let mut extra = DATA.to_vec();
    extra.extend(TINY);
    extra.extend(["--train.model.scheme", "nope", "--train.lr", "1e30", "--train.stop_at_accuracy", "null"]);
    let err = run_args(args("train", out, &extra)).unwrap_err();
    assert!(matches!(err, CliError::NonFinite(_)), "{err}");
    assert_eq!(err.exit_code(), 4);

    let cfg = out.join("bad.json");
    fs::write(&cfg, r#"{"train": {"steps": "many"}}"#).unwrap();
    assert_eq!(run(["lengen", "gen-data", "--config", cfg.to_str().unwrap()]), 3);
}

#[test]
fn config_file_and_overrides_compose() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("exp.json");
    fs::write(
        &cfg,
        r#"{"data": {"task": "parity", "length_threshold": 6, "train_count": 50, "test_count": 20}, "seeds": [1]}"#,
    )
    .unwrap();
    let out = d.path().join("o");
    run_args([
        "lengen",
        "gen-data",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--data.length_threshold",
        "5",
    ])
    .unwrap();
    assert!(out.join("datasets/parity_L5_seed0.train.jsonl").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("gen-data.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seeds"], serde_json::json!([1]));
    assert_eq!(manifest["config"]["data"]["task"], "parity");
}

#[test]
fn five_scheme_pipeline_ends_in_a_rank_table() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path();
    let schemes = ["nope", "sinusoidal_ape", "t5_relative_bias", "alibi", "rotary"];
    for scheme in schemes {
        let mut extra = DATA.to_vec();
        extra.extend(TINY);
        extra.extend(["--train.model.scheme", scheme, "--seeds", "0,1"]);
        run_args(args("train", out, &extra)).unwrap();
        for seed in 0..2 {
            let label = format!("copy-random_tokens_L4_seed0_{scheme}_s{seed}");
            for f in [
                format!("checkpoints/{label}.bin"),
                format!("checkpoints/{label}.json"),
                format!("checkpoints/{label}.vocab.json"),
                format!("reports/{label}.json"),
                format!("reports/{label}.buckets.csv"),
                format!("reports/{label}.generations.jsonl"),
            ] {
                assert!(out.join(&f).exists(), "{f}");
            }
        }
    }

    let ckpt = out.join("checkpoints/copy-random_tokens_L4_seed0_alibi_s1.bin");
    let mut extra = DATA.to_vec();
    extra.extend(["--eval.checkpoint", ckpt.to_str().unwrap()]);
    run_args(args("eval", out, &extra)).unwrap();
    let eval: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(out.join("reports/eval_copy-random_tokens_L4_seed0_alibi_s1.json")).unwrap(),
    )
    .unwrap();
    let train_report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(out.join("reports/copy-random_tokens_L4_seed0_alibi_s1.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(eval["accuracy"], train_report["test"]);

    let a = out.join("checkpoints/copy-random_tokens_L4_seed0_nope_s0.bin");
    let mut extra = DATA.to_vec();
    let list = format!("{},{}", a.display(), ckpt.display());
    extra.extend(["--analysis.checkpoints", &list, "--analysis.instances", "6"]);
    run_args(args("analyze", out, &extra)).unwrap();
    let analysis: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("reports/analysis.json")).unwrap()).unwrap();
    assert_eq!(analysis["layer_distance"][0][0], serde_json::json!([0.0]));
    assert_eq!(analysis["layer_distance"][0][1], analysis["layer_distance"][1][0]);
    assert!(out.join("attention/copy-random_tokens_L4_seed0_nope_s0.0.bin").exists());

    run_args(args("rank", out, &[])).unwrap();
    let rank: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("reports/rank.json")).unwrap()).unwrap();
    assert_eq!(rank["reports"], 10);
    let total: f64 = rank["mean_rank"].as_object().unwrap().values().map(|v| v.as_f64().unwrap()).sum();
    assert!((total - 15.0).abs() < 1e-12);
    let csv = fs::read_to_string(out.join("reports/rank.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn verify_theorems_writes_certificates() {
    let d = tempfile::tempdir().unwrap();
    run_args(args(
        "verify-theorems",
        d.path(),
        &["--theorems.absolute_lengths", "1,7,64", "--theorems.relative_heads", "2,4"],
    ))
    .unwrap();
    let certs: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("reports/theorems.json")).unwrap()).unwrap();
    let certs = certs.as_array().unwrap();
    assert_eq!(certs.len(), 5);
    assert!(certs.iter().all(|c| c["pass"] == true));
    assert_eq!(certs[2]["T"], 64);
}
