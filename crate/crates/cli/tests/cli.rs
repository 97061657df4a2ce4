use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const FROZEN: &str = "2024-03-01T00:00:00Z";

fn mlmscreen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlmscreen")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = mlmscreen(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn predict_without_a_bundle_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = mlmscreen(&["predict", "--corpus", "x.jsonl", "--out", p(dir.path())]);
    assert_eq!(code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("--bundle"), "{stderr}");
    assert!(stderr.contains("Usage"), "{stderr}");
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&mlmscreen(&["frobnicate"])), 2);
    assert_eq!(code(&mlmscreen(&["synth", "--no-such-flag"])), 2);
    assert_eq!(code(&mlmscreen(&["synth", "--out", p(dir.path()), "--grid-step", "0"])), 2);
    assert_eq!(code(&mlmscreen(&["synth", "--out", p(dir.path()), "--target-recall", "1.5"])), 2);
    assert_eq!(code(&mlmscreen(&["explain", "--mode", "guess", "--out", p(dir.path())])), 2);
    assert_eq!(code(&mlmscreen(&["synth", "--frozen-time", "yesterday", "--out", p(dir.path())])), 2);
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "seed = 1\ncolour = \"red\"\n").unwrap();
    let out = mlmscreen(&["synth", "--config", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
    assert_eq!(code(&mlmscreen(&["--help"])), 0);
}

#[test]
fn operational_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing");
    let out = mlmscreen(&["predict", "--bundle", p(&missing), "--corpus", "x", "--out", p(dir.path())]);
    assert_eq!(code(&out), 1);
    let out = mlmscreen(&["train", "--corpus", p(&missing), "--out", p(dir.path())]);
    assert_eq!(code(&out), 1);
}

#[test]
fn synth_twice_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&["synth", "--size", "300", "--positive-rate", "0.3", "--seed", "7", "--out", p(d), "--frozen-time", FROZEN]);
    }
    let corpus = fs::read(a.join("corpus.jsonl")).unwrap();
    assert_eq!(corpus.iter().filter(|&&b| b == b'\n').count(), 300);
    assert_eq!(corpus, fs::read(b.join("corpus.jsonl")).unwrap());
    let (ma, mb) = (read_json(&a.join("run_manifest.json")), read_json(&b.join("run_manifest.json")));
    assert_eq!(ma["outputs"], mb["outputs"]);
    assert_eq!(ma["started_utc"], FROZEN);
    assert_eq!(ma["details"]["corpus_digest"], mb["details"]["corpus_digest"]);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "seed = 3\nout = \"from_config\"\n[synthetic]\nsize = 40\n").unwrap();
    ok(&["synth", "--config", p(&cfg), "--frozen-time", FROZEN]);
    let m = read_json(&dir.path().join("from_config/run_manifest.json"));
    assert_eq!((m["seed"].as_u64(), m["settings"]["size"].as_u64()), (Some(3), Some(40)));
    let flagged = dir.path().join("flagged");
    ok(&["synth", "--config", p(&cfg), "--seed", "5", "--out", p(&flagged)]);
    let m = read_json(&flagged.join("run_manifest.json"));
    assert_eq!((m["seed"].as_u64(), m["settings"]["size"].as_u64()), (Some(5), Some(40)));
}

#[test]
fn ingest_reports_rejects_and_refuses_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("in.csv");
    fs::write(
        &csv,
        "id,title,abstract,label\n1,Liver injury,Hepatotoxicity was observed in two patients.,suspect_adverse\n\
         2,,,not_suspect\n3,Kinetics,Half-life was twelve hours.,\n4,Kinetics,Clearance was linear.,not_suspect\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    ok(&["ingest", "--corpus", p(&csv), "--out", p(&out)]);
    let corpus = fs::read_to_string(out.join("corpus.jsonl")).unwrap();
    assert_eq!(corpus.lines().count(), 2);
    let rejects = fs::read_to_string(out.join("rejects.jsonl")).unwrap();
    assert_eq!(rejects.lines().count(), 2);
    let m = read_json(&out.join("run_manifest.json"));
    assert_eq!(m["details"]["articles"], 2);

    fs::write(&csv, "id,title,abstract,label\n1,A,b c,not_suspect\n1,D,e f,not_suspect\n").unwrap();
    assert_eq!(code(&mlmscreen(&["ingest", "--corpus", p(&csv), "--out", p(&out)])), 1);
}

#[test]
fn full_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| dir.path().join(n);
    let cfg = d("run.toml");
    fs::write(
        &cfg,
        "[factsheet]\nintended_use = \"Screening support.\"\nout_of_scope_uses = \"Causality assessment.\"\n\
         limitations = \"Synthetic evaluation only.\"\n",
    )
    .unwrap();
    let common = ["--config", p(&cfg), "--frozen-time", FROZEN];
    let with = |args: &[&str]| -> Vec<String> { args.iter().chain(common.iter()).map(|s| s.to_string()).collect() };
    let run = |args: Vec<String>| ok(&args.iter().map(String::as_str).collect::<Vec<_>>());

    run(with(&["synth", "--size", "800", "--seed", "11", "--out", p(&d("synth"))]));
    let corpus = d("synth/corpus.jsonl");
    run(with(&["train", "--corpus", p(&corpus), "--out", p(&d("bundle"))]));
    run(with(&["train", "--corpus", p(&corpus), "--out", p(&d("bundle2"))]));
    for f in ["manifest.txt", "vocab.json", "scorer_a.json", "scorer_b.json", "patterns.json", "composition.json"] {
        assert_eq!(fs::read(d("bundle").join(f)).unwrap(), fs::read(d("bundle2").join(f)).unwrap(), "{f}");
    }
    let trained = read_json(&d("bundle/run_manifest.json"));
    let digest = trained["details"]["bundle_digest"].as_str().unwrap().to_string();

    let b = p(&d("bundle")).to_string();
    run(with(&[
        "calibrate", "--corpus", p(&corpus), "--bundle", &b, "--out", p(&d("cal")), "--runs", "3",
        "--target-recall", "0.91", "--target-recall", "0.95",
    ]));
    for f in ["report.json", "runs.csv", "aggregate.csv", "recall.dat", "fpr.dat", "calibration.json"] {
        assert!(d("cal").join(f).exists(), "{f}");
    }
    assert_eq!(fs::read_to_string(d("cal/runs.csv")).unwrap().lines().count(), 1 + 2 * 3);
    let cal = read_json(&d("cal/calibration.json"));
    assert_eq!(cal["target_recall"], 0.95);
    assert!(cal["validation_recall"].as_f64().unwrap() >= 0.95);
    let manifest = fs::read_to_string(d("bundle/manifest.txt")).unwrap();
    let theta = |key: &str| -> f64 {
        let line = manifest.lines().find(|l| l.starts_with(&format!("{key}="))).unwrap();
        line[key.len() + 1..].parse().unwrap()
    };
    assert_eq!(theta("theta_a"), cal["thresholds"]["theta_a"].as_f64().unwrap());
    assert_eq!(theta("theta_b"), cal["thresholds"]["theta_b"].as_f64().unwrap());
    assert_eq!(read_json(&d("cal/report.json"))["bundle_digest"], digest.as_str());

    run(with(&["evaluate", "--corpus", p(&corpus), "--bundle", &b, "--out", p(&d("eval")), "--runs", "2"]));
    assert_eq!(fs::read_to_string(d("eval/aggregate.csv")).unwrap().lines().count(), 1 + 5);

    run(with(&["synth", "--size", "40", "--seed", "99", "--out", p(&d("fresh"))]));
    let fresh = d("fresh/corpus.jsonl");
    let out = mlmscreen(&with(&["evaluate", "--corpus", p(&fresh), "--bundle", &b, "--out", p(&d("bad"))]).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("corpus digest"));

    run(with(&["predict", "--corpus", p(&fresh), "--bundle", &b, "--out", p(&d("pred"))]));
    run(with(&["predict", "--corpus", p(&fresh), "--bundle", &b, "--out", p(&d("pred2"))]));
    let preds = fs::read_to_string(d("pred/predictions.jsonl")).unwrap();
    assert_eq!(preds.lines().count(), 40);
    assert_eq!(preds, fs::read_to_string(d("pred2/predictions.jsonl")).unwrap());
    let audit = fs::read_to_string(d("pred/audit.log")).unwrap();
    assert_eq!(audit, fs::read_to_string(d("pred2/audit.log")).unwrap());
    assert!(audit.lines().all(|l| l.split('\t').count() == 7 && l.ends_with(FROZEN)));

    run(with(&["explain", "--corpus", p(&fresh), "--bundle", &b, "--out", p(&d("expl")), "--mode", "exhaustive_ablation"]));
    let expl = fs::read_to_string(d("expl/explanations.jsonl")).unwrap();
    assert_eq!(expl.lines().count(), 40);
    let first: Value = serde_json::from_str(expl.lines().next().unwrap()).unwrap();
    assert!(first["mode"] == "exhaustive_ablation" || first["unavailable"].is_string());

    let report = d("cal/report.json");
    run(with(&["factsheet", "--bundle", &b, "--report", p(&report), "--out", p(&d("fs"))]));
    let sheet = read_json(&d("fs/factsheet.json"));
    assert_eq!(sheet["version"]["bundle_digest"], digest.as_str());
    assert_eq!(sheet["limitations"], "Synthetic evaluation only.");
    assert!(fs::read_to_string(d("fs/FACTSHEET.md")).unwrap().contains("## Performance"));

    let out = mlmscreen(&["factsheet", "--bundle", &b, "--report", p(&report), "--out", p(&d("fs2"))]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("intended_use"));
}
