use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn debacer(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_debacer"))
        .current_dir(dir)
        .env_remove("DEBACER_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn small_synth(dir: &Path, out: &str, seed: &str) {
    ok(&debacer(dir, &["synth", "--seed", seed, "--minutes", "6", "--out-dir", out, "--reports-dir", "r"]));
}

#[test]
fn synth_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    small_synth(tmp.path(), "a", "7");
    small_synth(tmp.path(), "b", "7");
    for f in ["transcripts.csv", "labels.csv", "blocks.jsonl"] {
        let a = std::fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    small_synth(tmp.path(), "c", "8");
    assert_ne!(
        std::fs::read(tmp.path().join("a/transcripts.csv")).unwrap(),
        std::fs::read(tmp.path().join("c/transcripts.csv")).unwrap()
    );
    let r = report(&tmp.path().join("r/synth.json"));
    assert_eq!(r["command"], "synth");
    assert_eq!(r["config"]["seed"], 8);
    assert!(r["timings"]["total"].as_f64().unwrap() >= 0.0);
    assert!(r["fingerprints"]["transcripts"].is_string());
}

#[test]
fn seed_comes_from_environment_unless_flagged() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |seed_flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_debacer"));
        cmd.current_dir(tmp.path()).env("DEBACER_SEED", "11");
        cmd.args(["synth", "--minutes", "2", "--out-dir", "x", "--report", "s.json"]);
        if let Some(s) = seed_flag {
            cmd.args(["--seed", s]);
        }
        ok(&cmd.output().unwrap());
        report(&tmp.path().join("s.json"))["config"]["seed"].as_u64().unwrap()
    };
    assert_eq!(run(None), 11);
    assert_eq!(run(Some("3")), 3);
}

#[test]
fn cv_report_has_one_entry_per_fold() {
    let tmp = tempfile::tempdir().unwrap();
    small_synth(tmp.path(), "c", "7");
    let out = debacer(
        tmp.path(),
        &[
            "cv",
            "--corpus",
            "c/transcripts.csv",
            "--labels",
            "c/labels.csv",
            "--features",
            "bong",
            "--classifier",
            "logreg",
            "--k",
            "5",
            "--reports-dir",
            "r",
        ],
    );
    ok(&out);
    let r = report(&tmp.path().join("r/cv.json"));
    assert_eq!(r["result"]["folds"].as_array().unwrap().len(), 5);
    for field in ["mean", "std"] {
        assert!(r["result"][field]["f1"].as_f64().is_some(), "{field}");
    }
    assert!(r["fingerprints"]["spec"].is_string());
    assert!(r["fingerprints"]["corpus"].is_string());
    assert_eq!(r["config"]["k"], 5);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    small_synth(tmp.path(), "c", "7");
    std::fs::write(
        tmp.path().join("run.toml"),
        "corpus = \"c/transcripts.csv\"\nlabels = \"c/labels.csv\"\nk = 4\nseed = 5\nreports_dir = \"fromfile\"\n",
    )
    .unwrap();
    ok(&debacer(tmp.path(), &["--config", "run.toml", "cv", "--features", "bow", "--k", "3"]));
    let r = report(&tmp.path().join("fromfile/cv.json"));
    assert_eq!(r["config"]["k"], 3);
    assert_eq!(r["config"]["seed"], 5);
    assert_eq!(r["result"]["folds"].as_array().unwrap().len(), 3);
}

#[test]
fn train_partition_report_and_compare() {
    let tmp = tempfile::tempdir().unwrap();
    small_synth(tmp.path(), "c", "7");
    let data = ["--corpus", "c/transcripts.csv", "--labels", "c/labels.csv", "--reports-dir", "r"];
    let with = |extra: &[&str]| -> Vec<String> { extra.iter().chain(data.iter()).map(|s| s.to_string()).collect() };
    let run = |args: Vec<String>| {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        debacer(tmp.path(), &refs)
    };

    ok(&run(with(&["train", "--features", "bow", "--out", "m/model.json"])));
    let r = report(&tmp.path().join("r/train.json"));
    let fp = r["result"]["model_fingerprint"].as_str().unwrap().to_string();
    assert_eq!(r["fingerprints"]["model"], fp.as_str());

    ok(&run(with(&["partition", "--model", "m/model.json", "--out", "blocks.jsonl"])));
    let p = report(&tmp.path().join("r/partition.json"));
    assert_eq!(p["result"]["model_fingerprint"], fp.as_str());
    assert!(p["result"]["blocks"].as_u64().unwrap() > 0);

    let out = run(with(&["report", "--blocks", "blocks.jsonl"]));
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("block"));

    for (feat, name) in [("bow", "a.json"), ("word2vec", "b.json")] {
        ok(&run(with(&["cv", "--features", feat, "--k", "3", "--report", name])));
    }
    ok(&run(with(&["compare", "a.json", "b.json"])));
    let c = report(&tmp.path().join("r/compare.json"));
    assert_eq!(c["result"]["adjusted_p"].as_array().unwrap().len(), 2);
}

#[test]
fn partition_without_model_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    small_synth(tmp.path(), "c", "7");
    let out = debacer(tmp.path(), &["partition", "--corpus", "c/transcripts.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let out = debacer(tmp.path(), &["partition", "--corpus", "c/transcripts.csv", "--model", "missing.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exit_codes_separate_error_classes() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.csv"), "minute_id,date\nx,not-a-date\n").unwrap();
    let out = debacer(tmp.path(), &["ingest", "--input", "bad.csv"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    small_synth(tmp.path(), "c", "7");
    let out = debacer(
        tmp.path(),
        &["cv", "--corpus", "c/transcripts.csv", "--labels", "c/labels.csv", "--classifier", "svm", "--penalty", "l1"],
    );
    assert_eq!(out.status.code(), Some(2));

    // a negative C passes flag parsing and is rejected by the trainer
    let out = debacer(
        tmp.path(),
        &["train", "--corpus", "c/transcripts.csv", "--labels", "c/labels.csv", "--features", "bow", "--c=-1", "--out", "m.json"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ingest_normalizes_between_formats() {
    let tmp = tempfile::tempdir().unwrap();
    small_synth(tmp.path(), "c", "7");
    ok(&debacer(tmp.path(), &["ingest", "--input", "c/transcripts.csv", "--out", "n.jsonl", "--reports-dir", "r"]));
    ok(&debacer(tmp.path(), &["ingest", "--input", "n.jsonl", "--out", "back.csv", "--reports-dir", "r"]));
    assert_eq!(
        std::fs::read(tmp.path().join("c/transcripts.csv")).unwrap(),
        std::fs::read(tmp.path().join("back.csv")).unwrap()
    );
    let r = report(&tmp.path().join("r/ingest.json"));
    assert!(r["result"]["target_moderator_speeches"].as_u64().unwrap() > 0);
}
