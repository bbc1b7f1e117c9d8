use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

const BIN: &str = env!("CARGO_BIN_EXE_topicforge");

fn topicforge(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("TOPICFORGE_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_RUN: &str = r#"ticker = "SYN"

[paths]
comments = "comments.csv"
bars = "bars.csv"
output = "out"

[topics]
epochs_umap = 60

[forecast]
epochs = 5
seeds = [0, 1]
models = ["lstm", "cnn"]
variants = ["baseline", "topic_sentiment"]
"#;

/// A generated 90-day corpus with `config` written next to it.
fn workspace(config: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let out = topicforge(&[
        "generate",
        "--out",
        dir.path().to_str().unwrap(),
        "--days",
        "90",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let path = dir.path().join("small.toml");
    fs::write(&path, config).unwrap();
    (dir, path)
}

fn sha256(path: &Path) -> String {
    Sha256::digest(fs::read(path).unwrap())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[test]
fn full_run_writes_a_hash_chained_manifest() {
    let (dir, config) = workspace(SMALL_RUN);
    let run = topicforge(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));

    let out = dir.path().join("out");
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let stages = manifest["stages"].as_array().unwrap();
    let names: Vec<&str> = stages
        .iter()
        .map(|s| s["stage"].as_str().unwrap())
        .collect();
    assert_eq!(
        names,
        [
            "ingest",
            "features",
            "sentiment",
            "topics",
            "train",
            "evaluate",
            "report"
        ]
    );
    for stage in stages {
        for output in stage["outputs"].as_array().unwrap() {
            let path = out.join(output["path"].as_str().unwrap());
            assert_eq!(
                sha256(&path),
                output["sha256"].as_str().unwrap(),
                "{}",
                path.display()
            );
        }
        for up in stage["upstream"].as_array().unwrap() {
            let parent = stages.iter().find(|s| s["stage"] == up["stage"]).unwrap();
            assert_eq!(parent["hash"], up["hash"]);
        }
    }
    let upstream_of = |name: &str| -> Vec<&str> {
        let s = stages.iter().find(|s| s["stage"] == name).unwrap();
        s["upstream"]
            .as_array()
            .unwrap()
            .iter()
            .map(|u| u["stage"].as_str().unwrap())
            .collect()
    };
    assert_eq!(upstream_of("ingest"), Vec::<&str>::new());
    assert_eq!(upstream_of("train"), ["features", "sentiment", "topics"]);

    for file in [
        "report.md",
        "report.csv",
        "plots/lstm_topic_sentiment_test.svg",
        "plots/cnn_baseline_loss.svg",
    ] {
        assert!(out.join(file).is_file(), "{file}");
    }
    assert!(out
        .join("predictions/cnn_topic_sentiment_seed1.csv")
        .is_file());
    let report = fs::read_to_string(out.join("report.md")).unwrap();
    assert!(report.contains("| TITLE | LSTM | LSTM(Vader&TOPIC) | CNN | CNN(Vader&TOPIC) |"));
    assert!(
        report.contains(SMALL_RUN.trim_end()),
        "config snapshot embedded"
    );
    assert!(!out.join(".topicforge.lock").exists());

    // everything is cached the second time round
    let again = topicforge(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(
        stdout(&again).matches("up to date").count(),
        7,
        "{}",
        stdout(&again)
    );

    // a deleted intermediate comes back bit-identical
    let layout = out.join("topics/layout.csv");
    let before = fs::read(&layout).unwrap();
    fs::remove_file(&layout).unwrap();
    let topics = topicforge(&["topics", "--config", config.to_str().unwrap()]);
    assert_eq!(topics.status.code(), Some(0), "{}", stderr(&topics));
    assert!(stdout(&topics).contains("topics: done"));
    assert_eq!(fs::read(&layout).unwrap(), before);
    let train = topicforge(&["train", "--config", config.to_str().unwrap()]);
    assert!(
        stdout(&train).contains("train: up to date"),
        "{}",
        stdout(&train)
    );
}

#[test]
fn train_before_topics_names_the_missing_stage() {
    let (_dir, config) = workspace(SMALL_RUN);
    let config = config.to_str().unwrap();
    for stage in ["ingest", "features", "sentiment"] {
        let o = topicforge(&[stage, "--config", config]);
        assert_eq!(o.status.code(), Some(0), "{stage}: {}", stderr(&o));
    }
    let train = topicforge(&["train", "--config", config]);
    assert_eq!(train.status.code(), Some(2));
    assert!(stderr(&train).contains("`topics`"), "{}", stderr(&train));

    // without the topic variant the same stage can run
    let baseline = topicforge(&["train", "--config", config, "--variant", "baseline"]);
    assert_eq!(baseline.status.code(), Some(0), "{}", stderr(&baseline));
}

#[test]
fn evaluate_before_train_is_a_runtime_error() {
    let (_dir, config) = workspace(SMALL_RUN);
    let o = topicforge(&["evaluate", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`train`"));
}

#[test]
fn invalid_configs_exit_with_one() {
    let (_dir, config) = workspace("ticker = \"SYN\"\n[paths]\ncomments = \"missing.csv\"\nbars = \"bars.csv\"\n[forecast]\nseeds = []\n");
    let o = topicforge(&["validate", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("paths.comments"), "{err}");
    assert!(err.contains("forecast.seeds"), "{err}");

    let (_dir, config) = workspace(SMALL_RUN);
    let bad_variant = topicforge(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--variant",
        "vibes",
    ]);
    assert_eq!(bad_variant.status.code(), Some(1));
    let bad_flag = topicforge(&["train", "--bogus"]);
    assert_eq!(bad_flag.status.code(), Some(1));
    let missing = topicforge(&["validate", "--config", "/nonexistent/run.toml"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn unknown_keys_warn_but_validate() {
    let (_dir, config) = workspace(&format!("{SMALL_RUN}\n[experimental]\nturbo = true\n"));
    let o = topicforge(&["validate", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("unknown key `experimental`"));
}

#[test]
fn runtime_failures_exit_with_two() {
    let (dir, config) = workspace(SMALL_RUN);
    let wrong_ticker = topicforge(&[
        "ingest",
        "--config",
        config.to_str().unwrap(),
        "--ticker",
        "NOPE",
    ]);
    assert_eq!(wrong_ticker.status.code(), Some(2));
    assert!(stderr(&wrong_ticker).contains("NOPE"));

    fs::create_dir_all(dir.path().join("out")).unwrap();
    fs::write(dir.path().join("out/.topicforge.lock"), "1").unwrap();
    let locked = topicforge(&["ingest", "--config", config.to_str().unwrap()]);
    assert_eq!(locked.status.code(), Some(2));
    assert!(stderr(&locked).contains("in use"));
}

#[test]
fn changed_inputs_invalidate_downstream_stages() {
    let (dir, config) = workspace(SMALL_RUN);
    let config = config.to_str().unwrap();
    for stage in ["ingest", "features"] {
        assert_eq!(
            topicforge(&[stage, "--config", config]).status.code(),
            Some(0)
        );
    }
    let bars = dir.path().join("bars.csv");
    let text = fs::read_to_string(&bars).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.pop();
    fs::write(&bars, lines.join("\n") + "\n").unwrap();
    let features = topicforge(&["features", "--config", config]);
    assert_eq!(features.status.code(), Some(2));
    assert!(
        stderr(&features).contains("`ingest`"),
        "{}",
        stderr(&features)
    );
    assert!(stdout(&topicforge(&["ingest", "--config", config])).contains("ingest: done"));
    assert!(stdout(&topicforge(&["features", "--config", config])).contains("features: done"));
}
