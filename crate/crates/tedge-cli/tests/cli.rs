//! End-to-end runs of the `tedge` binary: stage ordering, the toy pipeline,
//! and trace ingestion with node assignment.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn tedge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tedge"))
        .args(args)
        .env_remove("TEDGE_SEED")
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) {
    let out = tedge(args);
    assert!(
        out.status.success(),
        "tedge {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn stages_out_of_order_name_the_missing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = repo_config("toy.toml");
    let out = tedge(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("gen-trace"), "stderr: {stderr}");

    let out = tedge(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("prepare"), "stderr: {stderr}");
}

#[test]
fn toy_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = repo_config("toy.toml");
    let cfg = config.to_str().unwrap();
    let out = out_dir.to_str().unwrap();
    for stage in [
        "gen-topology",
        "gen-trace",
        "prepare",
        "train",
        "eval",
        "simulate",
        "report",
    ] {
        run_ok(&[stage, "--config", cfg, "--out", out]);
    }
    for artifact in [
        "topology.json",
        "trace.csv",
        "dataset.bin",
        "model.ckpt",
        "train_metrics.json",
        "metrics.json",
        "results.csv",
        "results_intervals.csv",
        "report.csv",
        "manifest_train.json",
    ] {
        assert!(out_dir.join(artifact).exists(), "missing {artifact}");
    }
    let report = std::fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert!(report.starts_with("policy,K,events,hits,misses,hit_ratio"));
    assert!(report.contains("serve_all"));
    // One row per configured policy plus header and the serve-all line.
    assert_eq!(report.trim().lines().count(), 8);
}

#[test]
fn config_overrides_change_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = repo_config("toy.toml");
    let cfg = config.to_str().unwrap();
    let out = out_dir.to_str().unwrap();
    run_ok(&["gen-trace", "--config", cfg, "--out", out]);
    let base = std::fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    run_ok(&[
        "gen-trace",
        "--config",
        cfg,
        "--out",
        out,
        "--set",
        "workload.requests_per_slot=3",
    ]);
    let overridden = std::fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    assert_ne!(base, overridden);
    assert_eq!(overridden.trim().lines().count(), 200 * 3 + 1);
}

#[test]
fn invalid_config_key_is_rejected_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = repo_config("toy.toml");
    let out = tedge(&[
        "gen-trace",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--set",
        "pipeline.k=100",
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("pipeline.k"), "stderr: {stderr}");
}

#[test]
fn ingest_assigns_nodes_and_counts_drops() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    std::fs::create_dir_all(&out_dir).unwrap();

    // Two FAP-coverage users and one out-of-range user.
    let data = dir.path().join("u.data");
    let mut rows = String::new();
    for t in 0..30 {
        let user = t % 3 + 1;
        let item = t % 4 + 1;
        rows.push_str(&format!("{user}\t{item}\t3\t{}\n", 1000 + t * 10));
    }
    std::fs::write(&data, rows).unwrap();
    let positions = dir.path().join("positions.csv");
    std::fs::write(&positions, "user_id,x,y\n1,10,10\n2,14,10\n3,900,900\n").unwrap();
    let topology = serde_json::json!({
        "faps": [[10.0, 10.0], [500.0, 500.0]],
        "uavs": [],
        "ues": [],
        "tx_range": {"fap": 50.0, "uav": 50.0},
        "area": [1000.0, 1000.0],
    });
    std::fs::write(
        out_dir.join("topology.json"),
        serde_json::to_string(&topology).unwrap(),
    )
    .unwrap();

    let config = dir.path().join("config.toml");
    std::fs::write(
        &config,
        format!(
            r#"
[ingest]
input = "{}"
format = "movielens_tsv"
slot_seconds = 20
assign_nodes = true
positions = "{}"
node = 1

[workload]
n_contents = 4

[pipeline]
window_len = 2
history_len = 2
k = 1

[model]
patch_size = 2
input_mode = "gaf_per_content"
n_layers = 1
model_dim = 4
n_heads = 2
mlp_layers = 1
mlp_size = 8

[training]
epochs = 1
batch_size = 16
lr = 0.01
seed = 1
val_fraction = 0.0

[simulation]
policies = ["lru"]
"#,
            data.display(),
            positions.display()
        ),
    )
    .unwrap();

    run_ok(&[
        "ingest",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("ingest_stats.json")).unwrap())
            .unwrap();
    // User 3 is outside every range: 10 events dropped for coverage.
    assert_eq!(stats["coverage_dropped"], 10);
    assert_eq!(stats["node"], 1);
    let trace = std::fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    assert!(trace.starts_with("timestamp,user_id,content_id"));
    // Users 1 and 2 both land on FAP 1 (nearest in range).
    assert_eq!(trace.trim().lines().count(), 21);
}
