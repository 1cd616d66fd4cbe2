//! The eight experiment stages. Each stage reads its upstream artifacts from
//! the output directory, writes its own artifacts under fixed names, and
//! drops a replay manifest.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use tedge_core::cachesim::{
    hit_ratio_report, simulate_optimal, simulate_predictive, simulate_reactive, PolicyResult,
    ReactivePolicy, Report,
};
use tedge_core::pipeline::{
    build_dataset, label_top_k, load_dataset, save_dataset, window_aggregate,
};
use tedge_core::topology::{
    generate_synthetic_trace, place_uavs_kmeans, sample_faps_ppp, sample_ues_gmm, Topology,
    TxRange, ZipfModel,
};
use tedge_core::trace::{
    assign_requests_to_nodes, build_request_matrix, parse_trace, write_events_csv, RequestLog,
    TraceFormat,
};
use tedge_core::vit::{
    evaluate, load_checkpoint, predict_topk, save_checkpoint, train, TrainConfig,
};

use crate::config::{ExperimentConfig, PolicyChoice};
use crate::manifest::Manifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Stage {
    #[value(name = "gen-topology")]
    GenTopology,
    #[value(name = "gen-trace")]
    GenTrace,
    Ingest,
    Prepare,
    Train,
    Eval,
    Simulate,
    Report,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::GenTopology => "gen-topology",
            Stage::GenTrace => "gen-trace",
            Stage::Ingest => "ingest",
            Stage::Prepare => "prepare",
            Stage::Train => "train",
            Stage::Eval => "eval",
            Stage::Simulate => "simulate",
            Stage::Report => "report",
        }
    }
}

pub struct StageContext {
    pub config: ExperimentConfig,
    pub config_path: PathBuf,
    pub out_dir: PathBuf,
    /// Seed override (--seed or TEDGE_SEED), applied to workload, topology
    /// and training seeds.
    pub seed_override: Option<u64>,
}

impl StageContext {
    fn artifact(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn require(&self, name: &str, produced_by: &str) -> Result<PathBuf> {
        let path = self.artifact(name);
        if !path.exists() {
            bail!(
                "missing {}: run the `{produced_by}` stage first",
                path.display()
            );
        }
        Ok(path)
    }

    fn workload_seed(&self) -> u64 {
        self.seed_override.unwrap_or(self.config.workload.seed)
    }

    fn topology_seed(&self) -> u64 {
        self.seed_override.unwrap_or(self.config.topology.seed)
    }

    fn training_seed(&self) -> u64 {
        self.seed_override.unwrap_or(self.config.training.seed)
    }

    fn load_trace(&self) -> Result<RequestLog> {
        let path = self.require("trace.csv", "gen-trace (or ingest)")?;
        let file = File::open(&path)?;
        let parsed = parse_trace(BufReader::new(file), TraceFormat::EventsCsv, 1)
            .with_context(|| format!("cannot parse {}", path.display()))?;
        Ok(parsed.log)
    }
}

pub fn run_stage(stage: Stage, ctx: &StageContext) -> Result<()> {
    std::fs::create_dir_all(&ctx.out_dir)?;
    match stage {
        Stage::GenTopology => gen_topology(ctx),
        Stage::GenTrace => gen_trace(ctx),
        Stage::Ingest => ingest(ctx),
        Stage::Prepare => prepare(ctx),
        Stage::Train => do_train(ctx),
        Stage::Eval => eval_stage(ctx),
        Stage::Simulate => simulate(ctx),
        Stage::Report => report(ctx),
    }
}

fn gen_topology(ctx: &StageContext) -> Result<()> {
    let cfg = &ctx.config.topology;
    let seed = ctx.topology_seed();
    let faps = sample_faps_ppp(cfg.fap_intensity, cfg.area, seed)?;
    let ues = sample_ues_gmm(&cfg.ue_mixture, cfg.n_users, cfg.area, seed ^ 0x55aa)?;
    let positions: Vec<(f64, f64)> = ues.iter().map(|&(_, x, y)| (x, y)).collect();
    let uavs = if cfg.n_uavs > 0 {
        place_uavs_kmeans(&positions, cfg.n_uavs, cfg.kmeans_max_iters, seed ^ 0x7e57)?
    } else {
        Vec::new()
    };
    let topology = Topology {
        faps,
        uavs,
        ues,
        tx_range: TxRange {
            fap: cfg.tx_range_fap,
            uav: cfg.tx_range_uav,
        },
        area: cfg.area,
    };
    let path = ctx.artifact("topology.json");
    std::fs::write(&path, serde_json::to_string_pretty(&topology)?)?;
    eprintln!(
        "gen-topology: {} FAPs, {} UAVs, {} UEs -> {}",
        topology.faps.len(),
        topology.uavs.len(),
        topology.ues.len(),
        path.display()
    );

    let mut manifest = Manifest::new("gen-topology", Some(seed));
    manifest.record_input(&ctx.config_path)?;
    manifest.record_output(&path)?;
    manifest.write(&ctx.out_dir)?;
    Ok(())
}

fn gen_trace(ctx: &StageContext) -> Result<()> {
    let cfg = &ctx.config.workload;
    let seed = ctx.workload_seed();
    let zipf = ZipfModel::new(cfg.n_contents, cfg.gamma, cfg.zeta)?;
    let log = generate_synthetic_trace(&zipf, cfg.n_slots, cfg.requests_per_slot, cfg.drift, seed)?;
    let path = ctx.artifact("trace.csv");
    let mut writer = BufWriter::new(File::create(&path)?);
    write_events_csv(&log, &mut writer)?;
    writer.flush()?;
    eprintln!(
        "gen-trace: {} events over {} slots -> {}",
        log.events.len(),
        log.horizon,
        path.display()
    );

    let mut manifest = Manifest::new("gen-trace", Some(seed));
    manifest.record_input(&ctx.config_path)?;
    manifest.record_output(&path)?;
    manifest.write(&ctx.out_dir)?;
    Ok(())
}

#[derive(Serialize)]
struct IngestStats {
    events: usize,
    catalog_size: u32,
    horizon: usize,
    duplicates_dropped: u64,
    coverage_dropped: Option<u64>,
    node: Option<u32>,
}

fn ingest(ctx: &StageContext) -> Result<()> {
    let Some(cfg) = &ctx.config.ingest else {
        bail!("config has no [ingest] section");
    };
    let input = PathBuf::from(&cfg.input);
    if !input.exists() {
        bail!("ingest input {} does not exist", input.display());
    }
    let parsed = parse_trace(
        BufReader::new(File::open(&input)?),
        cfg.format,
        cfg.slot_seconds,
    )?;
    let mut log = parsed.log;
    let mut coverage_dropped = None;

    if cfg.assign_nodes {
        let topo_path = ctx.require("topology.json", "gen-topology")?;
        let mut topology: Topology = serde_json::from_str(&std::fs::read_to_string(&topo_path)?)?;
        if let Some(positions_path) = &cfg.positions {
            topology.ues = read_positions(Path::new(positions_path))?;
        }
        let assignment = assign_requests_to_nodes(&log, &topology)?;
        coverage_dropped = Some(assignment.dropped);
        let node = cfg.node.unwrap_or(1) as usize;
        if node == 0 || node > assignment.node_logs.len() {
            bail!(
                "ingest.node = {node} out of range: topology has {} hgNBs",
                assignment.node_logs.len()
            );
        }
        log = assignment.node_logs[node - 1].clone();
    }

    let stats = IngestStats {
        events: log.events.len(),
        catalog_size: log.catalog_size,
        horizon: log.horizon,
        duplicates_dropped: parsed.duplicates_dropped,
        coverage_dropped,
        node: cfg.assign_nodes.then(|| cfg.node.unwrap_or(1)),
    };

    // Normalize timestamps to slot indices so downstream stages always see
    // slot_seconds = 1.
    let normalized = RequestLog {
        events: log
            .events
            .iter()
            .map(|e| tedge_core::trace::RequestEvent {
                timestamp: (e.timestamp - log.base_ts) / log.slot_seconds,
                ..*e
            })
            .collect(),
        catalog_size: log.catalog_size,
        horizon: log.horizon,
        slot_seconds: 1,
        base_ts: 0,
    };

    let path = ctx.artifact("trace.csv");
    let mut writer = BufWriter::new(File::create(&path)?);
    write_events_csv(&normalized, &mut writer)?;
    writer.flush()?;
    let stats_path = ctx.artifact("ingest_stats.json");
    std::fs::write(&stats_path, serde_json::to_string_pretty(&stats)?)?;
    eprintln!(
        "ingest: {} events (dropped {} duplicates{}) -> {}",
        stats.events,
        stats.duplicates_dropped,
        coverage_dropped
            .map(|d| format!(", {d} uncovered"))
            .unwrap_or_default(),
        path.display()
    );

    let mut manifest = Manifest::new("ingest", None);
    manifest.record_input(&ctx.config_path)?;
    manifest.record_input(&input)?;
    manifest.record_output(&path)?;
    manifest.record_output(&stats_path)?;
    manifest.write(&ctx.out_dir)?;
    Ok(())
}

fn read_positions(path: &Path) -> Result<Vec<(u64, f64, f64)>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read positions {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 && line.trim() == "user_id,x,y" {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            bail!("positions line {} is not user_id,x,y", i + 1);
        }
        out.push((
            fields[0].trim().parse().context("bad user id")?,
            fields[1].trim().parse().context("bad x")?,
            fields[2].trim().parse().context("bad y")?,
        ));
    }
    Ok(out)
}

fn prepare(ctx: &StageContext) -> Result<()> {
    let log = ctx.load_trace()?;
    let pipeline = &ctx.config.pipeline;
    if pipeline.k as u32 > log.catalog_size {
        bail!(
            "pipeline.k = {} exceeds the trace catalog size {}",
            pipeline.k,
            log.catalog_size
        );
    }
    let matrix = build_request_matrix(&log);
    let windows = window_aggregate(&matrix, pipeline.window_len)?;
    if pipeline.history_len >= windows.n_windows() {
        bail!(
            "pipeline.history_len = {} must be < {} windows",
            pipeline.history_len,
            windows.n_windows()
        );
    }
    let samples = build_dataset(&windows, pipeline.history_len, pipeline.k)?;
    let path = ctx.artifact("dataset.bin");
    let mut writer = BufWriter::new(File::create(&path)?);
    save_dataset(&samples, pipeline.k, &mut writer)?;
    writer.flush()?;
    eprintln!(
        "prepare: {} samples ({} windows of {} slots) -> {}",
        samples.len(),
        windows.n_windows(),
        pipeline.window_len,
        path.display()
    );

    let mut manifest = Manifest::new("prepare", None);
    manifest.record_input(&ctx.config_path)?;
    manifest.record_input(&ctx.artifact("trace.csv"))?;
    manifest.record_output(&path)?;
    manifest.write(&ctx.out_dir)?;
    Ok(())
}

fn do_train(ctx: &StageContext) -> Result<()> {
    let dataset_path = ctx.require("dataset.bin", "prepare")?;
    let (samples, k) = load_dataset(BufReader::new(File::open(&dataset_path)?))?;
    if k != ctx.config.pipeline.k {
        bail!(
            "dataset was prepared with k = {k}, config says {}; re-run prepare",
            ctx.config.pipeline.k
        );
    }
    let vit_config = ctx.config.vit_config()?;
    let mode = ctx.config.model.input_mode;
    let tc = TrainConfig {
        epochs: ctx.config.training.epochs,
        batch_size: ctx.config.training.batch_size,
        lr: ctx.config.training.lr,
        seed: ctx.training_seed(),
        val_fraction: ctx.config.training.val_fraction,
        weight_decay: ctx.config.training.weight_decay,
        beta1: ctx.config.training.beta1,
        beta2: ctx.config.training.beta2,
    };
    eprintln!(
        "train: {} samples, {} params, {} epochs",
        samples.len(),
        tedge_core::vit::count_params(&vit_config)?,
        tc.epochs
    );
    let (model, history) = train(&samples, &vit_config, mode, &tc)?;
    for m in &history {
        eprintln!(
            "  epoch {:>3}: train_loss {:.6} train_acc {:.4} val_loss {} val_acc {}",
            m.epoch,
            m.train_loss,
            m.train_accuracy,
            m.val_loss.map_or("-".into(), |v| format!("{v:.6}")),
            m.val_accuracy.map_or("-".into(), |v| format!("{v:.4}")),
        );
    }

    let ckpt_path = ctx.artifact("model.ckpt");
    let mut writer = BufWriter::new(File::create(&ckpt_path)?);
    save_checkpoint(&model, mode, &mut writer)?;
    writer.flush()?;
    let metrics_path = ctx.artifact("train_metrics.json");
    std::fs::write(&metrics_path, serde_json::to_string_pretty(&history)?)?;

    let mut manifest = Manifest::new("train", Some(tc.seed));
    manifest.record_input(&ctx.config_path)?;
    manifest.record_input(&dataset_path)?;
    manifest.record_output(&ckpt_path)?;
    manifest.record_output(&metrics_path)?;
    manifest.write(&ctx.out_dir)?;
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    validation: Option<tedge_core::vit::EvalMetrics>,
    full: tedge_core::vit::EvalMetrics,
    n_samples: usize,
    n_validation: usize,
}

fn eval_stage(ctx: &StageContext) -> Result<()> {
    let dataset_path = ctx.require("dataset.bin", "prepare")?;
    let ckpt_path = ctx.require("model.ckpt", "train")?;
    let (samples, k) = load_dataset(BufReader::new(File::open(&dataset_path)?))?;
    let (model, mode) = load_checkpoint(BufReader::new(File::open(&ckpt_path)?))?;

    let n_val = (samples.len() as f64 * ctx.config.training.val_fraction).round() as usize;
    let split = samples.len() - n_val;
    let validation = if n_val > 0 {
        Some(evaluate(&model, &samples[split..], mode, k)?)
    } else {
        None
    };
    let full = evaluate(&model, &samples, mode, k)?;
    let report = EvalReport {
        validation,
        full,
        n_samples: samples.len(),
        n_validation: n_val,
    };
    let path = ctx.artifact("metrics.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
    eprintln!(
        "eval: accuracy {:.4} loss {:.4} topk_jaccard {:.4} (validation: {}) -> {}",
        report.full.accuracy,
        report.full.loss,
        report.full.topk_jaccard,
        report
            .validation
            .as_ref()
            .map_or("-".into(), |v| format!("{:.4}", v.accuracy)),
        path.display()
    );

    let mut manifest = Manifest::new("eval", None);
    manifest.record_input(&ctx.config_path)?;
    manifest.record_input(&dataset_path)?;
    manifest.record_input(&ckpt_path)?;
    manifest.record_output(&path)?;
    manifest.write(&ctx.out_dir)?;
    Ok(())
}

fn simulate(ctx: &StageContext) -> Result<()> {
    let log = ctx.load_trace()?;
    let pipeline = &ctx.config.pipeline;
    let capacity = ctx.config.capacity();
    let w = pipeline.window_len;
    let l = pipeline.history_len;

    let mut results: Vec<PolicyResult> = Vec::new();
    let mut model_input = None;
    for &policy in &ctx.config.simulation.policies {
        let result = match policy {
            PolicyChoice::Fifo => simulate_reactive(&log, ReactivePolicy::Fifo, capacity, w)?,
            PolicyChoice::Lru => simulate_reactive(&log, ReactivePolicy::Lru, capacity, w)?,
            PolicyChoice::Lfu => simulate_reactive(&log, ReactivePolicy::Lfu, capacity, w)?,
            PolicyChoice::HindsightOptimal => simulate_optimal(&log, w, capacity)?,
            PolicyChoice::LabelReplay => {
                let mut r = simulate_predictive(
                    &log,
                    |history, _| {
                        let label = label_top_k(history, capacity)?;
                        Ok(label
                            .iter()
                            .enumerate()
                            .filter(|(_, &b)| b == 1)
                            .map(|(i, _)| i as u32 + 1)
                            .collect())
                    },
                    w,
                    l,
                    capacity,
                )?;
                r.policy = "label_replay".to_string();
                r
            }
            PolicyChoice::Tedge => {
                let ckpt_path = ctx.require("model.ckpt", "train")?;
                let (model, mode) = load_checkpoint(BufReader::new(File::open(&ckpt_path)?))?;
                model_input = Some(ckpt_path);
                let mut r = simulate_predictive(
                    &log,
                    |history, _| predict_topk(&model, mode, history, capacity),
                    w,
                    l,
                    capacity,
                )?;
                r.policy = "tedge".to_string();
                r
            }
        };
        eprintln!(
            "simulate: {:<17} hit_ratio {:.4} ({} hits / {} events)",
            result.policy, result.hit_ratio, result.hits, result.events
        );
        results.push(result);
    }

    let report = hit_ratio_report(&results)?;
    let csv_path = ctx.artifact("results.csv");
    std::fs::write(&csv_path, report.to_csv())?;
    let intervals_path = ctx.artifact("results_intervals.csv");
    std::fs::write(&intervals_path, report.per_interval_csv())?;
    let json_path = ctx.artifact("results.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&report)?)?;

    let mut manifest = Manifest::new("simulate", None);
    manifest.record_input(&ctx.config_path)?;
    manifest.record_input(&ctx.artifact("trace.csv"))?;
    if let Some(ckpt) = model_input {
        manifest.record_input(&ckpt)?;
    }
    for p in [&csv_path, &intervals_path, &json_path] {
        manifest.record_output(p)?;
    }
    manifest.write(&ctx.out_dir)?;
    Ok(())
}

fn report(ctx: &StageContext) -> Result<()> {
    let json_path = ctx.require("results.json", "simulate")?;
    let report: Report = serde_json::from_str(&std::fs::read_to_string(&json_path)?)?;

    // Comparison table with the serve-everything upper line appended.
    let events = report.results.first().map_or(0, |r| r.events);
    let mut table = String::from("policy,K,events,hits,misses,hit_ratio\n");
    for r in &report.results {
        table.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.policy, r.capacity, r.events, r.hits, r.misses, r.hit_ratio
        ));
    }
    table.push_str(&format!("serve_all,,{events},{events},0,1\n"));

    let path = ctx.artifact("report.csv");
    std::fs::write(&path, &table)?;
    eprintln!("report:\n{table}");

    let mut manifest = Manifest::new("report", None);
    manifest.record_input(&ctx.config_path)?;
    manifest.record_input(&json_path)?;
    manifest.record_output(&path)?;
    manifest.write(&ctx.out_dir)?;
    Ok(())
}
