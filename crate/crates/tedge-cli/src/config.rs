//! Experiment configuration: a TOML file with one section per stage, plus
//! dotted-path overrides from the command line.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tedge_core::topology::{Drift, GmmComponent};
use tedge_core::trace::TraceFormat;
use tedge_core::vit::{InputMode, ViTConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub topology: TopologyConfig,
    #[serde(default)]
    pub workload: WorkloadConfig,
    #[serde(default)]
    pub ingest: Option<IngestConfig>,
    pub pipeline: PipelineConfig,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub simulation: SimulationConfig,
}

/// Per-field defaults (rather than a whole-section default) so that a
/// partial section written by `--set topology.x=...` still deserializes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologyConfig {
    pub area: (f64, f64),
    /// FAPs per square meter; the default expects five FAPs over the area.
    pub fap_intensity: f64,
    pub n_uavs: usize,
    pub n_users: usize,
    pub tx_range_fap: f64,
    pub tx_range_uav: f64,
    pub kmeans_max_iters: usize,
    pub ue_mixture: Vec<GmmComponent>,
    pub seed: u64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            area: (1000.0, 1000.0),
            fap_intensity: 5e-6,
            n_uavs: 1,
            n_users: 60,
            tx_range_fap: 600.0,
            tx_range_uav: 900.0,
            kmeans_max_iters: 100,
            ue_mixture: vec![
                GmmComponent {
                    weight: 0.5,
                    mean: (300.0, 300.0),
                    cov: [[12000.0, 0.0], [0.0, 12000.0]],
                },
                GmmComponent {
                    weight: 0.5,
                    mean: (700.0, 650.0),
                    cov: [[16000.0, 2000.0], [2000.0, 16000.0]],
                },
            ],
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadConfig {
    pub n_contents: u32,
    pub gamma: f64,
    pub zeta: f64,
    pub n_slots: usize,
    pub requests_per_slot: usize,
    pub drift: Drift,
    pub seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            n_contents: 200,
            gamma: 0.8,
            zeta: 0.0,
            n_slots: 3000,
            requests_per_slot: 150,
            drift: Drift::None,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    pub input: String,
    pub format: TraceFormat,
    pub slot_seconds: u64,
    /// Split the trace per hgNB using topology.json and count coverage
    /// drops; requires every user to have a position.
    #[serde(default)]
    pub assign_nodes: bool,
    /// Optional `user_id,x,y` CSV replacing the generated UE positions.
    #[serde(default)]
    pub positions: Option<String>,
    /// 1-based hgNB whose log feeds the pipeline when assign_nodes is set.
    #[serde(default)]
    pub node: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub window_len: usize,
    pub history_len: usize,
    pub k: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Table-style preset id (1..=9); overrides the explicit fields below.
    #[serde(default)]
    pub preset: Option<u8>,
    #[serde(default)]
    pub n_layers: Option<usize>,
    #[serde(default)]
    pub model_dim: Option<usize>,
    #[serde(default)]
    pub n_heads: Option<usize>,
    #[serde(default)]
    pub mlp_layers: Option<usize>,
    #[serde(default)]
    pub mlp_size: Option<usize>,
    pub patch_size: usize,
    pub input_mode: InputMode,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub val_fraction: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
}

fn default_weight_decay() -> f64 {
    0.001
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyChoice {
    Fifo,
    Lru,
    Lfu,
    HindsightOptimal,
    LabelReplay,
    Tedge,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Cache capacity; defaults to pipeline.k when omitted.
    #[serde(default)]
    pub capacity: Option<usize>,
    pub policies: Vec<PolicyChoice>,
}

/// Table of architecture presets: (layers, model dim, MLP layers, MLP size,
/// heads). Presets 6 and 8 exist in the table but violate the head-divisor
/// constraint d_h = d/h and are rejected.
const PRESETS: [(usize, usize, usize, usize, usize); 9] = [
    (1, 32, 1, 256, 8),
    (1, 64, 1, 256, 8),
    (1, 128, 1, 256, 8),
    (2, 128, 1, 256, 8),
    (1, 128, 2, 256, 8),
    (1, 128, 3, 256, 6),
    (1, 128, 3, 256, 8),
    (1, 128, 3, 256, 10),
    (1, 128, 1, 512, 8),
];

/// Architecture preset by 1-based id; fails when the model dimension is not
/// divisible by the head count (presets 6 and 8).
pub fn preset_model(
    id: u8,
    patch_size: usize,
    image_size: usize,
    n_classes: usize,
) -> Result<ViTConfig> {
    if id == 0 || id as usize > PRESETS.len() {
        bail!("preset id must be in 1..={}", PRESETS.len());
    }
    let (n_layers, model_dim, mlp_layers, mlp_size, n_heads) = PRESETS[id as usize - 1];
    if model_dim % n_heads != 0 {
        bail!(
            "preset {id} has model dimension {model_dim} not divisible by {n_heads} heads \
             (d_h = d/h must be an integer)"
        );
    }
    Ok(ViTConfig {
        n_layers,
        model_dim,
        n_heads,
        mlp_layers,
        mlp_size,
        patch_size,
        image_size,
        n_classes,
    })
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let table: toml::Table = text.parse().context("config is not valid TOML")?;
        let mut value = toml::Value::Table(table);
        for pair in overrides {
            apply_override(&mut value, pair)?;
        }
        let config: ExperimentConfig = value.try_into().context("invalid config")?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pipeline.k == 0 || self.pipeline.k as u32 > self.workload.n_contents {
            bail!(
                "pipeline.k = {} must be in [1, {}] (catalog size)",
                self.pipeline.k,
                self.workload.n_contents
            );
        }
        if self.pipeline.window_len == 0 {
            bail!("pipeline.window_len must be >= 1");
        }
        if self.pipeline.window_len > self.workload.n_slots && self.ingest.is_none() {
            bail!(
                "pipeline.window_len = {} exceeds the workload horizon {}",
                self.pipeline.window_len,
                self.workload.n_slots
            );
        }
        if self.pipeline.history_len == 0 {
            bail!("pipeline.history_len must be >= 1");
        }
        let n_windows = self.workload.n_slots / self.pipeline.window_len;
        if self.ingest.is_none() && self.pipeline.history_len >= n_windows {
            bail!(
                "pipeline.history_len = {} must be < {} windows",
                self.pipeline.history_len,
                n_windows
            );
        }
        if self.training.batch_size == 0 {
            bail!("training.batch_size must be >= 1");
        }
        if !(0.0..1.0).contains(&self.training.val_fraction) {
            bail!("training.val_fraction must be in [0, 1)");
        }
        if let Some(capacity) = self.simulation.capacity {
            if self.simulation.policies.contains(&PolicyChoice::Tedge)
                && capacity != self.pipeline.k
            {
                bail!(
                    "simulation.capacity = {capacity} must equal pipeline.k = {} for the \
                     tedge policy (the predictor emits exactly K ids)",
                    self.pipeline.k
                );
            }
        }
        self.vit_config()?.validate().map_err(anyhow::Error::from)
    }

    /// The image geometry is derived from the pipeline: per-content mode uses
    /// history_len x history_len GAF images, count-matrix mode the square
    /// history itself.
    pub fn vit_config(&self) -> Result<ViTConfig> {
        let image_size = self.pipeline.history_len;
        let n_classes = match self.model.input_mode {
            InputMode::GafPerContent => 1,
            InputMode::CountMatrix => self.workload.n_contents as usize,
        };
        if let Some(id) = self.model.preset {
            return preset_model(id, self.model.patch_size, image_size, n_classes);
        }
        let field = |name: &str, v: Option<usize>| {
            v.with_context(|| format!("model.{name} required when no preset is set"))
        };
        Ok(ViTConfig {
            n_layers: field("n_layers", self.model.n_layers)?,
            model_dim: field("model_dim", self.model.model_dim)?,
            n_heads: field("n_heads", self.model.n_heads)?,
            mlp_layers: field("mlp_layers", self.model.mlp_layers)?,
            mlp_size: field("mlp_size", self.model.mlp_size)?,
            patch_size: self.model.patch_size,
            image_size,
            n_classes,
        })
    }

    pub fn capacity(&self) -> usize {
        self.simulation.capacity.unwrap_or(self.pipeline.k)
    }
}

/// Applies a `section.key=value` override onto the parsed TOML tree. The
/// value is parsed as a TOML literal, falling back to a bare string.
fn apply_override(root: &mut toml::Value, pair: &str) -> Result<()> {
    let (path, raw) = pair
        .split_once('=')
        .with_context(|| format!("override {pair:?} is not key=value"))?;
    let parsed: toml::Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(table) => table["v"].clone(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .with_context(|| format!("override path {path:?} crosses a non-table"))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert(toml::Value::Table(Default::default()));
    }
    unreachable!("loop returns on the last segment")
}
