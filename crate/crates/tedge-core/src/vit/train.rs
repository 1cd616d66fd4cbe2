//! Mini-batch BCE + Adam training, evaluation metrics and Top-K scoring.
//!
//! In the primary `GafPerContent` mode every (sample, content) pair is one
//! binary training example: the content's GAF image maps to its label bit,
//! and the shared model scores all contents of a sample to assemble the
//! multi-label prediction. The alternative `CountMatrix` mode feeds the raw
//! (rescaled) count matrix through the model once and reads all class
//! logits from the class token.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{gaf_encode, Sample, WindowMatrix};
use crate::vit::adam::{adam_step, AdamConfig, AdamState};
use crate::vit::config::ViTConfig;
use crate::vit::loss::{bce_with_logits, sigmoid};
use crate::vit::model::ViTModel;
use crate::vit::tensor::Tensor;

/// How a sample's history becomes model input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// One GAF image per content, one sigmoid score per forward pass.
    GafPerContent,
    /// The whole (rescaled) count matrix as a single image with one class
    /// per content. Requires history_len == n_contents (square input).
    CountMatrix,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Tail fraction of the time-ordered samples held out for validation.
    pub val_fraction: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            epochs: 10,
            batch_size: 256,
            lr: 1e-3,
            seed: 0,
            val_fraction: 0.2,
            weight_decay: adam.weight_decay,
            beta1: adam.beta1,
            beta2: adam.beta2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    /// Mean per-class binary accuracy at threshold 0.5.
    pub accuracy: f64,
    /// Mean BCE loss.
    pub loss: f64,
    /// Mean |predicted Top-K ∩ labeled Top-K| / K.
    pub topk_jaccard: f64,
}

/// GAF image of one content's count series.
fn gaf_image(history: &WindowMatrix, content: usize) -> Tensor {
    gaf_encode(&history.content_series(content)).to_tensor()
}

/// Count matrix rescaled into [0, 1] (all-zero matrix stays zero).
fn count_image(history: &WindowMatrix) -> Tensor {
    let max = history.data().iter().copied().max().unwrap_or(0);
    let scale = if max == 0 { 0.0 } else { 1.0 / max as f64 };
    let data: Vec<f64> = history.data().iter().map(|&v| v as f64 * scale).collect();
    Tensor::from_vec(history.n_windows(), history.n_contents(), data).expect("shape")
}

fn check_mode(config: &ViTConfig, mode: InputMode, l: usize, n_contents: usize) -> Result<()> {
    match mode {
        InputMode::GafPerContent => {
            if config.n_classes != 1 {
                return Err(Error::InvalidArgument(
                    "per-content mode needs n_classes = 1".into(),
                ));
            }
            if config.image_size != l {
                return Err(Error::InvalidArgument(format!(
                    "image_size {} != history_len {l}",
                    config.image_size
                )));
            }
        }
        InputMode::CountMatrix => {
            if config.n_classes != n_contents {
                return Err(Error::InvalidArgument(format!(
                    "count-matrix mode needs n_classes = {n_contents}"
                )));
            }
            if l != n_contents || config.image_size != l {
                return Err(Error::InvalidArgument(format!(
                    "count-matrix mode needs a square input: image_size = history_len = \
                     n_contents, got {} / {l} / {n_contents}",
                    config.image_size
                )));
            }
        }
    }
    Ok(())
}

/// One training example: a sample index plus, in per-content mode, the
/// content index.
type Example = (usize, Option<usize>);

fn example_forward(
    model: &ViTModel,
    samples: &[Sample],
    example: Example,
) -> Result<(f64, usize, usize, ViTModel)> {
    let (s_idx, content) = example;
    let sample = &samples[s_idx];
    let (image, labels): (Tensor, Vec<u8>) = match content {
        Some(c) => (gaf_image(&sample.history, c), vec![sample.label[c]]),
        None => (count_image(&sample.history), sample.label.clone()),
    };
    let (logits, cache) = model.forward(&image)?;
    let (loss, dlogits) = bce_with_logits(&logits, &labels)?;
    let correct = logits
        .iter()
        .zip(&labels)
        .filter(|(&z, &y)| (sigmoid(z) > 0.5) == (y == 1))
        .count();
    let mut grads = ViTModel::zeros(&model.config)?;
    model.backward(&cache, &dlogits, &mut grads)?;
    Ok((loss, correct, labels.len(), grads))
}

/// Fixed chunk count for batch-gradient accumulation. Chunks are reduced in
/// order, so results do not depend on the number of worker threads.
const GRAD_CHUNKS: usize = 8;

fn batch_step(
    model: &ViTModel,
    samples: &[Sample],
    batch: &[Example],
) -> Result<(ViTModel, f64, usize, usize)> {
    let chunk_size = batch.len().div_ceil(GRAD_CHUNKS);
    let partials: Vec<Result<(ViTModel, f64, usize, usize)>> = batch
        .par_chunks(chunk_size)
        .map(|chunk| {
            let mut grads = ViTModel::zeros(&model.config)?;
            let mut loss = 0.0;
            let mut correct = 0;
            let mut classes = 0;
            for &ex in chunk {
                let (l, c, n, g) = example_forward(model, samples, ex)?;
                loss += l;
                correct += c;
                classes += n;
                grads.add_assign(&g);
            }
            Ok((grads, loss, correct, classes))
        })
        .collect();

    let mut total = ViTModel::zeros(&model.config)?;
    let mut loss = 0.0;
    let mut correct = 0;
    let mut classes = 0;
    for partial in partials {
        let (g, l, c, n) = partial?;
        total.add_assign(&g);
        loss += l;
        correct += c;
        classes += n;
    }
    total.scale(1.0 / batch.len() as f64);
    Ok((total, loss, correct, classes))
}

/// Trains a fresh model on a time-ordered dataset. The validation split is
/// the tail `val_fraction` of samples; training examples are shuffled within
/// the training split only.
pub fn train(
    samples: &[Sample],
    config: &ViTConfig,
    mode: InputMode,
    tc: &TrainConfig,
) -> Result<(ViTModel, Vec<EpochMetrics>)> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("empty training dataset".into()));
    }
    let l = samples[0].history.n_windows();
    let n_contents = samples[0].history.n_contents();
    if samples
        .iter()
        .any(|s| s.history.n_windows() != l || s.history.n_contents() != n_contents)
    {
        return Err(Error::Shape("inconsistent sample geometry".into()));
    }
    check_mode(config, mode, l, n_contents)?;
    if !(0.0..1.0).contains(&tc.val_fraction) {
        return Err(Error::InvalidArgument(
            "val_fraction must be in [0, 1)".into(),
        ));
    }
    if tc.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
    }

    let n_val = (samples.len() as f64 * tc.val_fraction).round() as usize;
    let n_train = (samples.len() - n_val).max(1);
    let (train_samples, val_samples) = samples.split_at(n_train);

    let mut examples: Vec<Example> = match mode {
        InputMode::GafPerContent => (0..train_samples.len())
            .flat_map(|s| (0..n_contents).map(move |c| (s, Some(c))))
            .collect(),
        InputMode::CountMatrix => (0..train_samples.len()).map(|s| (s, None)).collect(),
    };

    let mut model = ViTModel::init(config, tc.seed)?;
    let mut state = AdamState::new(&model);
    let adam = AdamConfig {
        lr: tc.lr,
        beta1: tc.beta1,
        beta2: tc.beta2,
        weight_decay: tc.weight_decay,
        eps: 1e-8,
    };

    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(tc.seed);

    let mut history = Vec::with_capacity(tc.epochs);
    for epoch in 0..tc.epochs {
        examples.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut classes = 0usize;
        for batch in examples.chunks(tc.batch_size) {
            let (grads, loss, c, n) = batch_step(&model, train_samples, batch)?;
            loss_sum += loss;
            correct += c;
            classes += n;
            adam_step(&mut model, &grads, &mut state, &adam);
        }
        let (val_loss, val_accuracy) = if val_samples.is_empty() {
            (None, None)
        } else {
            let m = evaluate_split(&model, val_samples, mode)?;
            (Some(m.0), Some(m.1))
        };
        history.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / examples.len() as f64,
            train_accuracy: correct as f64 / classes as f64,
            val_loss,
            val_accuracy,
        });
    }
    Ok((model, history))
}

/// Per-content sigmoid scores for one history matrix.
pub fn score_history(
    model: &ViTModel,
    mode: InputMode,
    history: &WindowMatrix,
) -> Result<Vec<f64>> {
    check_mode(
        &model.config,
        mode,
        history.n_windows(),
        history.n_contents(),
    )?;
    match mode {
        InputMode::GafPerContent => (0..history.n_contents())
            .into_par_iter()
            .map(|c| {
                let logits = model.logits(&gaf_image(history, c))?;
                Ok(sigmoid(logits[0]))
            })
            .collect(),
        InputMode::CountMatrix => {
            let logits = model.logits(&count_image(history))?;
            Ok(logits.into_iter().map(sigmoid).collect())
        }
    }
}

/// The k contents with the largest scores (ties to the lower content id),
/// as 1-based content ids.
pub fn top_k_ids(scores: &[f64], k: usize) -> Vec<u32> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    order.truncate(k);
    order.into_iter().map(|i| i as u32 + 1).collect()
}

/// Scores a history and returns the predicted Top-K content ids.
pub fn predict_topk(
    model: &ViTModel,
    mode: InputMode,
    history: &WindowMatrix,
    k: usize,
) -> Result<Vec<u32>> {
    let scores = score_history(model, mode, history)?;
    if k > scores.len() {
        return Err(Error::InvalidArgument(format!(
            "k {k} exceeds catalog {}",
            scores.len()
        )));
    }
    Ok(top_k_ids(&scores, k))
}

fn evaluate_split(model: &ViTModel, samples: &[Sample], mode: InputMode) -> Result<(f64, f64)> {
    let m = evaluate(model, samples, mode, 1)?;
    Ok((m.loss, m.accuracy))
}

/// Accuracy / loss / Top-K overlap on a dataset. `k` selects the prediction
/// set size for the Jaccard overlap.
pub fn evaluate(
    model: &ViTModel,
    samples: &[Sample],
    mode: InputMode,
    k: usize,
) -> Result<EvalMetrics> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("empty evaluation dataset".into()));
    }
    let n_contents = samples[0].history.n_contents();
    if k == 0 || k > n_contents {
        return Err(Error::InvalidArgument(format!(
            "k must be in [1, {n_contents}], got {k}"
        )));
    }
    let per_sample: Vec<(f64, usize, f64)> = samples
        .par_iter()
        .map(|sample| {
            let scores = score_history(model, mode, &sample.history)?;
            let mut loss = 0.0;
            let mut correct = 0usize;
            for (&score, &y) in scores.iter().zip(&sample.label) {
                let p = score.clamp(1e-12, 1.0 - 1e-12);
                loss -= if y == 1 { p.ln() } else { (1.0 - p).ln() };
                if (score > 0.5) == (y == 1) {
                    correct += 1;
                }
            }
            loss /= scores.len() as f64;
            let predicted = top_k_ids(&scores, k);
            let overlap = predicted
                .iter()
                .filter(|&&id| sample.label[id as usize - 1] == 1)
                .count();
            Ok((loss, correct, overlap as f64 / k as f64))
        })
        .collect::<Result<_>>()?;

    let mut loss = 0.0;
    let mut correct = 0usize;
    let mut jaccard = 0.0;
    for (l, c, j) in per_sample {
        loss += l;
        correct += c;
        jaccard += j;
    }
    let n = samples.len() as f64;
    Ok(EvalMetrics {
        accuracy: correct as f64 / (n * n_contents as f64),
        loss: loss / n,
        topk_jaccard: jaccard / n,
    })
}
