//! Fixed-learning-rate fine-tuning schemes: all layers, a frozen prefix
//! (the last-layer-only scheme is the longest prefix), and the sweep over
//! every prefix length.
//!
//! They draw training batches from the same seeded stream as
//! [`crate::optimizer::train`], so equal seeds see equal data.

use std::time::Instant;

use crate::data::{BatchStream, Dataset, TransferTask};
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::optimizer::{
    collect_metrics, sgd_step, train_stream_seed, Metrics, DEFAULT_LR_MAX, DEFAULT_LR_MIN,
};
use crate::tensor::{compute_loss, LossKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineScheme {
    AllLayers { alpha: f64 },
    LastLayerOnly { alpha: f64 },
    LayerwiseSweep { alpha: f64 },
}

impl BaselineScheme {
    pub fn alpha(&self) -> f64 {
        match *self {
            BaselineScheme::AllLayers { alpha }
            | BaselineScheme::LastLayerOnly { alpha }
            | BaselineScheme::LayerwiseSweep { alpha } => alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.alpha();
        if !(DEFAULT_LR_MIN..=DEFAULT_LR_MAX).contains(&a) {
            return Err(Error::InvalidArgument(format!(
                "baseline LR {a} outside [{DEFAULT_LR_MIN}, {DEFAULT_LR_MAX}]"
            )));
        }
        Ok(())
    }
}

/// Which target data the SGD loop trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainOn {
    /// Train and validation splits together.
    Pool,
    /// Train split only, keeping validation held out for model selection.
    TrainSplit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub train_on: TrainOn,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            batch_size: 32,
            iterations: 2000,
            seed: 0,
            loss: LossKind::CrossEntropy,
            train_on: TrainOn::Pool,
        }
    }
}

fn training_data(task: &TransferTask, on: TrainOn) -> Dataset {
    match on {
        TrainOn::Pool => task.target_pool(),
        TrainOn::TrainSplit => task.target_train.clone(),
    }
}

/// Plain SGD with one fixed rate per layer (`None` = frozen). Returns the
/// loop's wall-clock seconds.
pub fn run_sgd(
    model: &mut Model,
    data: &Dataset,
    rates: &[Option<f64>],
    cfg: &SgdConfig,
) -> Result<f64> {
    let mut stream = BatchStream::new(data, cfg.batch_size, train_stream_seed(cfg.seed))?;
    let start = Instant::now();
    for t in 0..cfg.iterations {
        let batch = stream.next_batch();
        let cache = model.forward(&batch.inputs).map_err(|e| match e {
            Error::NonFinite(_) => Error::Diverged {
                iteration: t,
                loss: f64::NAN,
            },
            other => other,
        })?;
        let loss = compute_loss(cache.output(), &batch.labels, cfg.loss)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration: t, loss });
        }
        let g = model.backward(&cache, &batch.labels, cfg.loss)?;
        let next = sgd_step(model.params(), rates, &g)?;
        model.set_params(next)?;
    }
    Ok(start.elapsed().as_secs_f64())
}

/// Fine-tunes every layer at the constant rate `alpha`.
pub fn finetune_constant(
    model: &mut Model,
    task: &TransferTask,
    alpha: f64,
    cfg: &SgdConfig,
) -> Result<Metrics> {
    finetune_frozen_prefix(model, task, 0, alpha, cfg)
}

/// Freezes the first `k` parameter groups and trains the rest at `alpha`.
/// `k = d − 1` updates only the last layer.
pub fn finetune_frozen_prefix(
    model: &mut Model,
    task: &TransferTask,
    k: usize,
    alpha: f64,
    cfg: &SgdConfig,
) -> Result<Metrics> {
    let d = model.depth();
    if k >= d {
        return Err(Error::InvalidArgument(format!(
            "frozen prefix needs 0 <= k < d = {d}, got k = {k}"
        )));
    }
    BaselineScheme::AllLayers { alpha }.validate()?;
    let rates: Vec<Option<f64>> = (0..d).map(|j| (j >= k).then_some(alpha)).collect();
    let data = training_data(task, cfg.train_on);
    let secs = run_sgd(model, &data, &rates, cfg)?;
    collect_metrics(model, &data, task, cfg.loss, secs)
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub frozen: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub best_k: usize,
    pub rows: Vec<SweepRow>,
    pub best_model: Model,
    /// Sum of all per-k runs.
    pub wall_clock_secs: f64,
}

impl SweepResult {
    pub fn best(&self) -> &SweepRow {
        &self.rows[self.best_k]
    }
}

/// Runs [`finetune_frozen_prefix`] for every `k` in `0..d` from the same
/// starting model and seed, training on the train split, and picks the `k`
/// with the best validation accuracy. Ties go to the larger `k`.
pub fn layerwise_sweep(
    model: &Model,
    task: &TransferTask,
    alpha: f64,
    cfg: &SgdConfig,
) -> Result<SweepResult> {
    let cfg = SgdConfig {
        train_on: TrainOn::TrainSplit,
        ..*cfg
    };
    let mut rows = Vec::with_capacity(model.depth());
    let mut best: Option<(usize, f64, Model)> = None;
    for k in 0..model.depth() {
        let mut m = model.clone();
        let metrics = finetune_frozen_prefix(&mut m, task, k, alpha, &cfg)?;
        let score = metrics.val_accuracy;
        if best.as_ref().is_none_or(|(_, s, _)| score >= *s) {
            best = Some((k, score, m));
        }
        rows.push(SweepRow { frozen: k, metrics });
    }
    let (best_k, _, best_model) = best.expect("d >= 1");
    let wall_clock_secs = rows.iter().map(|r| r.metrics.wall_clock_secs).sum();
    Ok(SweepResult {
        best_k,
        rows,
        best_model,
        wall_clock_secs,
    })
}
