//! Online meta-learning of per-layer learning rates.
//!
//! One iteration, for every parameter group `j`:
//!
//! ```text
//! g_j     = ∇_j L_train(θ)                       training batch
//! θ̂_j     = θ_j − α_j g_j                        lookahead
//! h_j     = ∂ L_val(θ̂) / ∂α_j = −⟨∇_j L_val(θ̂), g_j⟩
//! α'_j    = clamp(α_j − η h_j)                   constant hyper-LR
//!        or clamp(α_j (1 − β h_j))               proportional hyper-LR
//! θ_j    ← θ_j − α'_j g_j                        real update, same g_j
//! ```
//!
//! The hypergradient is exact for a one-step SGD lookahead: θ̂_j depends on
//! α_j only through `−α_j g_j`, so `∂θ̂_j/∂α_j = −g_j` and the chain rule
//! gives the inner product above. No second-order terms are involved, so an
//! iteration costs two forward and two backward passes.

mod trace;

pub use trace::LrTrace;

use std::time::Instant;

use indexmap::IndexMap;

use crate::data::{Batch, BatchStream, Dataset, TransferTask};
use crate::error::{Error, Result};
use crate::nn::{accuracy, Model, Params};
use crate::tensor::{compute_loss, GradientSnapshot, LossKind};

pub const DEFAULT_LR_MIN: f64 = 1e-6;
pub const DEFAULT_LR_MAX: f64 = 1e-2;

/// Per-layer hypergradients `h_j`, keyed by group name in depth order.
pub type Hypergradient = IndexMap<String, f64>;

/// The per-layer step sizes being learned, with their clamp bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningRates {
    alpha: IndexMap<String, f64>,
    lo: f64,
    hi: f64,
    iteration: u64,
}

impl LearningRates {
    /// Every layer starts at `alpha0` (must lie in `[lo, hi]`, `0 < lo <= hi`).
    pub fn uniform<S: AsRef<str>>(layers: &[S], alpha0: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "invalid LR bounds [{lo}, {hi}]"
            )));
        }
        if !(lo..=hi).contains(&alpha0) {
            return Err(Error::InvalidArgument(format!(
                "initial LR {alpha0} outside [{lo}, {hi}]"
            )));
        }
        Ok(LearningRates {
            alpha: layers
                .iter()
                .map(|l| (l.as_ref().to_string(), alpha0))
                .collect(),
            lo,
            hi,
            iteration: 0,
        })
    }

    /// [`LearningRates::uniform`] with the default bounds `[1e-6, 1e-2]`.
    pub fn with_defaults<S: AsRef<str>>(layers: &[S], alpha0: f64) -> Result<Self> {
        Self::uniform(layers, alpha0, DEFAULT_LR_MIN, DEFAULT_LR_MAX)
    }

    pub fn get(&self, layer: &str) -> Option<f64> {
        self.alpha.get(layer).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.alpha.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn values(&self) -> Vec<f64> {
        self.alpha.values().copied().collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.alpha.keys().cloned().collect()
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn as_map(&self) -> &IndexMap<String, f64> {
        &self.alpha
    }

    /// Maps every α_j to `min(hi, max(lo, α_j))`.
    pub fn clamp(&self) -> LearningRates {
        let (lo, hi) = (self.lo, self.hi);
        LearningRates {
            alpha: self
                .alpha
                .iter()
                .map(|(k, &a)| (k.clone(), a.max(lo).min(hi)))
                .collect(),
            ..*self
        }
    }

    /// Overrides one layer's raw value, without clamping.
    pub fn set_unclamped(&mut self, layer: &str, value: f64) -> Result<()> {
        match self.alpha.get_mut(layer) {
            Some(a) => {
                *a = value;
                Ok(())
            }
            None => Err(Error::LayerMismatch {
                expected: self.names(),
                actual: vec![layer.to_string()],
            }),
        }
    }
}

/// Free-function form of [`LearningRates::clamp`].
pub fn clamp(lrs: &LearningRates) -> LearningRates {
    lrs.clamp()
}

/// How the hypergradient moves the learning rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HyperLrPolicy {
    /// `α ← α − η h`
    Constant { eta: f64 },
    /// `α ← α (1 − β h)`, i.e. hyper-LR `η = β α`
    Proportional { beta: f64 },
}

impl HyperLrPolicy {
    /// Rejects negative or non-finite coefficients. Zero is accepted: it
    /// freezes the learning rates and reduces the method to plain SGD.
    pub fn validate(&self) -> Result<()> {
        let (name, v) = match *self {
            HyperLrPolicy::Constant { eta } => ("eta", eta),
            HyperLrPolicy::Proportional { beta } => ("beta", beta),
        };
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "{name} must be finite and >= 0, got {v}"
            )));
        }
        Ok(())
    }
}

/// Where the validation batch for the hypergradient comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationMode {
    /// A held-out validation split.
    SeparateSet,
    /// The upcoming training batch, not yet used for any update.
    HeldOutTrainingBatch,
}

/// Observability record for one meta-iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaStepReport {
    pub iteration: u64,
    pub hypergradient: Hypergradient,
    pub alpha_before: IndexMap<String, f64>,
    pub alpha_after: IndexMap<String, f64>,
    pub train_loss: f64,
    /// Validation loss at the lookahead parameters.
    pub val_loss: f64,
}

fn check_layers(
    params: &Params,
    lrs: Option<&LearningRates>,
    grads: &GradientSnapshot,
) -> Result<()> {
    let names = params.names();
    if let Some(lrs) = lrs {
        if lrs.names() != names {
            return Err(Error::LayerMismatch {
                expected: names,
                actual: lrs.names(),
            });
        }
    }
    if grads.names() != names {
        return Err(Error::LayerMismatch {
            expected: names,
            actual: grads.names(),
        });
    }
    for g in params.groups() {
        let gt = grads.get(g.name()).expect("names checked");
        let congruent = gt.len() == g.tensors().count()
            && g.tensors().zip(gt).all(|(p, q)| p.shape() == q.shape());
        if !congruent {
            return Err(Error::ShapeMismatch {
                context: format!("gradient of {}", g.name()),
                expected: g.tensors().flat_map(|t| t.shape().to_vec()).collect(),
                actual: gt.iter().flat_map(|t| t.shape().to_vec()).collect(),
            });
        }
    }
    Ok(())
}

/// `θ_j − rate_j · g_j` for every group; groups whose rate is `None` are
/// copied unchanged. `rates` follows depth order.
pub fn sgd_step(
    params: &Params,
    rates: &[Option<f64>],
    grads: &GradientSnapshot,
) -> Result<Params> {
    check_layers(params, None, grads)?;
    if rates.len() != params.groups().len() {
        return Err(Error::InvalidArgument(format!(
            "{} rates for {} layers",
            rates.len(),
            params.groups().len()
        )));
    }
    let depth_of: IndexMap<&str, usize> = params
        .groups()
        .iter()
        .enumerate()
        .map(|(i, g)| (g.name(), i))
        .collect();
    params.map_tensors(|group, ti, theta| {
        let j = depth_of[group.name()];
        match rates[j] {
            Some(rate) => theta.sub_scaled(&grads.get(group.name()).expect("checked")[ti], rate),
            None => Ok(theta.clone()),
        }
    })
}

/// Lookahead parameters `θ̂_j = θ_j − α_j g_j`; `params` is not modified.
pub fn lookahead(
    params: &Params,
    lrs: &LearningRates,
    g_train: &GradientSnapshot,
) -> Result<Params> {
    check_layers(params, Some(lrs), g_train)?;
    let rates: Vec<Option<f64>> = lrs.values().into_iter().map(Some).collect();
    sgd_step(params, &rates, g_train)
}

/// `h_j = −⟨g_val_j(θ̂), g_train_j(θ)⟩` per layer.
pub fn hypergradient(
    g_train: &GradientSnapshot,
    g_val_at_lookahead: &GradientSnapshot,
) -> Result<Hypergradient> {
    g_train.check_congruent(g_val_at_lookahead)?;
    g_train
        .names()
        .into_iter()
        .map(|name| {
            let dot = g_val_at_lookahead.layer_dot(g_train, &name)?;
            Ok((name, -dot))
        })
        .collect()
}

/// Applies one hyper-LR step and the clamp, advancing the iteration count.
pub fn update_lrs(
    lrs: &LearningRates,
    h: &Hypergradient,
    policy: HyperLrPolicy,
) -> Result<LearningRates> {
    policy.validate()?;
    if h.keys().ne(lrs.alpha.keys()) {
        return Err(Error::LayerMismatch {
            expected: lrs.names(),
            actual: h.keys().cloned().collect(),
        });
    }
    let mut alpha = IndexMap::with_capacity(lrs.alpha.len());
    for (name, &a) in &lrs.alpha {
        let hj = h[name];
        if !hj.is_finite() {
            return Err(Error::NonFiniteHypergradient {
                layer: name.clone(),
                iteration: lrs.iteration,
            });
        }
        let next = match policy {
            HyperLrPolicy::Constant { eta } => a - eta * hj,
            HyperLrPolicy::Proportional { beta } => a * (1.0 - beta * hj),
        };
        alpha.insert(name.clone(), next);
    }
    let mut out = LearningRates {
        alpha,
        lo: lrs.lo,
        hi: lrs.hi,
        iteration: lrs.iteration + 1,
    }
    .clamp();
    out.iteration = lrs.iteration + 1;
    Ok(out)
}

/// Real update `θ_j^{t+1} = θ_j − α'_j g_j`, reusing the training gradient
/// from the lookahead.
pub fn apply_update(
    params: &Params,
    lrs_updated: &LearningRates,
    g_train: &GradientSnapshot,
) -> Result<Params> {
    lookahead(params, lrs_updated, g_train)
}

fn diverged(iteration: u64, err: Error) -> Error {
    match err {
        Error::NonFinite(_) => Error::Diverged {
            iteration: iteration as usize,
            loss: f64::NAN,
        },
        other => other,
    }
}

/// One online iteration: two forward/backward pairs, an LR update and the
/// parameter update. `model` and `lrs` are advanced in place.
pub fn meta_iteration(
    model: &mut Model,
    train: &Batch,
    val: &Batch,
    lrs: &mut LearningRates,
    policy: HyperLrPolicy,
    loss: LossKind,
) -> Result<MetaStepReport> {
    if train.len() != val.len() {
        return Err(Error::InvalidArgument(format!(
            "training batch has {} samples, validation batch {}",
            train.len(),
            val.len()
        )));
    }
    let t = lrs.iteration;
    let cache = model.forward(&train.inputs).map_err(|e| diverged(t, e))?;
    let train_loss = compute_loss(cache.output(), &train.labels, loss)?;
    if !train_loss.is_finite() {
        return Err(Error::Diverged {
            iteration: t as usize,
            loss: train_loss,
        });
    }
    let g_train = model
        .backward(&cache, &train.labels, loss)
        .map_err(|e| diverged(t, e))?;

    let theta_hat = lookahead(model.params(), lrs, &g_train)?;
    let cache_val = model
        .forward_with(&theta_hat, &val.inputs)
        .map_err(|e| diverged(t, e))?;
    let val_loss = compute_loss(cache_val.output(), &val.labels, loss)?;
    let g_val = model
        .backward_with(&theta_hat, &cache_val, &val.labels, loss)
        .map_err(|e| diverged(t, e))?;

    let h = hypergradient(&g_train, &g_val)?;
    let updated = update_lrs(lrs, &h, policy)?;
    let next = apply_update(model.params(), &updated, &g_train)?;
    model.set_params(next)?;

    let report = MetaStepReport {
        iteration: t,
        hypergradient: h,
        alpha_before: lrs.alpha.clone(),
        alpha_after: updated.alpha.clone(),
        train_loss,
        val_loss,
    };
    *lrs = updated;
    Ok(report)
}

/// Draws the batch the hypergradient is evaluated on.
///
/// `SeparateSet` takes the next batch of the validation stream.
/// `HeldOutTrainingBatch` takes the upcoming training batch without consuming
/// it, with rows of `current` swapped out if a reshuffle would repeat them.
pub fn select_validation_batch(
    mode: ValidationMode,
    val_stream: Option<&mut BatchStream<'_>>,
    train_stream: &BatchStream<'_>,
    current: &Batch,
) -> Result<Batch> {
    match mode {
        ValidationMode::SeparateSet => match val_stream {
            Some(s) => Ok(s.next_batch()),
            None => Err(Error::InvalidArgument(
                "separate-set validation needs a nonempty validation split".into(),
            )),
        },
        ValidationMode::HeldOutTrainingBatch => train_stream.peek_disjoint(&current.indices),
    }
}

/// Settings for one fine-tuning run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaLrConfig {
    pub alpha0: f64,
    pub lr_min: f64,
    pub lr_max: f64,
    pub policy: HyperLrPolicy,
    pub validation: ValidationMode,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for MetaLrConfig {
    fn default() -> Self {
        MetaLrConfig {
            alpha0: 1e-3,
            lr_min: DEFAULT_LR_MIN,
            lr_max: DEFAULT_LR_MAX,
            policy: HyperLrPolicy::Proportional { beta: 0.1 },
            validation: ValidationMode::HeldOutTrainingBatch,
            batch_size: 32,
            iterations: 2000,
            seed: 0,
            loss: LossKind::CrossEntropy,
        }
    }
}

/// Loss and accuracy on the data a run trained on, the validation split and
/// the test split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    /// Monotonic wall-clock of the optimization loop only.
    pub wall_clock_secs: f64,
}

/// Full-batch loss and accuracy.
pub fn evaluate(model: &Model, dataset: &Dataset, loss: LossKind) -> Result<(f64, f64)> {
    let cache = model.forward(dataset.inputs())?;
    let l = compute_loss(cache.output(), dataset.labels(), loss)?;
    let acc = match loss {
        LossKind::CrossEntropy => accuracy(cache.output(), dataset.labels()),
        LossKind::MeanSquaredError => f64::NAN,
    };
    Ok((l, acc))
}

pub(crate) fn collect_metrics(
    model: &Model,
    trained_on: &Dataset,
    task: &TransferTask,
    loss: LossKind,
    wall_clock_secs: f64,
) -> Result<Metrics> {
    let (train_loss, train_accuracy) = evaluate(model, trained_on, loss)?;
    let (val_loss, val_accuracy) = evaluate(model, &task.target_val, loss)?;
    let (test_loss, test_accuracy) = evaluate(model, &task.target_test, loss)?;
    Ok(Metrics {
        train_loss,
        train_accuracy,
        val_loss,
        val_accuracy,
        test_loss,
        test_accuracy,
        wall_clock_secs,
    })
}

/// Seed of the training-batch stream for run seed `seed`. Shared with the
/// baselines so that equal seeds see equal batch sequences.
pub fn train_stream_seed(seed: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x74_7261_696e
}

pub(crate) fn val_stream_seed(seed: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x76_616c
}

/// Training data a mode consumes: the train split with a separate
/// validation set, or the whole labeled pool otherwise.
pub fn training_set(task: &TransferTask, mode: ValidationMode) -> Dataset {
    match mode {
        ValidationMode::SeparateSet => task.target_train.clone(),
        ValidationMode::HeldOutTrainingBatch => task.target_pool(),
    }
}

/// Result of [`train`]: per-iteration trace, final learning rates, metrics.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub trace: LrTrace,
    pub final_lrs: LearningRates,
    pub metrics: Metrics,
}

/// Runs `config.iterations` meta-iterations on the target task, mutating
/// `model` in place.
pub fn train(
    model: &mut Model,
    task: &TransferTask,
    config: &MetaLrConfig,
) -> Result<TrainOutcome> {
    config.policy.validate()?;
    let train_data = training_set(task, config.validation);
    let mut lrs = LearningRates::uniform(
        &model.layer_groups(),
        config.alpha0,
        config.lr_min,
        config.lr_max,
    )?;
    let mut train_stream = BatchStream::new(
        &train_data,
        config.batch_size,
        train_stream_seed(config.seed),
    )?;
    let mut val_stream = match config.validation {
        ValidationMode::SeparateSet => {
            if task.target_val.is_empty() {
                return Err(Error::InvalidArgument("validation split is empty".into()));
            }
            Some(BatchStream::new(
                &task.target_val,
                config.batch_size,
                val_stream_seed(config.seed),
            )?)
        }
        ValidationMode::HeldOutTrainingBatch => {
            if train_data.len() < 2 * config.batch_size {
                return Err(Error::InvalidArgument(format!(
                    "held-out training batches need at least {} samples, have {}",
                    2 * config.batch_size,
                    train_data.len()
                )));
            }
            None
        }
    };
    let mut trace = LrTrace::new(model.layer_groups());
    let start = Instant::now();
    for _ in 0..config.iterations {
        let batch = train_stream.next_batch();
        let val = select_validation_batch(
            config.validation,
            val_stream.as_mut(),
            &train_stream,
            &batch,
        )?;
        let report = meta_iteration(model, &batch, &val, &mut lrs, config.policy, config.loss)?;
        trace.push(report);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let metrics = collect_metrics(model, &train_data, task, config.loss, elapsed)?;
    Ok(TrainOutcome {
        trace,
        final_lrs: lrs,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, ModelSpec};
    use crate::tensor::Tensor;

    fn scalar_params(theta: f64) -> Params {
        let mut m = Model::new(ModelSpec {
            input_shape: vec![1],
            layers: vec![LayerSpec::Linear {
                inputs: 1,
                outputs: 1,
                bias: false,
            }],
            seed: 0,
        })
        .unwrap();
        m.params_mut().groups_mut()[0]
            .tensors_mut()
            .next()
            .unwrap()
            .data_mut()[0] = theta;
        m.params().clone()
    }

    fn snapshot(name: &str, values: &[f64]) -> GradientSnapshot {
        GradientSnapshot::from_layers(
            [(
                name.to_string(),
                vec![Tensor::new(vec![1, values.len()], values.to_vec()).unwrap()],
            )],
            1,
        )
    }

    fn value(p: &Params) -> f64 {
        p.groups()[0].weight().data()[0]
    }

    #[test]
    fn lookahead_direct_formula() {
        let p = scalar_params(1.0);
        let lrs = LearningRates::uniform(&["fc1"], 0.1, 1e-6, 1.0).unwrap();
        let th = lookahead(&p, &lrs, &snapshot("fc1", &[2.0])).unwrap();
        assert!((value(&th) - 0.8).abs() < 1e-15);
        assert_eq!(value(&p), 1.0);
        let same = lookahead(&p, &lrs, &snapshot("fc1", &[0.0])).unwrap();
        assert_eq!(same, p);
    }

    #[test]
    fn lookahead_rejects_layer_mismatch() {
        let p = scalar_params(1.0);
        let lrs = LearningRates::with_defaults(&["fc1"], 1e-3).unwrap();
        assert!(matches!(
            lookahead(&p, &lrs, &snapshot("fc9", &[1.0])),
            Err(Error::LayerMismatch { .. })
        ));
        let other = LearningRates::with_defaults(&["fc2"], 1e-3).unwrap();
        assert!(lookahead(&p, &other, &snapshot("fc1", &[1.0])).is_err());
        assert!(matches!(
            lookahead(&p, &lrs, &snapshot("fc1", &[1.0, 2.0])),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn hypergradient_direct_formula() {
        let gt = snapshot("a", &[1.0, 2.0]);
        let gv = snapshot("a", &[3.0, -1.0]);
        assert_eq!(hypergradient(&gt, &gv).unwrap()["a"], -1.0);
        let zero = snapshot("a", &[0.0, 0.0]);
        assert_eq!(hypergradient(&zero, &gv).unwrap()["a"], 0.0);
        assert!(hypergradient(&gt, &snapshot("a", &[1.0])).is_err());
    }

    #[test]
    fn update_rules() {
        let lrs = LearningRates::with_defaults(&["a"], 1e-3).unwrap();
        let h = |v: f64| -> Hypergradient { [("a".to_string(), v)].into_iter().collect() };

        for policy in [
            HyperLrPolicy::Constant { eta: 1e-3 },
            HyperLrPolicy::Proportional { beta: 0.1 },
        ] {
            let same = update_lrs(&lrs, &h(0.0), policy).unwrap();
            assert_eq!(same.get("a"), Some(1e-3));
            assert_eq!(same.iteration(), 1);
        }

        let up = update_lrs(&lrs, &h(-2.0), HyperLrPolicy::Proportional { beta: 0.1 }).unwrap();
        assert!((up.get("a").unwrap() - 1.2e-3).abs() < 1e-18);

        // 1e-3 − 1e-3·2 = −1e-3, truncated to the lower bound
        let down = update_lrs(&lrs, &h(2.0), HyperLrPolicy::Constant { eta: 1e-3 }).unwrap();
        assert_eq!(down.get("a"), Some(1e-6));

        assert!(matches!(
            update_lrs(&lrs, &h(f64::NAN), HyperLrPolicy::Constant { eta: 1e-3 }),
            Err(Error::NonFiniteHypergradient { .. })
        ));
        assert!(update_lrs(&lrs, &h(0.0), HyperLrPolicy::Proportional { beta: -1.0 }).is_err());
    }

    #[test]
    fn clamp_bounds() {
        let mut lrs = LearningRates::with_defaults(&["a", "b", "c"], 1e-3).unwrap();
        lrs.set_unclamped("a", 5e-7).unwrap();
        lrs.set_unclamped("b", 2e-2).unwrap();
        let c = clamp(&lrs);
        assert_eq!(c.values(), vec![1e-6, 1e-2, 1e-3]);
    }

    #[test]
    fn learning_rates_validate_init() {
        assert!(LearningRates::with_defaults(&["a"], 0.0).is_err());
        assert!(LearningRates::with_defaults(&["a"], 0.5).is_err());
        assert!(LearningRates::uniform(&["a"], 1e-3, 0.0, 1.0).is_err());
    }

    #[test]
    fn apply_update_formula_and_consistency() {
        let p = scalar_params(1.0);
        let g = snapshot("fc1", &[2.0]);
        let lrs = LearningRates::uniform(&["fc1"], 0.05, 1e-6, 1.0).unwrap();
        let next = apply_update(&p, &lrs, &g).unwrap();
        assert!((value(&next) - 0.9).abs() < 1e-15);
        // α' = α ⇒ update equals the lookahead
        assert_eq!(next, lookahead(&p, &lrs, &g).unwrap());
    }

    #[test]
    fn sgd_step_skips_frozen_layers() {
        let p = scalar_params(-0.0);
        let g = snapshot("fc1", &[3.0]);
        let same = sgd_step(&p, &[None], &g).unwrap();
        assert_eq!(value(&same).to_bits(), (-0.0f64).to_bits());
        assert!(sgd_step(&p, &[], &g).is_err());
    }
}
