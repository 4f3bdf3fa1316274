//! Experiment orchestration: pretrain on the source domain, re-initialize the
//! head, fine-tune on the target with one scheme, evaluate, repeat per seed.

mod config;
pub mod oracle;
mod report;

pub use config::{ExperimentConfig, ModelConfig, OracleConfig, PretrainConfig, Scheme, TaskSpec};
pub use report::{
    compare, emit_ablation, emit_oracle, emit_report, read_metrics_csv, summary_text,
};

use indexmap::IndexMap;

use crate::baselines::{
    finetune_constant, finetune_frozen_prefix, layerwise_sweep, run_sgd, BaselineScheme, SgdConfig,
    TrainOn,
};
use crate::data::{
    load_csv, split_train_validation, synth_shared_features_task, CsvSchema, TransferTask,
};
use crate::error::{Error, Result};
use crate::nn::{build_mlp, Model, ModelSpec};
use crate::optimizer::{
    train, HyperLrPolicy, LearningRates, LrTrace, MetaLrConfig, Metrics, ValidationMode,
};
use crate::stats::{mean, std_dev};
use crate::tensor::LossKind;
use oracle::{
    bilevel_oracle, time_averaged_alpha, AlphaGrid, BilevelProblem, ModelProblem, OracleResult,
};

type MetricFn = fn(&Metrics) -> f64;

/// Fraction of the final iterations averaged into a run's "final" α.
pub const FINAL_ALPHA_WINDOW: f64 = 0.1;

/// Outcome of one seed.
#[derive(Debug, Clone)]
pub struct SeedRecord {
    pub seed: u64,
    pub metrics: Metrics,
    /// Per-layer α averaged over the last [`FINAL_ALPHA_WINDOW`] of the run.
    pub final_alpha: Option<IndexMap<String, f64>>,
    /// Frozen prefix length picked by the layer-wise sweep.
    pub frozen_prefix: Option<usize>,
    pub trace: Option<LrTrace>,
    /// Set once the trace has been written.
    pub trace_path: Option<std::path::PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub label: String,
    pub fingerprint: String,
    pub config_text: String,
    pub records: Vec<SeedRecord>,
}

impl RunReport {
    pub fn seeds(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.seed).collect()
    }

    pub fn test_accuracies(&self) -> Vec<f64> {
        self.metric(|m| m.test_accuracy)
    }

    pub fn metric(&self, f: impl Fn(&Metrics) -> f64) -> Vec<f64> {
        self.records.iter().map(|r| f(&r.metrics)).collect()
    }

    /// `(name, mean, std)` over seeds for every reported metric.
    pub fn aggregate(&self) -> Vec<(&'static str, f64, f64)> {
        let fields: [(&str, MetricFn); 7] = [
            ("train_loss", |m| m.train_loss),
            ("train_accuracy", |m| m.train_accuracy),
            ("val_loss", |m| m.val_loss),
            ("val_accuracy", |m| m.val_accuracy),
            ("test_loss", |m| m.test_loss),
            ("test_accuracy", |m| m.test_accuracy),
            ("wall_clock_secs", |m| m.wall_clock_secs),
        ];
        fields
            .iter()
            .map(|(name, f)| {
                let xs = self.metric(f);
                (*name, mean(&xs), std_dev(&xs))
            })
            .collect()
    }
}

pub fn build_task(cfg: &ExperimentConfig) -> Result<TransferTask> {
    match &cfg.task {
        TaskSpec::Synthetic { seed, config } => synth_shared_features_task(*seed, config),
        TaskSpec::Csv {
            source,
            target,
            test,
            classes,
            val_fraction,
            split_seed,
        } => {
            let schema = CsvSchema {
                num_classes: *classes,
                num_features: None,
            };
            let source = load_csv(source, schema)?;
            let schema = CsvSchema {
                num_features: Some(source.feature_shape()[0]),
                ..schema
            };
            let pool = load_csv(target, schema)?;
            let target_test = load_csv(test, schema)?;
            let (target_train, target_val) =
                split_train_validation(&pool, *val_fraction, *split_seed)?;
            Ok(TransferTask {
                source,
                target_train,
                target_val,
                target_test,
                transferability: "unknown: loaded from files".into(),
            })
        }
    }
}

/// Builds the MLP for `seed`, trains every layer on the source domain and
/// re-initializes the configured number of trailing layers.
pub fn pretrained_model(cfg: &ExperimentConfig, task: &TransferTask, seed: u64) -> Result<Model> {
    let inputs: usize = task.source.feature_shape().iter().product();
    let mut sizes = vec![inputs];
    sizes.extend(&cfg.model.hidden);
    sizes.push(task.source.num_classes());
    let mut model = build_mlp(ModelSpec::mlp(&sizes, seed))?;
    if cfg.pretrain.iterations > 0 {
        let source = task.source.reshape_features(&[inputs])?;
        let rates = vec![Some(cfg.pretrain.lr); model.depth()];
        let sgd = SgdConfig {
            batch_size: cfg.pretrain.batch_size,
            iterations: cfg.pretrain.iterations,
            seed: seed.wrapping_add(100),
            loss: LossKind::CrossEntropy,
            train_on: TrainOn::Pool,
        };
        run_sgd(&mut model, &source, &rates, &sgd)?;
    }
    if cfg.model.reinit > 0 {
        model.reinit_head(cfg.model.reinit, seed.wrapping_add(1000))?;
    }
    Ok(model)
}

/// Fine-tunes a copy of `model` on the target task with the configured scheme.
pub fn fine_tune(
    cfg: &ExperimentConfig,
    task: &TransferTask,
    model: &Model,
    seed: u64,
) -> Result<SeedRecord> {
    let sgd = SgdConfig {
        batch_size: cfg.batch_size,
        iterations: cfg.iterations,
        seed,
        loss: LossKind::CrossEntropy,
        train_on: TrainOn::Pool,
    };
    let mut m = model.clone();
    let (mut final_alpha, mut frozen_prefix, mut trace) = (None, None, None);
    let metrics = match cfg.scheme {
        Scheme::MetaLr {
            alpha0,
            policy,
            validation,
            lr_min,
            lr_max,
        } => {
            let out = train(
                &mut m,
                task,
                &MetaLrConfig {
                    alpha0,
                    lr_min,
                    lr_max,
                    policy,
                    validation,
                    batch_size: cfg.batch_size,
                    iterations: cfg.iterations,
                    seed,
                    loss: LossKind::CrossEntropy,
                },
            )?;
            final_alpha = Some(
                out.trace
                    .layers()
                    .iter()
                    .map(|l| {
                        let a = out.trace.tail_mean_alpha(l, FINAL_ALPHA_WINDOW);
                        (l.clone(), a.unwrap_or(alpha0))
                    })
                    .collect(),
            );
            if cfg.trace {
                trace = Some(out.trace);
            }
            out.metrics
        }
        Scheme::Baseline(BaselineScheme::AllLayers { alpha }) => {
            finetune_constant(&mut m, task, alpha, &sgd)?
        }
        Scheme::Baseline(BaselineScheme::LastLayerOnly { alpha }) => {
            let k = m.depth() - 1;
            frozen_prefix = Some(k);
            finetune_frozen_prefix(&mut m, task, k, alpha, &sgd)?
        }
        Scheme::Baseline(BaselineScheme::LayerwiseSweep { alpha }) => {
            let sweep = layerwise_sweep(&m, task, alpha, &sgd)?;
            frozen_prefix = Some(sweep.best_k);
            Metrics {
                wall_clock_secs: sweep.wall_clock_secs,
                ..sweep.best().metrics
            }
        }
    };
    Ok(SeedRecord {
        seed,
        metrics,
        final_alpha,
        frozen_prefix,
        trace,
        trace_path: None,
    })
}

fn run_on(cfg: &ExperimentConfig, task: &TransferTask, models: &[Model]) -> Result<RunReport> {
    let records = cfg
        .seeds
        .iter()
        .zip(models)
        .map(|(&seed, model)| fine_tune(cfg, task, model, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunReport {
        label: cfg.scheme.label(),
        fingerprint: cfg.fingerprint(),
        config_text: cfg.to_text(),
        records,
    })
}

/// Runs the full pipeline for every seed in `cfg.seeds`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let task = build_task(cfg)?;
    let models = cfg
        .seeds
        .iter()
        .map(|&s| pretrained_model(cfg, &task, s))
        .collect::<Result<Vec<_>>>()?;
    run_on(cfg, &task, &models)
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub label: String,
    pub report: RunReport,
}

/// The constant-LR baseline followed by the four online variants.
#[derive(Debug, Clone)]
pub struct Ablation {
    pub rows: Vec<AblationRow>,
}

impl Ablation {
    pub fn row(&self, label: &str) -> Option<&RunReport> {
        self.rows
            .iter()
            .find(|r| r.label == label)
            .map(|r| &r.report)
    }

    /// One line per row: label, mean ± std test accuracy.
    pub fn table(&self) -> String {
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(0);
        let mut out = String::new();
        for r in &self.rows {
            let acc = r.report.test_accuracies();
            out.push_str(&format!(
                "{:width$}  {:.6} ± {:.6}\n",
                r.label,
                mean(&acc),
                std_dev(&acc)
            ));
        }
        out
    }
}

pub const ABLATION_LABELS: [&str; 5] = [
    "baseline",
    "metalr",
    "+proportional",
    "+trainset",
    "+proportional +trainset",
];

/// Runs the baseline and the four online variants (constant or proportional
/// hyper-LR, separate or held-out-training-batch validation) on shared
/// pretrained models.
pub fn ablation_grid(base: &ExperimentConfig) -> Result<Ablation> {
    base.validate()?;
    let Scheme::MetaLr {
        alpha0,
        policy,
        lr_min,
        lr_max,
        ..
    } = base.scheme
    else {
        return Err(Error::InvalidArgument(
            "the ablation grid needs a metalr base config".into(),
        ));
    };
    let (eta, beta) = match policy {
        HyperLrPolicy::Constant { eta } => (eta, 0.1),
        HyperLrPolicy::Proportional { beta } => (1e-3, beta),
    };
    let meta = |policy, validation| Scheme::MetaLr {
        alpha0,
        policy,
        validation,
        lr_min,
        lr_max,
    };
    let constant = HyperLrPolicy::Constant { eta };
    let proportional = HyperLrPolicy::Proportional { beta };
    let schemes = [
        Scheme::Baseline(BaselineScheme::AllLayers { alpha: alpha0 }),
        meta(constant, ValidationMode::SeparateSet),
        meta(proportional, ValidationMode::SeparateSet),
        meta(constant, ValidationMode::HeldOutTrainingBatch),
        meta(proportional, ValidationMode::HeldOutTrainingBatch),
    ];

    let task = build_task(base)?;
    let models = base
        .seeds
        .iter()
        .map(|&s| pretrained_model(base, &task, s))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(schemes.len());
    for (label, scheme) in ABLATION_LABELS.iter().zip(schemes) {
        let cfg = ExperimentConfig {
            scheme,
            ..base.clone()
        };
        rows.push(AblationRow {
            label: label.to_string(),
            report: run_on(&cfg, &task, &models)?,
        });
    }
    Ok(Ablation { rows })
}

/// Grid-search optimum of the tiny problem next to the online method's
/// learned rates.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub grid: AlphaGrid,
    pub oracle: OracleResult,
    /// Online α averaged over the whole run.
    pub online_alpha: Vec<f64>,
    /// Validation loss of inner training at [`OracleReport::online_alpha`].
    pub online_alpha_loss: f64,
    /// Validation loss of inner training at the uniform initial α.
    pub initial_loss: f64,
    /// Validation loss at the end of the online run itself.
    pub trajectory_loss: f64,
    pub trace: LrTrace,
}

impl OracleReport {
    /// `online_alpha_loss / best grid loss`.
    pub fn loss_ratio(&self) -> f64 {
        self.online_alpha_loss / self.oracle.best_loss
    }

    /// Largest per-layer distance, in grid steps, between the online α and
    /// the grid argmin.
    pub fn grid_steps(&self) -> usize {
        (0..self.online_alpha.len())
            .map(|j| {
                let a = self.grid.nearest_index(j, self.online_alpha[j]);
                let b = self.grid.nearest_index(j, self.oracle.best_alpha[j]);
                a.abs_diff(b)
            })
            .max()
            .unwrap_or(0)
    }
}

/// Grid-searches the configured tiny problem over `[lr_min, lr_max]` and
/// runs the configured online scheme on the same problem.
pub fn run_oracle(cfg: &ExperimentConfig) -> Result<OracleReport> {
    cfg.validate()?;
    let Scheme::MetaLr {
        alpha0,
        policy,
        lr_min,
        lr_max,
        ..
    } = cfg.scheme
    else {
        return Err(Error::InvalidArgument(
            "the oracle comparison needs a metalr config".into(),
        ));
    };
    let problem = ModelProblem::teacher_student(cfg.oracle.seed, cfg.oracle.problem)?;
    let grid = AlphaGrid::log_spaced(lr_min, lr_max, cfg.oracle.grid_points, problem.layers())?;
    let result = bilevel_oracle(&problem, &grid)?;
    let layers = problem.model.layer_groups();
    let (trace, model) = problem.run_online(
        LearningRates::uniform(&layers, alpha0, lr_min, lr_max)?,
        policy,
    )?;
    let online_alpha = time_averaged_alpha(&trace);
    Ok(OracleReport {
        online_alpha_loss: problem.validation_loss(&online_alpha)?,
        initial_loss: problem.validation_loss(&vec![alpha0; layers.len()])?,
        trajectory_loss: problem.val_loss_of(&model)?,
        online_alpha,
        grid,
        oracle: result,
        trace,
    })
}
