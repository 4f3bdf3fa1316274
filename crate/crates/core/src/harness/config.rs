//! Flat `key = value` experiment files.
//!
//! ```text
//! # comments and blank lines are ignored
//! task.kind = synthetic
//! task.label_noise = 0.05
//! scheme.kind = metalr
//! scheme.policy = proportional
//! run.seeds = 0, 1, 2, 3, 4
//! ```
//!
//! Every key is optional and falls back to the reference value; a key the
//! schema does not know is an error naming that key.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::baselines::BaselineScheme;
use crate::data::SynthTaskConfig;
use crate::error::{Error, Result};
use crate::optimizer::{HyperLrPolicy, ValidationMode, DEFAULT_LR_MAX, DEFAULT_LR_MIN};

use super::oracle::TeacherStudent;

#[derive(Debug, Clone, PartialEq)]
pub enum TaskSpec {
    Synthetic {
        seed: u64,
        config: SynthTaskConfig,
    },
    /// Headered CSV files; the target file is split into train/validation.
    Csv {
        source: PathBuf,
        target: PathBuf,
        test: PathBuf,
        classes: usize,
        val_fraction: f64,
        split_seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Hidden widths of the MLP; input and output sizes come from the task.
    pub hidden: Vec<usize>,
    /// Number of trailing layers re-initialized after pretraining.
    pub reinit: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    pub lr: f64,
    pub iterations: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    MetaLr {
        alpha0: f64,
        policy: HyperLrPolicy,
        validation: ValidationMode,
        lr_min: f64,
        lr_max: f64,
    },
    Baseline(BaselineScheme),
}

impl Scheme {
    pub fn label(&self) -> String {
        match *self {
            Scheme::MetaLr {
                policy, validation, ..
            } => {
                let p = match policy {
                    HyperLrPolicy::Constant { eta } => format!("constant eta={eta}"),
                    HyperLrPolicy::Proportional { beta } => format!("proportional beta={beta}"),
                };
                let v = match validation {
                    ValidationMode::SeparateSet => "separate",
                    ValidationMode::HeldOutTrainingBatch => "trainset",
                };
                format!("metalr ({p}, {v})")
            }
            Scheme::Baseline(BaselineScheme::AllLayers { alpha }) => {
                format!("all_layers alpha={alpha}")
            }
            Scheme::Baseline(BaselineScheme::LastLayerOnly { alpha }) => {
                format!("last_layer alpha={alpha}")
            }
            Scheme::Baseline(BaselineScheme::LayerwiseSweep { alpha }) => {
                format!("layerwise_sweep alpha={alpha}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: TaskSpec,
    pub model: ModelConfig,
    pub pretrain: PretrainConfig,
    pub scheme: Scheme,
    pub batch_size: usize,
    pub iterations: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub trace: bool,
    pub oracle: OracleConfig,
}

/// Settings of the `oracle` verb: the tiny problem and its grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub seed: u64,
    pub grid_points: usize,
    pub problem: TeacherStudent,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            seed: 0,
            grid_points: 13,
            problem: TeacherStudent {
                inputs: 4,
                hidden: 4,
                samples: 200,
                noise: 0.3,
                input_scale: 5.0,
                steps: 1000,
            },
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: TaskSpec::Synthetic {
                seed: 42,
                config: SynthTaskConfig::default(),
            },
            model: ModelConfig {
                hidden: vec![16],
                reinit: 1,
            },
            pretrain: PretrainConfig {
                lr: 0.02,
                iterations: 3000,
                batch_size: 32,
            },
            scheme: Scheme::MetaLr {
                alpha0: 1e-3,
                policy: HyperLrPolicy::Proportional { beta: 0.1 },
                validation: ValidationMode::HeldOutTrainingBatch,
                lr_min: DEFAULT_LR_MIN,
                lr_max: DEFAULT_LR_MAX,
            },
            batch_size: 32,
            iterations: 2000,
            seeds: vec![0, 1, 2, 3, 4],
            output_dir: PathBuf::from("results"),
            trace: true,
            oracle: OracleConfig::default(),
        }
    }
}

fn config_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

/// Parsed `key = value` pairs, consumed as the schema reads them.
struct Entries {
    map: BTreeMap<String, String>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(config_err(
                    &format!("line {}", i + 1),
                    "expected `key = value`",
                ));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty()
                || !k
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
            {
                return Err(config_err(
                    &format!("line {}", i + 1),
                    format!("invalid key {k:?}"),
                ));
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(config_err(k, "duplicate key"));
            }
        }
        Ok(Entries { map })
    }

    fn take<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        match self.map.remove(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| config_err(key, format!("cannot parse {v:?}: {e}"))),
        }
    }

    fn take_str(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn take_list<T: FromStr>(&mut self, key: &str, default: Vec<T>) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        match self.map.remove(key) {
            None => Ok(default),
            Some(v) if v.is_empty() => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    let s = s.trim();
                    s.parse()
                        .map_err(|e| config_err(key, format!("cannot parse {s:?}: {e}")))
                })
                .collect(),
        }
    }

    fn take_bool(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.map.remove(key).as_deref() {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(config_err(
                key,
                format!("expected true or false, got {v:?}"),
            )),
        }
    }

    fn finish(self) -> Result<()> {
        match self.map.into_keys().next() {
            Some(k) => Err(config_err(&k, "unknown key")),
            None => Ok(()),
        }
    }
}

fn check(ok: bool, key: &str, reason: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(config_err(key, reason()))
    }
}

fn seed_list(seeds: &[u64]) -> String {
    seeds
        .iter()
        .map(u64::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut e = Entries::parse(text)?;
        let d = ExperimentConfig::default();
        let synth = SynthTaskConfig::default();

        let task = match e.take_str("task.kind").as_deref().unwrap_or("synthetic") {
            "synthetic" => TaskSpec::Synthetic {
                seed: e.take("task.seed", 42)?,
                config: SynthTaskConfig {
                    input_dim: e.take("task.input_dim", synth.input_dim)?,
                    feature_dim: e.take("task.feature_dim", synth.feature_dim)?,
                    classes: e.take("task.classes", synth.classes)?,
                    n_source: e.take("task.n_source", synth.n_source)?,
                    n_target: e.take("task.n_target", synth.n_target)?,
                    n_test: e.take("task.n_test", synth.n_test)?,
                    label_noise: e.take("task.label_noise", synth.label_noise)?,
                    val_fraction: e.take("task.val_fraction", synth.val_fraction)?,
                },
            },
            "csv" => {
                let mut path = |key: &str| -> Result<PathBuf> {
                    e.take_str(key)
                        .map(PathBuf::from)
                        .ok_or_else(|| config_err(key, "required when task.kind = csv"))
                };
                let (source, target, test) = (
                    path("task.source")?,
                    path("task.target")?,
                    path("task.test")?,
                );
                TaskSpec::Csv {
                    source,
                    target,
                    test,
                    classes: e.take("task.classes", synth.classes)?,
                    val_fraction: e.take("task.val_fraction", synth.val_fraction)?,
                    split_seed: e.take("task.seed", 42)?,
                }
            }
            other => {
                return Err(config_err(
                    "task.kind",
                    format!("expected synthetic or csv, got {other:?}"),
                ))
            }
        };

        let model = ModelConfig {
            hidden: e.take_list("model.hidden", d.model.hidden.clone())?,
            reinit: e.take("model.reinit", d.model.reinit)?,
        };
        let pretrain = PretrainConfig {
            lr: e.take("pretrain.lr", d.pretrain.lr)?,
            iterations: e.take("pretrain.iterations", d.pretrain.iterations)?,
            batch_size: e.take("pretrain.batch_size", d.pretrain.batch_size)?,
        };

        let alpha: f64 = e.take("scheme.alpha", 1e-3)?;
        let scheme = match e.take_str("scheme.kind").as_deref().unwrap_or("metalr") {
            "metalr" => {
                let policy = match e
                    .take_str("scheme.policy")
                    .as_deref()
                    .unwrap_or("proportional")
                {
                    "proportional" => HyperLrPolicy::Proportional {
                        beta: e.take("scheme.beta", 0.1)?,
                    },
                    "constant" => HyperLrPolicy::Constant {
                        eta: e.take("scheme.eta", 1e-3)?,
                    },
                    other => {
                        return Err(config_err(
                            "scheme.policy",
                            format!("expected proportional or constant, got {other:?}"),
                        ))
                    }
                };
                let validation = match e
                    .take_str("scheme.validation")
                    .as_deref()
                    .unwrap_or("trainset")
                {
                    "trainset" => ValidationMode::HeldOutTrainingBatch,
                    "separate" => ValidationMode::SeparateSet,
                    other => {
                        return Err(config_err(
                            "scheme.validation",
                            format!("expected trainset or separate, got {other:?}"),
                        ))
                    }
                };
                Scheme::MetaLr {
                    alpha0: alpha,
                    policy,
                    validation,
                    lr_min: e.take("scheme.lr_min", DEFAULT_LR_MIN)?,
                    lr_max: e.take("scheme.lr_max", DEFAULT_LR_MAX)?,
                }
            }
            "all_layers" => Scheme::Baseline(BaselineScheme::AllLayers { alpha }),
            "last_layer" => Scheme::Baseline(BaselineScheme::LastLayerOnly { alpha }),
            "layerwise_sweep" => Scheme::Baseline(BaselineScheme::LayerwiseSweep { alpha }),
            other => {
                return Err(config_err(
                    "scheme.kind",
                    format!(
                        "expected metalr, all_layers, last_layer or layerwise_sweep, got {other:?}"
                    ),
                ))
            }
        };

        let od = OracleConfig::default();
        let oracle = OracleConfig {
            seed: e.take("oracle.seed", od.seed)?,
            grid_points: e.take("oracle.grid_points", od.grid_points)?,
            problem: TeacherStudent {
                inputs: e.take("oracle.inputs", od.problem.inputs)?,
                hidden: e.take("oracle.hidden", od.problem.hidden)?,
                samples: e.take("oracle.samples", od.problem.samples)?,
                noise: e.take("oracle.noise", od.problem.noise)?,
                input_scale: e.take("oracle.input_scale", od.problem.input_scale)?,
                steps: e.take("oracle.steps", od.problem.steps)?,
            },
        };

        let cfg = ExperimentConfig {
            task,
            model,
            pretrain,
            scheme,
            batch_size: e.take("train.batch_size", d.batch_size)?,
            iterations: e.take("train.iterations", d.iterations)?,
            seeds: e.take_list("run.seeds", d.seeds.clone())?,
            output_dir: e
                .take_str("output.dir")
                .map(PathBuf::from)
                .unwrap_or(d.output_dir),
            trace: e.take_bool("output.trace", d.trace)?,
            oracle,
        };
        e.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.task {
            TaskSpec::Synthetic { config: c, .. } => {
                check(c.input_dim > 0, "task.input_dim", || {
                    "must be positive".into()
                })?;
                check(c.feature_dim > 0, "task.feature_dim", || {
                    "must be positive".into()
                })?;
                check(c.classes >= 2, "task.classes", || {
                    "needs at least 2 classes".into()
                })?;
                check(c.n_source > 0, "task.n_source", || {
                    "must be positive".into()
                })?;
                check(c.n_test > 0, "task.n_test", || "must be positive".into())?;
                check(c.n_target >= 2, "task.n_target", || {
                    "needs at least 2 samples".into()
                })?;
                check(
                    (0.0..=1.0).contains(&c.label_noise),
                    "task.label_noise",
                    || format!("{} outside [0, 1]", c.label_noise),
                )?;
                check(
                    c.val_fraction > 0.0 && c.val_fraction < 1.0,
                    "task.val_fraction",
                    || format!("{} outside (0, 1)", c.val_fraction),
                )?;
            }
            TaskSpec::Csv {
                classes,
                val_fraction,
                ..
            } => {
                check(*classes >= 2, "task.classes", || {
                    "needs at least 2 classes".into()
                })?;
                check(
                    *val_fraction > 0.0 && *val_fraction < 1.0,
                    "task.val_fraction",
                    || format!("{val_fraction} outside (0, 1)"),
                )?;
            }
        }
        check(!self.model.hidden.is_empty(), "model.hidden", || {
            "needs at least one hidden layer".into()
        })?;
        check(
            self.model.hidden.iter().all(|&h| h > 0),
            "model.hidden",
            || "widths must be positive".into(),
        )?;
        let depth = self.model.hidden.len() + 1;
        check(self.model.reinit < depth, "model.reinit", || {
            format!("must be below the layer count {depth}")
        })?;
        check(
            self.pretrain.lr > 0.0 && self.pretrain.lr.is_finite(),
            "pretrain.lr",
            || "must be positive".into(),
        )?;
        check(self.pretrain.batch_size > 0, "pretrain.batch_size", || {
            "must be positive".into()
        })?;
        match self.scheme {
            Scheme::MetaLr {
                alpha0,
                policy,
                lr_min,
                lr_max,
                ..
            } => {
                check(
                    lr_min > 0.0 && lr_min <= lr_max && lr_max.is_finite(),
                    "scheme.lr_min",
                    || format!("invalid bounds [{lr_min}, {lr_max}]"),
                )?;
                check((lr_min..=lr_max).contains(&alpha0), "scheme.alpha", || {
                    format!("{alpha0} outside [{lr_min}, {lr_max}]")
                })?;
                match policy {
                    HyperLrPolicy::Constant { eta } => {
                        check(eta >= 0.0 && eta.is_finite(), "scheme.eta", || {
                            "must be non-negative".into()
                        })?
                    }
                    HyperLrPolicy::Proportional { beta } => {
                        check(beta >= 0.0 && beta.is_finite(), "scheme.beta", || {
                            "must be non-negative".into()
                        })?
                    }
                }
            }
            Scheme::Baseline(b) => b
                .validate()
                .map_err(|e| config_err("scheme.alpha", e.to_string()))?,
        }
        check(self.batch_size > 0, "train.batch_size", || {
            "must be positive".into()
        })?;
        check(!self.seeds.is_empty(), "run.seeds", || {
            "needs at least one seed".into()
        })?;
        check(self.oracle.grid_points >= 2, "oracle.grid_points", || {
            "needs at least 2 points".into()
        })?;
        let p = &self.oracle.problem;
        check(p.inputs > 0 && p.hidden > 0, "oracle.inputs", || {
            "sizes must be positive".into()
        })?;
        check(p.samples > 0, "oracle.samples", || {
            "must be positive".into()
        })?;
        Ok(())
    }

    /// Every setting that affects results, one `key = value` per line,
    /// sorted by key. Output settings are excluded.
    pub fn canonical(&self) -> String {
        let mut kv: BTreeMap<&str, String> = BTreeMap::new();
        match &self.task {
            TaskSpec::Synthetic { seed, config: c } => {
                kv.insert("task.kind", "synthetic".into());
                kv.insert("task.seed", seed.to_string());
                kv.insert("task.input_dim", c.input_dim.to_string());
                kv.insert("task.feature_dim", c.feature_dim.to_string());
                kv.insert("task.classes", c.classes.to_string());
                kv.insert("task.n_source", c.n_source.to_string());
                kv.insert("task.n_target", c.n_target.to_string());
                kv.insert("task.n_test", c.n_test.to_string());
                kv.insert("task.label_noise", c.label_noise.to_string());
                kv.insert("task.val_fraction", c.val_fraction.to_string());
            }
            TaskSpec::Csv {
                source,
                target,
                test,
                classes,
                val_fraction,
                split_seed,
            } => {
                kv.insert("task.kind", "csv".into());
                kv.insert("task.source", source.display().to_string());
                kv.insert("task.target", target.display().to_string());
                kv.insert("task.test", test.display().to_string());
                kv.insert("task.classes", classes.to_string());
                kv.insert("task.val_fraction", val_fraction.to_string());
                kv.insert("task.seed", split_seed.to_string());
            }
        }
        kv.insert(
            "model.hidden",
            self.model
                .hidden
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        kv.insert("model.reinit", self.model.reinit.to_string());
        kv.insert("pretrain.lr", self.pretrain.lr.to_string());
        kv.insert("pretrain.iterations", self.pretrain.iterations.to_string());
        kv.insert("pretrain.batch_size", self.pretrain.batch_size.to_string());
        match self.scheme {
            Scheme::MetaLr {
                alpha0,
                policy,
                validation,
                lr_min,
                lr_max,
            } => {
                kv.insert("scheme.kind", "metalr".into());
                kv.insert("scheme.alpha", alpha0.to_string());
                match policy {
                    HyperLrPolicy::Constant { eta } => {
                        kv.insert("scheme.policy", "constant".into());
                        kv.insert("scheme.eta", eta.to_string());
                    }
                    HyperLrPolicy::Proportional { beta } => {
                        kv.insert("scheme.policy", "proportional".into());
                        kv.insert("scheme.beta", beta.to_string());
                    }
                }
                let v = match validation {
                    ValidationMode::SeparateSet => "separate",
                    ValidationMode::HeldOutTrainingBatch => "trainset",
                };
                kv.insert("scheme.validation", v.into());
                kv.insert("scheme.lr_min", lr_min.to_string());
                kv.insert("scheme.lr_max", lr_max.to_string());
            }
            Scheme::Baseline(b) => {
                let kind = match b {
                    BaselineScheme::AllLayers { .. } => "all_layers",
                    BaselineScheme::LastLayerOnly { .. } => "last_layer",
                    BaselineScheme::LayerwiseSweep { .. } => "layerwise_sweep",
                };
                kv.insert("scheme.kind", kind.into());
                kv.insert("scheme.alpha", b.alpha().to_string());
            }
        }
        kv.insert("train.batch_size", self.batch_size.to_string());
        kv.insert("train.iterations", self.iterations.to_string());
        kv.insert("run.seeds", seed_list(&self.seeds));
        let o = &self.oracle;
        kv.insert("oracle.seed", o.seed.to_string());
        kv.insert("oracle.grid_points", o.grid_points.to_string());
        kv.insert("oracle.inputs", o.problem.inputs.to_string());
        kv.insert("oracle.hidden", o.problem.hidden.to_string());
        kv.insert("oracle.samples", o.problem.samples.to_string());
        kv.insert("oracle.noise", o.problem.noise.to_string());
        kv.insert("oracle.input_scale", o.problem.input_scale.to_string());
        kv.insert("oracle.steps", o.problem.steps.to_string());
        kv.into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// The canonical form plus output settings; parses back to `self`.
    pub fn to_text(&self) -> String {
        format!(
            "{}output.dir = {}\noutput.trace = {}\n",
            self.canonical(),
            self.output_dir.display(),
            self.trace
        )
    }

    /// Hex SHA-256 of [`ExperimentConfig::canonical`].
    pub fn fingerprint(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(err: Error) -> String {
        match err {
            Error::Config { key, .. } => key,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn empty_file_is_the_reference_config() {
        assert_eq!(
            ExperimentConfig::parse("").unwrap(),
            ExperimentConfig::default()
        );
        assert_eq!(
            ExperimentConfig::parse("# only a comment\n\n").unwrap(),
            ExperimentConfig::default()
        );
    }

    #[test]
    fn values_are_read() {
        let cfg = ExperimentConfig::parse(
            "scheme.kind = metalr\nscheme.policy = constant\nscheme.eta = 0.01\nscheme.validation = separate\n\
             run.seeds = 3, 4\nmodel.hidden = 8,8\ntask.label_noise = 0\noutput.trace = false\n",
        )
        .unwrap();
        assert_eq!(cfg.seeds, vec![3, 4]);
        assert_eq!(cfg.model.hidden, vec![8, 8]);
        assert!(!cfg.trace);
        assert!(matches!(
            cfg.scheme,
            Scheme::MetaLr {
                policy: HyperLrPolicy::Constant { eta },
                validation: ValidationMode::SeparateSet,
                ..
            } if eta == 0.01
        ));
    }

    #[test]
    fn errors_name_the_key() {
        let cases = [
            ("scheme.bta = 0.1", "scheme.bta"),
            ("task.label_noise = 1.5", "task.label_noise"),
            ("scheme.alpha = 0.5", "scheme.alpha"),
            ("train.iterations = many", "train.iterations"),
            ("run.seeds = ", "run.seeds"),
            ("scheme.policy = adam", "scheme.policy"),
            ("model.reinit = 2", "model.reinit"),
            ("task.kind = csv", "task.source"),
            ("seeds = 1\nseeds = 2", "seeds"),
            ("just words", "line 1"),
            ("scheme.kind = all_layers\nscheme.alpha = 1", "scheme.alpha"),
        ];
        for (text, key) in cases {
            let err = ExperimentConfig::parse(text).unwrap_err();
            assert_eq!(key_of(err), key, "{text}");
        }
    }

    #[test]
    fn canonical_text_round_trips() {
        let cfg = ExperimentConfig::parse(
            "scheme.kind = layerwise_sweep\nscheme.alpha = 0.005\nrun.seeds = 9",
        )
        .unwrap();
        let back = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.fingerprint(), cfg.fingerprint());
    }

    #[test]
    fn fingerprint_ignores_layout_and_output() {
        let a = ExperimentConfig::parse("run.seeds = 1,2\nscheme.beta = 0.1").unwrap();
        let b = ExperimentConfig::parse(
            "# same\nscheme.beta=0.1\n\n  run.seeds =1, 2\noutput.dir = elsewhere",
        )
        .unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = ExperimentConfig::parse("run.seeds = 1,2\nscheme.beta = 0.2").unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }
}
