//! Synthetic source→target task with a shared feature layer.
//!
//! Both domains see inputs `x ~ N(0, I)` passed through one ground-truth
//! feature map `z = relu(W* x)`. Source labels come from head `A`, target
//! labels from an independent head `B`:
//!
//! ```text
//! y_source = argmax A (z − μ)      y_target = argmax B (z − μ)
//! ```
//!
//! A model pretrained on the source therefore learns a first layer that is
//! reusable on the target, while its head is not.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{split_train_validation, Dataset, TransferTask};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTaskConfig {
    pub input_dim: usize,
    pub feature_dim: usize,
    pub classes: usize,
    pub n_source: usize,
    /// Labeled target samples, split into train and validation.
    pub n_target: usize,
    pub n_test: usize,
    /// Probability that a training label is replaced by a different class.
    pub label_noise: f64,
    pub val_fraction: f64,
}

impl Default for SynthTaskConfig {
    fn default() -> Self {
        SynthTaskConfig {
            input_dim: 16,
            feature_dim: 4,
            classes: 4,
            n_source: 4000,
            n_target: 400,
            n_test: 2000,
            label_noise: 0.05,
            val_fraction: 0.25,
        }
    }
}

struct Generator {
    projection: Vec<f64>, // feature_dim × input_dim
    feature_mean: Vec<f64>,
    input_dim: usize,
    feature_dim: usize,
}

impl Generator {
    fn features(&self, x: &[f64]) -> Vec<f64> {
        (0..self.feature_dim)
            .map(|h| {
                let row = &self.projection[h * self.input_dim..(h + 1) * self.input_dim];
                let v: f64 = row.iter().zip(x).map(|(w, x)| w * x).sum();
                v.max(0.0)
            })
            .collect()
    }

    fn label(&self, head: &[f64], classes: usize, x: &[f64]) -> usize {
        let z = self.features(x);
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for c in 0..classes {
            let row = &head[c * self.feature_dim..(c + 1) * self.feature_dim];
            let s: f64 = row
                .iter()
                .zip(&z)
                .zip(&self.feature_mean)
                .map(|((a, z), m)| a * (z - m))
                .sum();
            if s > best_score {
                best = c;
                best_score = s;
            }
        }
        best
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            scale * v
        })
        .collect()
}

fn noisy(label: usize, classes: usize, rho: f64, rng: &mut ChaCha8Rng) -> usize {
    if rho > 0.0 && rng.gen::<f64>() < rho {
        let shift = rng.gen_range(1..classes);
        (label + shift) % classes
    } else {
        label
    }
}

/// Generates a [`TransferTask`] deterministically from `seed`.
pub fn synth_shared_features_task(seed: u64, cfg: &SynthTaskConfig) -> Result<TransferTask> {
    generate(seed, cfg, false)
}

/// The same task as [`synth_shared_features_task`], same rows and labels,
/// with each input replaced by its centred ground-truth features `z − μ`.
/// Useful for probing how separable the labels are given perfect features.
pub fn synth_ground_truth_features(seed: u64, cfg: &SynthTaskConfig) -> Result<TransferTask> {
    generate(seed, cfg, true)
}

fn generate(seed: u64, cfg: &SynthTaskConfig, feature_view: bool) -> Result<TransferTask> {
    if cfg.input_dim == 0 || cfg.feature_dim == 0 || cfg.classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "degenerate dimensions: input {}, features {}, classes {}",
            cfg.input_dim, cfg.feature_dim, cfg.classes
        )));
    }
    if cfg.n_source == 0 || cfg.n_target < 2 || cfg.n_test == 0 {
        return Err(Error::InvalidArgument(
            "sample counts must be positive".into(),
        ));
    }
    if !(0.0..=1.0).contains(&cfg.label_noise) {
        return Err(Error::InvalidArgument(format!(
            "label noise must be in [0, 1], got {}",
            cfg.label_noise
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, h, k) = (cfg.input_dim, cfg.feature_dim, cfg.classes);
    let mut generator = Generator {
        projection: normal_vec(&mut rng, h * d, 1.0 / (d as f64).sqrt()),
        feature_mean: vec![0.0; h],
        input_dim: d,
        feature_dim: h,
    };
    let head_source = normal_vec(&mut rng, k * h, 1.0);
    let head_target = normal_vec(&mut rng, k * h, 1.0);

    let source_x = normal_vec(&mut rng, cfg.n_source * d, 1.0);
    let target_x = normal_vec(&mut rng, cfg.n_target * d, 1.0);
    let test_x = normal_vec(&mut rng, cfg.n_test * d, 1.0);

    // Centre features with source statistics so neither head collapses onto
    // one class.
    let mut mean = vec![0.0; h];
    for x in source_x.chunks(d) {
        for (m, z) in mean.iter_mut().zip(generator.features(x)) {
            *m += z / cfg.n_source as f64;
        }
    }
    generator.feature_mean = mean;

    // Standardize inputs column-wise with source statistics.
    let mut mu = vec![0.0; d];
    let mut var = vec![0.0; d];
    for x in source_x.chunks(d) {
        for j in 0..d {
            mu[j] += x[j] / cfg.n_source as f64;
        }
    }
    for x in source_x.chunks(d) {
        for j in 0..d {
            var[j] += (x[j] - mu[j]).powi(2) / cfg.n_source as f64;
        }
    }
    let sd: Vec<f64> = var.iter().map(|v| v.sqrt().max(1e-12)).collect();
    let standardize = |xs: &[f64]| -> Vec<f64> {
        xs.chunks(d)
            .flat_map(|x| (0..d).map(|j| (x[j] - mu[j]) / sd[j]).collect::<Vec<_>>())
            .collect()
    };
    let centred_features = |xs: &[f64]| -> Vec<f64> {
        xs.chunks(d)
            .flat_map(|x| {
                let z = generator.features(x);
                z.iter()
                    .zip(&generator.feature_mean)
                    .map(|(z, m)| z - m)
                    .collect::<Vec<_>>()
            })
            .collect()
    };

    let mut make = |name: &str, xs: &[f64], head: &[f64], rho: f64| -> Result<Dataset> {
        let labels: Vec<f64> = xs
            .chunks(d)
            .map(|x| noisy(generator.label(head, k, x), k, rho, &mut rng) as f64)
            .collect();
        let n = labels.len();
        let inputs = if feature_view {
            Tensor::new(vec![n, h], centred_features(xs))?
        } else {
            Tensor::new(vec![n, d], standardize(xs))?
        };
        Dataset::new(name, inputs, Tensor::new(vec![n], labels)?, k)
    };
    let source = make("source", &source_x, &head_source, cfg.label_noise)?;
    let pool = make("target", &target_x, &head_target, cfg.label_noise)?;
    let target_test = make("target_test", &test_x, &head_target, 0.0)?;
    let (target_train, target_val) =
        split_train_validation(&pool, cfg.val_fraction, seed ^ 0x5eed)?;

    Ok(TransferTask {
        source,
        target_train,
        target_val,
        target_test,
        transferability: format!(
            "shared: feature map relu(W* x) ({d}→{h}); domain-specific: class head ({h}→{k})"
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_task() {
        let cfg = SynthTaskConfig {
            n_source: 200,
            n_target: 80,
            n_test: 50,
            ..Default::default()
        };
        let a = synth_shared_features_task(3, &cfg).unwrap();
        let b = synth_shared_features_task(3, &cfg).unwrap();
        assert_eq!(a.source, b.source);
        assert_eq!(a.target_train, b.target_train);
        assert_eq!(a.target_val, b.target_val);
        assert_eq!(a.target_test, b.target_test);
        let c = synth_shared_features_task(4, &cfg).unwrap();
        assert_ne!(a.source, c.source);
    }

    #[test]
    fn splits_have_expected_sizes() {
        let cfg = SynthTaskConfig {
            n_source: 100,
            n_target: 100,
            n_test: 30,
            ..Default::default()
        };
        let t = synth_shared_features_task(0, &cfg).unwrap();
        assert_eq!(t.target_train.len(), 75);
        assert_eq!(t.target_val.len(), 25);
        assert_eq!(t.target_test.len(), 30);
        assert_eq!(t.source.feature_shape(), t.target_test.feature_shape());
        assert_eq!(t.target_pool().len(), 100);
    }

    #[test]
    fn degenerate_dims_rejected() {
        for cfg in [
            SynthTaskConfig {
                input_dim: 0,
                ..Default::default()
            },
            SynthTaskConfig {
                feature_dim: 0,
                ..Default::default()
            },
            SynthTaskConfig {
                classes: 1,
                ..Default::default()
            },
            SynthTaskConfig {
                label_noise: 1.5,
                ..Default::default()
            },
        ] {
            assert!(synth_shared_features_task(0, &cfg).is_err());
        }
    }

    #[test]
    fn classes_are_not_collapsed() {
        let t = synth_shared_features_task(1, &SynthTaskConfig::default()).unwrap();
        for d in [&t.source, &t.target_test] {
            for c in 0..4 {
                let hits = d.labels().data().iter().filter(|&&l| l == c as f64).count() as f64;
                let frac = hits / d.len() as f64;
                assert!(
                    frac > 0.02 && frac < 0.8,
                    "{}: class-{c} fraction {frac}",
                    d.name
                );
            }
        }
    }
}
