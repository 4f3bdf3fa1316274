//! Datasets, splits, batch streams and the synthetic transfer task.

mod io;
mod stream;
mod synth;

pub use io::{load_csv, load_idx, read_idx, write_csv, CsvSchema, IdxArray};
pub use stream::{Batch, BatchStream};
pub use synth::{synth_ground_truth_features, synth_shared_features_task, SynthTaskConfig};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Labeled samples: `inputs` is `(N, feature shape…)`, `labels` is `(N)` of
/// class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    inputs: Tensor,
    labels: Tensor,
    num_classes: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        inputs: Tensor,
        labels: Tensor,
        num_classes: usize,
    ) -> Result<Self> {
        if labels.rank() != 1 || labels.len() != inputs.batch() {
            return Err(Error::ShapeMismatch {
                context: "dataset labels".into(),
                expected: vec![inputs.batch()],
                actual: labels.shape().to_vec(),
            });
        }
        if let Some(&bad) = labels
            .data()
            .iter()
            .find(|&&l| l < 0.0 || l.fract() != 0.0 || l >= num_classes as f64)
        {
            return Err(Error::LabelOutOfRange {
                label: bad,
                num_classes,
            });
        }
        Ok(Dataset {
            name: name.into(),
            inputs,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn labels(&self) -> &Tensor {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Per-sample input shape.
    pub fn feature_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    pub fn subset(&self, name: impl Into<String>, indices: &[usize]) -> Dataset {
        Dataset {
            name: name.into(),
            inputs: self.inputs.select_rows(indices),
            labels: self.labels.select_rows(indices),
            num_classes: self.num_classes,
        }
    }

    pub fn concat(&self, name: impl Into<String>, other: &Dataset) -> Result<Dataset> {
        Dataset::new(
            name,
            self.inputs.concat_rows(&other.inputs)?,
            self.labels.concat_rows(&other.labels)?,
            self.num_classes.max(other.num_classes),
        )
    }

    /// Reinterprets every sample with a new feature shape of equal size,
    /// e.g. `(H, W)` images as `(1, H, W)` for a convolution.
    pub fn reshape_features(&self, feature_shape: &[usize]) -> Result<Dataset> {
        let mut shape = vec![self.len()];
        shape.extend_from_slice(feature_shape);
        Ok(Dataset {
            inputs: self.inputs.reshape(shape)?,
            ..self.clone()
        })
    }
}

/// Source domain plus target train/validation/test splits.
#[derive(Debug, Clone)]
pub struct TransferTask {
    pub source: Dataset,
    pub target_train: Dataset,
    pub target_val: Dataset,
    pub target_test: Dataset,
    /// Which layers of the generating process are shared between domains.
    pub transferability: String,
}

impl TransferTask {
    /// All labeled target training data: `target_train` followed by
    /// `target_val`.
    pub fn target_pool(&self) -> Dataset {
        self.target_train
            .concat("target_pool", &self.target_val)
            .expect("target splits share a layout")
    }
}

/// Seeded split into `(train, validation)` of sizes `⌈(1−f)N⌉` and `⌊fN⌋`.
pub fn split_train_validation(
    dataset: &Dataset,
    fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "validation fraction must be in (0, 1), got {fraction}"
        )));
    }
    let n = dataset.len();
    let n_val = (fraction * n as f64).floor() as usize;
    let n_train = n - n_val;
    if n_val == 0 || n_train == 0 {
        return Err(Error::InvalidArgument(format!(
            "split of {n} samples at fraction {fraction} leaves an empty side"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train_idx, val_idx) = order.split_at(n_train);
    Ok((
        dataset.subset(format!("{}_train", dataset.name), train_idx),
        dataset.subset(format!("{}_val", dataset.name), val_idx),
    ))
}
