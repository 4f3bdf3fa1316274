use indexmap::IndexMap;

use super::{LossKind, Tensor};
use crate::error::{Error, Result};
use crate::nn::Model;

/// Per-layer gradients of a batch-mean loss, in depth order. Each entry holds
/// one tensor per parameter tensor of the group (weight, then bias).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSnapshot {
    layers: IndexMap<String, Vec<Tensor>>,
    batch_size: usize,
}

impl GradientSnapshot {
    pub fn from_layers(
        layers: impl IntoIterator<Item = (String, Vec<Tensor>)>,
        batch_size: usize,
    ) -> Self {
        GradientSnapshot {
            layers: layers.into_iter().collect(),
            batch_size,
        }
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn names(&self) -> Vec<String> {
        self.layers.keys().cloned().collect()
    }

    pub fn get(&self, layer: &str) -> Option<&[Tensor]> {
        self.layers.get(layer).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Tensor])> {
        self.layers.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn is_finite(&self) -> bool {
        self.layers.values().flatten().all(Tensor::is_finite)
    }

    /// Checks that `other` covers the same layers with congruent shapes.
    pub fn check_congruent(&self, other: &GradientSnapshot) -> Result<()> {
        if self.names() != other.names() {
            return Err(Error::LayerMismatch {
                expected: self.names(),
                actual: other.names(),
            });
        }
        for ((name, a), b) in self.layers.iter().zip(other.layers.values()) {
            if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.shape() != y.shape()) {
                return Err(Error::ShapeMismatch {
                    context: format!("gradient of {name}"),
                    expected: a.iter().flat_map(|t| t.shape().to_vec()).collect(),
                    actual: b.iter().flat_map(|t| t.shape().to_vec()).collect(),
                });
            }
        }
        Ok(())
    }

    /// Flattened inner product of one layer's gradient with another
    /// snapshot's gradient for the same layer.
    pub fn layer_dot(&self, other: &GradientSnapshot, layer: &str) -> Result<f64> {
        let (a, b) = match (self.get(layer), other.get(layer)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::LayerMismatch {
                    expected: self.names(),
                    actual: other.names(),
                })
            }
        };
        a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
    }

    /// Max over scalars of `|self − reference| / (|reference| + floor)`.
    pub fn max_relative_error(&self, reference: &GradientSnapshot, floor: f64) -> Result<f64> {
        self.check_congruent(reference)?;
        let mut worst = 0.0_f64;
        for (a, b) in self.layers.values().zip(reference.layers.values()) {
            for (x, y) in a.iter().zip(b) {
                for (u, v) in x.data().iter().zip(y.data()) {
                    worst = worst.max((u - v).abs() / (v.abs() + floor));
                }
            }
        }
        Ok(worst)
    }
}

/// Central-difference gradient `(L(θ+ε) − L(θ−ε)) / 2ε` for every scalar
/// parameter of `model`. Costs two forward passes per parameter.
pub fn finite_difference_gradient(
    model: &Model,
    inputs: &Tensor,
    labels: &Tensor,
    kind: LossKind,
    epsilon: f64,
) -> Result<GradientSnapshot> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be > 0, got {epsilon}"
        )));
    }
    let base = model.params().clone();
    let mut layers = Vec::new();
    for (gi, group) in base.groups().iter().enumerate() {
        let mut tensors = Vec::new();
        for (ti, tensor) in group.tensors().enumerate() {
            let mut out = vec![0.0; tensor.len()];
            for (k, slot) in out.iter_mut().enumerate() {
                let mut probe = base.clone();
                let mut eval = |delta: f64| -> Result<f64> {
                    let t = probe.groups_mut()[gi]
                        .tensors_mut()
                        .nth(ti)
                        .expect("tensor");
                    t.data_mut()[k] = tensor.data()[k] + delta;
                    model.loss_at(&probe, inputs, labels, kind)
                };
                let plus = eval(epsilon)?;
                let minus = eval(-epsilon)?;
                *slot = (plus - minus) / (2.0 * epsilon);
            }
            tensors.push(Tensor::from_raw(tensor.shape().to_vec(), out));
        }
        layers.push((group.name().to_string(), tensors));
    }
    Ok(GradientSnapshot::from_layers(layers, inputs.batch()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, ModelSpec};

    fn scalar_model(theta: f64) -> Model {
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
        m
    }

    #[test]
    fn linear_scalar_model_matches_analytic() {
        // L = (θx − y)², dL/dθ = 2x(θx − y)
        let m = scalar_model(1.5);
        let x = Tensor::new(vec![1, 1], vec![2.0]).unwrap();
        let y = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        let fd = finite_difference_gradient(&m, &x, &y, LossKind::MeanSquaredError, 1e-4).unwrap();
        let g = fd.get("fc1").unwrap()[0].data()[0];
        assert!((g - 8.0).abs() < 1e-7);
    }

    #[test]
    fn parameters_without_influence_give_zero() {
        // all-zero inputs: the weight cannot move the loss
        let m = scalar_model(0.7);
        let x = Tensor::new(vec![2, 1], vec![0.0, 0.0]).unwrap();
        let y = Tensor::new(vec![2, 1], vec![1.0, -1.0]).unwrap();
        let fd = finite_difference_gradient(&m, &x, &y, LossKind::MeanSquaredError, 1e-5).unwrap();
        assert_eq!(fd.get("fc1").unwrap()[0].data(), &[0.0]);
    }

    #[test]
    fn rejects_non_positive_epsilon() {
        let m = scalar_model(0.0);
        let x = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        assert!(finite_difference_gradient(&m, &x, &x, LossKind::MeanSquaredError, 0.0).is_err());
    }
}
