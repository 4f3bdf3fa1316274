//! Random model/batch instances shared by the oracle tests.
#![allow(dead_code)]

use metalr::data::Batch;
use metalr::nn::{build_cnn, build_mlp, small_cnn_spec, LayerSpec, Model, ModelSpec, Padding};
use metalr::tensor::{LossKind, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Class labels for CE, or normal targets shaped like the outputs for MSE.
pub fn labels(rng: &mut ChaCha8Rng, batch: usize, outputs: usize, kind: LossKind) -> Tensor {
    match kind {
        LossKind::CrossEntropy => {
            let data = (0..batch)
                .map(|_| rng.gen_range(0..outputs) as f64)
                .collect();
            Tensor::new(vec![batch], data).unwrap()
        }
        LossKind::MeanSquaredError => normal_tensor(rng, &[batch, outputs]),
    }
}

pub fn batch(rng: &mut ChaCha8Rng, model: &Model, n: usize, kind: LossKind) -> Batch {
    let mut shape = vec![n];
    shape.extend(model.input_shape());
    let inputs = normal_tensor(rng, &shape);
    let outputs = model.output_shape()[0];
    Batch {
        inputs,
        labels: labels(rng, n, outputs, kind),
        indices: (0..n).collect(),
    }
}

/// MLP with 2 or 3 linear layers, sizes drawn from `seed`.
pub fn random_mlp(seed: u64) -> Model {
    let mut r = rng(seed ^ 0x6d6c70);
    let mut sizes = vec![r.gen_range(2..6)];
    for _ in 0..r.gen_range(1..3) {
        sizes.push(r.gen_range(3..8));
    }
    sizes.push(r.gen_range(2..5));
    build_mlp(ModelSpec::mlp(&sizes, seed)).unwrap()
}

/// CNN with one or two convolutions followed by a linear head.
pub fn random_cnn(seed: u64) -> Model {
    if seed.is_multiple_of(2) {
        return build_cnn(small_cnn_spec(2, 6, 3, 3, seed)).unwrap();
    }
    let spec = ModelSpec {
        input_shape: vec![1, 7, 7],
        layers: vec![
            LayerSpec::Conv2d {
                in_channels: 1,
                out_channels: 3,
                kernel: 3,
                padding: Padding::Valid,
                bias: true,
            },
            LayerSpec::Relu,
            LayerSpec::Conv2d {
                in_channels: 3,
                out_channels: 2,
                kernel: 3,
                padding: Padding::Same,
                bias: false,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool2d { size: 2 },
            LayerSpec::Flatten,
            LayerSpec::Linear {
                inputs: 2 * 2 * 2,
                outputs: 3,
                bias: true,
            },
        ],
        seed,
    };
    build_cnn(spec).unwrap()
}

pub fn kind_for(seed: u64) -> LossKind {
    if seed % 3 == 2 {
        LossKind::MeanSquaredError
    } else {
        LossKind::CrossEntropy
    }
}

/// Finite-difference estimate of ∂/∂α_j of the validation loss after the
/// lookahead `θ_i − α_i g_i`, computed directly on the parameter tensors.
pub fn fd_hypergradient(
    model: &Model,
    g_train: &metalr::tensor::GradientSnapshot,
    alphas: &[f64],
    val: &Batch,
    kind: LossKind,
    layer: usize,
) -> f64 {
    let eps = 1e-4 * alphas[layer];
    let at = |delta: f64| {
        let mut p = model.params().clone();
        for (j, group) in p.groups_mut().iter_mut().enumerate() {
            let a = alphas[j] + if j == layer { delta } else { 0.0 };
            let g = g_train.get(group.name()).unwrap().to_vec();
            for (t, gt) in group.tensors_mut().zip(&g) {
                for (x, d) in t.data_mut().iter_mut().zip(gt.data()) {
                    *x -= a * d;
                }
            }
        }
        model.loss_at(&p, &val.inputs, &val.labels, kind).unwrap()
    };
    (at(eps) - at(-eps)) / (2.0 * eps)
}
