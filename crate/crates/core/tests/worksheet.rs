//! Replays docs/worksheet.md.

use metalr::data::Batch;
use metalr::nn::{LayerSpec, Model, ModelSpec};
use metalr::optimizer::{meta_iteration, HyperLrPolicy, LearningRates};
use metalr::tensor::{LossKind, Tensor};

fn sample(x: f64, y: f64) -> Batch {
    Batch {
        inputs: Tensor::new(vec![1, 1], vec![x]).unwrap(),
        labels: Tensor::new(vec![1, 1], vec![y]).unwrap(),
        indices: vec![0],
    }
}

fn assert_sig12(actual: f64, expected: f64, what: &str) {
    let rel = ((actual - expected) / expected).abs();
    assert!(
        rel < 5e-13,
        "{what}: {actual:.17e} vs {expected:.17e} (rel {rel:e})"
    );
}

#[test]
fn one_meta_iteration_by_hand() {
    let mut model = Model::new(ModelSpec {
        input_shape: vec![1],
        layers: vec![LayerSpec::Linear {
            inputs: 1,
            outputs: 1,
            bias: false,
        }],
        seed: 0,
    })
    .unwrap();
    model.params_mut().groups_mut()[0]
        .tensors_mut()
        .next()
        .unwrap()
        .data_mut()[0] = 1.5;
    let mut lrs = LearningRates::with_defaults(&["fc1"], 1e-3).unwrap();

    let report = meta_iteration(
        &mut model,
        &sample(2.0, 1.0),
        &sample(1.0, 2.0),
        &mut lrs,
        HyperLrPolicy::Proportional { beta: 0.1 },
        LossKind::MeanSquaredError,
    )
    .unwrap();

    assert_sig12(report.train_loss, 4.0, "training loss");
    assert_sig12(report.val_loss, 0.258064, "validation loss at lookahead");
    assert_sig12(report.hypergradient["fc1"], 8.128, "h");
    assert_sig12(report.alpha_after["fc1"], 1.872e-4, "alpha'");
    assert_sig12(lrs.get("fc1").unwrap(), 1.872e-4, "stored alpha");
    assert_sig12(
        model.params().groups()[0].weight().data()[0],
        1.4985024,
        "theta'",
    );
    assert_eq!(lrs.iteration(), 1);
}
