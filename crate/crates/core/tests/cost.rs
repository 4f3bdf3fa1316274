mod common;

use metalr::baselines::{finetune_constant, layerwise_sweep, run_sgd, SgdConfig, TrainOn};
use metalr::data::{synth_shared_features_task, SynthTaskConfig};
use metalr::nn::{build_mlp, ModelSpec};
use metalr::optimizer::{meta_iteration, HyperLrPolicy, LearningRates};
use metalr::tensor::LossKind;

#[test]
fn meta_iteration_costs_two_passes_each_way() {
    for seed in 0..4 {
        let mut model = common::random_mlp(seed);
        let mut r = common::rng(seed);
        let train = common::batch(&mut r, &model, 8, LossKind::CrossEntropy);
        let val = common::batch(&mut r, &model, 8, LossKind::CrossEntropy);
        let mut lrs = LearningRates::with_defaults(&model.layer_groups(), 1e-3).unwrap();
        for t in 1..=3 {
            model.reset_pass_counts();
            meta_iteration(
                &mut model,
                &train,
                &val,
                &mut lrs,
                HyperLrPolicy::Proportional { beta: 0.1 },
                LossKind::CrossEntropy,
            )
            .unwrap();
            let c = model.pass_counts();
            assert_eq!((c.forward, c.backward), (2, 2), "iteration {t}");
        }
    }
}

#[test]
fn sgd_step_costs_one_pass_each_way() {
    let task = synth_shared_features_task(
        0,
        &SynthTaskConfig {
            n_source: 100,
            n_target: 100,
            n_test: 10,
            ..Default::default()
        },
    )
    .unwrap();
    let mut model = build_mlp(ModelSpec::mlp(&[16, 8, 4], 0)).unwrap();
    let cfg = SgdConfig {
        iterations: 5,
        batch_size: 8,
        ..Default::default()
    };
    model.reset_pass_counts();
    run_sgd(
        &mut model,
        &task.target_train,
        &[Some(1e-3), Some(1e-3)],
        &cfg,
    )
    .unwrap();
    let c = model.pass_counts();
    assert_eq!((c.forward, c.backward), (5, 5));
}

#[test]
fn sweep_costs_about_depth_times_one_run() {
    let task = synth_shared_features_task(1, &SynthTaskConfig::default()).unwrap();
    let model = build_mlp(ModelSpec::mlp(&[16, 48, 48, 4], 0)).unwrap();
    let cfg = SgdConfig {
        iterations: 1500,
        seed: 3,
        train_on: TrainOn::TrainSplit,
        ..Default::default()
    };
    // best of three damps scheduler noise
    let single = (0..3)
        .map(|_| {
            finetune_constant(&mut model.clone(), &task, 1e-3, &cfg)
                .unwrap()
                .wall_clock_secs
        })
        .fold(f64::INFINITY, f64::min);
    let sweep = (0..3)
        .map(|_| layerwise_sweep(&model, &task, 1e-3, &cfg).unwrap())
        .map(|s| {
            assert_eq!(s.rows.len(), 3);
            s.wall_clock_secs
        })
        .fold(f64::INFINITY, f64::min);
    let ratio = sweep / (3.0 * single);
    assert!(
        (0.8..=1.2).contains(&ratio),
        "sweep {sweep:.3}s vs 3 x {single:.3}s (ratio {ratio:.3})"
    );
}
