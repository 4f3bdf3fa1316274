use metalr::baselines::{finetune_constant, SgdConfig};
use metalr::data::{synth_shared_features_task, SynthTaskConfig, TransferTask};
use metalr::harness::{run, ExperimentConfig};
use metalr::nn::{build_mlp, Model, ModelSpec};
use metalr::optimizer::{train, HyperLrPolicy, MetaLrConfig};

fn setup() -> (Model, TransferTask) {
    let cfg = SynthTaskConfig {
        n_source: 200,
        n_target: 200,
        n_test: 100,
        ..Default::default()
    };
    let task = synth_shared_features_task(11, &cfg).unwrap();
    (build_mlp(ModelSpec::mlp(&[16, 16, 4], 2)).unwrap(), task)
}

fn degenerate(policy: HyperLrPolicy) {
    let (model, task) = setup();
    let mut online = model.clone();
    let out = train(
        &mut online,
        &task,
        &MetaLrConfig {
            policy,
            alpha0: 5e-3,
            iterations: 500,
            seed: 7,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(out.trace.all_alphas().all(|a| a == 5e-3));

    let mut sgd = model.clone();
    let metrics = finetune_constant(
        &mut sgd,
        &task,
        5e-3,
        &SgdConfig {
            iterations: 500,
            seed: 7,
            ..Default::default()
        },
    )
    .unwrap();
    let a: Vec<u64> = online
        .params()
        .flatten()
        .iter()
        .map(|x| x.to_bits())
        .collect();
    let b: Vec<u64> = sgd.params().flatten().iter().map(|x| x.to_bits()).collect();
    assert_eq!(a, b);
    assert_eq!(out.metrics.test_accuracy, metrics.test_accuracy);
    assert_ne!(sgd.params(), model.params());
}

#[test]
fn zero_beta_is_bitwise_sgd() {
    degenerate(HyperLrPolicy::Proportional { beta: 0.0 });
}

#[test]
fn zero_eta_is_bitwise_sgd() {
    degenerate(HyperLrPolicy::Constant { eta: 0.0 });
}

#[test]
fn pipeline_zero_beta_matches_all_layers_baseline() {
    let common =
        "task.n_source = 400\ntask.n_target = 200\ntask.n_test = 200\npretrain.iterations = 200\n\
                  train.iterations = 300\nrun.seeds = 0\nscheme.alpha = 0.004\n";
    let online =
        run(&ExperimentConfig::parse(&format!("{common}scheme.beta = 0")).unwrap()).unwrap();
    let base = run(&ExperimentConfig::parse(&format!("{common}scheme.kind = all_layers")).unwrap())
        .unwrap();
    assert_eq!(online.test_accuracies(), base.test_accuracies());
    assert_eq!(
        online.records[0].metrics.test_loss,
        base.records[0].metrics.test_loss
    );
}
