use std::fs;

use metalr::data::{synth_shared_features_task, write_csv, SynthTaskConfig};
use metalr::harness::oracle::{bilevel_oracle, AlphaGrid, QuadraticProblem};
use metalr::harness::{
    ablation_grid, compare, emit_ablation, emit_report, read_metrics_csv, run, run_oracle,
    ExperimentConfig, ABLATION_LABELS,
};
use metalr::stats::{mean, std_dev};

const SMALL: &str =
    "task.n_source = 400\ntask.n_target = 160\ntask.n_test = 200\npretrain.iterations = 300\n\
                     train.iterations = 60\ntrain.batch_size = 16\n";

fn small(extra: &str) -> ExperimentConfig {
    ExperimentConfig::parse(&format!("{SMALL}{extra}")).unwrap()
}

#[test]
fn five_seeds_give_five_rows_and_matching_summary() {
    let cfg = small("run.seeds = 0,1,2,3,4");
    let mut report = run(&cfg).unwrap();
    assert_eq!(report.records.len(), 5);
    let dir = tempfile::tempdir().unwrap();
    emit_report(&mut report, dir.path()).unwrap();

    let rows = read_metrics_csv(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(
        rows.iter().map(|r| r.0).collect::<Vec<_>>(),
        vec![0, 1, 2, 3, 4]
    );
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    let acc: Vec<f64> = rows.iter().map(|r| r.1.test_accuracy).collect();
    let loss: Vec<f64> = rows.iter().map(|r| r.1.val_loss).collect();
    for (name, xs) in [("test_accuracy", &acc), ("val_loss", &loss)] {
        let line = format!("{name}: {:.6} ± {:.6}", mean(xs), std_dev(xs));
        assert!(
            summary.lines().any(|l| l == line),
            "missing `{line}` in\n{summary}"
        );
    }

    for r in &report.records {
        let path = r.trace_path.as_ref().unwrap();
        let text = fs::read_to_string(path).unwrap();
        assert_eq!(text.lines().count() - 1, cfg.iterations * 2);
    }
}

#[test]
fn reemission_is_identical() {
    let cfg = small("run.seeds = 3");
    let mut a = run(&cfg).unwrap();
    let mut b = run(&cfg).unwrap();
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    emit_report(&mut a, da.path()).unwrap();
    emit_report(&mut b, db.path()).unwrap();
    // wall clock is the only column allowed to move
    let strip = |d: &std::path::Path| -> Vec<String> {
        let text = fs::read_to_string(d.join("metrics.csv")).unwrap();
        text.lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    assert_eq!(strip(da.path()), strip(db.path()));
    for name in ["trace_seed3.csv", "config.txt"] {
        assert_eq!(
            fs::read(da.path().join(name)).unwrap(),
            fs::read(db.path().join(name)).unwrap(),
            "{name}"
        );
    }
    let fp = |d: &std::path::Path| {
        let s = fs::read_to_string(d.join("summary.txt")).unwrap();
        s.lines()
            .find(|l| l.starts_with("fingerprint:"))
            .unwrap()
            .to_string()
    };
    assert_eq!(fp(da.path()), fp(db.path()));
    assert_eq!(fp(da.path()), format!("fingerprint: {}", cfg.fingerprint()));

    // the written config reproduces the fingerprint
    let back = ExperimentConfig::load(da.path().join("config.txt")).unwrap();
    assert_eq!(back.fingerprint(), cfg.fingerprint());
}

#[test]
fn no_trace_writes_no_trace_files() {
    let mut report = run(&small("run.seeds = 0\noutput.trace = false")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = emit_report(&mut report, dir.path()).unwrap();
    assert_eq!(written.len(), 3);
    assert!(report.records[0].final_alpha.is_some());
}

#[test]
fn report_into_unwritable_path_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let mut report = run(&small("run.seeds = 0")).unwrap();
    let err = emit_report(&mut report, blocker.join("sub")).unwrap_err();
    assert!(err.to_string().contains("file"), "{err}");
    assert_eq!(err.kind(), "io");
}

#[test]
fn ablation_has_baseline_plus_four_rows() {
    let mut ab = ablation_grid(&small("run.seeds = 0,1")).unwrap();
    assert_eq!(ab.rows.len(), 5);
    assert_eq!(
        ab.rows.iter().map(|r| r.label.as_str()).collect::<Vec<_>>(),
        ABLATION_LABELS
    );
    let table = ab.table();
    assert_eq!(table.lines().count(), 5);
    assert!(table.lines().all(|l| l.contains(" ± ")));
    let fps: std::collections::HashSet<_> = ab
        .rows
        .iter()
        .map(|r| r.report.fingerprint.clone())
        .collect();
    assert_eq!(fps.len(), 5);

    let dir = tempfile::tempdir().unwrap();
    emit_ablation(&mut ab, dir.path()).unwrap();
    let csv = fs::read_to_string(dir.path().join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    let out = compare(&[dir.path().join("row0"), dir.path().join("row4")]).unwrap();
    assert_eq!(out.lines().count(), 2);
    assert!(out.lines().nth(1).unwrap().contains("p(> first)"));
}

#[test]
fn csv_task_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let t = synth_shared_features_task(
        5,
        &SynthTaskConfig {
            n_source: 300,
            n_target: 120,
            n_test: 80,
            ..Default::default()
        },
    )
    .unwrap();
    let p = |n: &str| dir.path().join(n);
    write_csv(&t.source, p("source.csv")).unwrap();
    write_csv(&t.target_pool(), p("target.csv")).unwrap();
    write_csv(&t.target_test, p("test.csv")).unwrap();
    let text = format!(
        "task.kind = csv\ntask.source = {}\ntask.target = {}\ntask.test = {}\ntask.classes = 4\n\
         pretrain.iterations = 50\ntrain.iterations = 20\ntrain.batch_size = 8\nrun.seeds = 0",
        p("source.csv").display(),
        p("target.csv").display(),
        p("test.csv").display()
    );
    let report = run(&ExperimentConfig::parse(&text).unwrap()).unwrap();
    assert_eq!(report.records.len(), 1);
    assert_eq!(report.records[0].final_alpha.as_ref().unwrap().len(), 2);
}

#[test]
fn symmetric_quadratic_oracle_picks_equal_rates() {
    let p = QuadraticProblem {
        train_curvature: vec![1.5, 1.5],
        train_optimum: vec![0.0, 0.0],
        val_curvature: vec![1.0, 1.0],
        val_optimum: vec![0.25, 0.25],
        init: vec![1.0, 1.0],
        steps: 30,
    };
    let g = AlphaGrid::log_spaced(1e-3, 0.5, 40, 2).unwrap();
    let r = bilevel_oracle(&p, &g).unwrap();
    assert_eq!(r.best_alpha[0], r.best_alpha[1]);
    assert_eq!(r.surface.len(), 1600);
}

#[test]
fn one_layer_quadratic_oracle_near_analytic_step() {
    let (a, t, th0, v, steps) = (2.0, 0.0, 1.0, 0.3, 20);
    let p = QuadraticProblem {
        train_curvature: vec![a],
        train_optimum: vec![t],
        val_curvature: vec![1.0],
        val_optimum: vec![v],
        init: vec![th0],
        steps,
    };
    // θ_T = v exactly when (1 − αa)^T = (v − t)/(θ0 − t)
    let c: f64 = (v - t) / (th0 - t);
    let analytic = (1.0 - c.powf(1.0 / steps as f64)) / a;
    let g = AlphaGrid::log_spaced(1e-4, 1.0, 41, 1).unwrap();
    let r = bilevel_oracle(&p, &g).unwrap();
    let (got, want) = (
        g.nearest_index(0, r.best_alpha[0]),
        g.nearest_index(0, analytic),
    );
    assert!(
        got.abs_diff(want) <= 1,
        "oracle {} vs analytic {analytic}",
        r.best_alpha[0]
    );
}

#[test]
fn online_rates_land_near_the_oracle_on_the_reference_problem() {
    let report = run_oracle(&ExperimentConfig::default()).unwrap();
    assert!(
        report.grid_steps() <= 2,
        "grid steps {}",
        report.grid_steps()
    );
    assert!(report.online_alpha_loss <= report.initial_loss);
    assert!(report.loss_ratio() <= 1.05, "ratio {}", report.loss_ratio());
    assert!(report
        .trace
        .all_alphas()
        .all(|a| (1e-6..=1e-2).contains(&a)));
}
