use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "# tiny run\ntask.n_source = 300\ntask.n_target = 120\ntask.n_test = 100\n\
                     pretrain.iterations = 100\ntrain.iterations = 40\ntrain.batch_size = 8\nrun.seeds = 0,1\n";

fn metalr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metalr"))
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("exp.conf");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let out = metalr(&["run", &conf, "--out", out_dir.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("test_accuracy: "), "{stdout}");
    for f in [
        "metrics.csv",
        "summary.txt",
        "config.txt",
        "trace_seed0.csv",
        "trace_seed1.csv",
    ] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    let metrics = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
}

#[test]
fn seeds_and_trace_flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let out = metalr(&[
        "run",
        &conf,
        "--seeds",
        "4,5,6",
        "--no-trace",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let metrics = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    let seeds: Vec<&str> = metrics
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(seeds, ["4", "5", "6"]);
    assert!(!out_dir.join("trace_seed4.csv").exists());
    let config = fs::read_to_string(out_dir.join("config.txt")).unwrap();
    assert!(config.contains("run.seeds = 4,5,6"), "{config}");
}

#[test]
fn unknown_key_is_a_one_line_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), &format!("{SMALL}scheme.bta = 0.1\n"));
    let out = metalr(&["run", &conf]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.starts_with("error: config:"), "{stderr}");
    assert!(stderr.contains("scheme.bta"), "{stderr}");
}

#[test]
fn missing_config_is_an_io_error() {
    let out = metalr(&["run", "/nonexistent/exp.conf"]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .starts_with("error: io:"));
}

#[test]
fn compare_reads_two_reports() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(metalr(&["run", &conf, "--out", a.to_str().unwrap()])
        .status
        .success());
    let base = write_config(dir.path(), &format!("{SMALL}scheme.kind = all_layers\n"));
    assert!(metalr(&["run", &base, "--out", b.to_str().unwrap()])
        .status
        .success());

    let out = metalr(&["compare", b.to_str().unwrap(), a.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 2);
    assert!(
        stdout.lines().nth(1).unwrap().contains("p(> first)"),
        "{stdout}"
    );
}

#[test]
fn oracle_writes_surface() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(
        dir.path(),
        "oracle.grid_points = 4\noracle.steps = 50\noracle.samples = 40\n",
    );
    let out_dir = dir.path().join("o");
    let out = metalr(&["oracle", &conf, "--out", out_dir.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let surface = fs::read_to_string(out_dir.join("oracle_surface.csv")).unwrap();
    assert_eq!(surface.lines().count(), 1 + 16);
    assert!(String::from_utf8(out.stdout).unwrap().contains("ratio"));
}
