//! Report files: `metrics.csv`, one trace CSV per seed, `summary.txt` and
//! the canonical `config.txt`.

use std::fs;
use std::path::{Path, PathBuf};

use super::{Ablation, OracleReport, RunReport};
use crate::error::{Error, Result};
use crate::optimizer::Metrics;
use crate::stats::{mean, paired_t_test_greater, std_dev};

pub const METRICS_HEADER: &str =
    "seed,train_loss,train_accuracy,val_loss,val_accuracy,test_loss,test_accuracy,wall_clock_secs";

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn metrics_csv(report: &RunReport) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in &report.records {
        let m = &r.metrics;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.seed,
            m.train_loss,
            m.train_accuracy,
            m.val_loss,
            m.val_accuracy,
            m.test_loss,
            m.test_accuracy,
            m.wall_clock_secs
        ));
    }
    out
}

/// Plain-text summary: label, fingerprint, seeds, mean ± std of every
/// metric (6 decimals) and the per-seed final α of online runs.
pub fn summary_text(report: &RunReport) -> String {
    let mut out = format!(
        "scheme: {}\nfingerprint: {}\nseeds: {}\n",
        report.label,
        report.fingerprint,
        {
            report
                .seeds()
                .iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join(",")
        }
    );
    for (name, m, s) in report.aggregate() {
        out.push_str(&format!("{name}: {m:.6} ± {s:.6}\n"));
    }
    for r in &report.records {
        if let Some(alpha) = &r.final_alpha {
            let parts: Vec<String> = alpha.iter().map(|(l, a)| format!("{l}={a:.6e}")).collect();
            out.push_str(&format!(
                "final_alpha seed {}: {}\n",
                r.seed,
                parts.join(" ")
            ));
        }
        if let Some(k) = r.frozen_prefix {
            out.push_str(&format!("frozen_prefix seed {}: {k}\n", r.seed));
        }
    }
    out
}

/// Writes the report into `dir` (created if missing) and records trace paths
/// in `report`. Returns every file written.
pub fn emit_report(report: &mut RunReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for r in &mut report.records {
        if let Some(trace) = &r.trace {
            let path = dir.join(format!("trace_seed{}.csv", r.seed));
            trace.write_csv(&path)?;
            r.trace_path = Some(path.clone());
            written.push(path);
        }
    }
    for (name, text) in [
        ("metrics.csv", metrics_csv(report)),
        ("summary.txt", summary_text(report)),
        ("config.txt", report.config_text.clone()),
    ] {
        let path = dir.join(name);
        write(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}

/// One sub-directory per row plus `ablation.csv` and a `summary.txt` table.
pub fn emit_ablation(ablation: &mut Ablation, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut csv = String::from("row,label,test_accuracy_mean,test_accuracy_std,fingerprint\n");
    for (i, row) in ablation.rows.iter_mut().enumerate() {
        written.extend(emit_report(&mut row.report, dir.join(format!("row{i}")))?);
        let acc = row.report.test_accuracies();
        csv.push_str(&format!(
            "{i},{},{},{},{}\n",
            row.label,
            mean(&acc),
            std_dev(&acc),
            row.report.fingerprint
        ));
    }
    for (name, text) in [("ablation.csv", csv), ("summary.txt", ablation.table())] {
        let path = dir.join(name);
        write(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}

/// `oracle_surface.csv`, the online trace and a summary.
pub fn emit_oracle(report: &OracleReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|a| format!("{a:.6e}"))
            .collect::<Vec<_>>()
            .join(",")
    };
    let summary = format!(
        "grid_points: {}\noracle_alpha: {}\noracle_val_loss: {:.9}\nonline_alpha: {}\nonline_alpha_val_loss: {:.9}\n\
         initial_alpha_val_loss: {:.9}\ntrajectory_val_loss: {:.9}\nloss_ratio: {:.6}\ngrid_steps: {}\n",
        report.grid.size(),
        fmt(&report.oracle.best_alpha),
        report.oracle.best_loss,
        fmt(&report.online_alpha),
        report.online_alpha_loss,
        report.initial_loss,
        report.trajectory_loss,
        report.loss_ratio(),
        report.grid_steps()
    );
    let mut written = Vec::new();
    for (name, text) in [
        ("oracle_surface.csv", report.oracle.surface_csv()),
        ("trace.csv", report.trace.to_csv()),
        ("summary.txt", summary),
    ] {
        let path = dir.join(name);
        write(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}

/// Reads a `metrics.csv` written by [`emit_report`]. `path` may also be the
/// report directory.
pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<(u64, Metrics)>> {
    let mut path = path.as_ref().to_path_buf();
    if path.is_dir() {
        path = path.join("metrics.csv");
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::MalformedHeader {
            path: path.clone(),
            reason: format!("expected `{METRICS_HEADER}`"),
        });
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let bad = |reason: String| Error::InvalidRecord {
            path: path.clone(),
            line: i + 2,
            reason,
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(bad(format!("expected 8 fields, found {}", f.len())));
        }
        let seed = f[0]
            .parse()
            .map_err(|_| bad(format!("bad seed {:?}", f[0])))?;
        let v = f[1..]
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| bad(format!("bad number {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((
            seed,
            Metrics {
                train_loss: v[0],
                train_accuracy: v[1],
                val_loss: v[2],
                val_accuracy: v[3],
                test_loss: v[4],
                test_accuracy: v[5],
                wall_clock_secs: v[6],
            },
        ));
    }
    Ok(rows)
}

/// Side-by-side test accuracy of several reports. Each report after the
/// first gets a one-sided paired p-value for beating the first, when both
/// cover the same seeds.
pub fn compare(paths: &[PathBuf]) -> Result<String> {
    if paths.is_empty() {
        return Err(Error::InvalidArgument("nothing to compare".into()));
    }
    let tables = paths
        .iter()
        .map(read_metrics_csv)
        .collect::<Result<Vec<_>>>()?;
    let width = paths
        .iter()
        .map(|p| p.display().to_string().len())
        .max()
        .unwrap_or(0);
    let acc = |t: &[(u64, Metrics)]| t.iter().map(|(_, m)| m.test_accuracy).collect::<Vec<_>>();
    let secs =
        |t: &[(u64, Metrics)]| mean(&t.iter().map(|(_, m)| m.wall_clock_secs).collect::<Vec<_>>());
    let first = &tables[0];
    let mut out = String::new();
    for (path, t) in paths.iter().zip(&tables) {
        let a = acc(t);
        let mut line = format!(
            "{:width$}  n={}  test_accuracy {:.6} ± {:.6}  time {:.3}s",
            path.display(),
            t.len(),
            mean(&a),
            std_dev(&a),
            secs(t)
        );
        if !std::ptr::eq(t, first) {
            let same_seeds = t.len() == first.len() && t.iter().zip(first).all(|(x, y)| x.0 == y.0);
            if same_seeds && t.len() >= 2 {
                line.push_str(&format!(
                    "  p(> first) {:.4}",
                    paired_t_test_greater(&a, &acc(first))
                ));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    Ok(out)
}
