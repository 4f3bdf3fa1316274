use std::fs;
use std::io::Write;
use std::path::Path;

use super::MetaStepReport;
use crate::error::{Error, Result};

pub const TRACE_HEADER: &str = "iteration,layer,alpha,hypergradient,train_loss,val_loss";

/// Learning-rate trajectory of one run: one [`MetaStepReport`] per iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LrTrace {
    layers: Vec<String>,
    reports: Vec<MetaStepReport>,
}

impl LrTrace {
    pub fn new(layers: Vec<String>) -> Self {
        LrTrace {
            layers,
            reports: Vec::new(),
        }
    }

    pub fn push(&mut self, report: MetaStepReport) {
        debug_assert!(report.alpha_after.keys().eq(self.layers.iter()));
        self.reports.push(report);
    }

    pub fn layers(&self) -> &[String] {
        &self.layers
    }

    pub fn reports(&self) -> &[MetaStepReport] {
        &self.reports
    }

    pub fn iterations(&self) -> usize {
        self.reports.len()
    }

    /// Rows of the CSV form: iterations × layers.
    pub fn row_count(&self) -> usize {
        self.reports.len() * self.layers.len()
    }

    /// α after each update for one layer.
    pub fn alpha_series(&self, layer: &str) -> Vec<f64> {
        self.reports
            .iter()
            .filter_map(|r| r.alpha_after.get(layer).copied())
            .collect()
    }

    /// Mean α of `layer` over the last `fraction` of iterations (at least
    /// one iteration).
    pub fn tail_mean_alpha(&self, layer: &str, fraction: f64) -> Option<f64> {
        let series = self.alpha_series(layer);
        if series.is_empty() {
            return None;
        }
        let k = ((series.len() as f64 * fraction).ceil() as usize).clamp(1, series.len());
        let tail = &series[series.len() - k..];
        Some(tail.iter().sum::<f64>() / k as f64)
    }

    /// Every α observed anywhere in the trace, before and after each update.
    pub fn all_alphas(&self) -> impl Iterator<Item = f64> + '_ {
        self.reports.iter().flat_map(|r| {
            r.alpha_before
                .values()
                .chain(r.alpha_after.values())
                .copied()
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.row_count() + 1));
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for r in &self.reports {
            for layer in &self.layers {
                out.push_str(&format!(
                    "{},{},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                    r.iteration,
                    layer,
                    r.alpha_after[layer],
                    r.hypergradient[layer],
                    r.train_loss,
                    r.val_loss
                ));
            }
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}
