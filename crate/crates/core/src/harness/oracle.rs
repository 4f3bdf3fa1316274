//! Exhaustive grid search over per-layer step sizes for tiny bi-level
//! problems: train with fixed rates, score the validation loss, keep the best.
//!
//! This is a measuring instrument for the online method, not a training path.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::nn::{build_mlp, Model, ModelSpec};
use crate::optimizer::{meta_iteration, sgd_step, HyperLrPolicy, LearningRates, LrTrace};
use crate::tensor::{compute_loss, LossKind, Tensor};

/// Largest grid [`bilevel_oracle`] will evaluate.
pub const MAX_GRID_POINTS: usize = 10_000;

/// An outer objective: validation loss after inner training with one fixed
/// step size per layer.
pub trait BilevelProblem {
    fn layers(&self) -> usize;
    fn validation_loss(&self, alphas: &[f64]) -> Result<f64>;
}

/// Candidate step sizes, one axis per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaGrid {
    pub axes: Vec<Vec<f64>>,
}

impl AlphaGrid {
    /// `points` log-spaced values from `lo` to `hi` inclusive on every axis.
    pub fn log_spaced(lo: f64, hi: f64, points: usize, layers: usize) -> Result<Self> {
        if !(lo > 0.0 && lo < hi && points >= 2) {
            return Err(Error::InvalidArgument(format!(
                "log grid needs 0 < lo < hi and at least 2 points, got [{lo}, {hi}] x {points}"
            )));
        }
        let (a, b) = (lo.ln(), hi.ln());
        let axis: Vec<f64> = (0..points)
            .map(|i| {
                if i + 1 == points {
                    hi
                } else {
                    (a + (b - a) * i as f64 / (points - 1) as f64).exp()
                }
            })
            .collect();
        Ok(AlphaGrid {
            axes: vec![axis; layers],
        })
    }

    pub fn size(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    fn point(&self, mut flat: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.axes.len()];
        for (j, axis) in self.axes.iter().enumerate().rev() {
            out[j] = axis[flat % axis.len()];
            flat /= axis.len();
        }
        out
    }

    /// Index of the grid value closest to `alpha` on a log scale.
    pub fn nearest_index(&self, layer: usize, alpha: f64) -> usize {
        let axis = &self.axes[layer];
        let mut best = 0;
        for (i, v) in axis.iter().enumerate() {
            if (v.ln() - alpha.ln()).abs() < (axis[best].ln() - alpha.ln()).abs() {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub best_alpha: Vec<f64>,
    pub best_loss: f64,
    /// Every evaluated point with its validation loss, in grid order.
    pub surface: Vec<(Vec<f64>, f64)>,
}

impl OracleResult {
    pub fn surface_csv(&self) -> String {
        let d = self.best_alpha.len();
        let mut out: String = (1..=d).map(|j| format!("alpha{j},")).collect();
        out.push_str("val_loss\n");
        for (alphas, loss) in &self.surface {
            for a in alphas {
                out.push_str(&format!("{a:.12e},"));
            }
            out.push_str(&format!("{loss:.12e}\n"));
        }
        out
    }
}

/// Evaluates every grid point and returns the argmin. Ties keep the first
/// point in grid order; non-finite losses never win.
pub fn bilevel_oracle(problem: &dyn BilevelProblem, grid: &AlphaGrid) -> Result<OracleResult> {
    if grid.axes.len() != problem.layers() {
        return Err(Error::LayerMismatch {
            expected: vec![format!("{} axes", problem.layers())],
            actual: vec![format!("{} axes", grid.axes.len())],
        });
    }
    if grid.axes.iter().any(Vec::is_empty) {
        return Err(Error::InvalidArgument("grid axis is empty".into()));
    }
    let size = grid.size();
    if size > MAX_GRID_POINTS {
        return Err(Error::InvalidArgument(format!(
            "grid has {size} points, limit is {MAX_GRID_POINTS}"
        )));
    }
    let mut surface: Vec<(Vec<f64>, f64)> = Vec::with_capacity(size);
    let mut best: Option<usize> = None;
    for i in 0..size {
        let alphas = grid.point(i);
        let loss = problem.validation_loss(&alphas)?;
        if loss.is_finite() && best.is_none_or(|b| loss < surface[b].1) {
            best = Some(i);
        }
        surface.push((alphas, loss));
    }
    let b = best.ok_or_else(|| Error::NonFinite("every grid point diverged".into()))?;
    Ok(OracleResult {
        best_alpha: surface[b].0.clone(),
        best_loss: surface[b].1,
        surface,
    })
}

/// Independent 1-D quadratics, one per layer, trained by `steps` steps of
/// gradient descent:
///
/// ```text
/// L_train_j(θ) = ½ a_j (θ − t_j)²      L_val_j(θ) = ½ b_j (θ − v_j)²
/// θ_T = t_j + (1 − α_j a_j)^T (θ0_j − t_j)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    pub train_curvature: Vec<f64>,
    pub train_optimum: Vec<f64>,
    pub val_curvature: Vec<f64>,
    pub val_optimum: Vec<f64>,
    pub init: Vec<f64>,
    pub steps: usize,
}

impl QuadraticProblem {
    fn check(&self) -> Result<()> {
        let d = self.init.len();
        let lens = [
            self.train_curvature.len(),
            self.train_optimum.len(),
            self.val_curvature.len(),
            self.val_optimum.len(),
        ];
        if d == 0 || d > 2 || lens.iter().any(|&l| l != d) {
            return Err(Error::InvalidArgument(format!(
                "quadratic problem needs 1 or 2 layers with matching coefficient lists, got {d} and {lens:?}"
            )));
        }
        Ok(())
    }

    /// Parameters after inner training, computed by iterating the steps.
    pub fn trained(&self, alphas: &[f64]) -> Vec<f64> {
        (0..self.init.len())
            .map(|j| {
                let mut th = self.init[j];
                for _ in 0..self.steps {
                    th -= alphas[j] * self.train_curvature[j] * (th - self.train_optimum[j]);
                }
                th
            })
            .collect()
    }
}

impl BilevelProblem for QuadraticProblem {
    fn layers(&self) -> usize {
        self.init.len()
    }

    fn validation_loss(&self, alphas: &[f64]) -> Result<f64> {
        self.check()?;
        Ok(self
            .trained(alphas)
            .iter()
            .enumerate()
            .map(|(j, th)| 0.5 * self.val_curvature[j] * (th - self.val_optimum[j]).powi(2))
            .sum())
    }
}

/// A small model trained full-batch on `train` for `steps` steps; the outer
/// objective is the loss on `val`.
#[derive(Debug, Clone)]
pub struct ModelProblem {
    pub model: Model,
    pub train: Batch,
    pub val: Batch,
    pub steps: usize,
    pub loss: LossKind,
}

/// Shape of a teacher-student regression problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeacherStudent {
    pub inputs: usize,
    pub hidden: usize,
    pub samples: usize,
    pub noise: f64,
    pub input_scale: f64,
    pub steps: usize,
}

impl Default for TeacherStudent {
    fn default() -> Self {
        TeacherStudent {
            inputs: 6,
            hidden: 6,
            samples: 24,
            noise: 0.5,
            input_scale: 1.0,
            steps: 500,
        }
    }
}

impl ModelProblem {
    /// A 2-layer ReLU student `[inputs, hidden, 1]` fits noisy samples of a
    /// linear teacher and is scored on as many fresh samples.
    pub fn teacher_student(seed: u64, spec: TeacherStudent) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal =
            |k: usize| -> Vec<f64> { (0..k).map(|_| StandardNormal.sample(&mut rng)).collect() };
        let teacher = normal(spec.inputs);
        let mut sample = |rows: usize| -> Result<Batch> {
            let x: Vec<f64> = normal(rows * spec.inputs)
                .into_iter()
                .map(|v| v * spec.input_scale)
                .collect();
            let eps = normal(rows);
            let y: Vec<f64> = x
                .chunks(spec.inputs)
                .zip(&eps)
                .map(|(r, e)| {
                    r.iter().zip(&teacher).map(|(a, b)| a * b).sum::<f64>() + spec.noise * e
                })
                .collect();
            Ok(Batch {
                inputs: Tensor::new(vec![rows, spec.inputs], x)?,
                labels: Tensor::new(vec![rows, 1], y)?,
                indices: (0..rows).collect(),
            })
        };
        let train = sample(spec.samples)?;
        let val = sample(spec.samples)?;
        let model = build_mlp(ModelSpec::mlp(
            &[spec.inputs, spec.hidden, 1],
            seed ^ 0xbeef,
        ))?;
        Ok(ModelProblem {
            model,
            train,
            val,
            steps: spec.steps,
            loss: LossKind::MeanSquaredError,
        })
    }

    pub fn val_loss_of(&self, model: &Model) -> Result<f64> {
        let out = model.forward(&self.val.inputs)?;
        compute_loss(out.output(), &self.val.labels, self.loss)
    }

    /// Model after `steps` full-batch steps with per-layer rates `alphas`.
    pub fn train_fixed(&self, alphas: &[f64]) -> Result<Model> {
        let rates: Vec<Option<f64>> = alphas.iter().map(|&a| Some(a)).collect();
        let mut model = self.model.clone();
        for _ in 0..self.steps {
            let cache = model.forward(&self.train.inputs)?;
            let g = model.backward(&cache, &self.train.labels, self.loss)?;
            let next = sgd_step(model.params(), &rates, &g)?;
            model.set_params(next)?;
        }
        Ok(model)
    }

    /// Runs the online method for `steps` iterations on the same data and
    /// returns its trace.
    pub fn run_online(
        &self,
        lrs: LearningRates,
        policy: HyperLrPolicy,
    ) -> Result<(LrTrace, Model)> {
        let mut model = self.model.clone();
        let mut lrs = lrs;
        let mut trace = LrTrace::new(model.layer_groups());
        for _ in 0..self.steps {
            trace.push(meta_iteration(
                &mut model,
                &self.train,
                &self.val,
                &mut lrs,
                policy,
                self.loss,
            )?);
        }
        Ok((trace, model))
    }
}

impl BilevelProblem for ModelProblem {
    fn layers(&self) -> usize {
        self.model.depth()
    }

    fn validation_loss(&self, alphas: &[f64]) -> Result<f64> {
        if alphas.len() != self.layers() || self.layers() > 2 {
            return Err(Error::InvalidArgument(format!(
                "model problem has {} layers, got {} rates",
                self.layers(),
                alphas.len()
            )));
        }
        match self.train_fixed(alphas) {
            Ok(model) => self.val_loss_of(&model).or(Ok(f64::INFINITY)),
            Err(Error::NonFinite(_)) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    }
}

/// Per-layer mean of α over the whole trace.
pub fn time_averaged_alpha(trace: &LrTrace) -> Vec<f64> {
    trace
        .layers()
        .iter()
        .map(|l| trace.tail_mean_alpha(l, 1.0).unwrap_or(f64::NAN))
        .collect()
}
