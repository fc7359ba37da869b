//! Linear soft-margin SVM with an unregularized bias, trained in the dual by
//! sequential minimal optimization with second-order working-set selection.
//!
//! Primal: minimize ½‖w‖² + C Σ max(0, 1 − yᵢ(w·xᵢ + b)).
//! Dual (minimization form): ½ αᵀQα − Σα with Qᵢⱼ = yᵢyⱼ xᵢ·xⱼ,
//! 0 ≤ αᵢ ≤ C and Σ yᵢαᵢ = 0. Each SMO step cannot increase the dual
//! objective, which is what the per-epoch trace records.

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{check_binary_labels, LearnError};

const TAU: f64 = 1e-12;

fn default_c() -> f64 {
    1.0
}
fn default_epochs() -> usize {
    1000
}
fn default_tolerance() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    #[serde(default = "default_c")]
    pub c: f64,
    /// One epoch is `n` pair updates.
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Stopping threshold on the maximal KKT violation.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Recorded with the model. The solver itself draws no random numbers.
    #[serde(default)]
    pub seed: u64,
}

impl SvmConfig {
    pub fn new(seed: u64) -> Self {
        SvmConfig {
            c: default_c(),
            epochs: default_epochs(),
            tolerance: default_tolerance(),
            seed,
        }
    }

    pub(crate) fn validate(&self) -> Result<(), LearnError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(LearnError::Config(format!(
                "C must be positive, got {}",
                self.c
            )));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 || self.epochs == 0 {
            return Err(LearnError::Config(
                "tolerance and epochs must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// f(x) = w·x + b; class +1 when f(x) ≥ 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn decision(&self, x: &[f64]) -> Result<f64, LearnError> {
        if x.len() != self.weights.len() {
            return Err(LearnError::DimensionMismatch {
                expected: self.weights.len(),
                found: x.len(),
            });
        }
        Ok(self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias)
    }
}

/// Sign rule with ties going to +1.
pub fn predict_linear(m: &LinearModel, x: &[f64]) -> Result<i8, LearnError> {
    Ok(if m.decision(x)? >= 0.0 { 1 } else { -1 })
}

/// Primal objective ½‖w‖² + C Σ hinge.
pub fn svm_objective(m: &LinearModel, x: ArrayView2<'_, f64>, y: &[f64], c: f64) -> f64 {
    let reg = 0.5 * m.weights.iter().map(|w| w * w).sum::<f64>();
    let hinge: f64 = x
        .axis_iter(Axis(0))
        .zip(y)
        .map(|(row, &yi)| {
            let f = row.iter().zip(&m.weights).map(|(v, w)| v * w).sum::<f64>() + m.bias;
            (1.0 - yi * f).max(0.0)
        })
        .sum();
    reg + c * hinge
}

#[derive(Debug, Clone)]
pub struct SvmFit {
    pub model: LinearModel,
    /// Dual objective (minimization form) after each epoch and at exit.
    pub objective_trace: Vec<f64>,
    pub primal_objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn train_linear_svm(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    cfg: &SvmConfig,
) -> Result<LinearModel, LearnError> {
    train_linear_svm_traced(x, y, cfg).map(|fit| fit.model)
}

/// Trains on rows of `x` with labels in {−1, +1}. Features are expected to
/// be standardized by the caller.
pub fn train_linear_svm_traced(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    cfg: &SvmConfig,
) -> Result<SvmFit, LearnError> {
    cfg.validate()?;
    check_binary_labels(x, y, -1.0, 1.0)?;
    let gram = x.dot(&x.t());
    let sol = solve_dual(gram.view(), y, cfg);
    let model = primal_from_dual(x, y, &sol);
    let primal_objective = svm_objective(&model, x, y, cfg.c);
    Ok(SvmFit {
        model,
        objective_trace: sol.trace,
        primal_objective,
        iterations: sol.iterations,
        converged: sol.converged,
    })
}

pub(crate) fn primal_from_dual(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    sol: &DualSolution,
) -> LinearModel {
    let mut weights = vec![0.0; x.ncols()];
    for ((row, &yi), &a) in x.axis_iter(Axis(0)).zip(y).zip(&sol.alpha) {
        if a != 0.0 {
            for (w, v) in weights.iter_mut().zip(row) {
                *w += a * yi * v;
            }
        }
    }
    LinearModel {
        weights,
        bias: sol.bias,
    }
}

/// SMO on a precomputed linear kernel matrix.
pub(crate) fn solve_dual(gram: ArrayView2<'_, f64>, y: &[f64], cfg: &SvmConfig) -> DualSolution {
    let n = y.len();
    let c = cfg.c;
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut trace = Vec::new();
    let max_iter = cfg.epochs.saturating_mul(n.max(1));
    let mut iterations = 0;
    let mut converged = false;

    let objective = |alpha: &[f64], grad: &[f64]| -> f64 {
        0.5 * alpha
            .iter()
            .zip(grad)
            .map(|(a, g)| a * (g - 1.0))
            .sum::<f64>()
    };
    let in_up = |a: f64, yt: f64| if yt > 0.0 { a < c } else { a > 0.0 };
    let in_low = |a: f64, yt: f64| if yt > 0.0 { a > 0.0 } else { a < c };

    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut sel_i = None;
        for t in 0..n {
            if in_up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    sel_i = Some(t);
                }
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut sel_j = None;
        if let Some(i) = sel_i {
            let mut best = f64::INFINITY;
            for t in 0..n {
                if !in_low(alpha[t], y[t]) {
                    continue;
                }
                let v = y[t] * grad[t];
                gmax2 = gmax2.max(v);
                let grad_diff = gmax + v;
                if grad_diff > 0.0 {
                    let quad = gram[[i, i]] + gram[[t, t]] - 2.0 * gram[[i, t]];
                    let quad = if quad > 0.0 { quad } else { TAU };
                    let obj = -(grad_diff * grad_diff) / quad;
                    if obj < best {
                        best = obj;
                        sel_j = Some(t);
                    }
                }
            }
        }
        let (i, j) = match (sel_i, sel_j) {
            (Some(i), Some(j)) if gmax + gmax2 >= cfg.tolerance => (i, j),
            _ => {
                converged = true;
                break;
            }
        };
        if iterations >= max_iter {
            break;
        }

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let kij = gram[[i, j]];
        let quad = gram[[i, i]] + gram[[j, j]] - 2.0 * kij;
        let quad = if quad > 0.0 { quad } else { TAU };
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for k in 0..n {
            grad[k] += y[k] * (y[i] * gram[[i, k]] * di + y[j] * gram[[j, k]] * dj);
        }
        iterations += 1;
        if iterations % n == 0 {
            trace.push(objective(&alpha, &grad));
        }
    }
    trace.push(objective(&alpha, &grad));

    DualSolution {
        bias: -rho(&alpha, &grad, y, c),
        alpha,
        trace,
        iterations,
        converged,
    }
}

/// Offset from the KKT conditions: averaged over free vectors, or the
/// midpoint of the feasible interval when none are free.
fn rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for ((&a, &g), &yi) in alpha.iter().zip(grad).zip(y) {
        let yg = yi * g;
        if a >= c {
            if yi < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if a <= 0.0 {
            if yi > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    }
}
