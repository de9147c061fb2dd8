use log::{debug, warn};
use nalgebra::{DMatrix, DVector};

use super::operator::{apply_adjoint, apply_forward, weighted_norm_trace};
use super::problem::DesignProblem;
use super::prox::{project_soc_in_place, shrink_with_nuclear_norm};
use crate::error::{check_len, Error, Result};

/// Positive per-constraint factors applied inside the recursion. Scaling a
/// cone constraint leaves the feasible set unchanged and only affects the
/// conditioning of the dual ascent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConstraintScaling {
    None,
    /// `1/‖h_i‖`.
    RowNorm,
    /// `1/‖b_i‖`, with constraints whose data vanish scaled like the largest.
    #[default]
    DataNorm,
}

impl ConstraintScaling {
    pub fn weights(self, problem: &DesignProblem) -> Vec<f64> {
        let n = problem.len();
        match self {
            ConstraintScaling::None => vec![1.0; n],
            ConstraintScaling::RowNorm => {
                let agg = problem.aggregation();
                (0..n).map(|i| 1.0 / agg.row_norm(i)).collect()
            }
            ConstraintScaling::DataNorm => {
                let top = problem.max_b_norm();
                if top == 0.0 {
                    return vec![1.0; n];
                }
                (0..n)
                    .map(|i| {
                        let b = problem.b().column(i).norm();
                        if b > 1e-9 * top {
                            1.0 / b
                        } else {
                            1.0 / top
                        }
                    })
                    .collect()
            }
        }
    }
}

/// Extrapolation applied on top of the projected dual step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Acceleration {
    None,
    /// Nesterov momentum with gradient restart. The step is capped at
    /// `1/‖A‖²`.
    #[default]
    Nesterov,
}

/// Solver settings. `tau = None` selects [`default_tau`].
#[derive(Debug, Clone, PartialEq)]
pub struct SvtConfig {
    pub tau: Option<f64>,
    /// Multiplier for the default `τ = factor · ‖A*(b)‖₂`.
    pub tau_factor: f64,
    /// Step is `step_factor / ‖A‖²` with the inflated norm estimate.
    pub step_factor: f64,
    pub norm_inflation: f64,
    pub power_iterations: usize,
    pub seed: u64,
    pub max_iterations: usize,
    /// Absolute bound on `max_i (‖A_i(P) − b_i‖ − Δ_i)`.
    pub feas_tol: f64,
    /// Bound on `‖P^k − P^{k−1}‖_F / ‖P^k‖_F`.
    pub rel_tol: f64,
    pub acceleration: Acceleration,
    pub scaling: ConstraintScaling,
    /// Keep `P𝟙 = Pᵀ𝟙 = 0` by centring the shrinkage input on both sides.
    pub center_mean: bool,
}

impl Default for SvtConfig {
    fn default() -> Self {
        Self {
            tau: None,
            tau_factor: 0.1,
            step_factor: 1.9,
            norm_inflation: 1.05,
            power_iterations: 100,
            seed: 0x5eed,
            max_iterations: 5000,
            feas_tol: 1e-6,
            rel_tol: 1e-6,
            acceleration: Acceleration::default(),
            scaling: ConstraintScaling::DataNorm,
            center_mean: true,
        }
    }
}

/// `factor · ‖A*(b)‖₂`, the spectral norm of the first primal step input when
/// the duals equal the data.
pub fn default_tau(problem: &DesignProblem, factor: f64) -> Result<f64> {
    let x = apply_adjoint(problem.b(), problem)?;
    let top = x.singular_values().iter().cloned().fold(0.0, f64::max);
    Ok(factor * top)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub max_violation: f64,
    pub nuclear_norm: f64,
    pub relative_change: f64,
}

/// One application of the projected dual map at a query point.
struct Evaluation {
    p: DMatrix<f64>,
    nuclear: f64,
    max_violation: f64,
    /// Image of the query point under the map.
    image: DVector<f64>,
}

#[derive(Debug, Clone)]
enum Accelerator {
    Plain,
    Nesterov {
        momentum: f64,
        anchor: DVector<f64>,
        previous: DVector<f64>,
    },
}

/// Primal/dual iterate of the thresholding recursion.
///
/// The dual multipliers `(y_i, s_i)` are stored flat: the `y_i` columns
/// first (column-major), then the `s_i`.
#[derive(Debug, Clone)]
pub struct SvtState {
    pub p: DMatrix<f64>,
    z: DVector<f64>,
    pub tau: f64,
    pub eta: f64,
    pub iteration: usize,
    pub center_mean: bool,
    /// Per-constraint scale applied inside the recursion.
    weights: Vec<f64>,
    accelerator: Accelerator,
}

impl SvtState {
    /// Zero-initialised state. Fails unless `0 < eta ≤ 2/‖A‖²`.
    pub fn new(problem: &DesignProblem, tau: f64, eta: f64, spectral_norm: f64) -> Result<Self> {
        Self::with_weights(problem, tau, eta, spectral_norm, vec![1.0; problem.len()])
    }

    /// State for the problem with constraint `i` scaled by `weights[i] > 0`;
    /// `spectral_norm` refers to the scaled operator.
    pub fn with_weights(
        problem: &DesignProblem,
        tau: f64,
        eta: f64,
        spectral_norm: f64,
        weights: Vec<f64>,
    ) -> Result<Self> {
        check_len("constraint weights", problem.len(), weights.len())?;
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Domain("constraint weights must be positive".into()));
        }
        if !(tau > 0.0) {
            return Err(Error::Domain(format!("tau must be positive, got {tau}")));
        }
        if !(spectral_norm > 0.0) {
            return Err(Error::Domain("operator norm must be positive".into()));
        }
        if !(eta > 0.0 && eta <= 2.0 / (spectral_norm * spectral_norm)) {
            return Err(Error::Domain(format!(
                "step {eta} violates 0 < eta <= 2/|A|^2 = {}",
                2.0 / (spectral_norm * spectral_norm)
            )));
        }
        let n = problem.len();
        Ok(Self {
            p: DMatrix::zeros(n, n),
            z: DVector::zeros(problem.detail_dim() * n + n),
            tau,
            eta,
            iteration: 0,
            center_mean: false,
            weights,
            accelerator: Accelerator::Plain,
        })
    }

    /// Switches the extrapolation scheme; only valid before the first step.
    pub fn set_acceleration(&mut self, acceleration: Acceleration, spectral_norm: f64) -> Result<()> {
        if self.iteration != 0 {
            return Err(Error::Config("acceleration must be chosen before iterating".into()));
        }
        self.accelerator = match acceleration {
            Acceleration::None => Accelerator::Plain,
            Acceleration::Nesterov => {
                if self.eta > 1.0 / (spectral_norm * spectral_norm) {
                    return Err(Error::Config(format!(
                        "momentum needs eta <= 1/|A|^2 = {}, got {}",
                        1.0 / (spectral_norm * spectral_norm),
                        self.eta
                    )));
                }
                Accelerator::Nesterov {
                    momentum: 1.0,
                    anchor: self.z.clone(),
                    previous: self.z.clone(),
                }
            }
        };
        Ok(())
    }

    /// Vector parts `y_i` as the columns of a matrix.
    pub fn dual_y(&self) -> DMatrix<f64> {
        let n = self.weights.len();
        let d = (self.z.len() - n) / n.max(1);
        DMatrix::from_column_slice(d, n, &self.z.as_slice()[..d * n])
    }

    pub fn dual_s(&self) -> &[f64] {
        let n = self.weights.len();
        &self.z.as_slice()[self.z.len() - n..]
    }

    /// Primal shrinkage at the dual point `z`, then the projected dual step.
    fn evaluate(&self, problem: &DesignProblem, z: &DVector<f64>) -> Result<Evaluation> {
        let n = problem.len();
        let d = problem.detail_dim();
        let mut scaled = DMatrix::from_column_slice(d, n, &z.as_slice()[..d * n]);
        for (mut col, w) in scaled.column_iter_mut().zip(&self.weights) {
            col *= *w;
        }
        let mut g = apply_adjoint(&scaled, problem)?;
        if self.center_mean {
            center_two_sided(&mut g);
        }
        let (p, nuclear) = shrink_with_nuclear_norm(&g, self.tau);
        let forward = apply_forward(&p, problem)?;

        let b = problem.b();
        let bounds = problem.delta_bounds();
        let mut image = z.clone();
        let mut max_violation = f64::NEG_INFINITY;
        let (ys, ss) = image.as_mut_slice().split_at_mut(d * n);
        for i in 0..n {
            let residual = b.column(i) - forward.column(i);
            max_violation = max_violation.max(residual.norm() - bounds[i]);
            let step = self.eta * self.weights[i];
            let y = &mut ys[i * d..(i + 1) * d];
            for (v, r) in y.iter_mut().zip(residual.iter()) {
                *v += step * r;
            }
            ss[i] = project_soc_in_place(y, ss[i] - step * bounds[i]);
        }
        Ok(Evaluation {
            p,
            nuclear,
            max_violation,
            image,
        })
    }

    /// One evaluation of the dual map followed by the extrapolation update.
    pub fn step(&mut self, problem: &DesignProblem) -> Result<IterationRecord> {
        self.iteration += 1;
        let k = self.iteration;
        let eval = self.evaluate(problem, &self.z)?;
        if !eval.nuclear.is_finite() || !eval.max_violation.is_finite() || eval.image.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                iteration: k,
                reason: "non-finite iterate".into(),
            });
        }

        let next = match &mut self.accelerator {
            Accelerator::Plain => eval.image.clone(),
            Accelerator::Nesterov {
                momentum,
                anchor,
                previous,
            } => {
                // Restart when the step opposes the previous direction.
                if (&self.z - &eval.image).dot(&(&eval.image - &*anchor)) > 0.0 {
                    *momentum = 1.0;
                }
                *previous = std::mem::replace(anchor, eval.image.clone());
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * *momentum * *momentum).sqrt());
                let w = (*momentum - 1.0) / t_next;
                *momentum = t_next;
                &*anchor + (&*anchor - &*previous) * w
            }
        };
        self.z = next;

        let next_norm = eval.p.norm();
        let change = (&eval.p - &self.p).norm();
        let relative_change = if next_norm > 0.0 {
            change / next_norm
        } else if change == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        self.p = eval.p;
        Ok(IterationRecord {
            iteration: k,
            max_violation: eval.max_violation,
            nuclear_norm: eval.nuclear,
            relative_change,
        })
    }
}

/// `G ← J G J` with `J = I − 𝟙𝟙ᵀ/n`.
fn center_two_sided(g: &mut DMatrix<f64>) {
    let n = g.nrows() as f64;
    let row_means = g.column_mean();
    let col_means = g.row_mean();
    let total = row_means.sum() / n;
    for (j, mut col) in g.column_iter_mut().enumerate() {
        for (i, v) in col.iter_mut().enumerate() {
            *v += total - row_means[i] - col_means[j];
        }
    }
}

#[derive(Debug, Clone)]
pub struct SvtOutcome {
    pub p: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub tau: f64,
    pub eta: f64,
    /// Inflated spectral-norm estimate used for the step size.
    pub spectral_norm: f64,
    pub history: Vec<IterationRecord>,
}

impl SvtOutcome {
    pub fn final_violation(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.max_violation)
    }

    /// Smoothed objective `τ‖P‖_* + ½‖P‖_F²` at the returned iterate.
    pub fn objective(&self) -> f64 {
        let nuclear: f64 = self.p.singular_values().iter().sum();
        self.tau * nuclear + 0.5 * self.p.norm_squared()
    }

    /// Convergence history as CSV (`iteration,max_violation,nuclear_norm,relative_change`).
    pub fn history_csv(&self) -> String {
        let mut s = String::from("iteration,max_violation,nuclear_norm,relative_change\n");
        for r in &self.history {
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.iteration, r.max_violation, r.nuclear_norm, r.relative_change
            ));
        }
        s
    }
}

/// Runs the thresholding recursion from zero duals until both the feasibility
/// and the relative-change tolerances are met, or the iteration budget runs
/// out (`converged = false`).
pub fn svt_solve(problem: &DesignProblem, config: &SvtConfig) -> Result<SvtOutcome> {
    let tau = match config.tau {
        Some(t) => t,
        None => default_tau(problem, config.tau_factor)?,
    };
    let weights = config.scaling.weights(problem);
    let trace = weighted_norm_trace(problem, &weights, config.power_iterations.max(1), config.seed)?;
    let norm = trace.into_iter().fold(0.0, f64::max) * config.norm_inflation;
    let step_factor = match config.acceleration {
        Acceleration::Nesterov => config.step_factor.min(1.0),
        Acceleration::None => config.step_factor,
    };
    let eta = step_factor / (norm * norm);
    debug!(
        "svt: n = {}, tau = {tau:e}, |A| ~ {norm:e}, eta = {eta:e}",
        problem.len()
    );

    let mut state = SvtState::with_weights(problem, tau, eta, norm, weights)?;
    state.set_acceleration(config.acceleration, norm)?;
    state.center_mean = config.center_mean;
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..config.max_iterations {
        let record = state.step(problem)?;
        history.push(record);
        if record.max_violation <= config.feas_tol && record.relative_change <= config.rel_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!(
            "svt: no convergence after {} iterations (violation {:e})",
            state.iteration,
            history.last().map_or(f64::NAN, |r| r.max_violation)
        );
    }
    Ok(SvtOutcome {
        p: state.p,
        converged,
        iterations: state.iteration,
        tau,
        eta,
        spectral_norm: norm,
        history,
    })
}
