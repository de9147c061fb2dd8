use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::problem::DesignProblem;
use crate::error::{check_len, Result};
use crate::transforms::IntegralOperator;

/// How the rows `h_i` pick pixels: upper-left rectangles (the integral image)
/// or single pixels (used for synthetic isometric test problems).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowAggregation {
    Integral(IntegralOperator),
    Pointwise(usize),
}

impl RowAggregation {
    pub fn len(&self) -> usize {
        match self {
            RowAggregation::Integral(op) => op.len(),
            RowAggregation::Pointwise(n) => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `‖h_i‖`
    pub fn row_norm(&self, i: usize) -> f64 {
        match self {
            RowAggregation::Integral(op) => (((i / op.cols() + 1) * (i % op.cols() + 1)) as f64).sqrt(),
            RowAggregation::Pointwise(_) => 1.0,
        }
    }

    /// `v ← H v`
    pub fn forward_in_place(&self, v: &mut [f64]) {
        if let RowAggregation::Integral(op) = self {
            op.apply_in_place(v);
        }
    }

    /// `v ← Hᵀ v`
    pub fn transpose_in_place(&self, v: &mut [f64]) {
        if let RowAggregation::Integral(op) = self {
            op.apply_transpose_in_place(v);
        }
    }
}

/// `A(P)`: an `(n−1) × n` matrix whose column `i` is `A_i(P) = Σ_U Pᵀ h_i`.
///
/// Forms `P Σ_Uᵀ` once and then runs the cumulative-sum structure of `H` down
/// each column.
pub fn apply_forward(p: &DMatrix<f64>, problem: &DesignProblem) -> Result<DMatrix<f64>> {
    let n = problem.len();
    check_len("forward operator (rows)", n, p.nrows())?;
    check_len("forward operator (cols)", n, p.ncols())?;
    let mut g = p * problem.sigma_u_t();
    let agg = problem.aggregation();
    for mut col in g.column_iter_mut() {
        agg.forward_in_place(col.as_mut_slice());
    }
    Ok(g.transpose())
}

/// Adjoint `A*(Y) = Σ_i h_i y_iᵀ Σ_U = Hᵀ Yᵀ Σ_U` for `Y` holding `y_i` as columns.
pub fn apply_adjoint(y: &DMatrix<f64>, problem: &DesignProblem) -> Result<DMatrix<f64>> {
    check_len("adjoint operator (rows)", problem.detail_dim(), y.nrows())?;
    check_len("adjoint operator (cols)", problem.len(), y.ncols())?;
    let mut z = y.transpose();
    let agg = problem.aggregation();
    for mut col in z.column_iter_mut() {
        agg.transpose_in_place(col.as_mut_slice());
    }
    Ok(z * problem.sigma_u())
}

/// Successive estimates of `‖A‖₂` from power iteration on `A*A`.
pub fn spectral_norm_trace(problem: &DesignProblem, iterations: usize, seed: u64) -> Result<Vec<f64>> {
    weighted_norm_trace(problem, &vec![1.0; problem.len()], iterations, seed)
}

/// As [`spectral_norm_trace`] for the operator whose `i`-th output is scaled by `weights[i]`.
pub fn weighted_norm_trace(problem: &DesignProblem, weights: &[f64], iterations: usize, seed: u64) -> Result<Vec<f64>> {
    let n = problem.len();
    check_len("constraint weights", n, weights.len())?;
    let w = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(weights));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
    x /= x.norm();
    let mut trace = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let ax = apply_forward(&x, problem)? * &w;
        trace.push(ax.norm());
        let next = apply_adjoint(&(ax * &w), problem)?;
        let norm = next.norm();
        if norm == 0.0 {
            break;
        }
        x = next / norm;
    }
    Ok(trace)
}

/// Power-iteration estimate of the spectral norm of `A`.
pub fn estimate_spectral_norm(problem: &DesignProblem, iterations: usize, seed: u64) -> Result<f64> {
    Ok(spectral_norm_trace(problem, iterations, seed)?
        .into_iter()
        .fold(0.0, f64::max))
}
