use nalgebra::DMatrix;

use super::operator::RowAggregation;
use crate::error::{check_len, Error, Result};
use crate::ggd::{delta_bound_from_probability, GgdShape, MggdModel};
use crate::linalg::sym_sqrt;
use crate::transforms::{IntegralOperator, WaveletBasis};

/// Distortion limits and the probability model they were converted under.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionSpec {
    /// Per-location limits `δ_i` in integral-image units.
    pub delta: Vec<f64>,
    pub eps: f64,
    pub beta: GgdShape,
}

/// Data of the conic design program.
#[derive(Debug, Clone)]
pub struct DesignProblem {
    sigma_u: DMatrix<f64>,
    sigma_u_t: DMatrix<f64>,
    aggregation: RowAggregation,
    /// Column `i` holds `b_i = Σ_U h_i`.
    b: DMatrix<f64>,
    delta_bounds: Vec<f64>,
    spec: Option<DistortionSpec>,
}

impl DesignProblem {
    /// Problem from an explicit `(n−1) × n` operator `Σ_U`, row structure and
    /// cone radii. `b` is derived as `b_i = Σ_U h_i`.
    pub fn from_parts(sigma_u: DMatrix<f64>, aggregation: RowAggregation, delta_bounds: Vec<f64>) -> Result<Self> {
        let n = aggregation.len();
        if n < 2 {
            return Err(Error::Domain("design needs at least two pixels".into()));
        }
        check_len("sigma_u columns", n, sigma_u.ncols())?;
        check_len("delta bounds", n, delta_bounds.len())?;
        if let Some(bad) = delta_bounds.iter().find(|d| !(**d >= 0.0)) {
            return Err(Error::Domain(format!("cone radius must be >= 0, got {bad}")));
        }
        let sigma_u_t = sigma_u.transpose();
        let mut bt = sigma_u_t.clone();
        for mut col in bt.column_iter_mut() {
            aggregation.forward_in_place(col.as_mut_slice());
        }
        Ok(Self {
            sigma_u,
            sigma_u_t,
            aggregation,
            b: bt.transpose(),
            delta_bounds,
            spec: None,
        })
    }

    /// Number of pixels `n` per block.
    pub fn len(&self) -> usize {
        self.aggregation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows of `Σ_U`, i.e. the dimension of each cone's vector part.
    pub fn detail_dim(&self) -> usize {
        self.sigma_u.nrows()
    }

    pub fn sigma_u(&self) -> &DMatrix<f64> {
        &self.sigma_u
    }

    pub(crate) fn sigma_u_t(&self) -> &DMatrix<f64> {
        &self.sigma_u_t
    }

    pub fn aggregation(&self) -> RowAggregation {
        self.aggregation
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn delta_bounds(&self) -> &[f64] {
        &self.delta_bounds
    }

    pub fn spec(&self) -> Option<&DistortionSpec> {
        self.spec.as_ref()
    }

    pub fn max_b_norm(&self) -> f64 {
        self.b.column_iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Per-constraint margin `‖A_i(P) − b_i‖ − Δ_i`; nonpositive means satisfied.
    pub fn constraint_margins(&self, p: &DMatrix<f64>) -> Result<Vec<f64>> {
        let a = super::operator::apply_forward(p, self)?;
        Ok((0..self.len())
            .map(|i| (a.column(i) - self.b.column(i)).norm() - self.delta_bounds[i])
            .collect())
    }
}

/// Builds the program for blocks analysed by `basis` under `model`.
///
/// `Σ_U` is the symmetric square root of the detail covariance applied to
/// `U_{2:n}ᵀ`, so `‖A_i(P) − b_i‖` is exactly the standard deviation of the
/// distortion at location `i`; `Δ_i` is the largest standard deviation meeting
/// `P(|d_i| ≤ δ_i) ≥ 1 − eps`.
pub fn build_design_problem(basis: &WaveletBasis, model: &MggdModel, delta: &[f64], eps: f64) -> Result<DesignProblem> {
    let n = basis.len();
    check_len("model dimension", n - 1, model.dim())?;
    check_len("distortion limits", n, delta.len())?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    let beta = model.beta();
    let delta_bounds = delta
        .iter()
        .map(|&d| delta_bound_from_probability(d, eps, beta))
        .collect::<Result<Vec<_>>>()?;
    let root = sym_sqrt(&model.covariance());
    let sigma_u = root * basis.detail_rows();
    let integral = IntegralOperator::square(basis.block_side())?;
    let mut problem = DesignProblem::from_parts(sigma_u, RowAggregation::Integral(integral), delta_bounds)?;
    problem.spec = Some(DistortionSpec {
        delta: delta.to_vec(),
        eps,
        beta,
    });
    Ok(problem)
}
