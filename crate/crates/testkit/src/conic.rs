use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use nalgebra::DMatrix;

use crate::{dense_b, dense_design_matrix};

extern crate openblas_src;

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub p: DMatrix<f64>,
    pub objective: f64,
    pub status: String,
}

/// Solves `min τ‖P‖_* + ½‖P‖_F²` subject to `‖b_i − A_i(P)‖ ≤ Δ_i` with an
/// interior-point method, writing the nuclear norm through the semidefinite
/// block `[[W₁, P], [Pᵀ, W₂]] ⪰ 0` with objective `τ(tr W₁ + tr W₂)/2`.
pub fn solve_nuclear_design(
    sigma_u: &DMatrix<f64>,
    h: &DMatrix<f64>,
    delta_bounds: &[f64],
    tau: f64,
) -> Result<ConicSolution, String> {
    let n = h.nrows();
    let dim = sigma_u.nrows();
    let tri = n * (n + 1) / 2;
    let np = n * n;
    let nvar = np + 2 * tri;
    let tri_index = |r: usize, c: usize| c * (c + 1) / 2 + r;

    let mut q_diag = vec![0.0; nvar];
    q_diag[..np].iter_mut().for_each(|v| *v = 1.0);
    let mut lin = vec![0.0; nvar];
    for k in 0..n {
        lin[np + tri_index(k, k)] = tau / 2.0;
        lin[np + tri + tri_index(k, k)] = tau / 2.0;
    }

    let a_dense = dense_design_matrix(sigma_u, h);
    let b = dense_b(sigma_u, h);
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut rhs = Vec::new();
    let mut cones = Vec::new();
    for i in 0..n {
        rows.push(Vec::new());
        rhs.push(delta_bounds[i]);
        for r in 0..dim {
            let row = i * dim + r;
            rows.push(
                (0..np)
                    .filter_map(|c| {
                        let v = a_dense[(row, c)];
                        (v != 0.0).then_some((c, v))
                    })
                    .collect(),
            );
            rhs.push(b[(r, i)]);
        }
        cones.push(SupportedConeT::SecondOrderConeT(dim + 1));
    }

    let big = 2 * n;
    let sqrt2 = std::f64::consts::SQRT_2;
    for c in 0..big {
        for r in 0..=c {
            let scale = if r == c { 1.0 } else { sqrt2 };
            let var = if c < n {
                np + tri_index(r, c)
            } else if r >= n {
                np + tri + tri_index(r - n, c - n)
            } else {
                (c - n) * n + r
            };
            rows.push(vec![(var, -scale)]);
            rhs.push(0.0);
        }
    }
    cones.push(SupportedConeT::PSDTriangleConeT(big));

    let m = rows.len();
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nvar];
    for (ri, row) in rows.iter().enumerate() {
        for &(c, v) in row {
            cols[c].push((ri, v));
        }
    }
    let mut colptr = vec![0];
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    for col in &cols {
        for &(r, v) in col {
            rowval.push(r);
            nzval.push(v);
        }
        colptr.push(rowval.len());
    }
    let a_csc = CscMatrix::new(m, nvar, colptr, rowval, nzval);

    let mut pcol = vec![0];
    let mut prow = Vec::new();
    let mut pval = Vec::new();
    for (k, &d) in q_diag.iter().enumerate() {
        if d != 0.0 {
            prow.push(k);
            pval.push(d);
        }
        pcol.push(prow.len());
    }
    let p_csc = CscMatrix::new(nvar, nvar, pcol, prow, pval);

    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(1e-10)
        .tol_gap_rel(1e-10)
        .tol_feas(1e-10)
        .max_iter(400)
        .build()
        .map_err(|e| format!("{e:?}"))?;
    let mut solver = DefaultSolver::new(&p_csc, &lin, &a_csc, &rhs, &cones, settings).map_err(|e| format!("{e:?}"))?;
    solver.solve();
    let status = format!("{:?}", solver.solution.status);
    if !matches!(
        solver.solution.status,
        SolverStatus::Solved | SolverStatus::AlmostSolved
    ) {
        return Err(status);
    }
    let x = &solver.solution.x;
    let p = DMatrix::from_column_slice(n, n, &x[..np]);
    let nuclear: f64 = p.singular_values().iter().sum();
    let objective = tau * nuclear + 0.5 * p.norm_squared();
    Ok(ConicSolution { p, objective, status })
}
