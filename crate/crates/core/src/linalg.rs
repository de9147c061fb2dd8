//! Small dense linear-algebra helpers shared by the design and pipeline code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Singular value decomposition with singular values sorted nonincreasing.
#[derive(Debug, Clone)]
pub struct SortedSvd {
    /// Left singular vectors as columns.
    pub u: DMatrix<f64>,
    pub values: Vec<f64>,
    /// Right singular vectors as columns.
    pub v: DMatrix<f64>,
}

pub fn sorted_svd(x: &DMatrix<f64>) -> Result<SortedSvd> {
    let svd = x.clone().svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Numerical {
        iteration: 0,
        reason: "SVD did not produce U".into(),
    })?;
    let v_t = svd.v_t.ok_or_else(|| Error::Numerical {
        iteration: 0,
        reason: "SVD did not produce V^T".into(),
    })?;
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let mut su = DMatrix::zeros(u.nrows(), k);
    let mut sv = DMatrix::zeros(v_t.ncols(), k);
    let mut values = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        su.set_column(dst, &u.column(src));
        sv.set_column(dst, &v_t.row(src).transpose());
        values.push(svd.singular_values[src]);
    }
    if values.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical {
            iteration: 0,
            reason: "non-finite singular value".into(),
        });
    }
    Ok(SortedSvd { u: su, values, v: sv })
}

/// Number of singular values above `rel_threshold * values[0]`.
pub fn numerical_rank(values: &[f64], rel_threshold: f64) -> usize {
    let Some(&top) = values.first() else { return 0 };
    if top <= 0.0 {
        return 0;
    }
    values.iter().filter(|&&s| s > rel_threshold * top).count()
}

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

/// Symmetric square root through the eigendecomposition, clipping negative
/// eigenvalues to zero.
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    q * DMatrix::from_diagonal(&roots) * q.transpose()
}

pub fn frobenius_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn vector_from(slice: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(slice)
}
