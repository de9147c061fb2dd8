#![allow(dead_code)]

use intsense_core::design::{DesignProblem, RowAggregation};
use intsense_core::linalg::sym_sqrt;
use intsense_core::transforms::{build_wavelet_basis, max_levels, IntegralOperator, WaveletBasis, WaveletFamily};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Random orthogonal matrix from the QR factorization of a Gaussian-ish draw.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
    random_matrix(rng, dim, dim).qr().q()
}

/// SPD matrix with eigenvalues spread geometrically over `[scale/cond, scale]`.
pub fn random_covariance(rng: &mut ChaCha8Rng, dim: usize, cond: f64, scale: f64) -> DMatrix<f64> {
    let q = random_orthogonal(rng, dim);
    let eig = DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            let t = if dim > 1 { i as f64 / (dim - 1) as f64 } else { 0.0 };
            scale * cond.powf(-t)
        } else {
            0.0
        }
    });
    let c = &q * eig * q.transpose();
    (&c + c.transpose()) * 0.5
}

pub fn basis(f: usize) -> WaveletBasis {
    build_wavelet_basis(f, max_levels(f), WaveletFamily::Daubechies(2)).unwrap()
}

/// Design problem over a random detail covariance whose cone radii are a
/// random fraction of `‖b_i‖`, the spread achieved by `P = 0`.
pub fn synthetic_problem(f: usize, seed: u64) -> DesignProblem {
    let mut rng = rng(seed);
    let n = f * f;
    let cov = random_covariance(&mut rng, n - 1, 20.0, 1e-2);
    let sigma_u = sym_sqrt(&cov) * basis(f).detail_rows();
    let aggregation = RowAggregation::Integral(IntegralOperator::square(f).unwrap());
    let unit = DesignProblem::from_parts(sigma_u.clone(), aggregation, vec![0.0; n]).unwrap();
    let bounds = (0..n)
        .map(|i| rng.random_range(0.2..0.6) * unit.b().column(i).norm())
        .collect();
    DesignProblem::from_parts(sigma_u, aggregation, bounds).unwrap()
}
