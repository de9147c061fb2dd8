//! Slow, dense reference computations for cross-checking the fast paths.
//!
//! Nothing here shares code with `intsense-core`; every routine is written
//! from the defining formula.

use nalgebra::DMatrix;

#[cfg(feature = "conic")]
mod conic;
#[cfg(feature = "conic")]
pub use conic::{solve_nuclear_design, ConicSolution};

/// Dense `n × n` summed-area matrix for a `rows × cols` raster image:
/// entry `(i, j)` is 1 when pixel `j` lies above and left of pixel `i`.
pub fn dense_integral_matrix(rows: usize, cols: usize) -> DMatrix<f64> {
    let n = rows * cols;
    DMatrix::from_fn(n, n, |i, j| {
        let (ri, ci) = (i / cols, i % cols);
        let (rj, cj) = (j / cols, j % cols);
        if rj <= ri && cj <= ci {
            1.0
        } else {
            0.0
        }
    })
}

pub fn brute_integral(image: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let mut s = 0.0;
            for rr in 0..=r {
                for cc in 0..=c {
                    s += image[rr * cols + cc];
                }
            }
            out[r * cols + c] = s;
        }
    }
    out
}

/// Sum over the `k × k` window centred on each pixel, cropped at the border.
pub fn brute_box_sum(image: &[f64], rows: usize, cols: usize, k: usize) -> Vec<f64> {
    let h = (k / 2) as isize;
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows as isize {
        for c in 0..cols as isize {
            let mut s = 0.0;
            for rr in (r - h)..=(r + h) {
                for cc in (c - h)..=(c + h) {
                    if rr >= 0 && cc >= 0 && rr < rows as isize && cc < cols as isize {
                        s += image[rr as usize * cols + cc as usize];
                    }
                }
            }
            out[r as usize * cols + c as usize] = s;
        }
    }
    out
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, depth)
}

/// `γ(a, x) / Γ(a)` by quadrature of `∫ e^{-u^{1/a}} du` over `[0, x^a]`,
/// a substitution that removes the singularity of `t^{a-1}` at zero.
pub fn quadrature_reg_lower_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let g = |u: f64| (-u.powf(1.0 / a)).exp();
    let upper_inf = 60f64.powf(a);
    let part = |lo: f64, hi: f64| {
        let mut s = 0.0;
        let pieces = 64;
        for k in 0..pieces {
            let a0 = lo + (hi - lo) * k as f64 / pieces as f64;
            let b0 = lo + (hi - lo) * (k + 1) as f64 / pieces as f64;
            s += adaptive_simpson(&g, a0, b0, 1e-15, 40);
        }
        s
    };
    let xa = x.powf(a).min(upper_inf);
    let num = part(0.0, xa);
    let total = num + part(xa, upper_inf);
    num / total
}

/// Dense matrix of `P ↦ (Σ_U Pᵀ h_i)_i` acting on column-major `vec(P)`,
/// with outputs stacked constraint by constraint.
pub fn dense_design_matrix(sigma_u: &DMatrix<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
    let dim = sigma_u.nrows();
    let n = h.nrows();
    let mut a = DMatrix::zeros(n * dim, n * n);
    for i in 0..n {
        for r in 0..dim {
            for col in 0..n {
                let s = sigma_u[(r, col)];
                if s == 0.0 {
                    continue;
                }
                for row in 0..n {
                    a[(i * dim + r, col * n + row)] = s * h[(i, row)];
                }
            }
        }
    }
    a
}

/// `‖A‖₂` for the design operator: it factors as a Kronecker product, so the
/// norm is `σ_max(Σ_U) · σ_max(H)`.
pub fn design_spectral_norm(sigma_u: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
    let top = |m: &DMatrix<f64>| m.singular_values().max();
    top(sigma_u) * top(h)
}

/// `b_i = Σ_U h_i` as the columns of a matrix.
pub fn dense_b(sigma_u: &DMatrix<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
    sigma_u * h.transpose()
}
