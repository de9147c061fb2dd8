use nalgebra::DMatrix;

/// Singular value shrinkage `D_τ(X) = W (Σ − τ)_+ Vᵀ`.
pub fn shrink_singular_values(x: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    shrink_with_nuclear_norm(x, tau).0
}

/// [`shrink_singular_values`] together with the nuclear norm of the result.
pub fn shrink_with_nuclear_norm(x: &DMatrix<f64>, tau: f64) -> (DMatrix<f64>, f64) {
    let tau = tau.max(0.0);
    let svd = x.clone().svd(true, true);
    let (u, v_t) = (svd.u.expect("U requested"), svd.v_t.expect("V^T requested"));
    let kept: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > tau)
        .collect();
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    let mut nuclear = 0.0;
    if kept.is_empty() {
        return (out, nuclear);
    }
    let mut w = DMatrix::zeros(x.nrows(), kept.len());
    let mut vt = DMatrix::zeros(kept.len(), x.ncols());
    for (dst, &k) in kept.iter().enumerate() {
        let s = svd.singular_values[k] - tau;
        nuclear += s;
        w.set_column(dst, &(u.column(k) * s));
        vt.set_row(dst, &v_t.row(k));
    }
    out.gemm(1.0, &w, &vt, 0.0);
    (out, nuclear)
}

/// Euclidean projection of `(x, t)` onto the second-order cone `‖x‖ ≤ t`.
pub fn project_soc(x: &[f64], t: f64) -> (Vec<f64>, f64) {
    let mut v = x.to_vec();
    let s = project_soc_in_place(&mut v, t);
    (v, s)
}

/// In-place [`project_soc`]; returns the projected scalar part.
pub fn project_soc_in_place(x: &mut [f64], t: f64) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= t {
        return t;
    }
    if t <= -norm {
        x.iter_mut().for_each(|v| *v = 0.0);
        return 0.0;
    }
    let scale = (norm + t) / (2.0 * norm);
    x.iter_mut().for_each(|v| *v *= scale);
    scale * norm
}
