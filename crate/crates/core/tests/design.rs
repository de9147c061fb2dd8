mod common;

use intsense_core::design::*;
use intsense_core::ggd::{delta_bound_from_probability, GgdShape, MggdModel};
use intsense_core::linalg::frobenius_dot;
use intsense_core::Error;
use intsense_testkit::{
    dense_b, dense_design_matrix, dense_integral_matrix, design_spectral_norm, solve_nuclear_design,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use std::sync::OnceLock;

fn h_dense(f: usize) -> DMatrix<f64> {
    dense_integral_matrix(f, f)
}

#[test]
fn problem_data_matches_dense_oracle() {
    let problem = common::synthetic_problem(4, 1);
    let b = dense_b(problem.sigma_u(), &h_dense(4));
    assert!((problem.b() - &b).amax() < 1e-12);
}

#[test]
fn built_problem_uses_probability_bounds() {
    let basis = common::basis(4);
    let mut rng = common::rng(2);
    let cov = common::random_covariance(&mut rng, 15, 10.0, 0.01);
    let beta = GgdShape::new(0.68).unwrap();
    let model = MggdModel::from_covariance(beta, &cov).unwrap();
    let delta: Vec<f64> = (0..16).map(|_| rng.random_range(0.0..0.2)).collect();
    let problem = build_design_problem(&basis, &model, &delta, 0.05).unwrap();
    for i in 0..16 {
        let want = delta_bound_from_probability(delta[i], 0.05, beta).unwrap();
        assert_eq!(problem.delta_bounds()[i], want);
    }
    let spec = problem.spec().unwrap();
    assert_eq!(spec.delta, delta);
    assert_eq!(spec.eps, 0.05);

    let root = {
        let e = cov.clone().symmetric_eigen();
        let d = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0).sqrt()));
        &e.eigenvectors * d * e.eigenvectors.transpose()
    };
    let want_b = dense_b(&(root * basis.detail_rows()), &h_dense(4));
    assert!((problem.b() - want_b).amax() < 1e-12);

    let zero = build_design_problem(&basis, &model, &[0.0; 16], 0.05).unwrap();
    assert!(zero.delta_bounds().iter().all(|d| *d == 0.0));

    let unit = MggdModel::from_covariance(beta, &DMatrix::identity(15, 15)).unwrap();
    let p = build_design_problem(&basis, &unit, &delta, 0.05).unwrap();
    let want = basis.detail_rows() * h_dense(4).transpose();
    assert!((p.b() - want).amax() < 1e-12);

    assert!(matches!(
        build_design_problem(&basis, &model, &delta[..15], 0.05),
        Err(Error::DimensionMismatch { .. })
    ));
    assert!(build_design_problem(&basis, &model, &delta, 1.0).is_err());
    assert!(build_design_problem(&common::basis(8), &model, &[0.0; 64], 0.05).is_err());
}

#[test]
fn forward_matches_dense_oracle_and_is_linear() {
    let problem = common::synthetic_problem(4, 3);
    let mut rng = common::rng(4);
    let dense = dense_design_matrix(problem.sigma_u(), &h_dense(4));
    for _ in 0..5 {
        let p = common::random_matrix(&mut rng, 16, 16);
        let fast = apply_forward(&p, &problem).unwrap();
        let slow = &dense * DVector::from_column_slice(p.as_slice());
        let slow = DMatrix::from_column_slice(15, 16, slow.as_slice());
        assert!((&fast - slow).amax() < 1e-11);

        let q = common::random_matrix(&mut rng, 16, 16);
        let mix = apply_forward(&(&p * 2.0 - &q * 0.5), &problem).unwrap();
        let sep = fast * 2.0 - apply_forward(&q, &problem).unwrap() * 0.5;
        assert!((mix - sep).amax() < 1e-10);
    }
    assert_eq!(
        apply_forward(&DMatrix::zeros(16, 16), &problem).unwrap(),
        DMatrix::zeros(15, 16)
    );
    assert!(apply_forward(&DMatrix::zeros(15, 16), &problem).is_err());
}

#[test]
fn adjoint_identity_at_two_block_sizes() {
    for f in [4, 8] {
        let problem = common::synthetic_problem(f, 10 + f as u64);
        let n = f * f;
        let mut rng = common::rng(f as u64);
        for _ in 0..20 {
            let p = common::random_matrix(&mut rng, n, n);
            let y = common::random_matrix(&mut rng, n - 1, n);
            let ap = apply_forward(&p, &problem).unwrap();
            let lhs = frobenius_dot(&ap, &y);
            let rhs = frobenius_dot(&p, &apply_adjoint(&y, &problem).unwrap());
            assert!((lhs - rhs).abs() / (ap.norm() * y.norm()) < 1e-10, "f = {f}");
        }
    }
}

#[test]
fn adjoint_single_column_oracle() {
    let problem = common::synthetic_problem(4, 5);
    let h = h_dense(4);
    assert_eq!(
        apply_adjoint(&DMatrix::zeros(15, 16), &problem).unwrap(),
        DMatrix::zeros(16, 16)
    );
    for j in [0, 6, 15] {
        let mut y = DMatrix::zeros(15, 16);
        y[(0, j)] = 1.0;
        let got = apply_adjoint(&y, &problem).unwrap();
        let want = h.row(j).transpose() * problem.sigma_u().row(0);
        assert!((got - want).amax() < 1e-12);
    }
    assert!(apply_adjoint(&DMatrix::zeros(16, 16), &problem).is_err());
}

#[test]
fn spectral_norm_estimate() {
    let problem = common::synthetic_problem(4, 6);
    let trace = spectral_norm_trace(&problem, 200, 1).unwrap();
    for w in trace.windows(2) {
        assert!(w[1] >= w[0] * (1.0 - 1e-12));
    }
    let est = estimate_spectral_norm(&problem, 200, 1).unwrap();
    let dense = dense_design_matrix(problem.sigma_u(), &h_dense(4))
        .singular_values()
        .max();
    assert!((est - dense).abs() < 0.01 * dense, "{est} vs {dense}");
    assert!((design_spectral_norm(problem.sigma_u(), &h_dense(4)) - dense).abs() < 1e-9 * dense);

    let n = 9;
    let pad = DMatrix::from_fn(n - 1, n, |i, j| if i == j { 1.0 } else { 0.0 });
    let iso = DesignProblem::from_parts(pad, RowAggregation::Pointwise(n), vec![0.0; n]).unwrap();
    assert!((estimate_spectral_norm(&iso, 50, 2).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn soc_projection_examples() {
    assert_eq!(project_soc(&[1.0, 0.0], 2.0), (vec![1.0, 0.0], 2.0));
    assert_eq!(project_soc(&[1.0, 1.0], -5.0), (vec![0.0, 0.0], 0.0));
    let (x, t) = project_soc(&[3.0, 4.0], 0.0);
    assert!((x[0] - 1.5).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15 && (t - 2.5).abs() < 1e-15);
}

/// Projection by minimising the distance over the scalar part `s ≥ 0`; for
/// fixed `s` the best vector part is the radial clip of `x` to radius `s`.
fn projection_by_search(x: &[f64], t: f64) -> (Vec<f64>, f64) {
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let cost = |s: f64| {
        let r = nx.min(s);
        (nx - r).powi(2) + (t - s).powi(2)
    };
    let (mut lo, mut hi) = (0.0, nx.max(t).max(0.0) + 1.0);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if cost(a) <= cost(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let s = 0.5 * (lo + hi);
    let scale = if nx > s { s / nx } else { 1.0 };
    (x.iter().map(|v| v * scale).collect(), s)
}

#[test]
fn soc_projection_matches_search_oracle() {
    let mut rng = common::rng(12);
    for _ in 0..100 {
        let d = rng.random_range(1..6);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let t = rng.random_range(-3.0..3.0);
        let (px, pt) = project_soc(&x, t);
        let (ox, ot) = projection_by_search(&x, t);
        assert!((pt - ot).abs() < 1e-7);
        for (a, b) in px.iter().zip(&ox) {
            assert!((a - b).abs() < 1e-7);
        }
    }
}

fn cone_pair() -> impl Strategy<Value = (Vec<f64>, f64, Vec<f64>, f64)> {
    (1usize..8).prop_flat_map(|d| {
        (
            prop::collection::vec(-5.0f64..5.0, d),
            -5.0f64..5.0,
            prop::collection::vec(-5.0f64..5.0, d),
            -5.0f64..5.0,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn soc_projection_idempotent_and_nonexpansive((x1, t1, x2, t2) in cone_pair()) {
        let (p1, s1) = project_soc(&x1, t1);
        let (p2, s2) = project_soc(&x2, t2);
        let norm = p1.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(norm <= s1 + 1e-10);
        let (q1, r1) = project_soc(&p1, s1);
        prop_assert!((r1 - s1).abs() <= 1e-10);
        for (a, b) in q1.iter().zip(&p1) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
        let dist = |a: &[f64], sa: f64, b: &[f64], sb: f64| {
            (a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>() + (sa - sb).powi(2)).sqrt()
        };
        prop_assert!(dist(&p1, s1, &p2, s2) <= dist(&x1, t1, &x2, t2) + 1e-10);
    }

    #[test]
    fn shrinkage_is_the_nuclear_prox(seed in any::<u64>(), rows in 1usize..7, cols in 1usize..7, tau in 0.0f64..2.0) {
        let mut rng = common::rng(seed);
        let x = common::random_matrix(&mut rng, rows, cols) * 2.0;
        let (d, nuclear) = shrink_with_nuclear_norm(&x, tau);
        let r = &x - &d;
        prop_assert!(r.singular_values().iter().all(|s| *s <= tau + 1e-10));
        prop_assert!((frobenius_dot(&r, &d) - tau * nuclear).abs() <= 1e-8);
        let direct: f64 = d.singular_values().iter().sum();
        prop_assert!((direct - nuclear).abs() <= 1e-9 * (1.0 + nuclear));
    }

    #[test]
    fn cone_projection_stays_in_cone(x in prop::collection::vec(-1e3f64..1e3, 1..10), t in -1e3f64..1e3) {
        let (p, s) = project_soc(&x, t);
        prop_assert!(p.iter().map(|v| v * v).sum::<f64>().sqrt() <= s * (1.0 + 1e-12) + 1e-12);
    }
}

#[test]
fn shrinkage_examples() {
    let mut rng = common::rng(13);
    let x = common::random_matrix(&mut rng, 5, 4);
    assert!((shrink_singular_values(&x, 0.0) - &x).amax() < 1e-12);
    let top = x.singular_values().max();
    assert_eq!(shrink_singular_values(&x, top), DMatrix::zeros(5, 4));
    let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0]));
    let s = shrink_singular_values(&d, 2.0);
    assert_eq!(s, DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])));
}

#[test]
fn step_size_bound_enforced() {
    let problem = common::synthetic_problem(4, 7);
    let norm = estimate_spectral_norm(&problem, 100, 0).unwrap() * 1.05;
    let state = SvtState::new(&problem, 1.0, 1.9 / (norm * norm), norm).unwrap();
    assert_eq!(state.iteration, 0);
    assert!(state.p.iter().all(|v| *v == 0.0));
    assert!(state.dual_y().iter().all(|v| *v == 0.0));
    assert!(state.dual_s().iter().all(|v| *v == 0.0));
    assert!(SvtState::new(&problem, 1.0, 2.1 / (norm * norm), norm).is_err());
    assert!(SvtState::new(&problem, 0.0, 1.0 / (norm * norm), norm).is_err());
    let mut fast = SvtState::new(&problem, 1.0, 1.5 / (norm * norm), norm).unwrap();
    assert!(fast.set_acceleration(Acceleration::Nesterov, norm).is_err());
}

#[test]
fn feasible_origin_stays_at_zero() {
    let base = common::synthetic_problem(4, 8);
    let bounds: Vec<f64> = (0..16).map(|i| base.b().column(i).norm() * 1.5 + 1e-3).collect();
    let problem = DesignProblem::from_parts(base.sigma_u().clone(), base.aggregation(), bounds).unwrap();
    let norm = estimate_spectral_norm(&problem, 100, 0).unwrap() * 1.05;
    let mut state = SvtState::new(&problem, 0.1, 1.9 / (norm * norm), norm).unwrap();
    for _ in 0..5 {
        state.step(&problem).unwrap();
        assert!(state.p.iter().all(|v| *v == 0.0));
        assert!(state.dual_y().iter().all(|v| *v == 0.0));
        assert!(state.dual_s().iter().all(|v| *v == 0.0));
    }
    let out = svt_solve(&problem, &SvtConfig::default()).unwrap();
    assert!(out.converged);
    assert_eq!(out.p, DMatrix::zeros(16, 16));
}

struct Solved {
    problem: DesignProblem,
    outcome: SvtOutcome,
    design: SensingDesign,
}

fn solved_f4() -> &'static Solved {
    static CELL: OnceLock<Solved> = OnceLock::new();
    CELL.get_or_init(|| {
        let problem = common::synthetic_problem(4, 21);
        let config = SvtConfig {
            feas_tol: 1e-6 * problem.max_b_norm(),
            ..SvtConfig::default()
        };
        let outcome = svt_solve(&problem, &config).unwrap();
        let mut design = assemble_q(&outcome.p).unwrap();
        design.record_feasibility(&problem, &outcome.p).unwrap();
        Solved {
            problem,
            outcome,
            design,
        }
    })
}

#[test]
fn solver_converges_and_matches_conic_oracle() {
    let s = solved_f4();
    assert!(s.outcome.converged, "violation {}", s.outcome.final_violation());
    assert!(s.design.max_margin() <= 1e-6 * s.problem.max_b_norm());
    let oracle = solve_nuclear_design(
        s.problem.sigma_u(),
        &h_dense(4),
        s.problem.delta_bounds(),
        s.outcome.tau,
    )
    .unwrap();
    let margins = s.problem.constraint_margins(&oracle.p).unwrap();
    assert!(margins.iter().all(|m| *m <= 1e-6 * s.problem.max_b_norm()));
    let rel = (s.outcome.objective() - oracle.objective).abs() / oracle.objective;
    assert!(
        rel < 0.01,
        "objective {} vs {}",
        s.outcome.objective(),
        oracle.objective
    );
}

#[test]
fn solver_history_is_recorded() {
    let s = solved_f4();
    assert_eq!(s.outcome.history.len(), s.outcome.iterations);
    assert!(s
        .outcome
        .history_csv()
        .starts_with("iteration,max_violation,nuclear_norm,relative_change\n1,"));
    let short = svt_solve(
        &s.problem,
        &SvtConfig {
            max_iterations: 3,
            ..SvtConfig::default()
        },
    )
    .unwrap();
    assert!(!short.converged);
    assert_eq!(short.iterations, 3);
}

#[test]
fn converged_design_structure() {
    let s = solved_f4();
    let d = &s.design;
    assert!((&d.q - s.outcome.p.add_scalar(1.0 / 16.0)).amax() < 1e-15);
    assert!(d.rank_identity_holds(), "rank Q {} rank P {}", d.rank_q, d.rank_p);
    assert!(d.numerical_rank() < 16);
    let ones = DVector::from_element(16, 1.0);
    assert!((&s.outcome.p * &ones).norm() < 1e-8 * s.outcome.p.norm().max(1.0));
    assert!((s.outcome.p.transpose() * &ones).norm() < 1e-8 * s.outcome.p.norm().max(1.0));
    for w in d.singular_values.windows(2) {
        assert!(w[0] >= w[1]);
    }
    let svd = d.q.clone().svd(false, false);
    let mut oracle: Vec<f64> = svd.singular_values.iter().copied().collect();
    oracle.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for (a, b) in oracle.iter().zip(&d.singular_values) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn zero_design_is_rank_one() {
    let d = assemble_q(&DMatrix::zeros(16, 16)).unwrap();
    assert!((d.q.clone() - DMatrix::from_element(16, 16, 1.0 / 16.0)).amax() < 1e-15);
    assert!((d.singular_values[0] - 1.0).abs() < 1e-12);
    assert_eq!(d.numerical_rank(), 1);
    assert!(d.right_vectors.column(0).iter().all(|v| (v.abs() - 0.25).abs() < 1e-12));
    assert!(d.left_vectors.column(0).iter().all(|v| (v.abs() - 0.25).abs() < 1e-12));
}

#[test]
fn truncated_operators_follow_eckart_young() {
    let d = &solved_f4().design;
    let full = d.numerical_rank();
    let mut ms = vec![1, full.div_ceil(2), full];
    ms.dedup();
    for m in ms {
        let op = make_sensing_operator(d, m).unwrap();
        assert_eq!(op.rank(), m);
        let err = (op.proxy_matrix() - &d.q).norm();
        let tail: f64 = d.singular_values[m..].iter().map(|l| l * l).sum::<f64>().sqrt();
        assert!((err - tail).abs() <= 1e-8 * d.q.norm(), "M = {m}: {err} vs {tail}");
        let sv = op.phi().clone().svd(false, false).singular_values;
        let mut sv: Vec<f64> = sv.iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for k in 0..m {
            assert!((sv[k] - d.singular_values[k].sqrt()).abs() < 1e-10);
        }
    }
    assert!(matches!(
        make_sensing_operator(d, full + 1),
        Err(Error::RankExceeded { available, .. }) if available == full
    ));

    let op = make_sensing_operator(d, full).unwrap();
    let h = h_dense(4);
    let mut rng = common::rng(30);
    let x = DVector::from_fn(16, |_, _| rng.random_range(0.0..1.0));
    let lhs = &h * op.proxy_matrix() * &x;
    let rhs = &h * &d.q * &x;
    assert!((&lhs - &rhs).norm() <= 1e-8 * rhs.norm());
}

#[test]
fn design_csv_layouts() {
    let d = &solved_f4().design;
    let sv = d.singular_values_csv();
    assert!(sv.starts_with("index,singular_value,relative\n1,"));
    assert_eq!(sv.lines().count(), 17);
    let fe = d.feasibility_csv();
    assert!(fe.starts_with("index,margin\n0,"));
    assert_eq!(fe.lines().count(), 17);
}
