//! Fast f = 4 consistency suite: the structured operators against dense
//! references, and a full fit/design/estimate cycle on a synthetic corpus.

use intsense_core::design::{apply_adjoint, apply_forward, make_sensing_operator, SensingOperatorPair};
use intsense_core::ggd::{delta_bound_from_probability, ggd_interval_probability, GgdShape};
use intsense_core::linalg::frobenius_dot;
use intsense_core::pipeline::{estimate_integral, sense};
use intsense_core::transforms::{box_filter_from_integral, rsnr, BlockLayout, IntegralOperator};
use intsense_testkit::{brute_box_sum, brute_integral, dense_b, dense_integral_matrix};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::commands::{basis_for, design_from_blocks, model_with_shape};
use crate::config::Config;
use crate::corpus::{synthetic_corpus, Split};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn selftest_config(seed: u64) -> Config {
    let mut c = Config {
        seed,
        ..Config::default()
    };
    c.model.block_side = 4;
    c.model.wavelet = "db2".into();
    c.design.n_components = 3;
    c
}

pub fn run(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let (rows, cols) = (12, 9);
    let img: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(0..256) as f64).collect();
    let integral = IntegralOperator::new(rows, cols)?.apply(&img)?;
    let err = max_abs_diff(&integral, &brute_integral(&img, rows, cols));
    checks.push(Check::new(
        "integral image matches direct sums",
        err == 0.0,
        format!("max error {err:e}"),
    ));
    let boxed = box_filter_from_integral(&integral, rows, cols, 5)?;
    let err = max_abs_diff(&boxed, &brute_box_sum(&img, rows, cols, 5));
    checks.push(Check::new(
        "box filter from four lookups",
        err == 0.0,
        format!("max error {err:e}"),
    ));

    let config = selftest_config(seed);
    let basis = basis_for(&config)?;
    let u = basis.matrix_t();
    let orth = (u * u.transpose() - DMatrix::<f64>::identity(16, 16)).abs().max();
    checks.push(Check::new(
        "wavelet basis is orthonormal",
        orth < 1e-12,
        format!("max deviation {orth:e}"),
    ));

    let beta = GgdShape::new(0.68)?;
    let worst = [0.5, 1.0, 3.0]
        .iter()
        .map(|&d| {
            let s = delta_bound_from_probability(d, 0.05, beta)?;
            Ok((ggd_interval_probability(d, s, beta)? - 0.95).abs())
        })
        .collect::<intsense_core::Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    checks.push(Check::new(
        "deviation bound inverts the interval probability",
        worst < 1e-9,
        format!("max error {worst:e}"),
    ));

    let train = synthetic_corpus(120, 32, seed, Split::Train);
    let test = synthetic_corpus(4, 32, seed ^ 0x5eed, Split::Test);
    let blocks = train.downsampled_blocks(4);
    let model = model_with_shape(&blocks, &config, 0.68)?;
    let run = design_from_blocks(&blocks, &model, &config, "selftest")?;

    let h = dense_integral_matrix(4, 4);
    let b_err = (run.problem.b() - dense_b(run.problem.sigma_u(), &h)).abs().max();
    checks.push(Check::new(
        "constraint data match the dense product",
        b_err < 1e-12,
        format!("max error {b_err:e}"),
    ));
    let p = DMatrix::from_fn(16, 16, |_, _| rng.random_range(-1.0..1.0));
    let y = DMatrix::from_fn(15, 16, |_, _| rng.random_range(-1.0..1.0));
    let lhs = frobenius_dot(&apply_forward(&p, &run.problem)?, &y);
    let rhs = frobenius_dot(&p, &apply_adjoint(&y, &run.problem)?);
    let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs());
    checks.push(Check::new(
        "adjoint identity",
        rel < 1e-12,
        format!("relative gap {rel:e}"),
    ));

    let violation = run.outcome.final_violation();
    checks.push(Check::new(
        "design solver converges",
        run.outcome.converged,
        format!("{} iterations, max violation {violation:e}", run.outcome.iterations),
    ));
    let d = &run.design;
    checks.push(Check::new(
        "rank(Q*) = rank(P*) + 1",
        d.rank_identity_holds(),
        format!("rank_q {}, rank_p {}", d.rank_q, d.rank_p),
    ));

    let bypass = SensingOperatorPair::identity(4)?;
    let op = make_sensing_operator(d, d.numerical_rank())?;
    let mut bypass_err = 0.0f64;
    let mut full_rsnr = f64::INFINITY;
    for im in &test.images {
        let layout = BlockLayout::center_cropped(im.rows, im.cols, 4)?;
        let pixels = layout.crop(&im.pixels)?;
        let exact = IntegralOperator::new(layout.image_rows(), layout.image_cols())?.apply(&pixels)?;
        let e = estimate_integral(&sense(&pixels, &bypass, &layout)?, &bypass, &layout)?;
        bypass_err = bypass_err.max(max_abs_diff(&e, &exact));
        let e = estimate_integral(&sense(&pixels, &op, &layout)?, &op, &layout)?;
        full_rsnr = full_rsnr.min(rsnr(&e, &exact)?);
    }
    checks.push(Check::new(
        "bypass estimate is exact",
        bypass_err == 0.0,
        format!("max error {bypass_err:e}"),
    ));
    checks.push(Check::new(
        "full-rank design estimate is accurate",
        full_rsnr > 20.0,
        format!("worst RSNR {full_rsnr:.1} dB at M = {}", op.rank()),
    ));
    Ok(checks)
}
