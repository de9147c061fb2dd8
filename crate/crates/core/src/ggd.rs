//! Generalized Gaussian distributions.
//!
//! The multivariate model has density proportional to `exp(-(wᵀ Σ⁻¹ w)^β)` with
//! `0 < β ≤ 1`; `Σ` is the scatter matrix. The univariate interval probability is
//! parameterised by the standard deviation of the variable, which is what the
//! design constraints bound.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::{is_symmetric, sym_sqrt};

/// Number of histogram bins used by [`fit_beta`] unless configured otherwise.
pub const DEFAULT_HISTOGRAM_BINS: usize = 101;

/// Half-width of the histogram range, in empirical standard deviations.
const HISTOGRAM_HALF_WIDTH: f64 = 6.0;

const SERIES_MAX_TERMS: usize = 100_000;
const CF_MAX_TERMS: usize = 10_000;
const FPMIN: f64 = 1e-300;

/// Shape parameter `β ∈ (0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct GgdShape(f64);

impl GgdShape {
    pub fn new(beta: f64) -> Result<Self> {
        if beta.is_finite() && beta > 0.0 && beta <= 1.0 {
            Ok(Self(beta))
        } else {
            Err(Error::Domain(format!("shape beta must lie in (0, 1], got {beta}")))
        }
    }

    pub const GAUSSIAN: GgdShape = GgdShape(1.0);

    pub fn value(self) -> f64 {
        self.0
    }

    /// Gamma shape `1/(2β)` of the univariate radial law.
    fn half_inverse(self) -> f64 {
        0.5 / self.0
    }

    /// `sqrt(Γ(3/2β) / Γ(1/2β))`, converting a standard deviation into the scale
    /// that appears in the exponent.
    fn std_factor(self) -> f64 {
        let a = self.half_inverse();
        (0.5 * (ln_gamma(3.0 * a) - ln_gamma(a))).exp()
    }
}

/// Regularized lower incomplete gamma function `γ(a, x) / Γ(a)`.
///
/// Series expansion for `x < a + 1`, Lentz continued fraction for the
/// complement otherwise.
pub fn reg_lower_incomplete_gamma(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Domain(format!("incomplete gamma needs a > 0, got {a}")));
    }
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("incomplete gamma needs x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let log_prefactor = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut term = 1.0 / a;
        let mut sum = term;
        for _ in 0..SERIES_MAX_TERMS {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        Ok((sum * log_prefactor.exp()).clamp(0.0, 1.0))
    } else {
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / FPMIN;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=CF_MAX_TERMS {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < FPMIN {
                d = FPMIN;
            }
            c = b + an / c;
            if c.abs() < FPMIN {
                c = FPMIN;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        Ok((1.0 - log_prefactor.exp() * h).clamp(0.0, 1.0))
    }
}

/// Inverse of [`reg_lower_incomplete_gamma`] in its second argument.
///
/// Newton iteration inside a maintained bracket, falling back to bisection
/// whenever the Newton step leaves the bracket.
pub fn inv_reg_lower_incomplete_gamma(a: f64, p: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Domain(format!("inverse incomplete gamma needs a > 0, got {a}")));
    }
    if !(p >= 0.0) {
        return Err(Error::Domain(format!("probability must be >= 0, got {p}")));
    }
    if p >= 1.0 {
        return Err(Error::Domain(format!("probability {p} has an unbounded quantile")));
    }
    if p == 0.0 {
        return Ok(0.0);
    }

    let mut lo = 0.0;
    let mut hi = a.max(1.0);
    let mut grow = 0;
    while reg_lower_incomplete_gamma(a, hi)? < p {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 2000 {
            return Err(Error::Numerical {
                iteration: grow,
                reason: "could not bracket quantile".into(),
            });
        }
    }

    let log_gamma_a = ln_gamma(a);
    // Small-p asymptote γ(a,x)/Γ(a) ≈ x^a / Γ(a+1), clamped into the bracket.
    let guess = ((p.ln() + ln_gamma(a + 1.0)) / a).exp();
    let mut x = if guess > lo && guess < hi {
        guess
    } else {
        0.5 * (lo + hi)
    };

    for _ in 0..500 {
        let f = reg_lower_incomplete_gamma(a, x)? - p;
        if f == 0.0 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let density = ((a - 1.0) * x.ln() - x - log_gamma_a).exp();
        let newton = x - f / density;
        let next = if density.is_finite() && density > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs() || hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// `P(|v − μ| ≤ delta)` for a univariate generalized Gaussian with standard
/// deviation `std_dev` and shape `beta`.
pub fn ggd_interval_probability(delta: f64, std_dev: f64, beta: GgdShape) -> Result<f64> {
    if !(std_dev > 0.0) {
        return Err(Error::Domain(format!(
            "standard deviation must be positive, got {std_dev}"
        )));
    }
    if !(delta >= 0.0) {
        return Err(Error::Domain(format!("interval half-width must be >= 0, got {delta}")));
    }
    if delta == 0.0 {
        return Ok(0.0);
    }
    let z = (delta / std_dev * beta.std_factor()).powf(2.0 * beta.value());
    reg_lower_incomplete_gamma(beta.half_inverse(), z)
}

/// Largest standard deviation for which `|v| ≤ delta` holds with probability at
/// least `1 − eps`; the exact inverse of [`ggd_interval_probability`] in its
/// spread argument.
pub fn delta_bound_from_probability(delta: f64, eps: f64, beta: GgdShape) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(delta >= 0.0) {
        return Err(Error::Domain(format!("distortion limit must be >= 0, got {delta}")));
    }
    let a = beta.half_inverse();
    let quantile = inv_reg_lower_incomplete_gamma(a, 1.0 - eps)?;
    Ok(delta * beta.std_factor() / quantile.powf(a))
}

/// Ratio scatter / covariance for a `dim`-dimensional model:
/// `dim · Γ(dim/2β) / Γ((dim+2)/2β)`.
pub fn scatter_factor(dim: usize, beta: GgdShape) -> f64 {
    let d = dim as f64;
    let k = beta.half_inverse();
    (d.ln() + ln_gamma(d * k) - ln_gamma((d + 2.0) * k)).exp()
}

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() == 0 || !m.is_square() {
        return Err(Error::Domain(format!("{what} must be a non-empty square matrix")));
    }
    if !is_symmetric(m, 1e-10) {
        return Err(Error::Domain(format!("{what} is not symmetric")));
    }
    Ok(())
}

pub fn scatter_from_covariance(cov: &DMatrix<f64>, beta: GgdShape) -> Result<DMatrix<f64>> {
    check_symmetric(cov, "covariance")?;
    Ok(cov * scatter_factor(cov.nrows(), beta))
}

pub fn covariance_from_scatter(scatter: &DMatrix<f64>, beta: GgdShape) -> Result<DMatrix<f64>> {
    check_symmetric(scatter, "scatter")?;
    Ok(scatter / scatter_factor(scatter.nrows(), beta))
}

/// Zero-mean multivariate generalized Gaussian over detail coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct MggdModel {
    beta: GgdShape,
    scatter: DMatrix<f64>,
}

impl MggdModel {
    pub fn new(beta: GgdShape, scatter: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&scatter, "scatter")?;
        let eig = SymmetricEigen::new(scatter.clone());
        let max = eig.eigenvalues.max().max(0.0);
        let min = eig.eigenvalues.min();
        if min < -1e-10 * max.max(f64::MIN_POSITIVE) {
            return Err(Error::Domain(format!("scatter has negative eigenvalue {min:e}")));
        }
        Ok(Self { beta, scatter })
    }

    pub fn from_covariance(beta: GgdShape, cov: &DMatrix<f64>) -> Result<Self> {
        Self::new(beta, scatter_from_covariance(cov, beta)?)
    }

    pub fn beta(&self) -> GgdShape {
        self.beta
    }

    pub fn scatter(&self) -> &DMatrix<f64> {
        &self.scatter
    }

    pub fn dim(&self) -> usize {
        self.scatter.nrows()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.scatter / scatter_factor(self.dim(), self.beta)
    }
}

/// Streaming sampler using the representation `w = r Σ^{1/2} u` with `u`
/// uniform on the unit sphere and `r^{2β} ~ Gamma(dim/2β, 1)`.
pub struct MggdSampler {
    root: DMatrix<f64>,
    radial: Gamma<f64>,
    inv_two_beta: f64,
    rng: ChaCha8Rng,
    direction: Vec<f64>,
}

impl MggdSampler {
    pub fn new(model: &MggdModel, seed: u64) -> Result<Self> {
        let dim = model.dim();
        let k = model.beta.half_inverse();
        let radial = Gamma::new(dim as f64 * k, 1.0).map_err(|e| Error::Domain(format!("radial law: {e}")))?;
        Ok(Self {
            root: sym_sqrt(&model.scatter),
            radial,
            inv_two_beta: k,
            rng: ChaCha8Rng::seed_from_u64(seed),
            direction: vec![0.0; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    /// Writes one draw into `out` (length `dim`).
    pub fn sample_into(&mut self, out: &mut [f64]) {
        let dim = self.direction.len();
        debug_assert_eq!(out.len(), dim);
        let norm = loop {
            let mut sq = 0.0;
            for u in self.direction.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                *u = z;
                sq += z * z;
            }
            if sq > 0.0 {
                break sq.sqrt();
            }
        };
        let t: f64 = self.radial.sample(&mut self.rng);
        let scale = t.powf(self.inv_two_beta) / norm;
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (c, u) in self.direction.iter().enumerate() {
                acc += self.root[(r, c)] * u;
            }
            *o = acc * scale;
        }
    }
}

/// `count × dim` matrix of independent draws; deterministic in `seed`.
pub fn sample_mggd(model: &MggdModel, count: usize, seed: u64) -> Result<DMatrix<f64>> {
    if count == 0 {
        return Err(Error::Domain("sample count must be positive".into()));
    }
    let mut sampler = MggdSampler::new(model, seed)?;
    let dim = model.dim();
    let mut out = DMatrix::zeros(count, dim);
    let mut row = vec![0.0; dim];
    for i in 0..count {
        sampler.sample_into(&mut row);
        for (j, v) in row.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    Ok(out)
}

/// Outcome of the histogram-based shape fit.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaFitReport {
    pub beta_grid: Vec<f64>,
    pub distances: Vec<f64>,
    pub best: GgdShape,
}

impl BetaFitReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("beta,distance\n");
        for (b, d) in self.beta_grid.iter().zip(&self.distances) {
            s.push_str(&format!("{b},{d}\n"));
        }
        s
    }
}

struct CoordinateHistogram {
    std_dev: f64,
    /// Empirical bin masses (counts over total samples).
    masses: Vec<f64>,
}

/// GGD cumulative mass of `(-∞, x]` for a zero-centred variable.
fn ggd_cdf(x: f64, std_dev: f64, beta: GgdShape) -> Result<f64> {
    let half = 0.5 * ggd_interval_probability(x.abs(), std_dev, beta)?;
    Ok(if x >= 0.0 { 0.5 + half } else { 0.5 - half })
}

/// Selects the shape whose marginal best matches per-coordinate histograms.
///
/// Each coordinate is histogrammed over ±6 empirical standard deviations around
/// its mean; theoretical bin masses come from a GGD with the same variance. The
/// χ² distance `Σ (h − t)² / (h + t)` is summed over coordinates; bins where
/// both masses vanish are skipped. Zero-variance coordinates are ignored.
pub fn fit_beta(samples: &[Vec<f64>], beta_grid: &[f64], bin_count: usize) -> Result<BetaFitReport> {
    if beta_grid.is_empty() {
        return Err(Error::Config("beta grid is empty".into()));
    }
    if bin_count == 0 {
        return Err(Error::Config("bin count must be positive".into()));
    }
    let shapes = beta_grid
        .iter()
        .map(|&b| GgdShape::new(b))
        .collect::<Result<Vec<_>>>()?;
    if samples.is_empty() || samples.iter().all(|c| c.is_empty()) {
        return Err(Error::InsufficientData("no samples to fit".into()));
    }

    let mut histograms = Vec::with_capacity(samples.len());
    for (idx, coord) in samples.iter().enumerate() {
        if coord.len() < 100 {
            return Err(Error::InsufficientData(format!(
                "coordinate {idx} has {} samples, need at least 100",
                coord.len()
            )));
        }
        let n = coord.len() as f64;
        let mean = coord.iter().sum::<f64>() / n;
        let var = coord.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let std_dev = var.sqrt();
        if !(std_dev > 0.0) || !std_dev.is_finite() {
            continue;
        }
        let lo = -HISTOGRAM_HALF_WIDTH * std_dev;
        let width = 2.0 * HISTOGRAM_HALF_WIDTH * std_dev / bin_count as f64;
        let mut counts = vec![0usize; bin_count];
        for v in coord {
            let pos = ((v - mean) - lo) / width;
            if pos >= 0.0 && pos < bin_count as f64 {
                counts[pos as usize] += 1;
            }
        }
        histograms.push(CoordinateHistogram {
            std_dev,
            masses: counts.iter().map(|&c| c as f64 / n).collect(),
        });
    }
    if histograms.is_empty() {
        return Err(Error::InsufficientData("every coordinate has zero variance".into()));
    }

    let mut distances = Vec::with_capacity(shapes.len());
    for &beta in &shapes {
        let mut total = 0.0;
        for h in &histograms {
            let lo = -HISTOGRAM_HALF_WIDTH * h.std_dev;
            let width = 2.0 * HISTOGRAM_HALF_WIDTH * h.std_dev / bin_count as f64;
            let mut prev = ggd_cdf(lo, h.std_dev, beta)?;
            for (k, &emp) in h.masses.iter().enumerate() {
                let next = ggd_cdf(lo + (k + 1) as f64 * width, h.std_dev, beta)?;
                let theo = next - prev;
                prev = next;
                let denom = emp + theo;
                if denom > 0.0 {
                    total += (emp - theo).powi(2) / denom;
                }
            }
        }
        distances.push(total);
    }

    let mut best = 0;
    for i in 1..shapes.len() {
        let better = distances[i] < distances[best] || (distances[i] == distances[best] && shapes[i] > shapes[best]);
        if better {
            best = i;
        }
    }
    Ok(BetaFitReport {
        beta_grid: beta_grid.to_vec(),
        distances,
        best: shapes[best],
    })
}
