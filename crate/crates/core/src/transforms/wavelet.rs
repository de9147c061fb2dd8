#![allow(clippy::excessive_precision)]

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const HAAR: [f64; 2] = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];
const DB2: [f64; 4] = [
    0.48296291314453414337,
    0.83651630373780790558,
    0.22414386804201338103,
    -0.12940952255126038117,
];
const DB3: [f64; 6] = [
    0.332670552950082616,
    0.80689150931109257649,
    0.4598775021184915701,
    -0.1350110200102545887,
    -0.085441273882026661693,
    0.035226291885709536603,
];
const DB4: [f64; 8] = [
    0.23037781330889650086,
    0.71484657055291564709,
    0.63088076792985890788,
    -0.027983769416859854211,
    -0.18703481171909308408,
    0.030841381835560763627,
    0.032883011666885199735,
    -0.010597401785069032105,
];
const DB5: [f64; 10] = [
    0.16010239797419291448,
    0.60382926979718967054,
    0.72430852843777292773,
    0.13842814590132073151,
    -0.24229488706638203186,
    -0.032244869584638374648,
    0.077571493840045713523,
    -0.0062414902127982742742,
    -0.012580751999081999469,
    0.003335725285473771278,
];

/// Orthogonal wavelet family. `Daubechies(p)` has `p` vanishing moments
/// (`2p` taps); `Daubechies(1)` is the same filter as `Haar`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WaveletFamily {
    Haar,
    Daubechies(u8),
}

impl WaveletFamily {
    fn lowpass(self) -> Result<&'static [f64]> {
        match self {
            WaveletFamily::Haar | WaveletFamily::Daubechies(1) => Ok(&HAAR),
            WaveletFamily::Daubechies(2) => Ok(&DB2),
            WaveletFamily::Daubechies(3) => Ok(&DB3),
            WaveletFamily::Daubechies(4) => Ok(&DB4),
            WaveletFamily::Daubechies(5) => Ok(&DB5),
            WaveletFamily::Daubechies(p) => Err(Error::Config(format!(
                "Daubechies wavelet with {p} vanishing moments is not supported (1..=5)"
            ))),
        }
    }
}

impl fmt::Display for WaveletFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WaveletFamily::Haar => write!(f, "haar"),
            WaveletFamily::Daubechies(p) => write!(f, "db{p}"),
        }
    }
}

impl FromStr for WaveletFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        if lower == "haar" {
            return Ok(WaveletFamily::Haar);
        }
        let family = lower
            .strip_prefix("db")
            .and_then(|p| p.parse::<u8>().ok())
            .map(WaveletFamily::Daubechies)
            .ok_or_else(|| Error::Config(format!("unknown wavelet family {s:?}")))?;
        family.lowpass()?;
        Ok(family)
    }
}

/// Dense orthogonal analysis matrix `Uᵀ` for `f × f` blocks.
///
/// Row 0 is the constant vector `1/√n`; rows `1..n` span its orthogonal
/// complement (the detail space).
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletBasis {
    matrix_t: DMatrix<f64>,
    family: WaveletFamily,
    levels: usize,
    block_side: usize,
}

impl WaveletBasis {
    /// The analysis matrix `Uᵀ` (`n × n`).
    pub fn matrix_t(&self) -> &DMatrix<f64> {
        &self.matrix_t
    }

    /// Rows `1..n` of `Uᵀ`, i.e. `U_{2:n}ᵀ` (`(n−1) × n`).
    pub fn detail_rows(&self) -> DMatrix<f64> {
        let n = self.len();
        self.matrix_t.rows(1, n - 1).into_owned()
    }

    pub fn family(&self) -> WaveletFamily {
        self.family
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn block_side(&self) -> usize {
        self.block_side
    }

    pub fn len(&self) -> usize {
        self.block_side * self.block_side
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coefficients `Uᵀ x` of a raster block.
    pub fn analyze(&self, block: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_len("wavelet analysis", self.len(), block.len())?;
        Ok((&self.matrix_t * DVector::from_column_slice(block)).as_slice().to_vec())
    }

    /// Inverse of [`analyze`](Self::analyze): `U w`.
    pub fn synthesize(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_len("wavelet synthesis", self.len(), coeffs.len())?;
        Ok((self.matrix_t.transpose() * DVector::from_column_slice(coeffs))
            .as_slice()
            .to_vec())
    }
}

/// Deepest decomposition for `f × f` blocks. Each level halves the
/// approximation band along one axis, alternating columns then rows, so full
/// depth is `log2(f²)` and leaves a single scaling coefficient.
pub fn max_levels(block_side: usize) -> usize {
    if block_side.is_power_of_two() {
        2 * block_side.trailing_zeros() as usize
    } else {
        0
    }
}

/// Periodised single-level analysis of `signal`, low band first.
fn analysis_step(signal: &[f64], lowpass: &[f64], out: &mut [f64]) {
    let len = signal.len();
    let half = len / 2;
    let taps = lowpass.len();
    for k in 0..half {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for m in 0..taps {
            let x = signal[(2 * k + m) % len];
            lo += lowpass[m] * x;
            let g = if m % 2 == 0 {
                lowpass[taps - 1 - m]
            } else {
                -lowpass[taps - 1 - m]
            };
            hi += g * x;
        }
        out[k] = lo;
        out[half + k] = hi;
    }
}

/// In-place multilevel transform of an `f × f` raster, Mallat-style layout.
/// Returns the final approximation band size `(rows, cols)`.
fn forward_2d(buf: &mut [f64], side: usize, levels: usize, lowpass: &[f64]) -> (usize, usize) {
    let (mut ar, mut ac) = (side, side);
    let mut line = vec![0.0; side];
    let mut out = vec![0.0; side];
    for level in 1..=levels {
        if level % 2 == 1 {
            for r in 0..ar {
                line[..ac].copy_from_slice(&buf[r * side..r * side + ac]);
                analysis_step(&line[..ac], lowpass, &mut out[..ac]);
                buf[r * side..r * side + ac].copy_from_slice(&out[..ac]);
            }
            ac /= 2;
        } else {
            for c in 0..ac {
                for r in 0..ar {
                    line[r] = buf[r * side + c];
                }
                analysis_step(&line[..ar], lowpass, &mut out[..ar]);
                for r in 0..ar {
                    buf[r * side + c] = out[r];
                }
            }
            ar /= 2;
        }
    }
    (ar, ac)
}

pub fn build_wavelet_basis(block_side: usize, levels: usize, family: WaveletFamily) -> Result<WaveletBasis> {
    if block_side < 2 || !block_side.is_power_of_two() {
        return Err(Error::Config(format!(
            "block side must be a power of two >= 2, got {block_side}"
        )));
    }
    let max = max_levels(block_side);
    if levels == 0 || levels > max {
        return Err(Error::Config(format!(
            "wavelet depth {levels} outside 1..={max} for {block_side}x{block_side} blocks"
        )));
    }
    let lowpass = family.lowpass()?;
    let n = block_side * block_side;

    // Column j of the raw analysis matrix is the transform of the j-th unit image.
    let mut raw = DMatrix::zeros(n, n);
    let mut buf = vec![0.0; n];
    let mut band = (block_side, block_side);
    for j in 0..n {
        buf.iter_mut().for_each(|v| *v = 0.0);
        buf[j] = 1.0;
        band = forward_2d(&mut buf, block_side, levels, lowpass);
        raw.set_column(j, &DVector::from_column_slice(&buf));
    }

    // Approximation coefficients first, then details, each in layout raster order.
    let (ar, ac) = band;
    let in_band = |idx: usize| idx / block_side < ar && idx % block_side < ac;
    let order: Vec<usize> = (0..n)
        .filter(|&i| in_band(i))
        .chain((0..n).filter(|&i| !in_band(i)))
        .collect();
    let approx = ar * ac;
    let mut matrix_t = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        matrix_t.set_row(dst, &raw.row(src));
    }

    // Rotate the approximation rows so the first becomes the constant vector.
    let constant = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut a = matrix_t.rows(0, approx) * &constant;
    a /= a.norm();
    let mut v = a.clone();
    v[0] -= 1.0;
    let vv = v.norm_squared();
    if vv > 1e-30 {
        let block = matrix_t.rows(0, approx).into_owned();
        let proj = v.transpose() * &block;
        let reflected = block - (&v * proj) * (2.0 / vv);
        matrix_t.rows_mut(0, approx).copy_from(&reflected);
    }
    matrix_t.row_mut(0).fill(1.0 / (n as f64).sqrt());

    Ok(WaveletBasis {
        matrix_t,
        family,
        levels,
        block_side,
    })
}
