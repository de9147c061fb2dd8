//! Dense wavelet bases, the integral-image operator, box filters, block layout
//! bookkeeping and the RSNR metric.

mod integral;
mod layout;
mod wavelet;

pub use integral::{box_filter_from_integral, IntegralOperator};
pub use layout::{partition_blocks, reassemble_blocks, BlockLayout};
pub use wavelet::{build_wavelet_basis, max_levels, WaveletBasis, WaveletFamily};

use crate::error::{check_len, Error, Result};

/// Value returned by [`rsnr`] when the estimate is exact to working precision.
pub const RSNR_CAP_DB: f64 = 300.0;

/// Recovered signal-to-noise ratio `20·log10(‖estimate‖ / ‖estimate − exact‖)`.
pub fn rsnr(estimate: &[f64], exact: &[f64]) -> Result<f64> {
    check_len("rsnr", exact.len(), estimate.len())?;
    let exact_norm = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
    if exact_norm == 0.0 {
        return Err(Error::Domain("RSNR reference is identically zero".into()));
    }
    let est_norm = estimate.iter().map(|v| v * v).sum::<f64>().sqrt();
    let err = estimate
        .iter()
        .zip(exact)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if err < 1e-12 * est_norm || err == 0.0 {
        return Ok(RSNR_CAP_DB);
    }
    Ok(20.0 * (est_norm / err).log10())
}
