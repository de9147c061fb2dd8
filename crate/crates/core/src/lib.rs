//! Measurement design for spatial-multiplexing cameras whose output is meant to be
//! turned into integral images (and box-filtered maps) by a single linear map.
//!
//! The crate is organised bottom-up:
//!
//! * [`ggd`]: univariate and multivariate generalized Gaussian machinery used as
//!   the prior over detail wavelet coefficients.
//! * [`transforms`]: dense orthogonal wavelet bases, the integral-image operator,
//!   box filters, block bookkeeping and the RSNR metric.
//! * [`design`]: the second-order-cone constrained nuclear-norm program, its
//!   singular value thresholding solver, and the factorization of the solution
//!   into a measurement matrix and its dual.
//! * [`pipeline`]: distortion targets from a training corpus, block-diagonal
//!   sensing and the single-multiply estimators.
//! * [`format`]: the on-disk binary and CSV layouts.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod design;
pub mod error;
pub mod format;
pub mod ggd;
pub mod linalg;
pub mod pipeline;
pub mod transforms;

pub use error::{Error, Result};
