//! Experiment driver for integral-image compressive sensing: corpora,
//! configuration, the fit/design/evaluate/heatmap commands and a self-test.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod corpus;
pub mod error;
pub mod selftest;

pub use config::Config;
pub use error::{HarnessError, Result};
