//! Dense linear algebra plus the PCA / CCA / SVCCA routines used for
//! representation analysis. Everything here is 64-bit and pure.

mod cca;
mod matrix;
mod pca;
mod svd;

use thiserror::Error;

pub use cca::{cca, inverse_sqrt_psd, svcca, svcca_detailed, truncate_to_variance, CcaResult, SvccaOutcome};
pub use matrix::{gemm, Matrix};
pub use pca::{pca_fit, pca_transform, PcaModel};
pub use svd::{svd, SvdResult};

pub const DEFAULT_VARIANCE_KEEP: f64 = 0.99;
pub const DEFAULT_REG: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("numerical failure after {iterations} iterations: {what}")]
    NumericalFailure { what: String, iterations: usize },
    #[error("invalid rank {k}: must be in 1..={max}")]
    InvalidRank { k: usize, max: usize },
    #[error("requested rank {requested} exceeds effective rank {achievable}")]
    EffectiveRank { requested: usize, achievable: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
