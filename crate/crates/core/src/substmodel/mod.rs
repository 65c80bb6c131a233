//! Substitution model: GTR rate matrices, discrete gamma rate categories
//! and Monte Carlo marginalized transition-probability grids.

mod gamma;
mod grid;
mod rate;

pub use gamma::{DiscreteGamma, GammaScaling};
pub use grid::{grid_means, BranchRegime, GridSpec, MarginalTransitionGrid};
pub use rate::{
    identity, remap_atcg_matrix, remap_atcg_vector, Mat4, RateMatrix, HIV_REFERENCE_PI_ATCG,
    HIV_REFERENCE_Q_ATCG,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("rate matrix validation failed ({check}): {detail}")]
    Validation { check: &'static str, detail: String },
    #[error("domain error: {0}")]
    Domain(String),
}

impl ModelError {
    pub(crate) fn validation(check: &'static str, detail: impl Into<String>) -> Self {
        ModelError::Validation {
            check,
            detail: detail.into(),
        }
    }
}
