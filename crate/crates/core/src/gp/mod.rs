//! Block Gram assembly and the fitted posterior: interpolant, noisy
//! posterior mean/covariance, penalized approximant and power function.

mod export;
mod gram;
mod model;

pub use gram::{
    assemble_gram, condition_estimate, cross_block, factor_with_jitter, JitteredFactor,
    JITTER_LADDER,
};
pub use model::{
    fit, quadratic_form, FitMode, GpModel, MeanFunction, MeanStructure, NoiseModel, Observations,
    PowerValue,
};

pub(crate) use model::symmetrize;
