//! Gaussian-process regression of divergence-free and curl-free vector
//! fields with matrix-valued kernels.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diff;
pub mod error;
pub mod experiments;
pub mod fields;
pub mod geometry;
pub mod gp;
pub mod kernels;
pub mod sampler;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Domain = geometry::Domain<f64>;
pub type PointSet = geometry::PointSet<f64>;
pub type ScalarKernelSpec = kernels::ScalarKernelSpec<f64>;
pub type MatrixKernel = kernels::MatrixKernel<f64>;
pub type Observations = gp::Observations<f64>;
pub type MeanFunction = gp::MeanFunction<f64>;
pub type FitMode = gp::FitMode<f64>;
pub type GpModel = gp::GpModel<f64>;
pub type AnalyticField = fields::AnalyticField<f64>;
pub type EvaluationGrid = sampler::EvaluationGrid<f64>;
pub type FieldSample = sampler::FieldSample<f64>;
pub type NystromEigensystem = sampler::NystromEigensystem<f64>;
