//! Optimal sensor placement for emission-rate inversion under Gaussian plume
//! transport.
//!
//! The crate is generic over the scalar type (`f32` or `f64`); the aliases at
//! the root fix it to `f64`.

pub mod aopt;
pub mod error;
pub mod hypergrad;
pub mod linalg;
pub mod outer;
pub mod plume;
pub mod qp;
pub mod sampling;
pub mod scalar;
pub mod validate;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Scenario = plume::Scenario<f64>;
pub type SourceSpec = plume::SourceSpec<f64>;
pub type SensorLayout = plume::SensorLayout<f64>;
pub type WindVector = plume::WindVector<f64>;
pub type WindModel = sampling::WindModel<f64>;
pub type SampleTriple = sampling::SampleTriple<f64>;
pub type QpInstance = qp::QpInstance<f64>;
pub type QpSolution = qp::QpSolution<f64>;
pub type InnerConfig = qp::InnerConfig<f64>;
pub type InnerSolver = qp::InnerSolver<f64>;
pub type OuterConfig = outer::OuterConfig<f64>;
pub type RunReport = outer::RunReport<f64>;
pub type AnnealConfig = aopt::AnnealConfig<f64>;
