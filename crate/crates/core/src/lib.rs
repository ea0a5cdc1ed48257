//! Joint grid dispatch with mobile energy storage: dual-derived nodal
//! prices, marginal values of storage capacity, and relocation algorithms
//! for storage that moves between buses.
//!
//! Every numeric type is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`.

pub mod casestudy;
pub mod dispatch;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod linalg;
pub mod marginal_value;
pub mod network;
pub mod qp;
pub mod relocation;
pub mod scalar;
pub mod storage;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = linalg::Matrix<f64>;
pub type PowerNetwork = network::PowerNetwork<f64>;
pub type ShiftFactorMatrix = network::ShiftFactorMatrix<f64>;
pub type QuadraticProgram = qp::QuadraticProgram<f64>;
pub type QpSolution = qp::QpSolution<f64>;
pub type Tolerances = qp::Tolerances<f64>;
pub type MobileStorageUnit = storage::MobileStorageUnit<f64>;
pub type TransportModel = storage::TransportModel<f64>;
pub type Fleet = storage::Fleet<f64>;
pub type DispatchSolution = dispatch::DispatchSolution<f64>;
pub type MarginalValueReport = marginal_value::MarginalValueReport<f64>;
pub type RelocationResult = relocation::RelocationResult<f64>;
pub type LmpDataset = casestudy::LmpDataset<f64>;
pub type CaseStudyReport = casestudy::CaseStudyReport<f64>;
