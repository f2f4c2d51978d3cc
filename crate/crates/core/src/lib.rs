//! Estimation of a right singular subspace shared by several noisy tables.
//!
//! Two estimator families are provided: Stack-SVD (decompose the weighted
//! vertical stack of all tables) and SVD-Stack (decompose each table, then
//! stack the leading vectors). [`theory`] holds their large-dimension
//! performance predictions and detection thresholds, [`estimators`] runs them
//! on data, and [`simulate`] checks one against the other.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the aliases below fix
//! the scalar to `f64`, with `F32`-prefixed counterparts.

pub mod error;
pub mod estimators;
pub mod linalg;
pub mod model;
pub mod scalar;
pub mod simulate;
pub mod theory;

pub use error::{Error, Result};
pub use linalg::{SvdOptions, SvdTriplet};
pub use model::{Family, MethodTag, Weighting};
pub use scalar::Real;

pub type ProblemSpec = model::ProblemSpec<f64>;
pub type TableSet = model::TableSet<f64>;
pub type WeightVector = model::WeightVector<f64>;
pub type SubspaceEstimate = model::SubspaceEstimate<f64>;
pub type GroundTruth = model::GroundTruth<f64>;
pub type PredictionReport = theory::PredictionReport<f64>;
pub type ExperimentPlan = simulate::ExperimentPlan<f64>;

pub type F32ProblemSpec = model::ProblemSpec<f32>;
pub type F32TableSet = model::TableSet<f32>;
pub type F32WeightVector = model::WeightVector<f32>;
pub type F32SubspaceEstimate = model::SubspaceEstimate<f32>;
pub type F32GroundTruth = model::GroundTruth<f32>;
pub type F32PredictionReport = theory::PredictionReport<f32>;
pub type F32ExperimentPlan = simulate::ExperimentPlan<f32>;
