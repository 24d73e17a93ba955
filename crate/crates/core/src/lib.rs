//! Distribution-free prediction intervals for missing outcomes in a target
//! site, combining heterogeneous source sites.
//!
//! The pipeline estimates the (1-alpha) quantile of a conformal score via
//! influence-function estimating equations, one per site, and aggregates the
//! site quantiles with data-adaptive federated weights. A Monte Carlo harness
//! reproduces the synthetic coverage experiments at desk scale.
//!
//! All numeric routines are generic over the scalar type (`f32` or `f64`)
//! through the [`Scalar`] trait; concrete `f64` aliases live at the crate
//! root.

pub mod dataset;
pub mod error;
pub mod estimators;
pub mod federate;
pub mod learners;
mod linalg;
pub mod nuisance;
pub mod predict;
pub mod scalar;
pub mod scores;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::{fl, Scalar};

/// `f64` dataset.
pub type Dataset64 = dataset::Dataset<f64>;
/// `f64` observation.
pub type Observation64 = dataset::Observation<f64>;
/// `f64` fitted score.
pub type FittedScore64 = scores::FittedScore<f64>;
/// `f64` prediction interval.
pub type Interval64 = scores::Interval<f64>;
/// `f64` fitted predictor.
pub type FittedPredictor64 = predict::FittedPredictor<f64>;
/// `f64` method specification.
pub type MethodSpec64 = predict::MethodSpec<f64>;
/// `f64` scenario configuration.
pub type ScenarioConfig64 = simulate::ScenarioConfig<f64>;
/// `f64` scenario summary.
pub type ScenarioSummary64 = simulate::ScenarioSummary<f64>;
