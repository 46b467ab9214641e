//! Toolkit for the Traveling Salesman Problem with hard time windows:
//! instance generators, an exact labeling solver, look-ahead feature
//! extraction, a supervised candidate scorer and evaluation metrics.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what datasets and checkpoints use on disk.

pub mod datagen;
pub mod error;
pub mod eval;
pub mod expert;
pub mod features;
pub mod io;
pub mod policy;
pub mod problem;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Point = problem::Point<f64>;
pub type TimeWindow = problem::TimeWindow<f64>;
pub type Instance = problem::Instance<f64>;
pub type Schedule = problem::Schedule<f64>;
pub type PartialTour = problem::PartialTour<f64>;
pub type LegalityReport = problem::LegalityReport<f64>;
pub type TrainingSample = features::TrainingSample<f64>;

pub use datagen::DatasetRecord;
pub use features::FeatureLevel;
pub use problem::Tour;
