//! Context-specific expected calibration error for probabilistic classifiers.
//!
//! A metric is assembled from four parts: a [`lens::LensSpec`] that maps outputs
//! and labels into the induced problem, a [`select::SelectorSpec`] that picks the
//! evaluation records, a [`distance::DistanceSpec`] between mean outputs and mean
//! targets, and a [`estimator::BinningSpec`] for the histogram estimate.
//! Post-hoc calibrators live in [`calibrate`]; bootstrap diagnostics and the
//! descriptive profiles live in [`analysis`].

pub mod analysis;
pub mod calibrate;
pub mod cli;
pub mod data;
pub mod distance;
pub mod error;
pub mod estimator;
pub mod io;
pub mod lens;
pub mod select;
pub mod stats;
pub mod synth;

pub use data::{one_hot, softmax, validate_simplex, Dataset, PredictionRecord, ProbabilityVector, TargetVector};
pub use distance::{distance, validate_weight_matrix, DistanceSpec};
pub use error::{Error, Result};
pub use estimator::{bin_adaptive, bin_uniform, gece, traditional_ece, Binning, BinningSpec, MetricResult};
pub use lens::{apply_lens, make_grouping, LensSpec, LensedPair};
pub use select::{select, SelectorSpec};
