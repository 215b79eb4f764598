//! Stance detection for (question, comment) pairs: corpus handling, linear and subword
//! baselines, macro-F1 evaluation and voting booklet analysis.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below fix the
//! precision used by the command line tool.

pub mod booklet;
pub mod corpus;
pub mod evaluation;
pub mod linear;
pub mod lookup;
pub mod plot;
pub mod report;
pub mod scalar;
pub mod synthetic;
pub mod text;
pub mod types;

pub use scalar::Real;
pub use types::{
    Language, PredictionError, StanceClassifier, StanceLabel, StancePrediction, PROBABILITY_FLOOR,
};

pub type LinearModel = linear::LinearStanceModel<f64>;
pub type LinearModel32 = linear::LinearStanceModel<f32>;
pub type SubwordModel = linear::SubwordLinearModel<f32>;
pub type SubwordModel64 = linear::SubwordLinearModel<f64>;
pub type FeatureVector = linear::HashedFeatureVector<f64>;
pub type BoxSummary = report::BoxStats<f64>;
