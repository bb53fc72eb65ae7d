//! Core pipeline for weld-image acceptability studies.

pub mod dataset;
pub mod embedding;
pub mod evaluation;
pub mod gateway;
pub mod num;
pub mod prompting;

#[cfg(test)]
mod test_http;
#[cfg(test)]
mod testrng;

pub use num::Real;

/// Scalar used to store embedding vectors.
pub type EmbedScalar = f32;
/// Scalar used for classification metrics and reports.
pub type MetricScalar = f64;
