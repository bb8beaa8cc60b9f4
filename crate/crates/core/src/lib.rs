//! Soft-sensor modelling for a product-quality target (NT) predicted from
//! eight process variables, with the tooling needed to rank those variables
//! by predictive importance.
//!
//! The crate covers the whole analysis loop:
//!
//! - [`dataio`]: CSV ingest, outlier filtering, z-score normalization and
//!   seeded train/validation/test splits.
//! - [`linreg`], [`cart`], [`forest`]: the three model families (ordinary
//!   least squares, pruned regression trees and random forests).
//! - [`forest`] also provides out-of-bag error and permutation importance.
//! - [`importance`]: model-free filter scores (chi-squared, gain ratio,
//!   correlation) and the pairwise correlation matrix.
//! - [`selection`]: forward selection over an importance ranking, held-out
//!   test evaluation and missing-sensor fallback routing.
//! - [`synth`]: a synthetic data generator with the same qualitative structure
//!   as the plant data.
//! - [`bundle`] and [`pipeline`]: model persistence and the end-to-end run.

pub mod bundle;
pub mod cart;
pub mod dataio;
mod error;
mod feature;
pub mod forest;
pub mod importance;
pub mod linreg;
pub mod metrics;
pub mod pipeline;
pub mod seeds;
pub mod selection;
pub mod synth;

pub use error::{Error, Result};
pub use feature::{format_features, parse_feature_list, FeatureId, FeatureMatrix, FeatureValues};
