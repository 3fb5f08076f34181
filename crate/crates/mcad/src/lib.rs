//! Matrix completion with an accuracy-diversity balance for recommender
//! systems.
//!
//! The crate completes a partially observed interaction matrix by
//! nuclear-norm minimization (split Bregman iterations with singular value
//! thresholding) and optionally augments the objective with a genre-variance
//! regularizer that spreads each user's predicted ratings evenly across item
//! genres. Around the solver sit MovieLens ingestion, a bias baseline model,
//! top-N ranking strategies (standard, item-average, reverse-predicted), the
//! accuracy/diversity metric suite, and a sweep/report experiment driver.

pub mod bias;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod lowrank;
pub mod metrics;
pub mod rank;
pub mod solver;

pub use error::{Error, Result};
