//! Granular-ball tree regularized spectral clustering.
//!
//! The pipeline runs in four stages:
//!
//! 1. min-max normalize the data and build a k-nearest-neighbor graph whose
//!    mutual (reciprocal) edges carry self-tuning Gaussian weights;
//! 2. grow a binary tree of granular balls best-first, splitting a ball only
//!    when the two-part description length of the children (plus the cost of
//!    every reciprocal edge the split severs) beats keeping the ball whole;
//! 3. re-weight the k-NN edges with the coding scale of the leaf balls at each
//!    endpoint, optionally penalizing edges whose endpoints share few
//!    neighbors;
//! 4. partition the resulting graph, either by its connected components or by
//!    normalized spectral clustering with deterministic k-means.
//!
//! All description lengths are in nats. Every stage is deterministic: there is
//! no hidden random seed anywhere in the clustering path.
//!
//! ```no_run
//! use gbtrsc::{dataio, metrics, spectral};
//!
//! let data = dataio::load_csv("iris.csv", true, Some(4)).unwrap();
//! let partition = spectral::cluster(&data, Some(3)).unwrap();
//! let truth = data.labels.as_ref().unwrap();
//! println!("ARI = {:.4}", metrics::ari(truth, &partition.labels).unwrap());
//! ```

pub mod affinity;
pub mod ball_coding;
pub mod dataio;
pub mod eigen;
mod error;
pub mod gb_tree;
pub mod knn_graph;
pub mod metrics;
pub mod spectral;
mod union_find;

pub use error::{Error, Result};

/// Positivity guard used for scales, log-argument clipping and degree floors.
pub const EPSILON: f64 = 1e-12;

/// `exp(-cost)` kept strictly positive so an existing edge never vanishes
/// through underflow.
#[inline]
pub(crate) fn positive_exp(cost: f64) -> f64 {
    (-cost).exp().max(f64::MIN_POSITIVE)
}
