//! Linear drift and asymptotic entropy of random walks on free groups and
//! free products, with independent numerical oracles.
//!
//! - [`group`]: normal-form words and validated laws.
//! - [`analytic`]: traffic equations and closed forms on free groups.
//! - [`convolution`]: exact laws of `X_n`, entropies, return probabilities.
//! - [`hitting`]: two-sided brackets for hitting probabilities.
//! - [`freeproduct`]: block-length drift on free products.
//! - [`simulate`]: seeded Monte Carlo estimators.
//! - [`optimize`]: maxima, concavity probes and parameter sweeps.

pub mod analytic;
pub mod convolution;
pub mod error;
pub mod freeproduct;
pub mod group;
pub mod hitting;
pub mod optimize;
pub mod simulate;
pub mod walk;

pub use error::{Error, Result};
