//! Out-of-core random forest training.
//!
//! `canopy` builds ensembles of fully-grown decision trees over datasets
//! that are larger than main memory. Each ensemble member is constructed
//! in three phases:
//!
//! 1. a shallow *top tree* is trained on a small random subset, using a
//!    balance-regularized split criterion so its leaves partition the data
//!    into roughly equal-sized buckets,
//! 2. a single streaming pass routes every training row to the leaf bucket
//!    it falls into (buckets live in memory or on disk),
//! 3. one or more standard fully-grown *bottom trees* are built per bucket
//!    and attached to the corresponding top-tree leaf.
//!
//! Both streaming passes process the data in fixed-size chunks, so peak
//! memory stays bounded by the subset sizes plus one chunk regardless of
//! the dataset size.

pub mod data;
pub mod error;
pub mod forest;
pub mod gauge;
pub mod rng;
pub mod splits;
pub mod synth;
pub mod tree;

pub use error::{Error, Result};
