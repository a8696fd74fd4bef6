//! Decision trees built by feature-weighted supervised k-means splits.
//!
//! The engine grows k-ary trees whose internal nodes are cluster centroids:
//! feature weights come from Pearson (point-biserial) correlation with the
//! label, node splits from weighted k-means, and leaf labels from cluster
//! means. Training data lives in a KP-tree forest — a binary-tree accumulator
//! of squared values that serves amplitude-encoded state queries, supports
//! cheap row appends for retraining, and feeds a query ledger that makes the
//! cost model testable. Estimation can run exactly or through noisy models
//! (Chernoff sampling, amplitude-estimation error envelopes) with explicit
//! error budgets.

pub mod baseline;
pub mod bench;
pub mod cli;
pub mod cluster;
pub mod dataset;
pub mod error;
pub mod kptree;
pub mod qestimate;
pub mod tree;
pub mod weights;

pub use error::{Error, Result};
