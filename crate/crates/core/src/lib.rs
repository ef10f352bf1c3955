//! Core building blocks for federated gradient-boosted-tree training on
//! hybrid data: dataset ingestion and partitioning, centralized GBDT
//! training, evaluation metrics, and split-rule analysis with the tree
//! transformation that moves guest-feature splits into the bottom layers.

pub mod binning;
pub mod dataset;
pub mod error;
pub mod io;
pub mod meta;
pub mod metrics;
pub mod partition;
pub mod train;
pub mod tree;

pub use dataset::{Dataset, FeatureId, FeatureView, InstanceId, JoinedView, MISSING};
pub use error::{CoreError, Result};
