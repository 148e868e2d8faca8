//! Dynamic community detection with ensembles of block-model clusterings.
//!
//! - [`generator`]: time-varying degree-corrected stochastic block model.
//! - [`mcmc`]: description-length objective and Metropolis-Hastings clusterer.
//! - [`resolver`]: resolves a cloud of partitions into a representative one.
//! - [`metrics`]: pairwise precision and recall against ground truth.
//! - [`flow`]: community flow graph across time segments, as DOT or JSON.

pub mod error;
pub mod flow;
pub mod generator;
pub mod mcmc;
pub mod metrics;
pub mod model;
pub mod resolver;
pub mod seed;
pub mod snap;

pub use error::{Error, Result};
pub use model::{blocks_of, DynamicGraph, NodeId, Partition, SegmentGraph, TimeSegmentation, TimestampedEdge};
