use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("edge {index} (t = {t}) lies outside the segmentation span")]
    EdgeOutsideSpan { index: usize, t: f64 },

    #[error("node id {node} out of range for a graph with {node_count} nodes")]
    NodeOutOfRange { node: u64, node_count: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid segmentation: {0}")]
    InvalidSegmentation(String),

    #[error("degenerate model: every pair rate is zero")]
    DegenerateModel,

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("nothing to cluster: the segment has no edges")]
    NothingToCluster,

    #[error("invalid clusterer config: {0}")]
    InvalidConfig(String),

    #[error("expectation undefined: no other partitions to compare against")]
    ExpectationUndefined,

    #[error("similarity undefined for two empty sets")]
    EmptySets,

    #[error("node universe mismatch: expected {expected} nodes, found {found}")]
    UniverseMismatch { expected: usize, found: usize },

    #[error("pair scope must contain at least two nodes")]
    ScopeTooSmall,

    #[error("a flow graph needs at least two segments, got {0}")]
    TooFewSegments(usize),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("no edges in input")]
    NoEdges,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
