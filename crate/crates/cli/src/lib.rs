//! Experiment harness for commflow: configuration, ingestion, parallel
//! ensemble clustering, scoring and result persistence. The `commflow`
//! binary is a thin command-line layer over this crate.

pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod pipeline;

pub use config::{ExperimentConfig, Mode};
pub use error::{HarnessError, Result};
pub use experiment::{execute, run_experiment, write_outputs, ExperimentOutput};
pub use io::ingest_snap;
pub use pipeline::run_segment_pipeline;
