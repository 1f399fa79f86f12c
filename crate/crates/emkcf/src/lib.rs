//! Files, pipeline and command line around [`emkcf_core`].
//!
//! - [`ingest`]: feature matrices (CSV or binary), dense kernels streamed
//!   row by row, label files
//! - [`kcs`]: the sparse kernel container
//! - [`recipe`]: the `kernels.json` recipe file
//! - [`synth`]: gaussian blob generator
//! - [`pipeline`]: the `run` command as a library call
//! - [`memory`]: allocation accounting for peak-memory reporting

pub mod config;
pub mod error;
pub mod ingest;
pub mod kcs;
pub mod memory;
pub mod pipeline;
pub mod recipe;
pub mod report;
pub mod synth;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use pipeline::{run_pipeline, run_pipeline_with_threads, PipelineError, Stage};
pub use report::RunReport;
