//! `report.json`, versioned by its `schema` field (see
//! `schema/report.schema.json`).

use emkcf_core::KernelSpec;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub nmi: f64,
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub ingest: f64,
    pub kernel_build: f64,
    pub solve: f64,
    pub label: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub config: RunConfig,
    pub n: usize,
    pub m: usize,
    /// Kernel recipe, when the kernels were generated from features.
    pub recipe: Option<Vec<KernelSpec>>,
    pub base_distance: Option<f64>,
    pub labels: Vec<usize>,
    pub scores: Option<Scores>,
    pub mu: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub timings: Timings,
    /// Peak tracked heap size during the run, when allocation tracking is
    /// installed.
    pub peak_allocation_bytes: Option<u64>,
}
