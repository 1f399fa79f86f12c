//! Sparse neighbor kernels and multiple kernel concept factorization.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every numerical
//! piece of the pipeline:
//!
//! - [`kernels`]: base kernel functions evaluated one row at a time,
//! - [`graph`]: Nadaraya-Watson neighbor affinities and the sparse,
//!   degree-normalized kernel built from them,
//! - [`solver`]: block coordinate descent over the consensus factor, the
//!   per-kernel orthogonal factors and the kernel weights,
//! - [`labeling`]: k-means and discretization of the consensus factor,
//! - [`metrics`]: clustering accuracy and normalized mutual information.
//!
//! File formats, the pipeline driver and the command line live in the
//! `emkcf` crate.
//!
//! Enable the `parallel` feature to spread row construction, sparse products
//! and k-means restarts over a rayon pool. Results are bit-identical to the
//! sequential build at any thread count.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod dense;
pub mod error;
pub mod features;
pub mod graph;
pub mod kernels;
pub mod labeling;
pub mod linalg;
pub mod metrics;
pub mod rows;
pub mod solver;

mod float;
mod par;

pub use dense::Mat;
pub use error::{Error, Result};
pub use features::FeatureMatrix;
pub use graph::{AffinityGraph, AffinitySource, SparseKernel, SparseRow};
pub use kernels::{KernelBank, KernelSpec};
pub use labeling::{ClusterLabels, LabelMode};
pub use rows::KernelRowSource;
pub use solver::{ConsensusFactor, KernelWeights, OrthoFactor, SolverOptions, SolverState};
