//! Row-at-a-time access to dense base kernels.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{lnwkr_row, AffinitySource, SparseRow};

/// On-demand access to the rows of an `n x n` base kernel matrix. The whole
/// matrix is never required to be resident; implementations must tolerate
/// concurrent `read_row` calls.
pub trait KernelRowSource: Sync {
    fn n(&self) -> usize;

    /// Writes row `i` into `out` (length `n`).
    fn read_row(&self, i: usize, out: &mut [f64]) -> Result<()>;

    /// Reads row `i` and checks finiteness and strictly positive
    /// self-similarity.
    fn checked_row(&self, i: usize, out: &mut [f64]) -> Result<()> {
        self.read_row(i, out)?;
        if let Some(j) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, col: j });
        }
        if out[i] <= 0.0 {
            return Err(Error::SelfSimilarity { row: i, value: out[i] });
        }
        Ok(())
    }
}

/// Dense in-memory kernel, mostly useful for small problems and tests.
#[derive(Debug, Clone)]
pub struct DenseKernel {
    n: usize,
    values: Vec<f64>,
}

impl DenseKernel {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::NotSquare { rows: n, cols: values.len() / n.max(1) });
        }
        Ok(Self { n, values })
    }
}

impl KernelRowSource for DenseKernel {
    fn n(&self) -> usize {
        self.n
    }

    fn read_row(&self, i: usize, out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(&self.values[i * self.n..(i + 1) * self.n]);
        Ok(())
    }
}

/// Turns a [`KernelRowSource`] into per-row neighbor affinities.
pub struct RowAffinity<'a, S: ?Sized> {
    source: &'a S,
}

impl<'a, S: KernelRowSource + ?Sized> RowAffinity<'a, S> {
    pub fn new(source: &'a S) -> Self {
        Self { source }
    }
}

impl<S: KernelRowSource + ?Sized> AffinitySource for RowAffinity<'_, S> {
    type Scratch = Vec<f64>;

    fn n(&self) -> usize {
        self.source.n()
    }

    fn scratch(&self) -> Vec<f64> {
        vec![0.0; self.source.n()]
    }

    fn affinity_row(&self, buf: &mut Vec<f64>, i: usize, k: usize) -> Result<SparseRow> {
        self.source.checked_row(i, buf)?;
        lnwkr_row(buf, i, k)
    }
}
