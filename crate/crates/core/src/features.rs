use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Row-major `n x d` sample matrix: one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    /// Validates shape (`n ≥ 2`, `d ≥ 1`) and finiteness.
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 || d < 1 {
            return Err(Error::Shape(alloc::format!(
                "feature matrix needs n >= 2 and d >= 1, got {n}x{d}"
            )));
        }
        if values.len() != n * d {
            return Err(Error::Shape(alloc::format!(
                "{} values for a {n}x{d} feature matrix",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: pos / d, col: pos % d });
        }
        Ok(Self { n, d, values })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}
