//! Sparse kernel container.
//!
//! ```text
//! "EMKS" u32 version=1 u64 n u64 nnz
//! row_ptr: (n+1) u64   col_idx: nnz u64   values: nnz f64   degree: n f64
//! ```
//!
//! Everything little-endian; a save/load round trip is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use emkcf_core::SparseKernel;

use crate::error::{Error, Result};
use crate::ingest::FORMAT_VERSION;

pub const SPARSE_MAGIC: &[u8; 4] = b"EMKS";

pub fn save_sparse_kernel(path: &Path, kernel: &SparseKernel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    put(SPARSE_MAGIC)?;
    put(&FORMAT_VERSION.to_le_bytes())?;
    put(&(kernel.n() as u64).to_le_bytes())?;
    put(&(kernel.nnz() as u64).to_le_bytes())?;
    for &p in kernel.row_ptr() {
        put(&(p as u64).to_le_bytes())?;
    }
    for &c in kernel.col_idx() {
        put(&(c as u64).to_le_bytes())?;
    }
    for v in kernel.values().iter().chain(kernel.degree()) {
        put(&v.to_le_bytes())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

struct Cursor<'p, R> {
    inner: R,
    path: &'p Path,
}

impl<R: Read> Cursor<'_, R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner
            .read_exact(&mut b)
            .map_err(|_| Error::format(self.path, "file ends early"))?;
        Ok(b)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn index(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::format(self.path, format!("index {v} out of range")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

/// Loads and validates a sparse kernel (structure, symmetry, positive
/// diagonal).
pub fn load_sparse_kernel(path: &Path) -> Result<SparseKernel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut c = Cursor { inner: BufReader::new(file), path };
    let magic: [u8; 4] = c.bytes()?;
    if &magic != SPARSE_MAGIC {
        return Err(Error::format(path, "not a sparse kernel file"));
    }
    let version = u32::from_le_bytes(c.bytes()?);
    if version != FORMAT_VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let n = c.index()?;
    let nnz = c.index()?;
    let len = std::fs::metadata(path).map_err(|e| Error::io(path, e))?.len() as u128;
    if len != 24 + 8 * ((n as u128 + 1) + 2 * nnz as u128 + n as u128) {
        return Err(Error::format(path, format!("size {len} does not match n = {n}, nnz = {nnz}")));
    }
    let row_ptr = (0..=n).map(|_| c.index()).collect::<Result<Vec<_>>>()?;
    let col_idx = (0..nnz).map(|_| c.index()).collect::<Result<Vec<_>>>()?;
    let values = (0..nnz).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let degree = (0..n).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    SparseKernel::from_parts(n, row_ptr, col_idx, values, degree).map_err(|e| Error::format(path, e.to_string()))
}
