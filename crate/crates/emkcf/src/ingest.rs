//! Feature matrices, dense precomputed kernels and label files.
//!
//! Binary layouts (all integers and floats little-endian):
//!
//! ```text
//! features:  "EMKF" u32 version=1 u64 n u64 d   then n·d f64, row-major
//! kernel:    "EMKK" u32 version=1 u64 n         then n·n f64, row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
#[cfg(unix)]
use std::os::unix::fs::FileExt;
#[cfg(windows)]
use std::os::windows::fs::FileExt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use emkcf_core::rows::KernelRowSource;
use emkcf_core::FeatureMatrix;

use crate::error::{Error, Result};

pub const FEATURES_MAGIC: &[u8; 4] = b"EMKF";
pub const KERNEL_MAGIC: &[u8; 4] = b"EMKK";
pub const FORMAT_VERSION: u32 = 1;
const FEATURES_HEADER: usize = 24;
const KERNEL_HEADER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureFormat {
    Csv,
    Binary,
}

impl FeatureFormat {
    /// `.csv` files are CSV, everything else binary.
    pub fn infer(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => FeatureFormat::Csv,
            _ => FeatureFormat::Binary,
        }
    }
}

impl FromStr for FeatureFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(FeatureFormat::Csv),
            "binary" | "bin" | "f64" => Ok(FeatureFormat::Binary),
            other => Err(format!("unknown feature format {other:?}")),
        }
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

pub fn load_features(path: &Path, format: FeatureFormat) -> Result<FeatureMatrix> {
    let file = open(path)?;
    match format {
        FeatureFormat::Csv => read_features_csv(BufReader::new(file), path),
        FeatureFormat::Binary => read_features_binary(BufReader::new(file), path),
    }
}

/// Comma-separated values, no header, one sample per line.
pub fn read_features_csv(reader: impl Read, path: &Path) -> Result<FeatureMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut values = Vec::new();
    let (mut n, mut d) = (0usize, None);
    for record in rdr.records() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        match d {
            None => d = Some(record.len()),
            Some(d) if d != record.len() => {
                return Err(Error::format(path, format!("line {} has {} fields, expected {d}", n + 1, record.len())))
            }
            _ => {}
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::format(path, format!("row {n}, column {col}: cannot parse {field:?}")))?;
            values.push(v);
        }
        n += 1;
    }
    let d = d.ok_or_else(|| Error::format(path, "no samples"))?;
    Ok(FeatureMatrix::new(n, d, values)?)
}

fn read_u32(bytes: &[u8]) -> u32 {
    u32::from_le_bytes(bytes.try_into().unwrap())
}

fn read_u64(bytes: &[u8]) -> u64 {
    u64::from_le_bytes(bytes.try_into().unwrap())
}

fn check_magic(path: &Path, got: &[u8], want: &[u8; 4], version: u32) -> Result<()> {
    if got != want {
        return Err(Error::format(path, format!("bad magic {got:?}, expected {:?}", std::str::from_utf8(want).unwrap())));
    }
    if version != FORMAT_VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    Ok(())
}

fn to_usize(path: &Path, v: u64) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::format(path, format!("size {v} does not fit in memory")))
}

pub fn read_features_binary(mut reader: impl Read, path: &Path) -> Result<FeatureMatrix> {
    let mut header = [0u8; FEATURES_HEADER];
    reader
        .read_exact(&mut header)
        .map_err(|_| Error::format(path, "truncated header"))?;
    check_magic(path, &header[..4], FEATURES_MAGIC, read_u32(&header[4..8]))?;
    let n = to_usize(path, read_u64(&header[8..16]))?;
    let d = to_usize(path, read_u64(&header[16..24]))?;
    let len = n.checked_mul(d).ok_or_else(|| Error::format(path, "shape overflows"))?;
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload).map_err(|e| Error::io(path, e))?;
    if payload.len() != len * 8 {
        return Err(Error::format(
            path,
            format!("header declares {n}x{d} = {len} values, payload holds {} bytes", payload.len()),
        ));
    }
    let values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(FeatureMatrix::new(n, d, values)?)
}

pub fn save_features_binary(path: &Path, features: &FeatureMatrix) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    w.write_all(FEATURES_MAGIC).map_err(io)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(features.n() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(features.d() as u64).to_le_bytes()).map_err(io)?;
    for v in features.values() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Shortest round-trip formatting, so CSV output reloads bit-exactly.
pub fn save_features_csv(path: &Path, features: &FeatureMatrix) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    for i in 0..features.n() {
        let line: Vec<String> = features.row(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Dense `n x n` kernel on disk. Each `read_row` is one positioned read of
/// `8n` bytes; the matrix is never loaded as a whole.
#[derive(Debug)]
pub struct PrecomputedKernel {
    file: File,
    path: PathBuf,
    n: usize,
}

pub fn open_precomputed_kernel(path: &Path) -> Result<PrecomputedKernel> {
    let mut file = open(path)?;
    let mut header = [0u8; KERNEL_HEADER];
    file.read_exact(&mut header)
        .map_err(|_| Error::format(path, "truncated header"))?;
    check_magic(path, &header[..4], KERNEL_MAGIC, read_u32(&header[4..8]))?;
    let n = to_usize(path, read_u64(&header[8..16]))?;
    let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let want = (n as u128) * (n as u128) * 8 + KERNEL_HEADER as u128;
    if len as u128 != want {
        return Err(Error::format(
            path,
            format!("header declares a {n}x{n} kernel ({want} bytes), file has {len} bytes; kernels must be square"),
        ));
    }
    Ok(PrecomputedKernel { file, path: path.to_path_buf(), n })
}

impl PrecomputedKernel {
    pub fn path(&self) -> &Path {
        &self.path
    }

    fn read_at(&self, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
        #[cfg(unix)]
        {
            self.file.read_exact_at(buf, offset)
        }
        #[cfg(windows)]
        {
            let mut done = 0;
            while done < buf.len() {
                match self.file.seek_read(&mut buf[done..], offset + done as u64)? {
                    0 => return Err(std::io::ErrorKind::UnexpectedEof.into()),
                    k => done += k,
                }
            }
            Ok(())
        }
    }
}

impl KernelRowSource for PrecomputedKernel {
    fn n(&self) -> usize {
        self.n
    }

    fn read_row(&self, i: usize, out: &mut [f64]) -> emkcf_core::Result<()> {
        if i >= self.n || out.len() != self.n {
            return Err(emkcf_core::Error::RowSource { row: i, reason: format!("row out of range for n = {}", self.n) });
        }
        let mut buf = vec![0u8; 8 * self.n];
        let offset = KERNEL_HEADER as u64 + (i as u64) * 8 * self.n as u64;
        self.read_at(&mut buf, offset).map_err(|e| emkcf_core::Error::RowSource {
            row: i,
            reason: format!("{}: {e}", self.path.display()),
        })?;
        for (o, c) in out.iter_mut().zip(buf.chunks_exact(8)) {
            *o = f64::from_le_bytes(c.try_into().unwrap());
        }
        Ok(())
    }
}

/// Streams a dense kernel to disk one row at a time.
pub fn save_dense_kernel<F>(path: &Path, n: usize, mut row: F) -> Result<()>
where
    F: FnMut(usize, &mut [f64]) -> Result<()>,
{
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    w.write_all(KERNEL_MAGIC).map_err(io)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(n as u64).to_le_bytes()).map_err(io)?;
    let mut buf = vec![0.0; n];
    for i in 0..n {
        row(i, &mut buf)?;
        for v in &buf {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// One nonnegative integer per line.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|_| Error::format(path, format!("line {}: {l:?} is not a label", i + 1)))
        })
        .collect()
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    for l in labels {
        writeln!(w, "{l}").map_err(io)?;
    }
    w.flush().map_err(io)
}
