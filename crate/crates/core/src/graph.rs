//! Nadaraya-Watson neighbor affinities and the sparse normalized kernel.
//!
//! For every sample `i` the `k` most similar other samples form its local
//! clique `N_i`, and `s_ij = κ_ij / Σ_{j'∈N_i} κ_ij'` on that clique (zero
//! elsewhere), so `S ≥ 0` and `S·1 = 1`. With `A = (S + Sᵀ)/2` and
//! `D = diag(A·1)` the kernel is
//!
//! ```text
//! K = (I + D)^{-1/2} (I + A) (I + D)^{-1/2}
//! ```
//!
//! which is symmetric with spectrum in `[0, 1]`. Rows are produced one at a
//! time, so building `K` needs `O(nk)` memory and never an `n x n` buffer.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::dense::Mat;
use crate::error::{Error, Result};
use crate::float::{exp, sqrt};
use crate::par;

/// Sparse row with strictly increasing column indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRow {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

/// `a` ranks before `b`: larger similarity first, smaller index on ties.
#[inline]
fn ranks_before(a: (f64, usize), b: (f64, usize)) -> bool {
    match a.0.total_cmp(&b.0) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => a.1 < b.1,
    }
}

/// Keeps the `k` best `(value, index)` pairs seen so far in a binary heap
/// whose root is the worst kept pair. One comparison rejects most
/// candidates, so a row costs `O(n)` plus `O(log k)` per accepted entry.
pub(crate) struct TopK {
    heap: Vec<(f64, usize)>,
}

impl TopK {
    pub(crate) fn new() -> Self {
        Self { heap: Vec::new() }
    }

    fn clear(&mut self, k: usize) {
        self.heap.clear();
        self.heap.reserve(k);
    }

    #[inline]
    fn offer(&mut self, k: usize, item: (f64, usize)) {
        let heap = &mut self.heap;
        if heap.len() < k {
            heap.push(item);
            let mut pos = heap.len() - 1;
            while pos > 0 {
                let parent = (pos - 1) / 2;
                if ranks_before(heap[parent], heap[pos]) {
                    heap.swap(parent, pos);
                    pos = parent;
                } else {
                    break;
                }
            }
        } else if ranks_before(item, heap[0]) {
            heap[0] = item;
            let len = heap.len();
            let mut pos = 0;
            loop {
                let (l, r) = (2 * pos + 1, 2 * pos + 2);
                let mut worst = pos;
                if l < len && ranks_before(heap[worst], heap[l]) {
                    worst = l;
                }
                if r < len && ranks_before(heap[worst], heap[r]) {
                    worst = r;
                }
                if worst == pos {
                    break;
                }
                heap.swap(pos, worst);
                pos = worst;
            }
        }
    }

    /// Selected pairs sorted by column index.
    fn sorted_by_index(&mut self) -> &[(f64, usize)] {
        self.heap.sort_unstable_by_key(|p| p.1);
        &self.heap
    }
}

/// Neighbor affinities of row `i` from a row of kernel values.
///
/// Negative similarities are clamped to zero and never selected; the
/// diagonal is excluded. Ties at rank `k` go to the smaller column index.
pub fn lnwkr_row(kernel_row: &[f64], i: usize, k: usize) -> Result<SparseRow> {
    lnwkr_row_with(&mut TopK::new(), kernel_row, i, k)
}

pub(crate) fn lnwkr_row_with(top: &mut TopK, kernel_row: &[f64], i: usize, k: usize) -> Result<SparseRow> {
    check_k(k)?;
    top.clear(k);
    let mut positive = 0;
    for (j, &v) in kernel_row.iter().enumerate() {
        if j != i && v > 0.0 {
            positive += 1;
            top.offer(k, (v, j));
        }
    }
    if positive < k {
        return Err(Error::InsufficientNeighbors { row: i, positive, k });
    }
    let picked = top.sorted_by_index();
    let total: f64 = picked.iter().map(|p| p.0).sum();
    Ok(SparseRow {
        indices: picked.iter().map(|p| p.1).collect(),
        values: picked.iter().map(|p| p.0 / total).collect(),
    })
}

/// Same as [`lnwkr_row`] for a row of log-similarities. The normalization is
/// shift invariant, so `exp(l_j − max l)` reproduces the ratios exactly even
/// when `exp(l_j)` itself would underflow (narrow gaussian bandwidths).
pub fn lnwkr_row_log(log_row: &[f64], i: usize, k: usize) -> Result<SparseRow> {
    lnwkr_row_log_with(&mut TopK::new(), log_row, i, k)
}

pub(crate) fn lnwkr_row_log_with(top: &mut TopK, log_row: &[f64], i: usize, k: usize) -> Result<SparseRow> {
    check_k(k)?;
    top.clear(k);
    let mut positive = 0;
    for (j, &v) in log_row.iter().enumerate() {
        if j != i && v > f64::NEG_INFINITY {
            positive += 1;
            top.offer(k, (v, j));
        }
    }
    if positive < k {
        return Err(Error::InsufficientNeighbors { row: i, positive, k });
    }
    let picked = top.sorted_by_index();
    let lmax = picked.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = picked.iter().map(|p| exp(p.0 - lmax)).collect();
    let total: f64 = weights.iter().sum();
    Ok(SparseRow {
        indices: picked.iter().map(|p| p.1).collect(),
        values: weights.iter().map(|w| w / total).collect(),
    })
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("neighbor count k must be at least 1".into()));
    }
    Ok(())
}

/// Producer of affinity rows for one kernel.
pub trait AffinitySource: Sync {
    /// Per-worker scratch space (row buffers and the like).
    type Scratch: Send;

    fn n(&self) -> usize;
    fn scratch(&self) -> Self::Scratch;
    fn affinity_row(&self, scratch: &mut Self::Scratch, i: usize, k: usize) -> Result<SparseRow>;
}

/// Producer of affinity rows for `m` kernels at once, so that work shared
/// between kernels (distances, inner products) is done once per row.
pub trait MultiAffinitySource: Sync {
    type Scratch: Send;

    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn scratch(&self) -> Self::Scratch;
    /// Row `i` of every kernel, in kernel order.
    fn affinity_rows(&self, scratch: &mut Self::Scratch, i: usize, k: usize) -> Result<Vec<SparseRow>>;
}

struct Single<'a, S>(&'a S);

impl<S: AffinitySource> MultiAffinitySource for Single<'_, S> {
    type Scratch = S::Scratch;

    fn n(&self) -> usize {
        self.0.n()
    }
    fn m(&self) -> usize {
        1
    }
    fn scratch(&self) -> S::Scratch {
        self.0.scratch()
    }
    fn affinity_rows(&self, scratch: &mut S::Scratch, i: usize, k: usize) -> Result<Vec<SparseRow>> {
        Ok(vec![self.0.affinity_row(scratch, i, k)?])
    }
}

/// Row-stochastic neighbor affinity matrix `S` in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph {
    n: usize,
    k: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl AffinityGraph {
    fn with_capacity(n: usize, k: usize) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        Self {
            n,
            k,
            row_ptr,
            col_idx: Vec::with_capacity(n * k),
            values: Vec::with_capacity(n * k),
        }
    }

    fn push_row(&mut self, row: SparseRow) {
        self.col_idx.extend_from_slice(&row.indices);
        self.values.extend_from_slice(&row.values);
        self.row_ptr.push(self.col_idx.len());
    }

    /// Assembles a graph from explicit rows, e.g. for hand-built fixtures.
    pub fn from_rows(n: usize, k: usize, rows: Vec<SparseRow>) -> Result<Self> {
        if rows.len() != n {
            return Err(Error::Shape(alloc::format!("{} rows for an n={n} graph", rows.len())));
        }
        let mut g = Self::with_capacity(n, k);
        for (i, row) in rows.into_iter().enumerate() {
            if row.indices.len() != row.values.len()
                || row.indices.windows(2).any(|w| w[0] >= w[1])
                || row.indices.iter().any(|&j| j >= n || j == i)
                || row.values.iter().any(|v| !(v.is_finite() && *v >= 0.0))
            {
                return Err(Error::InvalidArgument(alloc::format!("malformed affinity row {i}")));
            }
            g.push_row(row);
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }
}

/// Builds `S` for one kernel.
pub fn build_affinity_graph<S: AffinitySource>(source: &S, k: usize) -> Result<AffinityGraph> {
    Ok(build_affinity_graphs(&Single(source), k)?.pop().expect("one graph"))
}

const ROW_BLOCK: usize = 512;

/// Builds `S_r` for every kernel of a multi-source, streaming rows in
/// blocks so that only `O(block · m · k)` transient memory is live.
pub fn build_affinity_graphs<M: MultiAffinitySource>(source: &M, k: usize) -> Result<Vec<AffinityGraph>> {
    let (n, m) = (source.n(), source.m());
    check_k(k)?;
    let mut graphs: Vec<AffinityGraph> = (0..m).map(|_| AffinityGraph::with_capacity(n, k)).collect();
    let mut start = 0;
    while start < n {
        let len = ROW_BLOCK.min(n - start);
        let block = par::map_range_init(
            len,
            || source.scratch(),
            |scratch, t| source.affinity_rows(scratch, start + t, k),
        );
        for rows in block {
            for (g, row) in graphs.iter_mut().zip(rows?) {
                g.push_row(row);
            }
        }
        start += len;
    }
    Ok(graphs)
}

/// Symmetric sparse kernel in CSR form with explicit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseKernel {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    degree: Vec<f64>,
    nonnegative: bool,
}

impl SparseKernel {
    /// `K = (I + D)^{-1/2} (I + A) (I + D)^{-1/2}` with `A = (S + Sᵀ)/2`.
    pub fn from_affinity(s: &AffinityGraph) -> Self {
        let n = s.n;
        // Sᵀ by counting sort; rows of Sᵀ come out with increasing columns.
        let mut t_ptr = vec![0usize; n + 1];
        for &j in &s.col_idx {
            t_ptr[j + 1] += 1;
        }
        for i in 0..n {
            t_ptr[i + 1] += t_ptr[i];
        }
        let mut fill = t_ptr.clone();
        let mut t_idx = vec![0usize; s.nnz()];
        let mut t_val = vec![0.0f64; s.nnz()];
        for i in 0..n {
            let (cols, vals) = s.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                t_idx[fill[j]] = i;
                t_val[fill[j]] = v;
                fill[j] += 1;
            }
        }
        drop(fill);

        // Union pattern of S, Sᵀ and the diagonal: count, then fill.
        let merged = |i: usize, emit: &mut dyn FnMut(usize, f64)| {
            let (sc, sv) = s.row(i);
            let (tc, tv) = (&t_idx[t_ptr[i]..t_ptr[i + 1]], &t_val[t_ptr[i]..t_ptr[i + 1]]);
            let (mut p, mut q) = (0, 0);
            let mut diag_done = false;
            loop {
                let next_s = sc.get(p).copied().unwrap_or(usize::MAX);
                let next_t = tc.get(q).copied().unwrap_or(usize::MAX);
                let col = next_s.min(next_t);
                if !diag_done && i <= col {
                    emit(i, f64::NAN);
                    diag_done = true;
                    continue;
                }
                if col == usize::MAX {
                    break;
                }
                let a = if next_s == next_t {
                    let a = 0.5 * (sv[p] + tv[q]);
                    p += 1;
                    q += 1;
                    a
                } else if next_s < next_t {
                    p += 1;
                    0.5 * (sv[p - 1] + 0.0)
                } else {
                    q += 1;
                    0.5 * (0.0 + tv[q - 1])
                };
                emit(col, a);
            }
        };

        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0usize);
        for i in 0..n {
            let mut len = 0;
            merged(i, &mut |_, _| len += 1);
            row_ptr.push(row_ptr[i] + len);
        }
        let nnz = row_ptr[n];
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        let mut degree = Vec::with_capacity(n);
        for i in 0..n {
            let mut d = 0.0;
            merged(i, &mut |j, a| {
                col_idx.push(j);
                values.push(a);
                if j != i {
                    d += a;
                }
            });
            degree.push(d);
        }
        drop((t_idx, t_val, t_ptr));
        for i in 0..n {
            for p in row_ptr[i]..row_ptr[i + 1] {
                let j = col_idx[p];
                values[p] = if j == i {
                    1.0 / (1.0 + degree[i])
                } else {
                    values[p] / sqrt((1.0 + degree[i]) * (1.0 + degree[j]))
                };
            }
        }
        Self { n, row_ptr, col_idx, values, degree, nonnegative: true }
    }

    /// Validating constructor from raw CSR arrays (used by file readers).
    ///
    /// Checks the CSR structure, finiteness, strictly positive diagonal and
    /// exact symmetry.
    pub fn from_parts(
        n: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
        degree: Vec<f64>,
    ) -> Result<Self> {
        let bad = |msg: &str| Err(Error::InvalidArgument(alloc::format!("sparse kernel: {msg}")));
        if row_ptr.len() != n + 1 || row_ptr[0] != 0 || degree.len() != n {
            return bad("array lengths do not match n");
        }
        if row_ptr.windows(2).any(|w| w[0] > w[1]) || row_ptr[n] != col_idx.len() || col_idx.len() != values.len() {
            return bad("row pointers are inconsistent");
        }
        let k = Self { n, row_ptr, col_idx, values, degree, nonnegative: true };
        for i in 0..n {
            let (cols, vals) = k.row(i);
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&j| j >= n) {
                return bad("column indices must be increasing and in range");
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return bad("non-finite value");
            }
            if k.get(i, i) <= 0.0 {
                return Err(Error::SelfSimilarity { row: i, value: k.get(i, i) });
            }
            for (&j, &v) in cols.iter().zip(vals) {
                if k.get(j, i) != v {
                    return bad("matrix is not symmetric");
                }
            }
        }
        let nonnegative = k.values.iter().all(|&v| v >= 0.0);
        Ok(Self { nonnegative, ..k })
    }

    /// Sparse copy of a dense symmetric matrix (entries that are exactly
    /// zero are dropped). Degrees are recorded as zero.
    pub fn from_dense(m: &Mat) -> Result<Self> {
        let n = m.rows();
        if m.cols() != n {
            return Err(Error::NotSquare { rows: n, cols: m.cols() });
        }
        let mut row_ptr = vec![0];
        let (mut col_idx, mut values) = (Vec::new(), Vec::new());
        for i in 0..n {
            for j in 0..n {
                if m[(i, j)] != 0.0 {
                    col_idx.push(j);
                    values.push(m[(i, j)]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self::from_parts(n, row_ptr, col_idx, values, vec![0.0; n])
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
            degree: vec![0.0; n],
            nonnegative: true,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Diagonal of the degree matrix `D` of the symmetrized affinity.
    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    pub fn is_nonnegative(&self) -> bool {
        self.nonnegative
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|p| vals[p]).unwrap_or(0.0)
    }

    /// `tr(K)`; equals `Σ_i 1/(1 + D_ii)` for kernels built from affinities.
    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Dense copy. Allocates `n²` values; meant for small problems.
    pub fn to_dense(&self) -> Mat {
        let mut m = Mat::zeros(self.n, self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// `K · M`.
    pub fn spmm(&self, m: &Mat) -> Result<Mat> {
        self.check_rows(m)?;
        let c = m.cols();
        let mut out = Mat::zeros(self.n, c);
        par::for_each_row_mut(out.as_mut_slice(), c, |i, dst| {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                for (d, &x) in dst.iter_mut().zip(m.row(j)) {
                    *d += v * x;
                }
            }
        });
        Ok(out)
    }

    /// `(K⁺ · M, K⁻ · M)` where `K = K⁺ − K⁻` splits entries by sign.
    pub fn spmm_split(&self, m: &Mat) -> Result<(Mat, Mat)> {
        if self.nonnegative {
            return Ok((self.spmm(m)?, Mat::zeros(self.n, m.cols())));
        }
        self.check_rows(m)?;
        let c = m.cols();
        let signed = |positive: bool| {
            let mut out = Mat::zeros(self.n, c);
            par::for_each_row_mut(out.as_mut_slice(), c, |i, dst| {
                let (cols, vals) = self.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    let w = if positive { v.max(0.0) } else { (-v).max(0.0) };
                    if w != 0.0 {
                        for (d, &x) in dst.iter_mut().zip(m.row(j)) {
                            *d += w * x;
                        }
                    }
                }
            });
            out
        };
        Ok((signed(true), signed(false)))
    }

    fn check_rows(&self, m: &Mat) -> Result<()> {
        if m.rows() != self.n {
            return Err(Error::Shape(alloc::format!(
                "product of an n={} kernel with a {}x{} matrix",
                self.n,
                m.rows(),
                m.cols()
            )));
        }
        Ok(())
    }
}

/// Builds the sparse kernel of one affinity source.
pub fn build_sparse_kernel<S: AffinitySource>(source: &S, k: usize) -> Result<SparseKernel> {
    Ok(SparseKernel::from_affinity(&build_affinity_graph(source, k)?))
}

/// Builds all `m` sparse kernels of a multi-source. Each affinity graph is
/// released as soon as its kernel exists.
pub fn build_sparse_kernels<M: MultiAffinitySource>(source: &M, k: usize) -> Result<Vec<SparseKernel>> {
    let graphs = build_affinity_graphs(source, k)?;
    let mut kernels = Vec::with_capacity(graphs.len());
    for g in graphs {
        kernels.push(SparseKernel::from_affinity(&g));
    }
    Ok(kernels)
}
