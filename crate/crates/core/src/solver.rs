//! Block coordinate descent for multiple kernel orthogonal concept
//! factorization.
//!
//! Minimizes
//!
//! ```text
//! Σ_r (1/μ_r) · ( tr(K_r) − 2 tr(Uᵀ K_r H_r) + tr(Uᵀ K_r U) )
//! s.t. U ≥ 0,  H_rᵀ H_r = I,  μ on the simplex
//! ```
//!
//! by cycling through three exact or monotone block updates:
//!
//! 1. `H_r` ← orthogonal polar factor of `E_r = K_r U` (maximizes
//!    `tr(H_rᵀ E_r)`),
//! 2. `μ_r` ← `√β_r / Σ √β_r` with `β_r` the residual of kernel `r`,
//! 3. one multiplicative step on `U` for `min tr(UᵀAU) + 2 tr(BᵀU)` with
//!    `A = Σ K_r/μ_r` and `B = −Σ K_r H_r/μ_r`.
//!
//! Each block step cannot increase the objective, so the recorded trace is
//! nonincreasing up to rounding.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::Mat;
use crate::error::{Error, Result};
use crate::float::sqrt;
use crate::graph::SparseKernel;
use crate::labeling::{kmeans, row_normalized, KMeansOptions};
use crate::linalg::{polar_factor, top_eigenvectors};
use crate::par;

/// Added to the denominator of the multiplicative update.
pub const UPDATE_EPS: f64 = 1e-12;
/// Entries of `U` are never driven below this value (exact zeros would be
/// absorbing under multiplicative updates).
pub const U_FLOOR: f64 = 1e-15;
/// Additive smoothing applied to the one-hot initialization.
pub const INIT_SMOOTHING: f64 = 0.2;
/// Residuals down to `−NEGATIVE_RESIDUAL_TOL · max(1, tr K_r)` are rounding
/// noise and clamped to zero; anything lower is an error.
pub const NEGATIVE_RESIDUAL_TOL: f64 = 1e-8;

/// Nonnegative `n x c` consensus representation `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusFactor(Mat);

impl ConsensusFactor {
    pub fn new(u: Mat) -> Result<Self> {
        if u.as_slice().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("consensus factor must be finite and nonnegative".into()));
        }
        Ok(Self(u))
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }
}

/// Column-orthonormal `n x c` factor `H_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoFactor(Mat);

impl OrthoFactor {
    /// Accepts `h` if `‖HᵀH − I‖_F ≤ 1e-8`.
    pub fn new(h: Mat) -> Result<Self> {
        let err = h.orthonormality_error();
        if err.is_nan() || err > 1e-8 {
            return Err(Error::InvalidArgument(alloc::format!("factor is not orthonormal (error {err:e})")));
        }
        Ok(Self(h))
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }
}

/// Kernel weights `μ` on the open simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelWeights(Vec<f64>);

impl KernelWeights {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        let sum: f64 = mu.iter().sum();
        if mu.is_empty() || mu.iter().any(|v| !(v.is_finite() && *v > 0.0)) || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument("kernel weights must be positive and sum to one".into()));
        }
        Ok(Self(mu))
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Stop once `|f_{t−1} − f_t| < rel_tol · |f_{t−1}|`.
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_iter: 100, rel_tol: 1e-6, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub u: ConsensusFactor,
    pub h: Vec<OrthoFactor>,
    pub mu: KernelWeights,
    /// Per-kernel residuals at the current `(U, H)`.
    pub beta: Vec<f64>,
    /// Objective after every completed iteration.
    pub objective_trace: Vec<f64>,
    /// Kernel weights after every completed iteration.
    pub mu_trace: Vec<Vec<f64>>,
    pub iter: usize,
    pub converged: bool,
}

/// Passed to the observer of [`run_with_observer`] after each iteration.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord<'a> {
    pub iter: usize,
    pub objective: f64,
    pub mu: &'a [f64],
}

fn check_kernels(kernels: &[SparseKernel]) -> Result<usize> {
    let n = kernels
        .first()
        .ok_or_else(|| Error::InvalidArgument("at least one kernel is required".into()))?
        .n();
    if kernels.iter().any(|k| k.n() != n) {
        return Err(Error::Shape("kernels differ in size".into()));
    }
    Ok(n)
}

fn check_factor(n: usize, m: &Mat, what: &str) -> Result<()> {
    if m.rows() != n {
        return Err(Error::Shape(alloc::format!("{what} has {} rows, kernels have {n}", m.rows())));
    }
    Ok(())
}

fn clamp_residual(kernel: usize, beta: f64, trace: f64) -> Result<f64> {
    if beta >= 0.0 {
        Ok(beta)
    } else if beta >= -NEGATIVE_RESIDUAL_TOL * trace.max(1.0) {
        Ok(0.0)
    } else {
        Err(Error::NegativeResidual { kernel, value: beta })
    }
}

/// `β_r = tr(K_r) − 2 tr(Uᵀ K_r H_r) + tr(Uᵀ K_r U)` for every kernel.
pub fn residuals(kernels: &[SparseKernel], u: &ConsensusFactor, h: &[OrthoFactor]) -> Result<Vec<f64>> {
    let n = check_kernels(kernels)?;
    if h.len() != kernels.len() {
        return Err(Error::Shape("one orthogonal factor per kernel is required".into()));
    }
    check_factor(n, u.as_mat(), "U")?;
    kernels
        .iter()
        .zip(h)
        .enumerate()
        .map(|(r, (k, hr))| {
            check_factor(n, hr.as_mat(), "H")?;
            let ku = k.spmm(u.as_mat())?;
            let tr = k.trace();
            clamp_residual(r, tr - 2.0 * ku.dot(hr.as_mat()) + ku.dot(u.as_mat()), tr)
        })
        .collect()
}

/// Weighted objective `Σ_r β_r / μ_r`.
pub fn objective(kernels: &[SparseKernel], u: &ConsensusFactor, h: &[OrthoFactor], mu: &KernelWeights) -> Result<f64> {
    if mu.as_slice().len() != kernels.len() {
        return Err(Error::Shape("one weight per kernel is required".into()));
    }
    if let Some(r) = mu.as_slice().iter().position(|&w| w == 0.0) {
        return Err(Error::ZeroWeight(r));
    }
    let beta = residuals(kernels, u, h)?;
    Ok(beta.iter().zip(mu.as_slice()).map(|(b, w)| b / w).sum())
}

/// Orthogonal factor maximizing `tr(Hᵀ K U)` over `HᵀH = I`.
pub fn update_h(kernel: &SparseKernel, u: &ConsensusFactor) -> Result<OrthoFactor> {
    let e = kernel.spmm(u.as_mat())?;
    Ok(OrthoFactor(polar_factor(&e, 0)?))
}

/// Closed-form minimizer of `Σ β_r / μ_r` on the simplex,
/// `μ_r = √β_r / Σ √β_r`. All-zero residuals give uniform weights; a zero
/// residual next to positive ones gets a tiny relative floor so every
/// weight stays positive.
pub fn update_mu(beta: &[f64]) -> Result<KernelWeights> {
    if beta.is_empty() {
        return Err(Error::InvalidArgument("no residuals".into()));
    }
    if let Some(r) = beta.iter().position(|b| !(b.is_finite() && *b >= 0.0)) {
        return Err(Error::NegativeResidual { kernel: r, value: beta[r] });
    }
    if beta.iter().all(|&b| b <= 1e-15) {
        return Ok(KernelWeights::uniform(beta.len()));
    }
    let roots: Vec<f64> = beta.iter().map(|&b| sqrt(b)).collect();
    let floor = 1e-12 * roots.iter().copied().fold(0.0, f64::max);
    let roots: Vec<f64> = roots.into_iter().map(|s| s.max(floor)).collect();
    let total: f64 = roots.iter().sum();
    Ok(KernelWeights(roots.into_iter().map(|s| s / total).collect()))
}

/// One multiplicative step
/// `U ← U ∘ (−B + √(B² + 4 (A⁺U)(A⁻U))) / (2 A⁺U + ε)`, floored at
/// [`U_FLOOR`].
fn multiplicative_step(u: &Mat, apu: &Mat, amu: &Mat, b: &Mat) -> Mat {
    let mut out = u.clone();
    for (((dst, &p), &q), &bij) in out
        .as_mut_slice()
        .iter_mut()
        .zip(apu.as_slice())
        .zip(amu.as_slice())
        .zip(b.as_slice())
    {
        let factor = (-bij + sqrt(bij * bij + 4.0 * p * q)) / (2.0 * p + UPDATE_EPS);
        *dst = (*dst * factor).max(U_FLOOR);
    }
    out
}

/// Accumulates `Σ_r w_r · parts[r]` in kernel order.
fn weighted_sum(parts: &[Mat], weights: &[f64], scale: f64) -> Mat {
    let mut acc = Mat::zeros(parts[0].rows(), parts[0].cols());
    for (p, &w) in parts.iter().zip(weights) {
        acc.axpy(scale / w, p);
    }
    acc
}

/// Multiplicative update of the consensus factor with `H` and `μ` fixed.
///
/// `A⁺` and `A⁻` collect the positive and negative entries of every kernel;
/// the kernels built from neighbor affinities are entrywise nonnegative, in
/// which case `A⁻ = 0`.
pub fn update_u(
    kernels: &[SparseKernel],
    h: &[OrthoFactor],
    mu: &KernelWeights,
    u: &ConsensusFactor,
) -> Result<ConsensusFactor> {
    let n = check_kernels(kernels)?;
    check_factor(n, u.as_mat(), "U")?;
    if h.len() != kernels.len() || mu.as_slice().len() != kernels.len() {
        return Err(Error::Shape("one factor and one weight per kernel are required".into()));
    }
    let split: Vec<(Mat, Mat)> = kernels.iter().map(|k| k.spmm_split(u.as_mat())).collect::<Result<_>>()?;
    let kh: Vec<Mat> = kernels.iter().zip(h).map(|(k, hr)| k.spmm(hr.as_mat())).collect::<Result<_>>()?;
    let (pos, neg): (Vec<Mat>, Vec<Mat>) = split.into_iter().unzip();
    let w = mu.as_slice();
    let apu = weighted_sum(&pos, w, 1.0);
    let amu = weighted_sum(&neg, w, 1.0);
    let b = weighted_sum(&kh, w, -1.0);
    Ok(ConsensusFactor(multiplicative_step(u.as_mat(), &apu, &amu, &b)))
}

/// `(1/m) Σ K_r` as one sparse matrix.
fn averaged_kernel(kernels: &[SparseKernel]) -> Result<SparseKernel> {
    let n = kernels[0].n();
    let inv_m = 1.0 / kernels.len() as f64;
    let mut row_ptr = vec![0usize];
    let (mut col_idx, mut values) = (Vec::new(), Vec::new());
    let mut buf: Vec<(usize, f64)> = Vec::new();
    for i in 0..n {
        buf.clear();
        for k in kernels {
            let (cols, vals) = k.row(i);
            buf.extend(cols.iter().copied().zip(vals.iter().copied()));
        }
        // Stable sort keeps kernel order within a column, so sums are
        // reproducible.
        buf.sort_by_key(|e| e.0);
        let mut p = 0;
        while p < buf.len() {
            let col = buf[p].0;
            let mut s = 0.0;
            while p < buf.len() && buf[p].0 == col {
                s += buf[p].1;
                p += 1;
            }
            if s != 0.0 {
                col_idx.push(col);
                values.push(s * inv_m);
            }
        }
        row_ptr.push(col_idx.len());
    }
    SparseKernel::from_parts(n, row_ptr, col_idx, values, vec![0.0; n])
}

fn random_init(n: usize, c: usize, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    Mat::from_fn(n, c, |_, _| 0.1 + rng.random::<f64>())
}

/// Uniform `μ`, and `U` from k-means on the leading `c` eigenvectors of the
/// averaged kernel, encoded one-hot with additive smoothing and rows scaled
/// to sum to one (every entry ≥ `0.2 / (1 + 0.2 c)`).
///
/// Falls back to `U` uniform in `[0.1, 1.1)` (with a warning) when the
/// eigensolve or the clustering fails.
pub fn init_state(kernels: &[SparseKernel], c: usize, seed: u64) -> Result<(ConsensusFactor, KernelWeights)> {
    let n = check_kernels(kernels)?;
    if c < 2 {
        return Err(Error::InvalidArgument(alloc::format!("cluster count {c} must be at least 2")));
    }
    if c >= n {
        return Err(Error::InvalidArgument(alloc::format!("cluster count {c} must be below n = {n}")));
    }
    let mu = KernelWeights::uniform(kernels.len());
    let avg = averaged_kernel(kernels)?;
    let eig = top_eigenvectors(n, c, |q| avg.spmm(q), seed, 300, 1e-10)?;
    let labels = match eig {
        Some(eig) => {
            let opts = KMeansOptions { restarts: 10, max_iter: 100, seed };
            match kmeans(&row_normalized(&eig.vectors), c, &opts) {
                Ok(res) => Some(res.labels),
                Err(e) => {
                    log::warn!("k-means on the spectral embedding failed ({e}); using random initialization");
                    None
                }
            }
        }
        None => {
            log::warn!("eigensolve on the averaged kernel failed; using random initialization");
            None
        }
    };
    let u = match labels {
        Some(labels) => {
            let scale = 1.0 / (1.0 + INIT_SMOOTHING * c as f64);
            let l = labels.as_slice();
            Mat::from_fn(n, c, |i, j| (if l[i] == j { 1.0 } else { 0.0 } + INIT_SMOOTHING) * scale)
        }
        None => random_init(n, c, seed),
    };
    Ok((ConsensusFactor(u), mu))
}

/// Iteration driver. Holds `K_r U` for the current `U` so each iteration
/// needs two sparse products per kernel.
pub struct Solver<'k> {
    kernels: &'k [SparseKernel],
    traces: Vec<f64>,
    opts: SolverOptions,
    ku: Vec<Mat>,
    state: SolverState,
}

impl<'k> Solver<'k> {
    pub fn new(kernels: &'k [SparseKernel], c: usize, opts: SolverOptions) -> Result<Self> {
        let (u, mu) = init_state(kernels, c, opts.seed)?;
        Self::from_initial(kernels, u, mu, opts)
    }

    /// Starts from a given `(U, μ)` instead of the default initialization.
    pub fn from_initial(
        kernels: &'k [SparseKernel],
        u: ConsensusFactor,
        mu: KernelWeights,
        opts: SolverOptions,
    ) -> Result<Self> {
        let n = check_kernels(kernels)?;
        check_factor(n, u.as_mat(), "U")?;
        let c = u.as_mat().cols();
        if c == 0 || c > n {
            return Err(Error::InvalidArgument(alloc::format!("{c} clusters for n = {n}")));
        }
        if mu.as_slice().len() != kernels.len() {
            return Err(Error::Shape("one weight per kernel is required".into()));
        }
        let traces = kernels.iter().map(SparseKernel::trace).collect();
        let ku = kernels.iter().map(|k| k.spmm(u.as_mat())).collect::<Result<_>>()?;
        let m = kernels.len();
        let state = SolverState {
            u,
            h: Vec::new(),
            mu,
            beta: vec![0.0; m],
            objective_trace: Vec::new(),
            mu_trace: Vec::new(),
            iter: 0,
            converged: false,
        };
        Ok(Self { kernels, traces, opts, ku, state })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn into_state(self) -> SolverState {
        self.state
    }

    /// One pass of the H, μ and U updates. Returns the new objective.
    pub fn step(&mut self) -> Result<f64> {
        let kernels = self.kernels;
        let m = kernels.len();
        let base_seed = self.opts.seed;
        let iter = self.state.iter as u64;
        let ku = &self.ku;

        let h: Vec<Mat> = par::map_range(m, |r| {
            let seed = base_seed ^ (iter.wrapping_mul(m as u64) + r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            polar_factor(&ku[r], seed)
        })
        .into_iter()
        .collect::<Result<_>>()?;

        let u = self.state.u.as_mat();
        let beta: Vec<f64> = (0..m)
            .map(|r| clamp_residual(r, self.traces[r] - 2.0 * ku[r].dot(&h[r]) + ku[r].dot(u), self.traces[r]))
            .collect::<Result<_>>()?;
        let mu = update_mu(&beta)?;
        let w = mu.as_slice();

        let kh: Vec<Mat> = par::map_range(m, |r| kernels[r].spmm(&h[r])).into_iter().collect::<Result<_>>()?;
        let (apu, amu) = if kernels.iter().all(SparseKernel::is_nonnegative) {
            (weighted_sum(ku, w, 1.0), Mat::zeros(u.rows(), u.cols()))
        } else {
            let split: Vec<(Mat, Mat)> = kernels.iter().map(|k| k.spmm_split(u)).collect::<Result<_>>()?;
            let (pos, neg): (Vec<Mat>, Vec<Mat>) = split.into_iter().unzip();
            (weighted_sum(&pos, w, 1.0), weighted_sum(&neg, w, 1.0))
        };
        let b = weighted_sum(&kh, w, -1.0);
        let u_new = multiplicative_step(u, &apu, &amu, &b);

        let ku_new: Vec<Mat> = par::map_range(m, |r| kernels[r].spmm(&u_new)).into_iter().collect::<Result<_>>()?;
        let beta_new: Vec<f64> = (0..m)
            .map(|r| {
                let value = self.traces[r] - 2.0 * kh[r].dot(&u_new) + ku_new[r].dot(&u_new);
                clamp_residual(r, value, self.traces[r])
            })
            .collect::<Result<_>>()?;
        let objective: f64 = beta_new.iter().zip(w).map(|(b, w)| b / w).sum();

        self.ku = ku_new;
        let st = &mut self.state;
        st.u = ConsensusFactor(u_new);
        st.h = h.into_iter().map(OrthoFactor).collect();
        st.beta = beta_new;
        st.mu_trace.push(mu.as_slice().to_vec());
        st.mu = mu;
        st.objective_trace.push(objective);
        st.iter += 1;
        Ok(objective)
    }

    fn converged(&self) -> bool {
        match self.state.objective_trace.as_slice() {
            [.., prev, cur] => (prev - cur).abs() < self.opts.rel_tol * prev.abs().max(f64::MIN_POSITIVE),
            _ => false,
        }
    }

    /// Iterates until the relative objective change drops below
    /// `rel_tol` or `max_iter` iterations have run.
    pub fn run(mut self, mut observer: impl FnMut(&IterationRecord<'_>)) -> Result<SolverState> {
        while self.state.iter < self.opts.max_iter {
            let objective = self.step()?;
            observer(&IterationRecord { iter: self.state.iter, objective, mu: self.state.mu.as_slice() });
            if self.converged() {
                self.state.converged = true;
                break;
            }
        }
        Ok(self.state)
    }
}

/// Full solve from the default initialization.
pub fn run(kernels: &[SparseKernel], c: usize, opts: &SolverOptions) -> Result<SolverState> {
    run_with_observer(kernels, c, opts, |_| {})
}

pub fn run_with_observer(
    kernels: &[SparseKernel],
    c: usize,
    opts: &SolverOptions,
    observer: impl FnMut(&IterationRecord<'_>),
) -> Result<SolverState> {
    Solver::new(kernels, c, *opts)?.run(observer)
}
