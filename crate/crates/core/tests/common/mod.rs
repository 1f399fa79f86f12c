//! Shared fixtures and a dense reference implementation used as an oracle.
#![allow(dead_code)]

use emkcf_core::graph::{build_sparse_kernels, AffinityGraph, SparseRow};
use emkcf_core::kernels::{default_twelve_kernels, KernelBank};
use emkcf_core::{FeatureMatrix, Mat, SparseKernel};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Unit-variance gaussian blobs with centers drawn from `[sep, 2 sep)^d`
/// (kept off the origin so cosine rows have positive entries).
pub fn blobs(n: usize, d: usize, c: usize, sep: f64, seed: u64) -> (FeatureMatrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..c).map(|_| (0..d).map(|_| sep * (1.0 + rng.random::<f64>())).collect()).collect();
    let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    let mut values = Vec::with_capacity(n * d);
    for &l in &labels {
        for x in &centers[l] {
            let z: f64 = StandardNormal.sample(&mut rng);
            values.push(x + z);
        }
    }
    (FeatureMatrix::new(n, d, values).unwrap(), labels)
}

pub fn bank_kernels(features: &FeatureMatrix, k: usize) -> Vec<SparseKernel> {
    let bank = KernelBank::with_estimated_distance(features, default_twelve_kernels(), 1000, 7).unwrap();
    build_sparse_kernels(&bank, k).unwrap()
}

/// Affinity graph with random positive weights on random neighbor sets.
pub fn random_graph(n: usize, k: usize, rng: &mut ChaCha8Rng) -> AffinityGraph {
    let rows = (0..n)
        .map(|i| {
            let mut idx: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            for t in 0..k {
                let s = rng.random_range(t..idx.len());
                idx.swap(t, s);
            }
            let mut idx = idx[..k].to_vec();
            idx.sort_unstable();
            let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
            let total: f64 = w.iter().sum();
            SparseRow { indices: idx, values: w.into_iter().map(|v| v / total).collect() }
        })
        .collect();
    AffinityGraph::from_rows(n, k, rows).unwrap()
}

pub fn to_na(m: &Mat) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> Mat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn dense_kernel(k: &SparseKernel) -> DMatrix<f64> {
    to_na(&k.to_dense())
}

/// Polar factor through a full SVD.
pub fn polar(e: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = e.clone().svd(true, true);
    svd.u.unwrap() * svd.v_t.unwrap()
}

pub struct DenseStep {
    pub h: Vec<DMatrix<f64>>,
    pub mu: Vec<f64>,
    pub u: DMatrix<f64>,
    pub objective: f64,
}

/// One iteration of the block updates written directly with dense matrices:
/// H from the polar factor, closed-form weights, then the multiplicative U
/// step with the entrywise positive/negative split of the weighted Gram
/// matrix.
pub fn dense_step(kernels: &[DMatrix<f64>], u: &DMatrix<f64>) -> DenseStep {
    let h: Vec<DMatrix<f64>> = kernels.iter().map(|k| polar(&(k * u))).collect();
    let beta: Vec<f64> = kernels
        .iter()
        .zip(&h)
        .map(|(k, h)| (k.trace() - 2.0 * (u.transpose() * k * h).trace() + (u.transpose() * k * u).trace()).max(0.0))
        .collect();
    let mu: Vec<f64> = if beta.iter().all(|&b| b <= 1e-15) {
        vec![1.0 / beta.len() as f64; beta.len()]
    } else {
        let s: f64 = beta.iter().map(|b| b.sqrt()).sum();
        beta.iter().map(|b| b.sqrt() / s).collect()
    };
    let n = u.nrows();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, u.ncols());
    for ((k, h), w) in kernels.iter().zip(&h).zip(&mu) {
        a += k / *w;
        b -= (k * h) / *w;
    }
    let ap = a.map(|v| v.max(0.0));
    let am = a.map(|v| (-v).max(0.0));
    let (apu, amu) = (&ap * u, &am * u);
    let mut next = u.clone();
    for i in 0..n {
        for j in 0..u.ncols() {
            let (p, q, bij) = (apu[(i, j)], amu[(i, j)], b[(i, j)]);
            let f = (-bij + (bij * bij + 4.0 * p * q).sqrt()) / (2.0 * p + 1e-12);
            next[(i, j)] = (u[(i, j)] * f).max(1e-15);
        }
    }
    let objective = dense_objective(kernels, &next, &h, &mu);
    DenseStep { h, mu, u: next, objective }
}

pub fn dense_objective(kernels: &[DMatrix<f64>], u: &DMatrix<f64>, h: &[DMatrix<f64>], mu: &[f64]) -> f64 {
    kernels
        .iter()
        .zip(h)
        .zip(mu)
        .map(|((k, h), w)| {
            (k.trace() - 2.0 * (u.transpose() * k * h).trace() + (u.transpose() * k * u).trace()) / w
        })
        .sum()
}

/// Runs dense iterations from `u` until the relative objective change drops
/// below `tol`.
pub fn dense_solve(kernels: &[DMatrix<f64>], mut u: DMatrix<f64>, max_iter: usize, tol: f64) -> f64 {
    let mut prev = f64::INFINITY;
    for _ in 0..max_iter {
        let step = dense_step(kernels, &u);
        u = step.u;
        if (prev - step.objective).abs() < tol * prev.abs() {
            return step.objective;
        }
        prev = step.objective;
    }
    prev
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
