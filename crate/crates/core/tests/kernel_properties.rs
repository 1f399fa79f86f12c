mod common;

use common::{bank_kernels, blobs, dense_kernel, random_graph, to_na};
use emkcf_core::graph::{build_affinity_graphs, AffinityGraph, SparseKernel, SparseRow};
use emkcf_core::kernels::{default_twelve_kernels, KernelBank};
use emkcf_core::Mat;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn extreme_eigenvalues(k: &SparseKernel) -> (f64, f64) {
    let eig = dense_kernel(k).symmetric_eigen();
    (eig.eigenvalues.min(), eig.eigenvalues.max())
}

// D − A is a graph Laplacian, so K ⪯ I holds for every affinity graph.
#[test]
fn kernel_spectrum_is_bounded_by_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..25 {
        let n = rng.random_range(2..=200);
        let k = rng.random_range(1..n.min(20));
        let (_, max) = extreme_eigenvalues(&SparseKernel::from_affinity(&random_graph(n, k, &mut rng)));
        assert!(max <= 1.0 + 1e-8, "eigenvalue {max}");
    }
    for seed in 0..3 {
        let (x, _) = blobs(120, 4, 3, 6.0, seed);
        for k in bank_kernels(&x, 10) {
            assert!(extreme_eigenvalues(&k).1 <= 1.0 + 1e-8);
        }
    }
}

// xᵀ(I + A)x ≥ Σ (1 − D_i) x_i², so degrees ≤ 1 make K positive semidefinite.
// Symmetric neighbor graphs (i picks j iff j picks i, equal weights) are the
// typical case.
#[test]
fn kernels_with_unit_degrees_are_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let n = 2 * rng.random_range(2..=100);
        let mut order: Vec<usize> = (0..n).collect();
        for t in (1..n).rev() {
            order.swap(t, rng.random_range(0..=t));
        }
        // Perfect matching: every node has exactly one neighbor, symmetric.
        let mut rows = vec![SparseRow { indices: vec![], values: vec![] }; n];
        for pair in order.chunks(2) {
            rows[pair[0]] = SparseRow { indices: vec![pair[1]], values: vec![1.0] };
            rows[pair[1]] = SparseRow { indices: vec![pair[0]], values: vec![1.0] };
        }
        let kernel = SparseKernel::from_affinity(&AffinityGraph::from_rows(n, 1, rows).unwrap());
        assert!(kernel.degree().iter().all(|&d| d <= 1.0));
        let (min, max) = extreme_eigenvalues(&kernel);
        assert!(min >= -1e-8 && max <= 1.0 + 1e-8);
    }
}

// A point chosen by several neighbors gets degree above one and the
// kernel turns indefinite: on the line {0, −1, 1.5} with k = 1 both outer
// points pick 0 and 0 picks −1, giving
// K = [[2/5, 1/√5, 1/√15], [1/√5, 1/2, 0], [1/√15, 0, 2/3]], det K = −1/30.
#[test]
fn hub_nodes_make_the_kernel_indefinite() {
    let x = emkcf_core::FeatureMatrix::new(3, 1, vec![0.0, -1.0, 1.5]).unwrap();
    let bank = KernelBank::new(&x, vec![emkcf_core::KernelSpec::Gaussian { bandwidth_scale: 1.0 }], 1.0).unwrap();
    let kernel = emkcf_core::graph::build_sparse_kernel(&bank.affinity(0), 1).unwrap();
    let d = dense_kernel(&kernel);
    let want = [
        [0.4, 1.0 / 5f64.sqrt(), 1.0 / 15f64.sqrt()],
        [1.0 / 5f64.sqrt(), 0.5, 0.0],
        [1.0 / 15f64.sqrt(), 0.0, 2.0 / 3.0],
    ];
    for i in 0..3 {
        for j in 0..3 {
            assert!((d[(i, j)] - want[i][j]).abs() < 1e-15);
        }
    }
    assert!((d.determinant() + 1.0 / 30.0).abs() < 1e-14);
    assert!(extreme_eigenvalues(&kernel).0 < 0.0);
}

#[test]
fn kernel_matrices_are_exactly_symmetric_with_closed_form_trace() {
    let (x, _) = blobs(150, 5, 4, 5.0, 3);
    for k in bank_kernels(&x, 12) {
        let d = k.to_dense();
        for i in 0..k.n() {
            for j in 0..k.n() {
                assert_eq!(d[(i, j)].to_bits(), d[(j, i)].to_bits());
            }
        }
        let trace: f64 = k.degree().iter().map(|deg| 1.0 / (1.0 + deg)).sum();
        assert!((k.trace() - trace).abs() < 1e-12);
        assert!(k.is_nonnegative());
    }
}

#[test]
fn raw_kernel_rows_are_bounded_symmetric_and_psd() {
    let (x, _) = blobs(40, 6, 3, 4.0, 9);
    let bank = KernelBank::with_estimated_distance(&x, default_twelve_kernels(), 1000, 1).unwrap();
    for r in 0..bank.m() {
        let rows: Vec<Vec<f64>> = (0..x.n()).map(|i| bank.kernel_row(r, i).unwrap()).collect();
        for (i, row) in rows.iter().enumerate() {
            assert!((row[i] - 1.0).abs() < 1e-12, "kernel {r} diagonal {}", row[i]);
            for (j, &v) in row.iter().enumerate() {
                assert!(v.abs() <= 1.0 + 1e-12);
                assert!((v - rows[j][i]).abs() <= 1e-12);
            }
        }
        let m = Mat::from_fn(x.n(), x.n(), |i, j| rows[i][j]);
        let min = to_na(&m).symmetric_eigen().eigenvalues.min();
        assert!(min >= -1e-8, "kernel {r} has eigenvalue {min}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn affinity_rows_are_stochastic(seed in 0u64..1000, n in 20usize..120, k in 1usize..15) {
        let (x, _) = blobs(n, 3, 2, 3.0, seed);
        let bank = KernelBank::with_estimated_distance(&x, default_twelve_kernels(), 500, seed).unwrap();
        for g in build_affinity_graphs(&bank, k).unwrap() {
            for i in 0..n {
                let (idx, vals) = g.row(i);
                prop_assert_eq!(idx.len(), k);
                prop_assert!(!idx.contains(&i));
                prop_assert!(vals.iter().all(|&v| v >= 0.0));
                prop_assert!((vals.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn spmm_matches_dense_product(seed in 0u64..1000, n in 2usize..40, c in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(1..n);
        let kernel = SparseKernel::from_affinity(&random_graph(n, k, &mut rng));
        let m = Mat::from_fn(n, c, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let got = to_na(&kernel.spmm(&m).unwrap());
        let want = dense_kernel(&kernel) * to_na(&m);
        prop_assert!(common::max_abs_diff(&got, &want) <= 1e-10);
    }
}
