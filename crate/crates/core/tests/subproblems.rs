mod common;

use common::{from_na, polar};
use emkcf_core::metrics::{accuracy, hungarian, nmi};
use emkcf_core::solver::{update_h, update_mu, ConsensusFactor};
use emkcf_core::{Mat, SparseKernel};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_orthonormal(n: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, c, |_, _| rng.random::<f64>() - 0.5);
    g.qr().q()
}

fn tr_ht_e(h: &DMatrix<f64>, e: &DMatrix<f64>) -> f64 {
    h.dot(e)
}

#[test]
fn update_h_beats_random_orthonormal_candidates() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let (n, c) = (rng.random_range(3..20), rng.random_range(1..4));
        let e = DMatrix::from_fn(n, c, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let ours = emkcf_core::linalg::polar_factor(&from_na(&e), 0).unwrap();
        let ours = common::to_na(&ours);
        let best = tr_ht_e(&ours, &e);
        assert!((best - tr_ht_e(&polar(&e), &e)).abs() < 1e-10);
        for _ in 0..1000 {
            let cand = random_orthonormal(n, c, &mut rng);
            assert!(tr_ht_e(&cand, &e) <= best + 1e-9);
        }
    }
}

#[test]
fn update_h_never_decreases_the_trace() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let n = rng.random_range(4..30);
        let u = Mat::from_fn(n, 3, |_, _| rng.random::<f64>());
        let g = common::random_graph(n, 2, &mut rng);
        let k = SparseKernel::from_affinity(&g);
        let e = k.spmm(&u).unwrap();
        let h0 = random_orthonormal(n, 3, &mut rng);
        let h = update_h(&k, &ConsensusFactor::new(u).unwrap()).unwrap();
        assert!(h.as_mat().orthonormality_error() <= 1e-8);
        assert!(h.as_mat().dot(&e) >= tr_ht_e(&h0, &common::to_na(&e)) - 1e-12);
    }
}

#[test]
fn update_mu_beats_random_simplex_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let m = rng.random_range(2..13);
        let beta: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 10.0).collect();
        let mu = update_mu(&beta).unwrap();
        let f = |w: &[f64]| beta.iter().zip(w).map(|(b, w)| b / w).sum::<f64>();
        let ours = f(mu.as_slice());
        for _ in 0..1000 {
            let raw: Vec<f64> = (0..m).map(|_| -rng.random::<f64>().ln()).collect();
            let total: f64 = raw.iter().sum();
            let cand: Vec<f64> = raw.iter().map(|v| v / total).collect();
            assert!(ours <= f(&cand) * (1.0 + 1e-12));
        }
    }
}

fn brute_force_min(cost: &Mat) -> f64 {
    fn go(cost: &Mat, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == cost.rows() {
            *best = best.min(acc);
            return;
        }
        for j in 0..cost.cols() {
            if !used[j] {
                used[j] = true;
                go(cost, row + 1, used, acc + cost[(row, j)], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(cost, 0, &mut vec![false; cost.cols()], 0.0, &mut best);
    best
}

#[test]
fn hungarian_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for c in 1..=6 {
        for _ in 0..30 {
            let cost = Mat::from_fn(c, c, |_, _| (rng.random_range(0..20) as f64) - 5.0);
            let (assign, total) = hungarian(&cost).unwrap();
            let mut seen = vec![false; c];
            let mut sum = 0.0;
            for (i, &j) in assign.iter().enumerate() {
                assert!(!seen[j]);
                seen[j] = true;
                sum += cost[(i, j)];
            }
            assert_eq!(sum, total);
            assert_eq!(total, brute_force_min(&cost));
        }
    }
}

fn permute(labels: &[usize], perm: &[usize]) -> Vec<usize> {
    labels.iter().map(|&l| perm[l]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_ignore_relabeling(
        pred in proptest::collection::vec(0usize..5, 2..60),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<usize> = pred.iter().map(|_| rng.random_range(0..4)).collect();
        let mut perm: Vec<usize> = (0..5).collect();
        for t in (1..5).rev() {
            perm.swap(t, rng.random_range(0..=t));
        }
        let relabeled = permute(&pred, &perm);
        let (a, b) = (accuracy(&pred, &truth).unwrap(), accuracy(&relabeled, &truth).unwrap());
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
        let (x, y) = (nmi(&pred, &truth).unwrap(), nmi(&relabeled, &truth).unwrap());
        prop_assert!((x - y).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert!((accuracy(&relabeled, &pred).unwrap() - 1.0).abs() < 1e-12);
        if pred.iter().any(|&l| l != pred[0]) {
            prop_assert!((nmi(&relabeled, &pred).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
