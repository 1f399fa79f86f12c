//! Small dense eigen/SVD routines.
//!
//! Everything here works on either c x c blocks or n x c tall-skinny
//! matrices with c small, so cyclic Jacobi methods are accurate and cheap
//! enough. Rotation order is fixed, which keeps results reproducible.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::Mat;
use crate::error::{Error, Result};
use crate::float::sqrt;

const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix, eigenvalues in descending
/// order, eigenvectors stored as columns.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

/// Cyclic Jacobi eigen-decomposition. Only the upper triangle is trusted to
/// be consistent with the lower one; the input is symmetrized first.
pub fn sym_eigen(a: &Mat) -> Result<SymEigen> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::NotSquare { rows: n, cols: a.cols() });
    }
    let mut m = Mat::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let mut v = Mat::identity(n);
    let total: f64 = m.as_slice().iter().map(|x| x * x).sum();
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off == 0.0 || off <= 1e-32 * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + sqrt(theta * theta + 1.0));
                let c = 1.0 / sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = c * akp - s * akq;
                    m[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = c * apk - s * aqk;
                    m[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = Mat::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymEigen { values, vectors })
}

/// Thin SVD `E = P diag(σ) Rᵀ` of an n x c matrix (n ≥ c) by one-sided
/// Jacobi rotations. Singular values come back in descending order; columns
/// of `P` belonging to zero singular values are left as zero vectors.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub left: Mat,
    pub sigma: Vec<f64>,
    pub right: Mat,
}

pub fn thin_svd(e: &Mat) -> ThinSvd {
    let (n, c) = (e.rows(), e.cols());
    let mut w = e.clone();
    let mut v = Mat::identity(c);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..c {
            for q in p + 1..c {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..n {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    alpha += wp * wp;
                    beta += wq * wq;
                    gamma += wp * wq;
                }
                if gamma == 0.0 || gamma.abs() <= 1e-15 * sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + sqrt(1.0 + zeta * zeta));
                let cs = 1.0 / sqrt(1.0 + t * t);
                let sn = cs * t;
                for i in 0..n {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    w[(i, p)] = cs * wp - sn * wq;
                    w[(i, q)] = sn * wp + cs * wq;
                }
                for i in 0..c {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = cs * vp - sn * vq;
                    v[(i, q)] = sn * vp + cs * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..c)
        .map(|j| sqrt((0..n).map(|i| w[(i, j)] * w[(i, j)]).sum()))
        .collect();
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let left = Mat::from_fn(n, c, |i, j| {
        let s = norms[order[j]];
        if s > 0.0 {
            w[(i, order[j])] / s
        } else {
            0.0
        }
    });
    let right = Mat::from_fn(c, c, |i, j| v[(i, order[j])]);
    ThinSvd { left, sigma, right }
}

/// Below this ratio of extreme singular values the Gram-matrix route loses
/// too much accuracy and the one-sided Jacobi SVD is used instead.
pub const GRAM_ROUTE_MIN_RATIO: f64 = 1e-6;

/// Directions with `σ < RANK_TOL · σ_max` are treated as rank deficient.
pub const RANK_TOL: f64 = 1e-12;

/// Orthogonal polar factor of a tall matrix: the `H` with `HᵀH = I`
/// maximizing `tr(Hᵀ E)`, i.e. `P Rᵀ` for the thin SVD `E = P Σ Rᵀ`.
///
/// Rank-deficient directions are filled with seeded random vectors
/// orthogonalized against the rest, so the result is always orthonormal.
pub fn polar_factor(e: &Mat, seed: u64) -> Result<Mat> {
    let (n, c) = (e.rows(), e.cols());
    if c > n {
        return Err(Error::Shape(alloc::format!("polar factor of a {n}x{c} matrix")));
    }
    if !e.is_finite() {
        return Err(Error::InvalidArgument("polar factor of a non-finite matrix".into()));
    }
    let gram = e.t_mul(e)?;
    let eig = sym_eigen(&gram)?;
    let lmax = eig.values.first().copied().unwrap_or(0.0);
    let lmin = eig.values.last().copied().unwrap_or(0.0);
    if lmax > 0.0 && lmin > 0.0 && sqrt(lmin) > GRAM_ROUTE_MIN_RATIO * sqrt(lmax) {
        let h = e.mul(&inverse_sqrt(&eig))?;
        // One polishing pass restores orthonormality to working precision.
        let g2 = sym_eigen(&h.t_mul(&h)?)?;
        return h.mul(&inverse_sqrt(&g2));
    }
    let svd = thin_svd(e);
    let smax = svd.sigma.first().copied().unwrap_or(0.0);
    let mut left = svd.left;
    let deficient: Vec<usize> = (0..c)
        .filter(|&j| smax == 0.0 || svd.sigma[j] < RANK_TOL * smax)
        .collect();
    if !deficient.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut good: Vec<usize> = (0..c).filter(|j| !deficient.contains(j)).collect();
        for &j in &deficient {
            let col = random_orthogonal_column(&left, &good, &mut rng);
            left.set_column(j, &col);
            good.push(j);
        }
    }
    left.mul(&svd.right.transpose())
}

fn inverse_sqrt(eig: &SymEigen) -> Mat {
    let c = eig.values.len();
    let v = &eig.vectors;
    Mat::from_fn(c, c, |i, j| {
        (0..c)
            .map(|k| v[(i, k)] * v[(j, k)] / sqrt(eig.values[k]))
            .sum()
    })
}

fn random_orthogonal_column(basis: &Mat, against: &[usize], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = basis.rows();
    loop {
        let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        for _ in 0..2 {
            for &j in against {
                let proj: f64 = (0..n).map(|i| basis[(i, j)] * x[i]).sum();
                for (i, xi) in x.iter_mut().enumerate() {
                    *xi -= proj * basis[(i, j)];
                }
            }
        }
        let norm = sqrt(x.iter().map(|v| v * v).sum());
        if norm > 1e-8 {
            x.iter_mut().for_each(|v| *v /= norm);
            return x;
        }
    }
}

/// Modified Gram-Schmidt (two passes) on the columns of `m`. Columns that
/// collapse numerically are replaced by random orthogonal directions.
pub fn orthonormalize_columns(m: &mut Mat, rng: &mut ChaCha8Rng) {
    let (n, c) = (m.rows(), m.cols());
    for j in 0..c {
        let before = sqrt((0..n).map(|i| m[(i, j)] * m[(i, j)]).sum());
        for _ in 0..2 {
            for p in 0..j {
                let proj: f64 = (0..n).map(|i| m[(i, p)] * m[(i, j)]).sum();
                for i in 0..n {
                    let mp = m[(i, p)];
                    m[(i, j)] -= proj * mp;
                }
            }
        }
        let norm = sqrt((0..n).map(|i| m[(i, j)] * m[(i, j)]).sum());
        if norm <= 1e-12 * before.max(f64::MIN_POSITIVE) || norm == 0.0 {
            let prior: Vec<usize> = (0..j).collect();
            let col = random_orthogonal_column(m, &prior, rng);
            m.set_column(j, &col);
        } else {
            for i in 0..n {
                m[(i, j)] /= norm;
            }
        }
    }
}

/// Leading `c` eigenpairs of a symmetric operator by block subspace
/// iteration with a Rayleigh-Ritz rotation. Returns `None` if the iteration
/// produces non-finite values.
pub fn top_eigenvectors<F>(
    n: usize,
    c: usize,
    mut apply: F,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<Option<SymEigen>>
where
    F: FnMut(&Mat) -> Result<Mat>,
{
    if c == 0 || c > n {
        return Err(Error::Shape(alloc::format!("{c} eigenvectors of a size-{n} operator")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = Mat::from_fn(n, c, |_, _| rng.random::<f64>() - 0.5);
    orthonormalize_columns(&mut q, &mut rng);
    let mut prev = vec![f64::INFINITY; c];
    let mut ritz = None;
    for _ in 0..max_iter.max(1) {
        let z = apply(&q)?;
        if !z.is_finite() {
            return Ok(None);
        }
        let t = q.t_mul(&z)?;
        let eig = sym_eigen(&t)?;
        let done = eig
            .values
            .iter()
            .zip(&prev)
            .all(|(a, b)| (a - b).abs() <= tol * a.abs().max(1.0));
        prev.clone_from(&eig.values);
        let vectors = q.mul(&eig.vectors)?;
        ritz = Some(SymEigen { values: eig.values, vectors });
        if done {
            break;
        }
        q = z;
        orthonormalize_columns(&mut q, &mut rng);
    }
    Ok(ritz.filter(|r| r.vectors.is_finite()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(e: &SymEigen) -> Mat {
        let n = e.values.len();
        Mat::from_fn(n, n, |i, j| {
            (0..n).map(|k| e.vectors[(i, k)] * e.values[k] * e.vectors[(j, k)]).sum()
        })
    }

    #[test]
    fn jacobi_eigen_reconstructs() {
        let a = Mat::from_vec(3, 3, vec![4.0, 1.0, 2.0, 1.0, 3.0, 0.5, 2.0, 0.5, 1.0]).unwrap();
        let e = sym_eigen(&a).unwrap();
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        let r = reconstruct(&e);
        for (x, y) in r.as_slice().iter().zip(a.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(e.vectors.orthonormality_error() < 1e-12);
    }

    #[test]
    fn two_by_two_eigenvalues() {
        let a = Mat::from_vec(2, 2, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let e = sym_eigen(&a).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-15);
        assert!(e.values[1].abs() < 1e-15);
    }

    #[test]
    fn thin_svd_reconstructs() {
        let e = Mat::from_fn(7, 3, |i, j| ((i * 3 + j * 5) % 7) as f64 - 2.5);
        let s = thin_svd(&e);
        assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
        let us = Mat::from_fn(7, 3, |i, j| s.left[(i, j)] * s.sigma[j]);
        let back = us.mul(&s.right.transpose()).unwrap();
        for (x, y) in back.as_slice().iter().zip(e.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn polar_of_orthonormal_is_identity_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut q = Mat::from_fn(6, 2, |_, _| rng.random::<f64>());
        orthonormalize_columns(&mut q, &mut rng);
        let h = polar_factor(&q, 0).unwrap();
        for (x, y) in h.as_slice().iter().zip(q.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn polar_handles_rank_deficiency() {
        // Second column is a multiple of the first.
        let e = Mat::from_fn(5, 2, |i, j| (i as f64 + 1.0) * if j == 0 { 1.0 } else { 2.0 });
        let h = polar_factor(&e, 7).unwrap();
        assert!(h.orthonormality_error() < 1e-10);
        let zero = Mat::zeros(4, 3);
        let h0 = polar_factor(&zero, 1).unwrap();
        assert!(h0.orthonormality_error() < 1e-10);
        assert_eq!(h0, polar_factor(&zero, 1).unwrap());
    }

    #[test]
    fn subspace_iteration_finds_dominant_pair() {
        let diag = [5.0, 4.0, 1.0, 0.5, 0.1];
        let out = top_eigenvectors(
            5,
            2,
            |q| Ok(Mat::from_fn(5, q.cols(), |i, j| diag[i] * q[(i, j)])),
            1,
            500,
            1e-14,
        )
        .unwrap()
        .unwrap();
        assert!((out.values[0] - 5.0).abs() < 1e-10);
        assert!((out.values[1] - 4.0).abs() < 1e-10);
        assert!(out.vectors[(0, 0)].abs() > 1.0 - 1e-8);
    }
}
