//! Gaussian blob generator for self-contained experiments.

use emkcf_core::{ClusterLabels, FeatureMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Blob centers with pairwise distance at least `sep · √d`.
///
/// With `c ≤ d` the centers sit on the coordinate axes at
/// `sep · √(d/2) · e_j` (all pairwise distances exactly `sep · √d`);
/// otherwise on an integer lattice scaled by `sep · √d`.
pub fn blob_centers(c: usize, d: usize, sep: f64) -> Vec<Vec<f64>> {
    if c <= d {
        let r = sep * (d as f64 / 2.0).sqrt();
        return (0..c)
            .map(|j| (0..d).map(|t| if t == j { r } else { 0.0 }).collect())
            .collect();
    }
    let mut q = 2usize;
    while q.checked_pow(d as u32).is_some_and(|v| v < c) {
        q += 1;
    }
    let step = sep * (d as f64).sqrt();
    (0..c)
        .map(|mut j| {
            (0..d)
                .map(|_| {
                    let digit = j % q;
                    j /= q;
                    digit as f64 * step
                })
                .collect()
        })
        .collect()
}

/// `n` points in `c` balanced unit-variance isotropic blobs; point `i`
/// belongs to blob `i mod c`. Bit-identical for a given seed.
pub fn make_synthetic(n: usize, c: usize, d: usize, sep: f64, seed: u64) -> Result<(FeatureMatrix, ClusterLabels)> {
    if c == 0 || n < 2 * c {
        return Err(Error::Config(format!("need n ≥ 2c, got n = {n}, c = {c}")));
    }
    if d == 0 || !(sep.is_finite() && sep >= 0.0) {
        return Err(Error::Config(format!("invalid dimension {d} or separation {sep}")));
    }
    let centers = blob_centers(c, d, sep);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n * d);
    for i in 0..n {
        for &x in &centers[i % c] {
            let z: f64 = StandardNormal.sample(&mut rng);
            values.push(x + z);
        }
    }
    let labels = ClusterLabels::new((0..n).map(|i| i % c).collect(), c)?;
    Ok((FeatureMatrix::new(n, d, values)?, labels))
}
