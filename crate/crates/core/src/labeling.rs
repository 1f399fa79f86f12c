//! Discrete labels from the consensus factor, and the k-means used for it.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::Mat;
use crate::error::{Error, Result};
use crate::float::sqrt;
use crate::par;

/// Cluster assignment with ids in `0..c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLabels {
    labels: Vec<usize>,
    c: usize,
}

impl ClusterLabels {
    pub fn new(labels: Vec<usize>, c: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::InvalidArgument(alloc::format!("label {bad} out of range for {c} clusters")));
        }
        Ok(Self { labels, c })
    }

    /// Labels with `c` inferred as `max + 1`.
    pub fn from_ids(labels: Vec<usize>) -> Self {
        let c = labels.iter().max().map_or(0, |m| m + 1);
        Self { labels, c }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.labels
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self { restarts: 10, max_iter: 300, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub labels: ClusterLabels,
    pub centroids: Mat,
    pub inertia: f64,
    /// Inertia after every assignment step of the winning restart.
    pub inertia_trace: Vec<f64>,
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn distinct_rows(points: &Mat) -> usize {
    let mut rows: Vec<Vec<u64>> = (0..points.rows())
        .map(|i| points.row(i).iter().map(|v| (v + 0.0).to_bits()).collect())
        .collect();
    rows.sort_unstable();
    rows.dedup();
    rows.len()
}

/// Best-of-restarts Lloyd's algorithm with k-means++ seeding.
///
/// Restart `r` draws from stream `r` of a ChaCha generator keyed by
/// `opts.seed`, so restarts are independent of scheduling. The lowest
/// inertia wins, ties going to the lower restart index.
pub fn kmeans(points: &Mat, c: usize, opts: &KMeansOptions) -> Result<KMeansResult> {
    let n = points.rows();
    if c == 0 || c > n {
        return Err(Error::InvalidArgument(alloc::format!("{c} clusters for {n} points")));
    }
    if !points.is_finite() {
        return Err(Error::InvalidArgument("k-means input is not finite".into()));
    }
    let distinct = distinct_rows(points);
    if c > distinct {
        return Err(Error::TooFewDistinct { requested: c, distinct });
    }
    let runs = par::map_range(opts.restarts.max(1), |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(r as u64);
        let init = plus_plus(points, c, &mut rng);
        lloyd(points, init, opts.max_iter)
    });
    let best = runs
        .into_iter()
        .reduce(|best, run| if run.inertia < best.inertia { run } else { best })
        .expect("at least one restart");
    Ok(best)
}

/// k-means++ seeding: first centroid uniform, the rest by `D²` sampling.
pub fn plus_plus(points: &Mat, c: usize, rng: &mut ChaCha8Rng) -> Mat {
    let (n, p) = (points.rows(), points.cols());
    let mut centroids = Mat::zeros(c, p);
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), centroids.row(0))).collect();
    for t in 1..c {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    chosen = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            chosen.expect("positive total weight")
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(t).copy_from_slice(points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), centroids.row(t)));
        }
    }
    centroids
}

/// Lloyd iterations from the given centroids until assignments stop
/// changing or `max_iter` is reached. An empty cluster is re-seeded with the
/// point farthest from its current centroid.
pub fn lloyd(points: &Mat, mut centroids: Mat, max_iter: usize) -> KMeansResult {
    let (n, p, c) = (points.rows(), points.cols(), centroids.rows());
    let mut labels = vec![usize::MAX; n];
    let mut dist = vec![0.0; n];
    let mut trace = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        for i in 0..n {
            let x = points.row(i);
            let (mut best, mut best_d) = (0, f64::INFINITY);
            for k in 0..c {
                let d = sq_dist(x, centroids.row(k));
                if d < best_d {
                    best = k;
                    best_d = d;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
            dist[i] = best_d;
        }
        trace.push(dist.iter().sum());
        if !changed {
            break;
        }
        let mut sums = Mat::zeros(c, p);
        let mut counts = vec![0usize; c];
        for i in 0..n {
            counts[labels[i]] += 1;
            for (s, x) in sums.row_mut(labels[i]).iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        for (k, &count) in counts.iter().enumerate() {
            if count > 0 {
                let inv = 1.0 / count as f64;
                for (dst, s) in centroids.row_mut(k).iter_mut().zip(sums.row(k)) {
                    *dst = s * inv;
                }
            }
        }
        for k in 0..c {
            if counts[k] == 0 {
                let far = (0..n)
                    .filter(|&i| counts[labels[i]] > 1)
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)));
                if let Some(i) = far {
                    counts[labels[i]] -= 1;
                    counts[k] = 1;
                    labels[i] = k;
                    dist[i] = 0.0;
                    centroids.row_mut(k).copy_from_slice(points.row(i));
                }
            }
        }
    }
    // Final assignment against the final centroids.
    let mut inertia = 0.0;
    for (i, label) in labels.iter_mut().enumerate() {
        let x = points.row(i);
        let (mut best, mut best_d) = (0, f64::INFINITY);
        for k in 0..c {
            let d = sq_dist(x, centroids.row(k));
            if d < best_d {
                best = k;
                best_d = d;
            }
        }
        *label = best;
        inertia += best_d;
    }
    if trace.last().is_none_or(|&t| inertia < t) {
        trace.push(inertia);
    }
    KMeansResult {
        labels: ClusterLabels { labels, c },
        centroids,
        inertia,
        inertia_trace: trace,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum LabelMode {
    Argmax,
    #[default]
    Kmeans,
}

/// Rows scaled to unit L2 norm; zero rows stay zero.
pub fn row_normalized(u: &Mat) -> Mat {
    let mut out = u.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let norm = sqrt(row.iter().map(|v| v * v).sum());
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    out
}

/// Cluster labels from a nonnegative `n x c` factor.
///
/// `Argmax` picks the largest column per row (ties to the smaller column,
/// all-zero rows to label 0). `Kmeans` runs 10-restart k-means on the
/// row-normalized factor.
pub fn labels_from_u(u: &Mat, mode: LabelMode, seed: u64) -> Result<ClusterLabels> {
    let c = u.cols();
    match mode {
        LabelMode::Argmax => {
            let mut labels = Vec::with_capacity(u.rows());
            for i in 0..u.rows() {
                let row = u.row(i);
                if row.iter().all(|&v| v == 0.0) {
                    log::warn!("row {i} of the consensus factor is zero; assigning label 0");
                }
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                labels.push(best);
            }
            ClusterLabels::new(labels, c)
        }
        LabelMode::Kmeans => {
            let opts = KMeansOptions { restarts: 10, max_iter: 300, seed };
            Ok(kmeans(&row_normalized(u), c, &opts)?.labels)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> Mat {
        Mat::from_fn(v.len(), 2, |i, j| if j == 0 { v[i].0 } else { v[i].1 })
    }

    #[test]
    fn separated_pairs() {
        let p = pts(&[(0.0, 0.0), (0.0, 0.1), (10.0, 10.0), (10.0, 10.1)]);
        let r = kmeans(&p, 2, &KMeansOptions::default()).unwrap();
        let l = r.labels.as_slice();
        assert_eq!(l[0], l[1]);
        assert_eq!(l[2], l[3]);
        assert_ne!(l[0], l[2]);
    }

    #[test]
    fn one_cluster_per_point() {
        let p = pts(&[(0.0, 0.0), (1.0, 0.0), (5.0, 5.0)]);
        let r = kmeans(&p, 3, &KMeansOptions::default()).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut l = r.labels.into_vec();
        l.sort_unstable();
        assert_eq!(l, vec![0, 1, 2]);
    }

    #[test]
    fn too_few_distinct_points() {
        let p = pts(&[(1.0, 1.0), (1.0, 1.0), (2.0, 2.0)]);
        assert_eq!(
            kmeans(&p, 3, &KMeansOptions::default()).unwrap_err(),
            Error::TooFewDistinct { requested: 3, distinct: 2 }
        );
    }

    #[test]
    fn argmax_rules() {
        let u = Mat::from_vec(3, 2, vec![0.1, 0.9, 0.5, 0.5, 0.0, 0.0]).unwrap();
        assert_eq!(labels_from_u(&u, LabelMode::Argmax, 0).unwrap().as_slice(), &[1, 0, 0]);
    }

    #[test]
    fn one_hot_under_both_modes() {
        let ids = [0usize, 2, 1, 1, 0, 2];
        let u = Mat::from_fn(6, 3, |i, j| if ids[i] == j { 1.0 } else { 0.0 });
        assert_eq!(labels_from_u(&u, LabelMode::Argmax, 0).unwrap().as_slice(), &ids);
        let km = labels_from_u(&u, LabelMode::Kmeans, 3).unwrap();
        // Same partition; k-means ids are arbitrary.
        for a in 0..6 {
            for b in 0..6 {
                assert_eq!(ids[a] == ids[b], km.as_slice()[a] == km.as_slice()[b]);
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let p = Mat::from_fn(50, 3, |i, j| ((i * 31 + j * 17) % 23) as f64);
        let a = kmeans(&p, 4, &KMeansOptions { seed: 9, ..Default::default() }).unwrap();
        let b = kmeans(&p, 4, &KMeansOptions { seed: 9, ..Default::default() }).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.inertia.to_bits(), b.inertia.to_bits());
    }

    #[test]
    fn label_range_checked() {
        assert!(ClusterLabels::new(vec![0, 3], 3).is_err());
        assert_eq!(ClusterLabels::from_ids(vec![0, 4]).c(), 5);
    }
}
