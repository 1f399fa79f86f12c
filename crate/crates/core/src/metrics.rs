//! Clustering accuracy (optimal one-to-one label matching) and normalized
//! mutual information.

use alloc::vec;
use alloc::vec::Vec;

use crate::dense::Mat;
use crate::error::{Error, Result};
use crate::float::{ln, sqrt};

/// `counts[p][t]` = number of samples with predicted label `p` and true
/// label `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<usize>>,
    n: usize,
}

impl ContingencyTable {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::Shape(alloc::format!(
                "{} predicted labels vs {} true labels",
                pred.len(),
                truth.len()
            )));
        }
        let cp = pred.iter().max().map_or(0, |m| m + 1);
        let ct = truth.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![vec![0usize; ct]; cp];
        for (&p, &t) in pred.iter().zip(truth) {
            counts[p][t] += 1;
        }
        Ok(Self { counts, n: pred.len() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pred_clusters(&self) -> usize {
        self.counts.len()
    }

    pub fn true_clusters(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    pub fn count(&self, p: usize, t: usize) -> usize {
        self.counts[p][t]
    }
}

/// Minimum-cost perfect matching on a square cost matrix (Kuhn-Munkres with
/// potentials, `O(c³)`). Returns `assignment[row] = column` and the cost.
pub fn hungarian(cost: &Mat) -> Result<(Vec<usize>, f64)> {
    let n = cost.rows();
    if cost.cols() != n {
        return Err(Error::NotSquare { rows: n, cols: cost.cols() });
    }
    if !cost.is_finite() {
        return Err(Error::InvalidArgument("cost matrix is not finite".into()));
    }
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    // 1-based arrays; column 0 is a virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[owner[j] - 1] = j - 1;
    }
    let total = assignment.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
    Ok((assignment, total))
}

/// Fraction of samples correctly labeled under the best one-to-one mapping
/// of predicted to true clusters. The contingency table is padded to square
/// when the cluster counts differ.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    if table.n == 0 {
        return Err(Error::InvalidArgument("accuracy of an empty labeling".into()));
    }
    let size = table.pred_clusters().max(table.true_clusters());
    let cost = Mat::from_fn(size, size, |p, t| {
        if p < table.pred_clusters() && t < table.true_clusters() {
            -(table.count(p, t) as f64)
        } else {
            0.0
        }
    });
    let (_, total) = hungarian(&cost)?;
    Ok(-total / table.n as f64)
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * ln(p)
        })
        .sum()
}

/// `I(pred; truth) / √(H(pred) H(truth))` with natural logarithms. Two
/// single-cluster labelings score 1; a single-cluster labeling against a
/// nontrivial one scores 0.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    if table.n == 0 {
        return Err(Error::InvalidArgument("nmi of an empty labeling".into()));
    }
    let n = table.n as f64;
    let row_sums: Vec<usize> = table.counts.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<usize> = (0..table.true_clusters())
        .map(|t| table.counts.iter().map(|r| r[t]).sum())
        .collect();
    let hp = entropy(row_sums.iter().copied(), n);
    let ht = entropy(col_sums.iter().copied(), n);
    if hp == 0.0 && ht == 0.0 {
        return Ok(1.0);
    }
    if hp == 0.0 || ht == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (p, row) in table.counts.iter().enumerate() {
        for (t, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * ln(c * n / (row_sums[p] as f64 * col_sums[t] as f64));
            }
        }
    }
    Ok((mi / sqrt(hp * ht)).clamp(0.0, 1.0))
}
