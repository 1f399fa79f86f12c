//! Base kernel functions evaluated one row at a time.
//!
//! Every kernel is normalized to unit diagonal so similarities are
//! comparable across kernels. Gaussian bandwidths are expressed as a scale of
//! the mean pairwise distance of the data (`base_distance`).

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::float::{exp, ln, powi, sqrt};
use crate::graph::{lnwkr_row_log_with, lnwkr_row_with, AffinitySource, MultiAffinitySource, SparseRow, TopK};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(tag = "kind", content = "params", rename_all = "lowercase")
)]
pub enum KernelSpec {
    /// `exp(−‖x_i − x_j‖² / (2 (bandwidth_scale · base_distance)²))`
    Gaussian { bandwidth_scale: f64 },
    /// `(offset + x_i·x_j)^degree`, cosine-normalized.
    Polynomial { offset: f64, degree: u32 },
    /// `x_i·x_j`, cosine-normalized (identical to [`KernelSpec::Cosine`]
    /// once the unit diagonal is imposed).
    Linear,
    /// `x_i·x_j / (‖x_i‖ ‖x_j‖)`
    Cosine,
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { bandwidth_scale } if !(bandwidth_scale.is_finite() && bandwidth_scale > 0.0) => Err(
                Error::InvalidArgument(alloc::format!("gaussian bandwidth scale {bandwidth_scale} must be positive")),
            ),
            KernelSpec::Polynomial { offset, .. } if !(offset.is_finite() && offset >= 0.0) => Err(
                Error::InvalidArgument(alloc::format!("polynomial offset {offset} must be nonnegative")),
            ),
            KernelSpec::Polynomial { degree: 0, .. } => {
                Err(Error::InvalidArgument("polynomial degree must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    fn needs_nonzero_norm(&self) -> bool {
        match *self {
            KernelSpec::Gaussian { .. } => false,
            KernelSpec::Polynomial { offset, .. } => offset == 0.0,
            KernelSpec::Linear | KernelSpec::Cosine => true,
        }
    }
}

/// The twelve-kernel library: seven gaussians with bandwidth scales
/// `{0.01, 0.05, 0.1, 1, 10, 50, 100}`, four polynomials with
/// `(offset, degree) ∈ {0, 1} × {2, 4}` and one cosine kernel.
pub fn default_twelve_kernels() -> Vec<KernelSpec> {
    let mut specs: Vec<KernelSpec> = [0.01, 0.05, 0.1, 1.0, 10.0, 50.0, 100.0]
        .iter()
        .map(|&s| KernelSpec::Gaussian { bandwidth_scale: s })
        .collect();
    for offset in [0.0, 1.0] {
        for degree in [2, 4] {
            specs.push(KernelSpec::Polynomial { offset, degree });
        }
    }
    specs.push(KernelSpec::Cosine);
    specs
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean pairwise Euclidean distance over `min(n, sample_cap)` points drawn
/// uniformly without replacement. Deterministic for a given seed.
pub fn estimate_base_distance(features: &FeatureMatrix, sample_cap: usize, seed: u64) -> Result<f64> {
    if sample_cap < 2 {
        return Err(Error::InvalidArgument("sample cap must be at least 2".into()));
    }
    let n = features.n();
    let mut idx: Vec<usize> = (0..n).collect();
    let take = n.min(sample_cap);
    if take < n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in 0..take {
            let j = rng.random_range(t..n);
            idx.swap(t, j);
        }
        idx.truncate(take);
        idx.sort_unstable();
    }
    let mut total = 0.0;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            total += sqrt(sq_dist(features.row(i), features.row(j)));
        }
    }
    let pairs = (take * (take - 1) / 2) as f64;
    let mean = total / pairs;
    if mean > 0.0 && mean.is_finite() {
        Ok(mean)
    } else {
        Err(Error::ZeroBaseDistance)
    }
}

/// A set of kernel specs bound to a feature matrix.
#[derive(Debug, Clone)]
pub struct KernelBank<'a> {
    features: &'a FeatureMatrix,
    specs: Vec<KernelSpec>,
    base_distance: f64,
    sq_norms: Vec<f64>,
    norms: Vec<f64>,
    poly_scale: f64,
}

impl<'a> KernelBank<'a> {
    pub fn new(features: &'a FeatureMatrix, specs: Vec<KernelSpec>, base_distance: f64) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::InvalidArgument("kernel bank needs at least one kernel".into()));
        }
        if !(base_distance.is_finite() && base_distance > 0.0) {
            return Err(Error::ZeroBaseDistance);
        }
        specs.iter().try_for_each(KernelSpec::validate)?;
        let sq_norms: Vec<f64> = (0..features.n()).map(|i| dot(features.row(i), features.row(i))).collect();
        if specs.iter().any(KernelSpec::needs_nonzero_norm) {
            if let Some(i) = sq_norms.iter().position(|&s| s == 0.0) {
                return Err(Error::ZeroNorm(i));
            }
        }
        let norms = sq_norms.iter().map(|&s| sqrt(s)).collect();
        let mean_sq = sq_norms.iter().sum::<f64>() / features.n() as f64;
        let poly_scale = if mean_sq > 0.0 { mean_sq } else { 1.0 };
        Ok(Self { features, specs, base_distance, sq_norms, norms, poly_scale })
    }

    /// Bank with the base distance estimated from the data.
    pub fn with_estimated_distance(
        features: &'a FeatureMatrix,
        specs: Vec<KernelSpec>,
        sample_cap: usize,
        seed: u64,
    ) -> Result<Self> {
        let base = estimate_base_distance(features, sample_cap, seed)?;
        Self::new(features, specs, base)
    }

    pub fn specs(&self) -> &[KernelSpec] {
        &self.specs
    }

    pub fn base_distance(&self) -> f64 {
        self.base_distance
    }

    pub fn n(&self) -> usize {
        self.features.n()
    }

    pub fn m(&self) -> usize {
        self.specs.len()
    }

    fn gaussian_coeff(&self, scale: f64) -> f64 {
        let sigma = scale * self.base_distance;
        1.0 / (2.0 * sigma * sigma)
    }

    fn poly_raw(&self, offset: f64, degree: u32, inner: f64) -> f64 {
        powi((offset + inner) / self.poly_scale, degree)
    }

    /// Normalized similarity from precomputed pair quantities.
    #[inline]
    fn value_from(&self, spec: &KernelSpec, i: usize, j: usize, d2: f64, ip: f64) -> f64 {
        if i == j {
            return 1.0;
        }
        match *spec {
            KernelSpec::Gaussian { bandwidth_scale } => exp(-d2 * self.gaussian_coeff(bandwidth_scale)),
            KernelSpec::Polynomial { offset, degree } => {
                let kij = self.poly_raw(offset, degree, ip);
                let kii = self.poly_raw(offset, degree, self.sq_norms[i]);
                let kjj = self.poly_raw(offset, degree, self.sq_norms[j]);
                (kij / sqrt(kii * kjj)).clamp(-1.0, 1.0)
            }
            KernelSpec::Linear | KernelSpec::Cosine => (ip / (self.norms[i] * self.norms[j])).clamp(-1.0, 1.0),
        }
    }

    /// Entry `(i, j)` of kernel `spec_index`.
    pub fn kernel_value(&self, spec_index: usize, i: usize, j: usize) -> f64 {
        let (xi, xj) = (self.features.row(i), self.features.row(j));
        self.value_from(&self.specs[spec_index], i, j, sq_dist(xi, xj), dot(xi, xj))
    }

    /// Row `i` of kernel `spec_index`, written into `out`.
    pub fn kernel_row_into(&self, spec_index: usize, i: usize, out: &mut [f64]) -> Result<()> {
        if spec_index >= self.m() || i >= self.n() || out.len() != self.n() {
            return Err(Error::InvalidArgument(alloc::format!(
                "kernel row {i} of kernel {spec_index} (n={}, m={})",
                self.n(),
                self.m()
            )));
        }
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.kernel_value(spec_index, i, j);
        }
        Ok(())
    }

    pub fn kernel_row(&self, spec_index: usize, i: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n()];
        self.kernel_row_into(spec_index, i, &mut out)?;
        Ok(out)
    }

    fn fill_pair_terms(&self, i: usize, scratch: &mut BankScratch) {
        let xi = self.features.row(i);
        let need_dist = self.specs.iter().any(|s| matches!(s, KernelSpec::Gaussian { .. }));
        let need_dot = self.specs.iter().any(|s| !matches!(s, KernelSpec::Gaussian { .. }));
        for j in 0..self.n() {
            let xj = self.features.row(j);
            if need_dist {
                scratch.dist2[j] = sq_dist(xi, xj);
            }
            if need_dot {
                scratch.dots[j] = dot(xi, xj);
            }
        }
    }

    /// Affinity row of one kernel from the shared pair terms. Gaussians go
    /// through the log domain so narrow bandwidths cannot underflow.
    fn spec_affinity(&self, spec: &KernelSpec, i: usize, k: usize, scratch: &mut BankScratch) -> Result<SparseRow> {
        let BankScratch { dist2, dots, vals, top } = scratch;
        match *spec {
            KernelSpec::Gaussian { bandwidth_scale } => {
                let coeff = self.gaussian_coeff(bandwidth_scale);
                for (v, &d2) in vals.iter_mut().zip(dist2.iter()) {
                    *v = -d2 * coeff;
                }
                vals[i] = 0.0;
                lnwkr_row_log_with(top, vals, i, k)
            }
            _ => {
                for (j, v) in vals.iter_mut().enumerate() {
                    *v = self.value_from(spec, i, j, 0.0, dots[j]);
                }
                lnwkr_row_with(top, vals, i, k)
            }
        }
    }

    /// Affinity source for a single kernel of the bank.
    pub fn affinity(&self, spec_index: usize) -> BankKernel<'_, 'a> {
        BankKernel { bank: self, spec_index }
    }

    /// `ln κ_ij` for row `i` (`−∞` where the similarity is not positive).
    pub fn log_kernel_row(&self, spec_index: usize, i: usize) -> Result<Vec<f64>> {
        match self.specs.get(spec_index) {
            Some(&KernelSpec::Gaussian { bandwidth_scale }) => {
                let coeff = self.gaussian_coeff(bandwidth_scale);
                let xi = self.features.row(i);
                Ok((0..self.n())
                    .map(|j| if j == i { 0.0 } else { -sq_dist(xi, self.features.row(j)) * coeff })
                    .collect())
            }
            _ => Ok(self
                .kernel_row(spec_index, i)?
                .into_iter()
                .map(|v| if v > 0.0 { ln(v) } else { f64::NEG_INFINITY })
                .collect()),
        }
    }
}

pub struct BankScratch {
    dist2: Vec<f64>,
    dots: Vec<f64>,
    vals: Vec<f64>,
    top: TopK,
}

impl BankScratch {
    fn new(n: usize) -> Self {
        Self { dist2: vec![0.0; n], dots: vec![0.0; n], vals: vec![0.0; n], top: TopK::new() }
    }
}

impl MultiAffinitySource for KernelBank<'_> {
    type Scratch = BankScratch;

    fn n(&self) -> usize {
        self.features.n()
    }

    fn m(&self) -> usize {
        self.specs.len()
    }

    fn scratch(&self) -> BankScratch {
        BankScratch::new(self.features.n())
    }

    fn affinity_rows(&self, scratch: &mut BankScratch, i: usize, k: usize) -> Result<Vec<SparseRow>> {
        self.fill_pair_terms(i, scratch);
        self.specs.iter().map(|spec| self.spec_affinity(spec, i, k, scratch)).collect()
    }
}

/// One kernel of a [`KernelBank`] viewed as an affinity source.
pub struct BankKernel<'b, 'a> {
    bank: &'b KernelBank<'a>,
    spec_index: usize,
}

impl AffinitySource for BankKernel<'_, '_> {
    type Scratch = BankScratch;

    fn n(&self) -> usize {
        self.bank.n()
    }

    fn scratch(&self) -> BankScratch {
        BankScratch::new(self.bank.n())
    }

    fn affinity_row(&self, scratch: &mut BankScratch, i: usize, k: usize) -> Result<SparseRow> {
        let spec = self.bank.specs[self.spec_index];
        let xi = self.bank.features.row(i);
        for j in 0..self.bank.n() {
            let xj = self.bank.features.row(j);
            match spec {
                KernelSpec::Gaussian { .. } => scratch.dist2[j] = sq_dist(xi, xj),
                _ => scratch.dots[j] = dot(xi, xj),
            }
        }
        self.bank.spec_affinity(&spec, i, k, scratch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fm(n: usize, d: usize, v: Vec<f64>) -> FeatureMatrix {
        FeatureMatrix::new(n, d, v).unwrap()
    }

    #[test]
    fn twelve_kernel_recipe() {
        let specs = default_twelve_kernels();
        assert_eq!(specs.len(), 12);
        let gauss = specs.iter().filter(|s| matches!(s, KernelSpec::Gaussian { .. })).count();
        let cos = specs.iter().filter(|s| matches!(s, KernelSpec::Cosine)).count();
        let poly = specs.iter().filter(|s| matches!(s, KernelSpec::Polynomial { .. })).count();
        assert_eq!((gauss, poly, cos), (7, 4, 1));
        assert!(specs.iter().all(|s| s.validate().is_ok()));
    }

    #[test]
    fn base_distance_examples() {
        let two = fm(2, 2, vec![0.0, 0.0, 3.0, 4.0]);
        assert_eq!(estimate_base_distance(&two, 1000, 0).unwrap(), 5.0);
        let line = fm(3, 1, vec![0.0, 1.0, 2.0]);
        assert!((estimate_base_distance(&line, 1000, 0).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        let same = fm(3, 1, vec![1.0, 1.0, 1.0]);
        assert_eq!(estimate_base_distance(&same, 1000, 0).unwrap_err(), Error::ZeroBaseDistance);
    }

    #[test]
    fn base_distance_subsampling_is_deterministic() {
        let vals: Vec<f64> = (0..5000 * 2).map(|i| ((i * 7919) % 1013) as f64).collect();
        let big = fm(5000, 2, vals);
        let a = estimate_base_distance(&big, 1000, 42).unwrap();
        let b = estimate_base_distance(&big, 1000, 42).unwrap();
        let c = estimate_base_distance(&big, 1000, 43).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_ne!(a, c);
    }

    #[test]
    fn gaussian_and_cosine_values() {
        let x = fm(3, 2, vec![1.0, 0.0, 0.0, 1.0, 2.0, 0.0]);
        let bank = KernelBank::new(
            &x,
            vec![KernelSpec::Gaussian { bandwidth_scale: 2.0 }, KernelSpec::Cosine],
            0.5,
        )
        .unwrap();
        // ‖x_0 − x_2‖ = 1 = scale · base_distance.
        assert!((bank.kernel_value(0, 0, 2) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((bank.kernel_value(0, 0, 2) - 0.6065306597126334).abs() < 1e-15);
        assert_eq!(bank.kernel_value(0, 1, 1), 1.0);
        assert_eq!(bank.kernel_value(1, 0, 1), 0.0);
        assert_eq!(bank.kernel_row(1, 2).unwrap(), vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_norm_rejected_for_cosine() {
        let x = fm(2, 2, vec![0.0, 0.0, 1.0, 1.0]);
        assert_eq!(KernelBank::new(&x, vec![KernelSpec::Cosine], 1.0).unwrap_err(), Error::ZeroNorm(0));
        assert!(KernelBank::new(&x, vec![KernelSpec::Polynomial { offset: 1.0, degree: 2 }], 1.0).is_ok());
        assert!(KernelBank::new(&x, vec![KernelSpec::Gaussian { bandwidth_scale: 1.0 }], 0.0).is_err());
    }

    #[test]
    fn polynomial_is_unit_diagonal_and_bounded() {
        let x = fm(3, 2, vec![1.0, 2.0, -1.0, 0.5, 3.0, -2.0]);
        let bank = KernelBank::new(&x, vec![KernelSpec::Polynomial { offset: 1.0, degree: 4 }], 1.0).unwrap();
        for i in 0..3 {
            let row = bank.kernel_row(0, i).unwrap();
            assert_eq!(row[i], 1.0);
            assert!(row.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn single_and_multi_affinity_agree() {
        let vals: Vec<f64> = (0..40 * 3).map(|i| ((i * 37) % 17) as f64 / 4.0 - 2.0).collect();
        let x = fm(40, 3, vals);
        let bank = KernelBank::with_estimated_distance(&x, default_twelve_kernels(), 1000, 0).unwrap();
        let mut scratch = MultiAffinitySource::scratch(&bank);
        for i in [0, 7, 39] {
            let all = bank.affinity_rows(&mut scratch, i, 5).unwrap();
            for (r, row) in all.iter().enumerate() {
                let single = bank.affinity(r);
                let mut s = single.scratch();
                assert_eq!(&single.affinity_row(&mut s, i, 5).unwrap(), row);
            }
        }
    }
}
