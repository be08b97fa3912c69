//! Fidelity and controllability measures for toy worlds: Fréchet distance
//! between Gaussian fits, grid divergences against exact target densities,
//! and component-assignment rates.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::par::{self, Execution};
use crate::world::MixtureWorld;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFit {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

const PSD_TOL: f64 = 1e-8;

impl GaussianFit {
    pub fn new(mean: Vec<f64>, covariance: Vec<Vec<f64>>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || covariance.len() != d || covariance.iter().any(|r| r.len() != d) {
            return Err(Error::Metric(format!("covariance must be {d}x{d}")));
        }
        let cov = DMatrix::from_fn(d, d, |i, j| covariance[i][j]);
        Self::from_parts(DVector::from_vec(mean), cov)
    }

    fn from_parts(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let scale = covariance.amax().max(1.0);
        if (&covariance - covariance.transpose()).amax() > 1e-10 * scale {
            return Err(Error::Metric("covariance is not symmetric".into()));
        }
        let min_eig = covariance.clone().symmetric_eigenvalues().min();
        if min_eig < -PSD_TOL * scale {
            return Err(Error::Metric(format!(
                "covariance is not positive semi-definite (eigenvalue {min_eig})"
            )));
        }
        Ok(Self { mean, covariance })
    }

    /// Sample mean and unbiased sample covariance.
    pub fn from_samples(samples: &[Vec<f64>]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Metric("need at least two samples for a fit".into()));
        }
        let d = samples[0].len();
        let n = samples.len() as f64;
        let mut mean = DVector::zeros(d);
        for s in samples {
            check_dim(d, s.len())?;
            mean += DVector::from_column_slice(s);
        }
        mean /= n;
        let mut cov = DMatrix::zeros(d, d);
        for s in samples {
            let c = DVector::from_column_slice(s) - &mean;
            cov += &c * c.transpose();
        }
        cov /= n - 1.0;
        let cov = (&cov + cov.transpose()) * 0.5;
        Self::from_parts(mean, cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.covariance[(i, j)]
    }
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
}

/// `‖μa − μb‖² + tr(Σa + Σb − 2 (Σa Σb)^{1/2})`, clamped at zero.
///
/// The trace of `(Σa Σb)^{1/2}` is taken from the eigenvalues of the
/// symmetric similar matrix `Σa^{1/2} Σb Σa^{1/2}`.
pub fn frechet(a: &GaussianFit, b: &GaussianFit) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    let diff = (&a.mean - &b.mean).norm_squared();
    let ra = psd_sqrt(&a.covariance);
    let inner = &ra * &b.covariance * &ra;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = inner
        .symmetric_eigenvalues()
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .sum();
    let value = diff + a.covariance.trace() + b.covariance.trace() - 2.0 * cross;
    if value < -PSD_TOL {
        return Err(Error::Metric(format!(
            "Fréchet distance came out negative: {value}"
        )));
    }
    Ok(value.max(0.0))
}

/// Rectangular 2-D histogram grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub bins: [usize; 2],
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lo: [-6.0, -6.0],
            hi: [6.0, 6.0],
            bins: [64, 64],
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.bins.contains(&0) || (0..2).any(|k| !(self.hi[k] > self.lo[k])) {
            return Err(Error::Metric(format!("degenerate grid {self:?}")));
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.bins[0] * self.bins[1]
    }

    fn width(&self, k: usize) -> f64 {
        (self.hi[k] - self.lo[k]) / self.bins[k] as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.width(0) * self.width(1)
    }

    /// Row-major cell index (`x` bin major), or `None` outside the grid.
    pub fn cell_of(&self, z: &[f64]) -> Option<usize> {
        let mut idx = [0usize; 2];
        for k in 0..2 {
            let u = (z[k] - self.lo[k]) / self.width(k);
            if !(u >= 0.0 && u < self.bins[k] as f64) {
                return None;
            }
            idx[k] = u as usize;
        }
        Some(idx[0] * self.bins[1] + idx[1])
    }

    pub fn center(&self, cell: usize) -> [f64; 2] {
        let (i, j) = (cell / self.bins[1], cell % self.bins[1]);
        [
            self.lo[0] + (i as f64 + 0.5) * self.width(0),
            self.lo[1] + (j as f64 + 0.5) * self.width(1),
        ]
    }

    /// Same cell size, extent grown by half the width on every side.
    fn expanded(&self) -> GridSpec {
        let pad = [
            0.5 * (self.hi[0] - self.lo[0]),
            0.5 * (self.hi[1] - self.lo[1]),
        ];
        GridSpec {
            lo: [self.lo[0] - pad[0], self.lo[1] - pad[1]],
            hi: [self.hi[0] + pad[0], self.hi[1] + pad[1]],
            bins: [self.bins[0] * 2, self.bins[1] * 2],
        }
    }

    fn refined(&self, factor: usize) -> GridSpec {
        GridSpec {
            bins: [self.bins[0] * factor, self.bins[1] * factor],
            ..*self
        }
    }
}

/// Sample counts per cell plus the number that fell outside the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub counts: Vec<u64>,
    pub outside: u64,
}

pub fn histogram(samples: &[Vec<f64>], grid: &GridSpec) -> Result<Histogram> {
    grid.validate()?;
    let mut counts = vec![0u64; grid.num_cells()];
    let mut outside = 0;
    for s in samples {
        check_dim(2, s.len())?;
        match grid.cell_of(s) {
            Some(c) => counts[c] += 1,
            None => outside += 1,
        }
    }
    Ok(Histogram { counts, outside })
}

/// Cells holding at least `min_count` samples.
pub fn occupied_cells(
    samples: &[Vec<f64>],
    grid: &GridSpec,
    min_count: u64,
) -> Result<BTreeSet<usize>> {
    let h = histogram(samples, grid)?;
    Ok(h.counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c >= min_count)
        .map(|(i, _)| i)
        .collect())
}

/// Normalized target mass per cell (midpoint rule) and the fraction of mass
/// the grid misses, estimated against a grid twice as wide.
pub fn discretize_target<F>(target_log_density: &F, grid: &GridSpec) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    grid.validate()?;
    let eval = |g: &GridSpec| -> Vec<f64> {
        par::map_range(g.num_cells(), Execution::default(), |c| {
            target_log_density(&g.center(c))
        })
    };
    let inner = eval(grid);
    let outer_grid = grid.expanded();
    let outer = eval(&outer_grid);
    let m = outer
        .iter()
        .chain(&inner)
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::Metric(
            "target log density is not finite on the grid".into(),
        ));
    }
    let inner_mass: Vec<f64> = inner.iter().map(|l| (l - m).exp()).collect();
    let z_inner: f64 = inner_mass.iter().sum();
    let z_outer: f64 = outer.iter().map(|l| (l - m).exp()).sum();
    let residual = (1.0 - z_inner / z_outer).max(0.0);
    Ok((inner_mass.iter().map(|v| v / z_inner).collect(), residual))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Divergence {
    pub kl: f64,
    pub tv: f64,
    /// Target mass the grid misses.
    pub residual: f64,
}

pub const SMOOTHING: f64 = 1e-9;
const MAX_RESIDUAL: f64 = 0.01;

/// Discrete `KL(empirical ‖ target)` and total variation on a grid. Samples
/// outside the grid count as mass the target does not have.
pub fn grid_divergence<F>(
    samples: &[Vec<f64>],
    target_log_density: &F,
    grid: &GridSpec,
) -> Result<Divergence>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if samples.is_empty() {
        return Err(Error::Metric("no samples".into()));
    }
    let (target, residual) = discretize_target(target_log_density, grid)?;
    if residual > MAX_RESIDUAL {
        return Err(Error::Metric(format!(
            "grid misses {:.2}% of the target mass",
            100.0 * residual
        )));
    }
    let h = histogram(samples, grid)?;
    let n = samples.len() as f64;
    let mut kl = 0.0;
    let mut tv = 0.0;
    for (c, p) in h.counts.iter().zip(&target) {
        let e = *c as f64 / n;
        if e > 0.0 {
            kl += e * ((e + SMOOTHING) / (p + SMOOTHING)).ln();
        }
        tv += (e - p).abs();
    }
    let out = h.outside as f64 / n;
    if out > 0.0 {
        kl += out * ((out + SMOOTHING) / SMOOTHING).ln();
    }
    tv += out;
    Ok(Divergence {
        kl,
        tv: 0.5 * tv,
        residual,
    })
}

/// Exact draws from a density restricted to the grid rectangle, by uniform
/// proposals under an envelope taken from a 4x refined grid.
pub fn rejection_sample<F>(
    target_log_density: &F,
    grid: &GridSpec,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    grid.validate()?;
    let fine = grid.refined(4);
    let peak = par::map_range(fine.num_cells(), Execution::default(), |c| {
        target_log_density(&fine.center(c))
    })
    .into_iter()
    .fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return Err(Error::Metric(
            "target log density is not finite on the grid".into(),
        ));
    }
    let envelope = peak + 0.25f64.ln_1p();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let z = vec![
            grid.lo[0] + rng.random::<f64>() * (grid.hi[0] - grid.lo[0]),
            grid.lo[1] + rng.random::<f64>() * (grid.hi[1] - grid.lo[1]),
        ];
        let l = target_log_density(&z);
        debug_assert!(l <= envelope, "envelope violated");
        if rng.random::<f64>().ln() < l - envelope {
            out.push(z);
        }
    }
    Ok(out)
}

/// Fraction of samples whose maximum-responsibility component (under the
/// clean world) is in `set`.
pub fn assignment_rate(samples: &[Vec<f64>], world: &MixtureWorld, set: &[usize]) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Metric("empty component set".into()));
    }
    if samples.is_empty() {
        return Err(Error::Metric("no samples".into()));
    }
    if let Some(bad) = set.iter().find(|&&i| i >= world.components().len()) {
        return Err(Error::Metric(format!("component {bad} does not exist")));
    }
    let assigned = assignments(samples, world)?;
    let hits = assigned.iter().filter(|k| set.contains(k)).count();
    Ok(hits as f64 / samples.len() as f64)
}

pub fn assignments(samples: &[Vec<f64>], world: &MixtureWorld) -> Result<Vec<usize>> {
    par::try_map_range(samples.len(), Execution::default(), |i| {
        world.assign(&samples[i])
    })
}

/// Log of the unnormalized product density `p(z) Πᵢ p(cᵢ | z)^wᵢ` on the
/// clean world.
pub fn product_log_density(
    world: &MixtureWorld,
    factors: &[(String, f64)],
    z: &[f64],
) -> Result<f64> {
    let mut l = world.log_density(z)?;
    for (c, w) in factors {
        l += w * world.log_posterior(c, z)?;
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::sample_data;

    fn fit(mean: [f64; 2], diag: [f64; 2]) -> GaussianFit {
        GaussianFit::new(mean.to_vec(), vec![vec![diag[0], 0.0], vec![0.0, diag[1]]]).unwrap()
    }

    #[test]
    fn frechet_examples() {
        let a = fit([0.0, 0.0], [1.0, 1.0]);
        assert!(frechet(&a, &a).unwrap().abs() < 1e-12);
        let b = fit([3.0, 0.0], [1.0, 1.0]);
        assert!((frechet(&a, &b).unwrap() - 9.0).abs() < 1e-12);
        let c = fit([0.0, 0.0], [4.0, 4.0]);
        assert!((frechet(&c, &a).unwrap() - 2.0).abs() < 1e-12);
        let three = GaussianFit::new(vec![0.0; 3], vec![vec![1.0, 0.0, 0.0]; 3]);
        assert!(three.is_err());
        let neg = GaussianFit::new(vec![0.0, 0.0], vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(neg.is_err());
        let one = GaussianFit::new(vec![0.0], vec![vec![1.0]]).unwrap();
        assert!(frechet(&one, &a).is_err());
    }

    #[test]
    fn frechet_correlated_against_closed_form() {
        // Commuting covariances: sqrt(ΣaΣb) shares eigenvectors.
        let a = GaussianFit::new(vec![0.0, 0.0], vec![vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let b = GaussianFit::new(vec![1.0, 1.0], vec![vec![5.0, 4.0], vec![4.0, 5.0]]).unwrap();
        // eigenvalues: a {3, 1}, b {9, 1} -> cross trace 3*3 .. sqrt(27) + 1
        let expect = 2.0 + 4.0 + 10.0 - 2.0 * (27f64.sqrt() + 1.0);
        assert!((frechet(&a, &b).unwrap() - expect).abs() < 1e-10);
        assert!((frechet(&b, &a).unwrap() - expect).abs() < 1e-10);
    }

    #[test]
    fn fit_from_samples_is_unbiased() {
        let pts = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, 3.0]];
        let f = GaussianFit::from_samples(&pts).unwrap();
        assert_eq!(f.mean(), &[1.0, 1.0]);
        assert!((f.covariance(0, 0) - 1.0).abs() < 1e-12);
        assert!((f.covariance(1, 1) - 3.0).abs() < 1e-12);
        assert!(GaussianFit::from_samples(&pts[..1]).is_err());
    }

    #[test]
    fn grid_geometry() {
        let g = GridSpec::default();
        assert_eq!(g.cell_of(&[-6.0, -6.0]), Some(0));
        assert_eq!(g.cell_of(&[6.0, 0.0]), None);
        assert_eq!(g.cell_of(&[f64::NAN, 0.0]), None);
        let c = g.cell_of(&[1.3, -2.2]).unwrap();
        let center = g.center(c);
        assert!((center[0] - 1.3).abs() < g.width(0) && (center[1] + 2.2).abs() < g.width(1));
    }

    #[test]
    fn divergence_extremes_and_errors() {
        let g = GridSpec {
            lo: [0.0, 0.0],
            hi: [1.0, 1.0],
            bins: [10, 10],
        };
        // Uniform target on the square: outside density is -inf.
        let uniform = |z: &[f64]| {
            if (0.0..1.0).contains(&z[0]) && (0.0..1.0).contains(&z[1]) {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        };
        let lump = vec![vec![0.05, 0.05]; 100];
        let d = grid_divergence(&lump, &uniform, &g).unwrap();
        assert!((d.tv - 0.99).abs() < 1e-12);
        assert!(grid_divergence(&[], &uniform, &g).is_err());

        let wide = |z: &[f64]| -0.5 * (z[0] * z[0] + z[1] * z[1]);
        assert!(grid_divergence(&lump, &wide, &g).is_err());
    }

    #[test]
    fn standard_normal_self_consistency() {
        let g = GridSpec {
            lo: [-5.0, -5.0],
            hi: [5.0, 5.0],
            bins: [64, 64],
        };
        let pts = sample_data(&MixtureWorld::standard_normal(2), None, 100_000, 17).unwrap();
        let target = |z: &[f64]| -0.5 * (z[0] * z[0] + z[1] * z[1]);
        let d = grid_divergence(&pts, &target, &g).unwrap();
        assert!(d.tv <= 0.05, "tv {}", d.tv);
        assert!(d.residual < 1e-3);
    }

    #[test]
    fn rejection_sampling_matches_target() {
        let g = GridSpec::default();
        let w = MixtureWorld::quadrant();
        let target = |z: &[f64]| w.log_density(z).unwrap();
        let pts = rejection_sample(&target, &g, 20_000, 3).unwrap();
        let direct = sample_data(&w, None, 20_000, 4).unwrap();
        let a = grid_divergence(&pts, &target, &g).unwrap();
        let b = grid_divergence(&direct, &target, &g).unwrap();
        // Same sample count, same target: comparable sampling noise.
        assert!(
            a.tv < 1.3 * b.tv && b.tv < 1.3 * a.tv,
            "{} vs {}",
            a.tv,
            b.tv
        );
        assert_eq!(pts, rejection_sample(&target, &g, 20_000, 3).unwrap());
    }

    #[test]
    fn assignment_examples() {
        let w = MixtureWorld::quadrant();
        let pts = sample_data(&w, Some("left"), 5000, 8).unwrap();
        assert_eq!(assignment_rate(&pts, &w, &[0, 1, 2, 3]).unwrap(), 1.0);
        assert!(assignment_rate(&pts, &w, &[0, 1]).unwrap() >= 0.99);
        assert!(assignment_rate(&pts, &w, &[]).is_err());
        assert!(assignment_rate(&[], &w, &[0]).is_err());
        assert_eq!(assignments(&[vec![-3.0, 0.0]], &w).unwrap(), vec![0]);

        let all = sample_data(&w, None, 3000, 9).unwrap();
        let a = assignment_rate(&all, &w, &[0]).unwrap();
        let b = assignment_rate(&all, &w, &[2, 3]).unwrap();
        let ab = assignment_rate(&all, &w, &[0, 2, 3]).unwrap();
        assert!((a + b - ab).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn frechet_symmetric(
            m in proptest::collection::vec(-3.0f64..3.0, 4),
            l in proptest::collection::vec(-1.0f64..1.0, 6),
        ) {
            let cov = |a: f64, b: f64, c: f64| {
                // L Lᵀ with L = [[a', 0], [b, c']] + ridge
                let (a, c) = (a.abs() + 0.1, c.abs() + 0.1);
                vec![vec![a * a, a * b], vec![a * b, b * b + c * c]]
            };
            let x = GaussianFit::new(m[..2].to_vec(), cov(l[0], l[1], l[2])).unwrap();
            let y = GaussianFit::new(m[2..].to_vec(), cov(l[3], l[4], l[5])).unwrap();
            let (xy, yx) = (frechet(&x, &y).unwrap(), frechet(&y, &x).unwrap());
            proptest::prop_assert!((xy - yx).abs() < 1e-8 * (1.0 + xy));
            proptest::prop_assert!(frechet(&x, &x).unwrap() < 1e-8);
        }

        #[test]
        fn tv_ignores_sample_order(seed in 0u64..1000) {
            let w = MixtureWorld::quadrant();
            let target = |z: &[f64]| w.log_density(z).unwrap();
            let mut pts = sample_data(&w, None, 500, seed).unwrap();
            let g = GridSpec::default();
            let a = grid_divergence(&pts, &target, &g).unwrap().tv;
            pts.reverse();
            let b = grid_divergence(&pts, &target, &g).unwrap().tv;
            proptest::prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
