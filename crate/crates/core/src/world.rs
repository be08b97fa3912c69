//! Labeled Gaussian-mixture data worlds and their closed-form diffused scores.
//!
//! A condition is a named set of component indices. Restricting a world to a
//! condition gives the conditional data distribution `p(z | c)`, and the
//! posterior `p(c | z)` is the total responsibility of those components.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{check_dim, Error, Result};
use crate::schedule::NoiseSchedule;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Dense Gaussian with everything needed for fast density and score evaluation.
#[derive(Debug, Clone)]
struct Gaussian {
    mean: Vec<f64>,
    /// Row-major inverse covariance.
    precision: Vec<f64>,
    /// Row-major lower Cholesky factor of the covariance.
    chol: Vec<f64>,
    /// `-(d ln 2π + ln det Σ) / 2`
    log_norm: f64,
}

impl Gaussian {
    fn new(mean: &[f64], cov: &DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::World(format!(
                "covariance is {}x{}, expected {d}x{d}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let asym = (cov - cov.transpose()).amax();
        if asym > 1e-12 * cov.amax().max(1.0) {
            return Err(Error::World("covariance is not symmetric".into()));
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::World("covariance is not positive definite".into()))?;
        let l = chol.l();
        let log_det = 2.0 * l.diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let inv = chol.inverse();
        let row_major = |m: &DMatrix<f64>| {
            let mut v = Vec::with_capacity(d * d);
            for i in 0..d {
                for j in 0..d {
                    v.push(m[(i, j)]);
                }
            }
            v
        };
        Ok(Self {
            mean: mean.to_vec(),
            precision: row_major(&inv),
            chol: row_major(&l),
            log_norm: -0.5 * (d as f64 * LN_2PI + log_det),
        })
    }

    fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Log density and, when `grad` is given, `Σ⁻¹(μ - z)` written into it.
    fn log_pdf(&self, z: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let d = self.dim();
        let mut quad = 0.0;
        let mut grad = grad;
        for i in 0..d {
            let row = &self.precision[i * d..(i + 1) * d];
            let mut acc = 0.0;
            for j in 0..d {
                acc += row[j] * (self.mean[j] - z[j]);
            }
            quad += (self.mean[i] - z[i]) * acc;
            if let Some(g) = grad.as_deref_mut() {
                g[i] = acc;
            }
        }
        self.log_norm - 0.5 * quad
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let u: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        (0..d)
            .map(|i| self.mean[i] + (0..=i).map(|j| self.chol[i * d + j] * u[j]).sum::<f64>())
            .collect()
    }
}

/// One weighted component as seen by users and the JSON format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

impl Component {
    pub fn isotropic(weight: f64, mean: Vec<f64>, variance: f64) -> Self {
        let d = mean.len();
        let covariance = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| if i == j { variance } else { 0.0 })
                    .collect()
            })
            .collect();
        Self {
            weight,
            mean,
            covariance,
        }
    }

    fn cov_matrix(&self) -> Result<DMatrix<f64>> {
        let d = self.mean.len();
        if self.covariance.len() != d || self.covariance.iter().any(|r| r.len() != d) {
            return Err(Error::World(format!(
                "covariance must be {d}x{d} to match the mean"
            )));
        }
        Ok(DMatrix::from_fn(d, d, |i, j| self.covariance[i][j]))
    }
}

/// Finite mixture with cached factorizations.
#[derive(Debug, Clone)]
struct Mixture {
    log_weights: Vec<f64>,
    gaussians: Vec<Gaussian>,
}

impl Mixture {
    fn dim(&self) -> usize {
        self.gaussians[0].dim()
    }

    fn log_density(&self, z: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .gaussians
            .iter()
            .zip(&self.log_weights)
            .map(|(g, lw)| lw + g.log_pdf(z, None))
            .collect();
        log_sum_exp(&terms)
    }

    fn score(&self, z: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let k = self.gaussians.len();
        let mut grads = vec![0.0; k * d];
        let mut logs = Vec::with_capacity(k);
        for (i, (g, lw)) in self.gaussians.iter().zip(&self.log_weights).enumerate() {
            logs.push(lw + g.log_pdf(z, Some(&mut grads[i * d..(i + 1) * d])));
        }
        let lse = log_sum_exp(&logs);
        let mut out = vec![0.0; d];
        for (i, l) in logs.iter().enumerate() {
            let r = (l - lse).exp();
            for j in 0..d {
                out[j] += r * grads[i * d + j];
            }
        }
        out
    }

    fn responsibilities(&self, z: &[f64]) -> Vec<f64> {
        let logs: Vec<f64> = self
            .gaussians
            .iter()
            .zip(&self.log_weights)
            .map(|(g, lw)| lw + g.log_pdf(z, None))
            .collect();
        let lse = log_sum_exp(&logs);
        logs.iter().map(|l| (l - lse).exp()).collect()
    }

    /// Highest-responsibility component; ties go to the lowest index.
    fn assign(&self, z: &[f64]) -> usize {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (i, (g, lw)) in self.gaussians.iter().zip(&self.log_weights).enumerate() {
            let v = lw + g.log_pdf(z, None);
            if v > best_val {
                best = i;
                best_val = v;
            }
        }
        best
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldDoc {
    components: Vec<Component>,
    #[serde(default)]
    labels: BTreeMap<String, Vec<usize>>,
}

/// A labeled Gaussian mixture: the data distribution and its conditions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "WorldDoc", into = "WorldDoc")]
pub struct MixtureWorld {
    components: Vec<Component>,
    labels: BTreeMap<String, Vec<usize>>,
    mixture: Mixture,
}

impl TryFrom<WorldDoc> for MixtureWorld {
    type Error = Error;

    fn try_from(doc: WorldDoc) -> Result<Self> {
        MixtureWorld::new(doc.components, doc.labels)
    }
}

impl From<MixtureWorld> for WorldDoc {
    fn from(w: MixtureWorld) -> Self {
        WorldDoc {
            components: w.components,
            labels: w.labels,
        }
    }
}

impl PartialEq for MixtureWorld {
    fn eq(&self, other: &Self) -> bool {
        self.components == other.components && self.labels == other.labels
    }
}

impl MixtureWorld {
    /// Validates and builds a world. Weights within 1e-9 of summing to one
    /// are renormalized exactly; label index sets are sorted and deduplicated.
    pub fn new(
        mut components: Vec<Component>,
        labels: BTreeMap<String, Vec<usize>>,
    ) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::World("a world needs at least one component".into()));
        }
        let d = components[0].mean.len();
        if d == 0 {
            return Err(Error::World("dimension must be positive".into()));
        }
        if let Some(c) = components.iter().find(|c| c.mean.len() != d) {
            return Err(Error::World(format!(
                "component mean has dimension {}, expected {d}",
                c.mean.len()
            )));
        }
        if components
            .iter()
            .any(|c| !(c.weight > 0.0 && c.weight.is_finite()))
        {
            return Err(Error::World("weights must be positive and finite".into()));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::World(format!("weights sum to {total}, not 1")));
        }
        for c in &mut components {
            c.weight /= total;
        }
        let gaussians = components
            .iter()
            .map(|c| Gaussian::new(&c.mean, &c.cov_matrix()?))
            .collect::<Result<Vec<_>>>()?;
        let mut clean = BTreeMap::new();
        for (name, mut idx) in labels {
            idx.sort_unstable();
            idx.dedup();
            if idx.is_empty() {
                return Err(Error::World(format!(
                    "label `{name}` selects no components"
                )));
            }
            if let Some(bad) = idx.iter().find(|&&i| i >= components.len()) {
                return Err(Error::World(format!(
                    "label `{name}` references component {bad}, but there are only {}",
                    components.len()
                )));
            }
            clean.insert(name, idx);
        }
        let mixture = Mixture {
            log_weights: components.iter().map(|c| c.weight.ln()).collect(),
            gaussians,
        };
        Ok(Self {
            components,
            labels: clean,
            mixture,
        })
    }

    /// Single Gaussian world without labels.
    pub fn gaussian(mean: Vec<f64>, covariance: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            vec![Component {
                weight: 1.0,
                mean,
                covariance,
            }],
            BTreeMap::new(),
        )
    }

    pub fn standard_normal(dim: usize) -> Self {
        Self::new(
            vec![Component::isotropic(1.0, vec![0.0; dim], 1.0)],
            BTreeMap::new(),
        )
        .expect("standard normal is valid")
    }

    /// Four isotropic components at `(±3, ±3)` with covariance `0.5 I` and
    /// equal weights. Component order: top-left, bottom-left, top-right,
    /// bottom-right. `concept` is the left pair; `top-left` is component 0 alone.
    pub fn quadrant() -> Self {
        let comps = vec![
            Component::isotropic(0.25, vec![-3.0, 3.0], 0.5),
            Component::isotropic(0.25, vec![-3.0, -3.0], 0.5),
            Component::isotropic(0.25, vec![3.0, 3.0], 0.5),
            Component::isotropic(0.25, vec![3.0, -3.0], 0.5),
        ];
        let labels = [
            ("left", vec![0, 1]),
            ("right", vec![2, 3]),
            ("top", vec![0, 2]),
            ("bottom", vec![1, 3]),
            ("concept", vec![0, 1]),
            ("top-left", vec![0]),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self::new(comps, labels).expect("quadrant world is valid")
    }

    /// A world in which `left` and `top` are correlated: their overlap holds a
    /// tight joint component (`top-left`, index 0) plus the crossing of a
    /// vertical left band and a horizontal top band.
    pub fn correlated() -> Self {
        let band = |weight: f64, mean: [f64; 2], var: [f64; 2]| Component {
            weight,
            mean: mean.to_vec(),
            covariance: vec![vec![var[0], 0.0], vec![0.0, var[1]]],
        };
        let comps = vec![
            band(0.1, [-3.0, 3.0], [0.15, 0.15]),
            band(0.3, [-3.0, 2.0], [1.0, 3.0]),
            band(0.3, [-2.0, 3.0], [3.0, 1.0]),
            band(0.3, [3.0, -3.0], [0.5, 0.5]),
        ];
        let labels = [
            ("top-left", vec![0]),
            ("left", vec![0, 1]),
            ("top", vec![0, 2]),
            ("other", vec![3]),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self::new(comps, labels).expect("correlated world is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("world serializes")
    }

    /// SHA-256 of the compact JSON form, hex encoded.
    pub fn content_hash(&self) -> String {
        let text = serde_json::to_string(self).expect("world serializes");
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.components[0].mean.len()
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn labels(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.labels
    }

    /// Component indices selected by `condition`.
    pub fn selection(&self, condition: &str) -> Result<&[usize]> {
        self.labels
            .get(condition)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownCondition(condition.to_string()))
    }

    /// Sub-mixture of the components in `indices`, labels carried over and
    /// remapped (labels that lose every component are dropped).
    fn subset(&self, indices: &[usize]) -> Result<MixtureWorld> {
        let total: f64 = indices.iter().map(|&i| self.components[i].weight).sum();
        let comps = indices
            .iter()
            .map(|&i| {
                let mut c = self.components[i].clone();
                c.weight /= total;
                c
            })
            .collect();
        let labels = self
            .labels
            .iter()
            .filter_map(|(name, sel)| {
                let mapped: Vec<usize> = sel
                    .iter()
                    .filter_map(|i| indices.iter().position(|j| j == i))
                    .collect();
                (!mapped.is_empty()).then(|| (name.clone(), mapped))
            })
            .collect();
        MixtureWorld::new(comps, labels)
    }

    pub fn log_density(&self, z: &[f64]) -> Result<f64> {
        check_dim(self.dim(), z.len())?;
        Ok(self.mixture.log_density(z))
    }

    /// `log p(c | z)` under this (clean) world.
    pub fn log_posterior(&self, condition: &str, z: &[f64]) -> Result<f64> {
        check_dim(self.dim(), z.len())?;
        let sel = self.selection(condition)?;
        let logs: Vec<f64> = sel
            .iter()
            .map(|&i| self.mixture.log_weights[i] + self.mixture.gaussians[i].log_pdf(z, None))
            .collect();
        Ok(log_sum_exp(&logs) - self.mixture.log_density(z))
    }

    pub fn responsibilities(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), z.len())?;
        Ok(self.mixture.responsibilities(z))
    }

    /// Index of the maximum-responsibility component; ties break to the lowest index.
    pub fn assign(&self, z: &[f64]) -> Result<usize> {
        check_dim(self.dim(), z.len())?;
        Ok(self.mixture.assign(z))
    }
}

/// Sub-mixture selected by `condition`, weights renormalized.
pub fn restrict(world: &MixtureWorld, condition: &str) -> Result<MixtureWorld> {
    let sel = world.selection(condition)?.to_vec();
    world.subset(&sel)
}

/// Analytic marginal of the forward process at timestep `t`.
#[derive(Debug, Clone)]
pub struct DiffusedMixture {
    time_index: usize,
    components: Vec<Component>,
    mixture: Mixture,
}

pub fn diffuse_mixture(
    world: &MixtureWorld,
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<DiffusedMixture> {
    let abar = schedule.alpha_bar(t)?;
    let (a, s) = (abar.sqrt(), 1.0 - abar);
    let components: Vec<Component> = world
        .components
        .iter()
        .map(|c| Component {
            weight: c.weight,
            mean: c.mean.iter().map(|m| a * m).collect(),
            covariance: c
                .covariance
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    row.iter()
                        .enumerate()
                        .map(|(j, v)| abar * v + if i == j { s } else { 0.0 })
                        .collect()
                })
                .collect(),
        })
        .collect();
    let gaussians = components
        .iter()
        .map(|c| Gaussian::new(&c.mean, &c.cov_matrix()?))
        .collect::<Result<Vec<_>>>()?;
    Ok(DiffusedMixture {
        time_index: t,
        mixture: Mixture {
            log_weights: world.mixture.log_weights.clone(),
            gaussians,
        },
        components,
    })
}

impl DiffusedMixture {
    pub fn time_index(&self) -> usize {
        self.time_index
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.mixture.dim()
    }

    pub fn log_density(&self, z: &[f64]) -> Result<f64> {
        check_dim(self.dim(), z.len())?;
        Ok(self.mixture.log_density(z))
    }

    /// `∇_z log p_t(z)`.
    pub fn score(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), z.len())?;
        Ok(self.mixture.score(z))
    }
}

pub fn log_density(mix: &DiffusedMixture, z: &[f64]) -> Result<f64> {
    mix.log_density(z)
}

pub fn score(mix: &DiffusedMixture, z: &[f64]) -> Result<Vec<f64>> {
    mix.score(z)
}

/// Exact noise prediction `-sqrt(1 - abar_t) ∇ log p_t(z | c)`; the full
/// mixture when `condition` is `None`.
pub fn analytic_noise_prediction(
    world: &MixtureWorld,
    condition: Option<&str>,
    z: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    schedule.check_t(t, 1)?;
    let diffused = match condition {
        Some(c) => diffuse_mixture(&restrict(world, c)?, t, schedule)?,
        None => diffuse_mixture(world, t, schedule)?,
    };
    let s = (1.0 - schedule.alpha_bar(t)?).sqrt();
    Ok(diffused.score(z)?.into_iter().map(|g| -s * g).collect())
}

/// `n` draws from the (restricted) world, each paired with the index of the
/// component it came from in the unrestricted world.
pub fn sample_labeled(
    world: &MixtureWorld,
    condition: Option<&str>,
    n: usize,
    seed: u64,
) -> Result<Vec<(Vec<f64>, usize)>> {
    let indices: Vec<usize> = match condition {
        Some(c) => world.selection(c)?.to_vec(),
        None => (0..world.components.len()).collect(),
    };
    let weights: Vec<f64> = indices
        .iter()
        .map(|&i| world.components[i].weight)
        .collect();
    let total: f64 = weights.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let k = indices[pick(&weights, total, &mut rng)];
            (world.mixture.gaussians[k].draw(&mut rng), k)
        })
        .collect())
}

pub fn sample_data(
    world: &MixtureWorld,
    condition: Option<&str>,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    Ok(sample_labeled(world, condition, n, seed)?
        .into_iter()
        .map(|(p, _)| p)
        .collect())
}

fn pick<R: Rng>(weights: &[f64], total: f64, rng: &mut R) -> usize {
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Draws from a world repeatedly without re-deriving component choices;
/// used by the training loop.
#[derive(Debug, Clone)]
pub struct WorldSampler {
    world: Arc<MixtureWorld>,
    indices: Vec<usize>,
    weights: Vec<f64>,
    total: f64,
}

impl WorldSampler {
    pub fn new(world: Arc<MixtureWorld>, condition: Option<&str>) -> Result<Self> {
        let indices: Vec<usize> = match condition {
            Some(c) => world.selection(c)?.to_vec(),
            None => (0..world.components.len()).collect(),
        };
        let weights: Vec<f64> = indices
            .iter()
            .map(|&i| world.components[i].weight)
            .collect();
        let total = weights.iter().sum();
        Ok(Self {
            world,
            indices,
            weights,
            total,
        })
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let k = self.indices[pick(&self.weights, self.total, rng)];
        self.world.mixture.gaussians[k].draw(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{make_schedule, ScheduleKind};

    fn two_equal() -> MixtureWorld {
        MixtureWorld::new(
            vec![
                Component::isotropic(0.5, vec![-2.0, 0.0], 1.0),
                Component::isotropic(0.5, vec![2.0, 0.0], 1.0),
            ],
            [("a".to_string(), vec![0]), ("all".to_string(), vec![0, 1])]
                .into_iter()
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn validation() {
        let bad_weights = vec![
            Component::isotropic(0.4, vec![0.0], 1.0),
            Component::isotropic(0.4, vec![1.0], 1.0),
        ];
        assert!(MixtureWorld::new(bad_weights, BTreeMap::new()).is_err());
        let not_pd = Component {
            weight: 1.0,
            mean: vec![0.0, 0.0],
            covariance: vec![vec![1.0, 2.0], vec![2.0, 1.0]],
        };
        assert!(MixtureWorld::new(vec![not_pd], BTreeMap::new()).is_err());
        let asym = Component {
            weight: 1.0,
            mean: vec![0.0, 0.0],
            covariance: vec![vec![1.0, 0.1], vec![0.0, 1.0]],
        };
        assert!(MixtureWorld::new(vec![asym], BTreeMap::new()).is_err());
        let labels = [("x".to_string(), vec![3])].into_iter().collect();
        assert!(
            MixtureWorld::new(vec![Component::isotropic(1.0, vec![0.0], 1.0)], labels).is_err()
        );
        let empty = [("x".to_string(), vec![])].into_iter().collect();
        assert!(MixtureWorld::new(vec![Component::isotropic(1.0, vec![0.0], 1.0)], empty).is_err());
    }

    #[test]
    fn restrict_examples() {
        let w = two_equal();
        let all = restrict(&w, "all").unwrap();
        assert_eq!(all.components(), w.components());
        let a = restrict(&w, "a").unwrap();
        assert_eq!(a.components().len(), 1);
        assert_eq!(a.components()[0].weight, 1.0);
        assert!(matches!(
            restrict(&w, "nope"),
            Err(Error::UnknownCondition(_))
        ));

        let three = MixtureWorld::new(
            vec![
                Component::isotropic(0.2, vec![0.0], 1.0),
                Component::isotropic(0.3, vec![1.0], 1.0),
                Component::isotropic(0.5, vec![2.0], 1.0),
            ],
            [("tail".to_string(), vec![1, 2])].into_iter().collect(),
        )
        .unwrap();
        let r = restrict(&three, "tail").unwrap();
        let ws: Vec<f64> = r.components().iter().map(|c| c.weight).collect();
        assert!((ws[0] - 0.375).abs() < 1e-15 && (ws[1] - 0.625).abs() < 1e-15);
    }

    #[test]
    fn restrict_superset_is_idempotent() {
        let w = MixtureWorld::quadrant();
        let once = restrict(&w, "top-left").unwrap();
        let twice = restrict(&once, "left").unwrap();
        assert_eq!(once.components(), twice.components());
        let c = restrict(&w, "concept").unwrap();
        assert_eq!(restrict(&c, "left").unwrap().components(), c.components());
    }

    #[test]
    fn diffuse_examples() {
        let s = NoiseSchedule::default();
        let w = MixtureWorld::quadrant();
        let d0 = diffuse_mixture(&w, 0, &s).unwrap();
        assert_eq!(d0.components(), w.components());
        let far = diffuse_mixture(&w, 1000, &s).unwrap();
        for c in far.components() {
            assert!(c.mean.iter().all(|m| m.abs() < 0.03));
            assert!((c.covariance[0][0] - 1.0).abs() < 1e-3);
        }
        let q = make_schedule(ScheduleKind::Linear, 1, 0.75, 0.75).unwrap();
        let g =
            MixtureWorld::gaussian(vec![4.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let d = diffuse_mixture(&g, 1, &q).unwrap();
        assert_eq!(d.components()[0].mean, vec![2.0, 0.0]);
        assert_eq!(
            d.components()[0].covariance,
            vec![vec![1.0, 0.0], vec![0.0, 1.0]]
        );
        assert!(diffuse_mixture(&w, 1001, &s).is_err());
    }

    #[test]
    fn log_density_examples() {
        let s = NoiseSchedule::default();
        let n = diffuse_mixture(&MixtureWorld::standard_normal(2), 0, &s).unwrap();
        assert!((n.log_density(&[0.0, 0.0]).unwrap() + 1.837877066409345).abs() < 1e-12);
        let tail = n.log_density(&[100.0, 0.0]).unwrap();
        assert!(tail.is_finite());
        let twins = MixtureWorld::new(
            vec![
                Component::isotropic(0.5, vec![0.0, 0.0], 1.0),
                Component::isotropic(0.5, vec![0.0, 0.0], 1.0),
            ],
            BTreeMap::new(),
        )
        .unwrap();
        let tw = diffuse_mixture(&twins, 0, &s).unwrap();
        let z = [0.3, -1.2];
        assert!((tw.log_density(&z).unwrap() - n.log_density(&z).unwrap()).abs() < 1e-14);
        // Far tail of a bimodal mixture: both terms underflow individually.
        let w = diffuse_mixture(&MixtureWorld::quadrant(), 0, &s).unwrap();
        assert!(w.log_density(&[100.0, -100.0]).unwrap().is_finite());
        assert!(w
            .score(&[100.0, -100.0])
            .unwrap()
            .iter()
            .all(|x| x.is_finite()));
        assert!(n.log_density(&[1.0]).is_err());
    }

    #[test]
    fn score_examples() {
        let s = NoiseSchedule::default();
        let g =
            MixtureWorld::gaussian(vec![1.0, -2.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let d = diffuse_mixture(&g, 0, &s).unwrap();
        assert_eq!(d.score(&[1.0, -2.0]).unwrap(), vec![0.0, 0.0]);
        let sc = d.score(&[0.0, 0.0]).unwrap();
        assert!((sc[0] - 1.0).abs() < 1e-14 && (sc[1] + 2.0).abs() < 1e-14);
        let sym = diffuse_mixture(&two_equal(), 0, &s).unwrap();
        assert!(sym.score(&[0.0, 1.7]).unwrap()[0].abs() < 1e-15);
    }

    #[test]
    fn noise_prediction_examples() {
        let s = NoiseSchedule::default();
        let n = MixtureWorld::standard_normal(2);
        let z = [0.7, -1.1];
        for t in [1, 250, 1000] {
            let p = analytic_noise_prediction(&n, None, &z, t, &s).unwrap();
            let k = (1.0 - s.alpha_bar(t).unwrap()).sqrt();
            assert!((p[0] - k * z[0]).abs() < 1e-14 && (p[1] - k * z[1]).abs() < 1e-14);
        }
        let q = MixtureWorld::quadrant();
        let p0 = analytic_noise_prediction(&q, None, &[0.0, 0.0], 500, &s).unwrap();
        assert!(p0.iter().all(|x| x.abs() < 1e-14));

        // Single selected component N(μ, 0.5 I): closed form.
        let t = 300;
        let abar = s.alpha_bar(t).unwrap();
        let var = 0.5 * abar + 1.0 - abar;
        let z = [-1.0, 2.0];
        let p = analytic_noise_prediction(&q, Some("top-left"), &z, t, &s).unwrap();
        let mu = [-3.0, 3.0];
        for k in 0..2 {
            let expect = -(1.0 - abar).sqrt() * (abar.sqrt() * mu[k] - z[k]) / var;
            assert!((p[k] - expect).abs() < 1e-12);
        }
        assert!(analytic_noise_prediction(&q, Some("x"), &z, t, &s).is_err());
        assert!(analytic_noise_prediction(&q, None, &z, 0, &s).is_err());
    }

    #[test]
    fn sampling() {
        let g =
            MixtureWorld::gaussian(vec![1.5, -0.5], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let pts = sample_data(&g, None, 10_000, 3).unwrap();
        for k in 0..2 {
            let m = pts.iter().map(|p| p[k]).sum::<f64>() / pts.len() as f64;
            assert!((m - g.components()[0].mean[k]).abs() < 0.05);
        }
        assert_eq!(pts, sample_data(&g, None, 10_000, 3).unwrap());

        let q = MixtureWorld::quadrant();
        let left = sample_labeled(&q, Some("left"), 2000, 5).unwrap();
        assert!(left.iter().all(|(_, k)| *k == 0 || *k == 1));
        assert!(sample_data(&q, Some("nope"), 1, 0).is_err());
    }

    #[test]
    fn json_round_trip_and_hash() {
        let q = MixtureWorld::quadrant();
        let back = MixtureWorld::from_json(&q.to_json()).unwrap();
        assert_eq!(back, q);
        assert_eq!(back.content_hash(), q.content_hash());
        assert_ne!(MixtureWorld::correlated().content_hash(), q.content_hash());
        assert!(MixtureWorld::from_json(r#"{"components": [], "labels": {}}"#).is_err());
        assert!(MixtureWorld::from_json(
            r#"{"components": [{"weight": 1, "mean": [0], "covariance": [[1]]}], "extra": 1}"#
        )
        .is_err());
    }

    #[test]
    fn posterior_and_assignment() {
        let q = MixtureWorld::quadrant();
        let lp = q.log_posterior("left", &[-3.0, 0.5]).unwrap();
        assert!(lp.exp() > 0.999);
        // Equidistant between components 0 and 1.
        assert_eq!(q.assign(&[-3.0, 0.0]).unwrap(), 0);
        let r = q.responsibilities(&[1.0, 2.0]).unwrap();
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
