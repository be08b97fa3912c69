//! The noise-prediction contract shared by analytic oracles and trained
//! networks.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{check_dim, Error, Result};
use crate::schedule::NoiseSchedule;
use crate::world::{diffuse_mixture, restrict, DiffusedMixture, MixtureWorld};

/// How a predictor treats the condition slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    /// No conditional path; any condition passed in is ignored.
    Free,
    /// Unconditional when no condition is given, conditional otherwise.
    Optional,
    /// Refuses to predict without a condition.
    Required,
}

/// Given `(z, t, condition)`, predict the noise that was added to reach `z`.
pub trait NoisePredictor: Send + Sync {
    fn schedule(&self) -> &NoiseSchedule;

    fn dim(&self) -> usize;

    fn conditioning(&self) -> Conditioning;

    fn predict(&self, z: &[f64], t: usize, condition: Option<&str>) -> Result<Vec<f64>>;
}

impl fmt::Debug for dyn NoisePredictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NoisePredictor")
            .field("dim", &self.dim())
            .field("conditioning", &self.conditioning())
            .finish()
    }
}

/// Closed-form predictor over a mixture world. Diffused marginals are built
/// lazily per `(condition, t)` and cached.
pub struct AnalyticPredictor {
    world: Arc<MixtureWorld>,
    schedule: Arc<NoiseSchedule>,
    cache: HashMap<Option<String>, (MixtureWorld, Vec<OnceLock<DiffusedMixture>>)>,
}

impl AnalyticPredictor {
    pub fn new(world: Arc<MixtureWorld>, schedule: Arc<NoiseSchedule>) -> Self {
        let steps = schedule.num_steps();
        let slots = || (0..=steps).map(|_| OnceLock::new()).collect::<Vec<_>>();
        let mut cache = HashMap::new();
        cache.insert(None, ((*world).clone(), slots()));
        for name in world.labels().keys() {
            let sub = restrict(&world, name).expect("label exists");
            cache.insert(Some(name.clone()), (sub, slots()));
        }
        Self {
            world,
            schedule,
            cache,
        }
    }

    pub fn world(&self) -> &MixtureWorld {
        &self.world
    }

    /// Diffused (restricted) marginal at `t`.
    pub fn marginal(&self, condition: Option<&str>, t: usize) -> Result<&DiffusedMixture> {
        self.schedule.check_t(t, 0)?;
        let key = condition.map(str::to_string);
        let (sub, slots) = self
            .cache
            .get(&key)
            .ok_or_else(|| Error::UnknownCondition(condition.unwrap_or_default().to_string()))?;
        if let Some(m) = slots[t].get() {
            return Ok(m);
        }
        let m = diffuse_mixture(sub, t, &self.schedule)?;
        Ok(slots[t].get_or_init(|| m))
    }
}

impl NoisePredictor for AnalyticPredictor {
    fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    fn dim(&self) -> usize {
        self.world.dim()
    }

    fn conditioning(&self) -> Conditioning {
        Conditioning::Optional
    }

    fn predict(&self, z: &[f64], t: usize, condition: Option<&str>) -> Result<Vec<f64>> {
        self.schedule.check_t(t, 1)?;
        check_dim(self.dim(), z.len())?;
        let s = (1.0 - self.schedule.alpha_bar(t)?).sqrt();
        let score = self.marginal(condition, t)?.score(z)?;
        Ok(score.into_iter().map(|g| -s * g).collect())
    }
}

/// Returns fixed vectors regardless of `z` and `t`; useful for checking
/// fusion algebra in isolation.
pub struct ConstantPredictor {
    schedule: Arc<NoiseSchedule>,
    unconditional: Vec<f64>,
    conditional: BTreeMap<String, Vec<f64>>,
    conditioning: Conditioning,
}

impl ConstantPredictor {
    pub fn new(schedule: Arc<NoiseSchedule>, unconditional: Vec<f64>) -> Self {
        Self {
            schedule,
            unconditional,
            conditional: BTreeMap::new(),
            conditioning: Conditioning::Free,
        }
    }

    pub fn with_condition(mut self, name: &str, value: Vec<f64>) -> Self {
        assert_eq!(value.len(), self.unconditional.len());
        self.conditional.insert(name.to_string(), value);
        self.conditioning = Conditioning::Optional;
        self
    }

    pub fn requiring_condition(mut self) -> Self {
        self.conditioning = Conditioning::Required;
        self
    }
}

impl NoisePredictor for ConstantPredictor {
    fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    fn dim(&self) -> usize {
        self.unconditional.len()
    }

    fn conditioning(&self) -> Conditioning {
        self.conditioning
    }

    fn predict(&self, z: &[f64], t: usize, condition: Option<&str>) -> Result<Vec<f64>> {
        self.schedule.check_t(t, 1)?;
        check_dim(self.dim(), z.len())?;
        match (self.conditioning, condition) {
            (Conditioning::Free, _) | (Conditioning::Optional, None) => {
                Ok(self.unconditional.clone())
            }
            (Conditioning::Required, None) => Err(Error::ConditionRequired),
            (_, Some(c)) => self
                .conditional
                .get(c)
                .cloned()
                .ok_or_else(|| Error::UnknownCondition(c.to_string())),
        }
    }
}
