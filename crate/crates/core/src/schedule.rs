//! Discrete forward-diffusion coefficients.
//!
//! Timestep `0` is clean data with `alpha_bar(0) == 1`; model-facing
//! timesteps run over `1..=T`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Linear,
    Cosine,
}

/// Parameters a schedule is built from; this is what configs and checkpoints store.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    pub num_steps: usize,
    #[serde(default = "default_beta_start")]
    pub beta_start: f64,
    #[serde(default = "default_beta_end")]
    pub beta_end: f64,
}

fn default_beta_start() -> f64 {
    1e-4
}

fn default_beta_end() -> f64 {
    0.02
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::Linear,
            num_steps: 1000,
            beta_start: default_beta_start(),
            beta_end: default_beta_end(),
        }
    }
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<NoiseSchedule> {
        make_schedule(self.kind, self.num_steps, self.beta_start, self.beta_end)
    }
}

#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    spec: ScheduleSpec,
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl PartialEq for NoiseSchedule {
    fn eq(&self, other: &Self) -> bool {
        self.betas == other.betas
    }
}

const COSINE_OFFSET: f64 = 0.008;
const COSINE_MAX_BETA: f64 = 0.999;

pub fn make_schedule(
    kind: ScheduleKind,
    num_steps: usize,
    beta_start: f64,
    beta_end: f64,
) -> Result<NoiseSchedule> {
    if num_steps == 0 {
        return Err(Error::Schedule("number of steps must be positive".into()));
    }
    let betas: Vec<f64> = match kind {
        ScheduleKind::Linear => {
            if !(beta_start > 0.0 && beta_start < 1.0 && beta_end > 0.0 && beta_end < 1.0) {
                return Err(Error::Schedule(format!(
                    "betas must lie in (0, 1), got {beta_start} and {beta_end}"
                )));
            }
            if beta_start > beta_end {
                return Err(Error::Schedule(format!(
                    "beta_start {beta_start} exceeds beta_end {beta_end}"
                )));
            }
            if num_steps == 1 {
                vec![beta_start]
            } else {
                let step = (beta_end - beta_start) / (num_steps - 1) as f64;
                (0..num_steps)
                    .map(|i| beta_start + step * i as f64)
                    .collect()
            }
        }
        ScheduleKind::Cosine => {
            let f = |t: f64| {
                let x = (t / num_steps as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET);
                (x * std::f64::consts::FRAC_PI_2).cos().powi(2)
            };
            (1..=num_steps)
                .map(|t| (1.0 - f(t as f64) / f((t - 1) as f64)).clamp(1e-8, COSINE_MAX_BETA))
                .collect()
        }
    };
    let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
    let alpha_bars: Vec<f64> = alphas
        .iter()
        .scan(1.0, |acc, a| {
            *acc *= a;
            Some(*acc)
        })
        .collect();
    Ok(NoiseSchedule {
        spec: ScheduleSpec {
            kind,
            num_steps,
            beta_start,
            beta_end,
        },
        betas,
        alphas,
        alpha_bars,
    })
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        ScheduleSpec::default()
            .build()
            .expect("default schedule is valid")
    }
}

impl NoiseSchedule {
    pub fn spec(&self) -> &ScheduleSpec {
        &self.spec
    }

    pub fn num_steps(&self) -> usize {
        self.betas.len()
    }

    /// `betas[i]` belongs to timestep `i + 1`; likewise for the other arrays.
    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// Cumulative retention at timestep `t` in `0..=T`.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.check_t(t, 0)?;
        Ok(if t == 0 { 1.0 } else { self.alpha_bars[t - 1] })
    }

    pub fn check_t(&self, t: usize, min: usize) -> Result<()> {
        if t < min || t > self.num_steps() {
            Err(Error::TimestepOutOfRange {
                t,
                min,
                max: self.num_steps(),
            })
        } else {
            Ok(())
        }
    }
}

/// Noised point `z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) noise`.
pub fn forward_diffuse(
    z0: &[f64],
    t: usize,
    noise: &[f64],
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    check_dim(z0.len(), noise.len())?;
    let abar = schedule.alpha_bar(t)?;
    let (a, s) = (abar.sqrt(), (1.0 - abar).sqrt());
    Ok(z0.iter().zip(noise).map(|(x, e)| a * x + s * e).collect())
}

/// A point together with the timestep it lives at.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub point: Vec<f64>,
    pub time_index: usize,
}

impl Sample {
    pub fn clean(point: Vec<f64>) -> Self {
        Self {
            point,
            time_index: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.point.len()
    }

    /// Noises a clean sample forward to `t`.
    pub fn diffuse(&self, t: usize, noise: &[f64], schedule: &NoiseSchedule) -> Result<Sample> {
        if self.time_index != 0 {
            return Err(Error::Schedule(
                "only clean samples can be diffused forward".into(),
            ));
        }
        Ok(Sample {
            point: forward_diffuse(&self.point, t, noise, schedule)?,
            time_index: t,
        })
    }
}
