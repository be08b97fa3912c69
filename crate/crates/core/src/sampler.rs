//! Reverse-process samplers: ancestral (DDPM posterior) and DDIM.
//!
//! Both run over a strided timestep grid and consume any noise-prediction
//! function, so a single predictor and a fused [`GuidanceStack`] are
//! interchangeable. Every random draw comes from a stream keyed by
//! `(seed, chain, slot)`, which makes parallel and sequential runs
//! bit-identical.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::guidance::GuidanceStack;
use crate::par::{self, Execution};
use crate::rng;
use crate::schedule::NoiseSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Ancestral,
    Ddim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub num_inference_steps: usize,
    #[serde(default)]
    pub eta: f64,
    #[serde(default)]
    pub seed: u64,
    pub batch: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            kind: SamplerKind::Ddim,
            num_inference_steps: 50,
            eta: 0.0,
            seed: 0,
            batch: 1000,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self, schedule: &NoiseSchedule) -> Result<()> {
        if self.num_inference_steps == 0 || self.num_inference_steps > schedule.num_steps() {
            return Err(Error::Sampler(format!(
                "num_inference_steps must be in 1..={}, got {}",
                schedule.num_steps(),
                self.num_inference_steps
            )));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::Sampler(format!(
                "eta must be in [0, 1], got {}",
                self.eta
            )));
        }
        if self.batch == 0 {
            return Err(Error::Sampler("batch must be at least 1".into()));
        }
        Ok(())
    }
}

/// Evenly spaced timesteps `⌊i T / n⌋` for `i = n..1`, strictly decreasing
/// and starting at `T`. The implicit final target is timestep 0.
pub fn timestep_grid(num_train_steps: usize, n: usize) -> Result<Vec<usize>> {
    if n == 0 || n > num_train_steps {
        return Err(Error::Sampler(format!(
            "cannot take {n} inference steps over {num_train_steps} training steps"
        )));
    }
    Ok((1..=n).rev().map(|i| i * num_train_steps / n).collect())
}

struct StepCoefficients {
    abar_t: f64,
    abar_prev: f64,
}

fn coefficients(t: usize, t_prev: usize, schedule: &NoiseSchedule) -> Result<StepCoefficients> {
    if t <= t_prev {
        return Err(Error::Sampler(format!(
            "step must move backwards in time, got {t} -> {t_prev}"
        )));
    }
    let abar_t = schedule.alpha_bar(t)?;
    let abar_prev = schedule.alpha_bar(t_prev)?;
    if abar_t <= 0.0 {
        return Err(Error::Sampler(format!("alpha_bar vanishes at t = {t}")));
    }
    Ok(StepCoefficients { abar_t, abar_prev })
}

fn predicted_clean(z: &[f64], eps: &[f64], abar_t: f64) -> Vec<f64> {
    let (a, s) = (abar_t.sqrt(), (1.0 - abar_t).sqrt());
    z.iter().zip(eps).map(|(x, e)| (x - s * e) / a).collect()
}

/// One DDPM posterior step from `t` to `t_prev`, using the strided retention
/// `abar_t / abar_prev`. No noise is added when `t_prev == 0`.
pub fn ancestral_step(
    z: &[f64],
    t: usize,
    t_prev: usize,
    eps: &[f64],
    noise: &[f64],
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    check_dim(z.len(), eps.len())?;
    check_dim(z.len(), noise.len())?;
    let StepCoefficients { abar_t, abar_prev } = coefficients(t, t_prev, schedule)?;
    let x0 = predicted_clean(z, eps, abar_t);
    let alpha = abar_t / abar_prev;
    let beta = 1.0 - alpha;
    let c0 = abar_prev.sqrt() * beta / (1.0 - abar_t);
    let ct = alpha.sqrt() * (1.0 - abar_prev) / (1.0 - abar_t);
    let sigma = if t_prev == 0 {
        0.0
    } else {
        ((1.0 - abar_prev) / (1.0 - abar_t) * beta).sqrt()
    };
    Ok(x0
        .iter()
        .zip(z)
        .zip(noise)
        .map(|((x0, zt), n)| c0 * x0 + ct * zt + sigma * n)
        .collect())
}

/// One DDIM step; `eta = 0` is deterministic and `eta = 1` matches the
/// ancestral posterior variance.
pub fn ddim_step(
    z: &[f64],
    t: usize,
    t_prev: usize,
    eps: &[f64],
    eta: f64,
    noise: &[f64],
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    check_dim(z.len(), eps.len())?;
    check_dim(z.len(), noise.len())?;
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Sampler(format!("eta must be in [0, 1], got {eta}")));
    }
    let StepCoefficients { abar_t, abar_prev } = coefficients(t, t_prev, schedule)?;
    let x0 = predicted_clean(z, eps, abar_t);
    let sigma =
        eta * ((1.0 - abar_prev) / (1.0 - abar_t)).sqrt() * (1.0 - abar_t / abar_prev).sqrt();
    let dir = (1.0 - abar_prev - sigma * sigma).max(0.0).sqrt();
    let a = abar_prev.sqrt();
    Ok(x0
        .iter()
        .zip(eps)
        .zip(noise)
        .map(|((x0, e), n)| a * x0 + dir * e + sigma * n)
        .collect())
}

/// Runs `config.batch` independent chains from `N(0, I)` to timestep 0.
pub fn generate<F>(
    predict: &F,
    schedule: &NoiseSchedule,
    config: &SamplerConfig,
    dim: usize,
) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64], usize) -> Result<Vec<f64>> + Sync,
{
    generate_with(predict, schedule, config, dim, Execution::default())
}

pub fn generate_with<F>(
    predict: &F,
    schedule: &NoiseSchedule,
    config: &SamplerConfig,
    dim: usize,
    exec: Execution,
) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64], usize) -> Result<Vec<f64>> + Sync,
{
    config.validate(schedule)?;
    let grid = timestep_grid(schedule.num_steps(), config.num_inference_steps)?;
    par::try_map_range(config.batch, exec, |chain| {
        run_chain(predict, schedule, config, &grid, dim, chain)
    })
}

fn run_chain<F>(
    predict: &F,
    schedule: &NoiseSchedule,
    config: &SamplerConfig,
    grid: &[usize],
    dim: usize,
    chain: usize,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64], usize) -> Result<Vec<f64>> + Sync,
{
    let chain_key = chain as u64;
    let mut z = rng::normal_vector(config.seed, &[chain_key, 0], dim);
    let zeros = vec![0.0; dim];
    for (step, &t) in grid.iter().enumerate() {
        let t_prev = grid.get(step + 1).copied().unwrap_or(0);
        let eps = predict(&z, t).map_err(|e| Error::Sampling {
            chain,
            step,
            source: Box::new(e),
        })?;
        let stochastic = t_prev > 0
            && match config.kind {
                SamplerKind::Ancestral => true,
                SamplerKind::Ddim => config.eta > 0.0,
            };
        let noise = if stochastic {
            rng::normal_vector(config.seed, &[chain_key, step as u64 + 1], dim)
        } else {
            zeros.clone()
        };
        z = match config.kind {
            SamplerKind::Ancestral => ancestral_step(&z, t, t_prev, &eps, &noise, schedule)?,
            SamplerKind::Ddim => ddim_step(&z, t, t_prev, &eps, config.eta, &noise, schedule)?,
        };
    }
    Ok(z)
}

/// Samples a guidance stack.
pub fn generate_stack(stack: &GuidanceStack, config: &SamplerConfig) -> Result<Vec<Vec<f64>>> {
    generate_stack_with(stack, config, Execution::default())
}

pub fn generate_stack_with(
    stack: &GuidanceStack,
    config: &SamplerConfig,
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    generate_with(
        &|z: &[f64], t: usize| stack.compose(z, t),
        stack.schedule(),
        config,
        stack.dim(),
        exec,
    )
}
