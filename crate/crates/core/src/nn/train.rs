//! Noise-prediction training, backpropagation and the finite-difference
//! gradient check.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::denoiser::{silu_grad, Denoiser, TrainingMetadata};
use crate::error::{Error, Result};
use crate::schedule::forward_diffuse;
use crate::world::{restrict, MixtureWorld, WorldSampler};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerKind {
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// What the model sees during training. Data come from the world restricted
/// to `restrict` (if set). Each example is assigned uniformly to the null
/// condition or one of `labels`; labeled examples are drawn from that label's
/// components and fed through that label's embedding row.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    #[serde(default)]
    pub restrict: Option<String>,
    #[serde(default)]
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub dataset: DatasetSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 256,
            iterations: 20_000,
            seed: 0,
            optimizer: OptimizerKind::default(),
            dataset: DatasetSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::TrainConfig(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.iterations == 0 {
            return Err(Error::TrainConfig(
                "batch size and iteration count must be positive".into(),
            ));
        }
        if let OptimizerKind::Adam {
            beta1,
            beta2,
            epsilon,
        } = self.optimizer
        {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(epsilon > 0.0) {
                return Err(Error::TrainConfig("invalid Adam hyperparameters".into()));
            }
        }
        Ok(())
    }
}

/// Parameter gradients laid out like [`Denoiser::param_slices_mut`].
pub(crate) type Grads = Vec<Vec<f64>>;

impl Denoiser {
    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let Denoiser {
            layers, cond_table, ..
        } = self;
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(2 * layers.len() + 1);
        for l in layers.iter_mut() {
            out.push(l.weight.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        out.push(cond_table.as_mut_slice());
        out
    }

    pub(crate) fn param_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(2 * self.layers.len() + 1);
        for l in &self.layers {
            out.push(l.weight.as_slice());
            out.push(l.bias.as_slice());
        }
        out.push(self.cond_table.as_slice());
        out
    }
}

/// A fixed batch of `(z_t, t, condition, target noise)` examples.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeBatch {
    pub z: Vec<Vec<f64>>,
    pub t: Vec<usize>,
    pub rows: Vec<usize>,
    pub targets: Vec<Vec<f64>>,
}

impl ProbeBatch {
    /// Random inputs, timesteps, condition rows and targets for `model`.
    pub fn random(model: &Denoiser, n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = model.arch.data_dim;
        let rows_available = model.arch.vocabulary.len() + 1;
        let normal = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..d).map(|_| StandardNormal.sample(rng)).collect()
        };
        let mut batch = ProbeBatch {
            z: Vec::new(),
            t: Vec::new(),
            rows: Vec::new(),
            targets: Vec::new(),
        };
        for _ in 0..n {
            batch.z.push(normal(&mut rng));
            batch.targets.push(normal(&mut rng));
            batch
                .t
                .push(rng.random_range(1..=model.schedule.num_steps()));
            batch.rows.push(rng.random_range(0..rows_available));
        }
        batch
    }

    fn targets_matrix(&self, d: usize) -> DMatrix<f64> {
        DMatrix::from_fn(d, self.targets.len(), |i, b| self.targets[b][i])
    }
}

/// Mean over the batch of `‖target − prediction‖²`, and its gradient.
pub(crate) fn loss_and_grads(model: &Denoiser, batch: &ProbeBatch) -> (f64, Grads) {
    let d = model.arch.data_dim;
    let n = batch.z.len() as f64;
    let trace = model.forward(model.assemble(&batch.z, &batch.t, &batch.rows));
    let diff = &trace.output - batch.targets_matrix(d);
    let loss = diff.norm_squared() / n;

    let layers = model.layers.len();
    let mut grads: Grads = vec![Vec::new(); 2 * layers + 1];
    let mut delta = diff * (2.0 / n);
    for l in (0..layers).rev() {
        let gw = &delta * trace.inputs[l].transpose();
        let gb: Vec<f64> = delta.row_iter().map(|r| r.sum()).collect();
        grads[2 * l] = gw.as_slice().to_vec();
        grads[2 * l + 1] = gb;
        let back = model.layers[l].weight.transpose() * &delta;
        if l > 0 {
            delta = back.zip_map(&trace.pre[l - 1], |g, p| g * silu_grad(p));
        } else {
            let offset = d + model.arch.time_embed_dim;
            let mut gc = DMatrix::zeros(model.cond_table.nrows(), model.cond_table.ncols());
            for (b, &row) in batch.rows.iter().enumerate() {
                for k in 0..model.arch.cond_embed_dim {
                    gc[(k, row)] += back[(offset + k, b)];
                }
            }
            grads[2 * layers] = gc.as_slice().to_vec();
        }
    }
    (loss, grads)
}

pub fn batch_loss(model: &Denoiser, batch: &ProbeBatch) -> f64 {
    let d = model.arch.data_dim;
    let trace = model.forward(model.assemble(&batch.z, &batch.t, &batch.rows));
    (&trace.output - batch.targets_matrix(d)).norm_squared() / batch.z.len() as f64
}

const FD_STEP: f64 = 1e-5;
const FD_PARAMS: usize = 100;
/// Gradients smaller than this are compared in absolute terms.
const FD_FLOOR: f64 = 1e-6;

/// Largest relative disagreement between backpropagated gradients and
/// central differences over 100 randomly chosen parameters.
pub fn gradient_check(model: &Denoiser, batch: &ProbeBatch, seed: u64) -> f64 {
    let (_, grads) = loss_and_grads(model, batch);
    let sizes: Vec<usize> = grads.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for _ in 0..FD_PARAMS.min(total) {
        let mut flat = rng.random_range(0..total);
        let mut slot = 0;
        while flat >= sizes[slot] {
            flat -= sizes[slot];
            slot += 1;
        }
        let original = model.param_slices()[slot][flat];
        probe.param_slices_mut()[slot][flat] = original + FD_STEP;
        let up = batch_loss(&probe, batch);
        probe.param_slices_mut()[slot][flat] = original - FD_STEP;
        let down = batch_loss(&probe, batch);
        probe.param_slices_mut()[slot][flat] = original;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let analytic = grads[slot][flat];
        let denom = analytic.abs().max(numeric.abs()).max(FD_FLOOR);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    worst
}

struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: Grads,
    v: Grads,
    step: i32,
}

impl Optimizer {
    fn new(kind: OptimizerKind, lr: f64, model: &Denoiser) -> Self {
        let zeros: Grads = model
            .param_slices()
            .iter()
            .map(|s| vec![0.0; s.len()])
            .collect();
        Self {
            kind,
            lr,
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    fn apply(&mut self, params: Vec<&mut [f64]>, grads: &Grads) {
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.into_iter().zip(grads) {
                    for (pi, gi) in p.iter_mut().zip(g) {
                        *pi -= self.lr * gi;
                    }
                }
            }
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                let c1 = 1.0 - beta1.powi(self.step);
                let c2 = 1.0 - beta2.powi(self.step);
                for (((p, g), m), v) in params
                    .into_iter()
                    .zip(grads)
                    .zip(&mut self.m)
                    .zip(&mut self.v)
                {
                    for i in 0..p.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        let mh = m[i] / c1;
                        let vh = v[i] / c2;
                        p[i] -= self.lr * mh / (vh.sqrt() + epsilon);
                    }
                }
            }
        }
    }
}

/// Trained model together with the per-iteration loss curve.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Denoiser,
    pub losses: Vec<f64>,
}

/// Minimizes `E‖ε − model(sqrt(abar_t) z0 + sqrt(1 − abar_t) ε, t, c)‖²`.
/// Deterministic for a fixed config; continuing from a trained model
/// (fine-tuning) accumulates the iteration count in the metadata.
pub fn train(model: Denoiser, world: &MixtureWorld, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if world.dim() != model.arch.data_dim {
        return Err(Error::TrainConfig(format!(
            "world has dimension {}, model expects {}",
            world.dim(),
            model.arch.data_dim
        )));
    }
    let data = Arc::new(match &config.dataset.restrict {
        Some(c) => restrict(world, c)?,
        None => world.clone(),
    });
    let mut samplers = vec![(0usize, WorldSampler::new(data.clone(), None)?)];
    for label in &config.dataset.labels {
        let row = model.condition_row(Some(label))?;
        if row == 0 {
            return Err(Error::TrainConfig(format!(
                "label `{label}` needs a conditional model, but the vocabulary is empty"
            )));
        }
        samplers.push((row, WorldSampler::new(data.clone(), Some(label))?));
    }

    let mut model = model;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, &model);
    let schedule = model.schedule.clone();
    let d = model.arch.data_dim;
    let mut losses = Vec::with_capacity(config.iterations);
    for iteration in 0..config.iterations {
        let mut batch = ProbeBatch {
            z: Vec::with_capacity(config.batch_size),
            t: Vec::with_capacity(config.batch_size),
            rows: Vec::with_capacity(config.batch_size),
            targets: Vec::with_capacity(config.batch_size),
        };
        for _ in 0..config.batch_size {
            let (row, sampler) = &samplers[rng.random_range(0..samplers.len())];
            let z0 = sampler.draw(&mut rng);
            let t = rng.random_range(1..=schedule.num_steps());
            let eps: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            batch.z.push(forward_diffuse(&z0, t, &eps, &schedule)?);
            batch.t.push(t);
            batch.rows.push(*row);
            batch.targets.push(eps);
        }
        let (loss, grads) = loss_and_grads(&model, &batch);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { iteration });
        }
        losses.push(loss);
        opt.apply(model.param_slices_mut(), &grads);
    }
    let previous = model.metadata.as_ref().map_or(0, |m| m.iterations);
    model.metadata = Some(TrainingMetadata {
        iterations: previous + config.iterations,
        final_loss: *losses.last().expect("at least one iteration"),
        seed: config.seed,
        world_hash: data.content_hash(),
    });
    Ok(TrainOutcome { model, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Architecture;
    use crate::schedule::NoiseSchedule;

    fn small(vocab: &[&str], seed: u64) -> Denoiser {
        let arch = Architecture {
            data_dim: 2,
            hidden: vec![16, 16],
            time_embed_dim: 8,
            cond_embed_dim: 4,
            vocabulary: vocab.iter().map(|s| s.to_string()).collect(),
        };
        Denoiser::new(arch, Arc::new(NoiseSchedule::default()), seed).unwrap()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = small(&["left", "top"], 3);
        let probe = ProbeBatch::random(&m, 8, 4);
        let err = gradient_check(&m, &probe, 5);
        assert!(err < 1e-4, "{err}");
        assert_eq!(err, gradient_check(&m, &probe, 5));
    }

    #[test]
    fn default_architecture_gradient_check() {
        let arch = Architecture::default_for(2, vec!["a".into()]);
        let m = Denoiser::new(arch, Arc::new(NoiseSchedule::default()), 11).unwrap();
        let probe = ProbeBatch::random(&m, 16, 12);
        assert!(gradient_check(&m, &probe, 13) < 1e-4);
    }

    #[test]
    fn zero_model_has_zero_gradient() {
        let mut m = small(&[], 1);
        m.zero_all();
        let mut probe = ProbeBatch::random(&m, 4, 2);
        for t in &mut probe.targets {
            t.fill(0.0);
        }
        let (loss, grads) = loss_and_grads(&m, &probe);
        assert_eq!(loss, 0.0);
        assert!(grads.iter().flatten().all(|g| *g == 0.0));
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let m = small(&[], 7);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            batch_size: 32,
            iterations: 200,
            ..Default::default()
        };
        let out = train(m.clone(), &MixtureWorld::standard_normal(2), &cfg).unwrap();
        assert_eq!(out.model.layers, m.layers);
        assert_eq!(out.model.cond_table, m.cond_table);
        let head: f64 = out.losses[..100].iter().sum::<f64>() / 100.0;
        let tail: f64 = out.losses[100..].iter().sum::<f64>() / 100.0;
        assert!((head - tail).abs() / head < 0.2);
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let cfg = TrainConfig {
            batch_size: 64,
            iterations: 400,
            seed: 5,
            ..Default::default()
        };
        let w = MixtureWorld::quadrant();
        let a = train(small(&[], 1), &w, &cfg).unwrap();
        let b = train(small(&[], 1), &w, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.losses, b.losses);
        let head: f64 = a.losses[..10].iter().sum::<f64>() / 10.0;
        let tail: f64 = a.losses[390..].iter().sum::<f64>() / 10.0;
        assert!(tail < 0.75 * head, "{head} -> {tail}");
        let meta = a.model.metadata().unwrap();
        assert_eq!(meta.iterations, 400);
        assert_eq!(meta.world_hash, w.content_hash());
    }

    #[test]
    fn config_and_label_errors() {
        let w = MixtureWorld::quadrant();
        let bad = TrainConfig {
            batch_size: 0,
            ..Default::default()
        };
        assert!(train(small(&[], 1), &w, &bad).is_err());
        let labels = TrainConfig {
            iterations: 1,
            dataset: DatasetSpec {
                restrict: None,
                labels: vec!["left".into()],
            },
            ..Default::default()
        };
        assert!(train(small(&[], 1), &w, &labels).is_err());
        assert!(train(small(&["right"], 1), &w, &labels).is_err());
        assert!(train(small(&["left"], 1), &w, &labels).is_ok());
        let explode = TrainConfig {
            learning_rate: 1e6,
            optimizer: OptimizerKind::Sgd,
            batch_size: 16,
            iterations: 50,
            ..Default::default()
        };
        match train(small(&[], 1), &w, &explode) {
            Err(Error::NonFiniteLoss { iteration }) => assert!(iteration > 0),
            other => panic!("expected divergence, got {:?}", other.map(|o| o.losses)),
        }
    }
}
