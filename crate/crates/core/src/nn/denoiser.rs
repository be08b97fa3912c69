//! A small conditional denoiser: sinusoidal time embedding, a learned
//! condition table whose row 0 is the null condition, and a SiLU MLP.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::predictor::{Conditioning, NoisePredictor};
use crate::schedule::NoiseSchedule;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub data_dim: usize,
    pub hidden: Vec<usize>,
    pub time_embed_dim: usize,
    pub cond_embed_dim: usize,
    /// Named conditions; embedding row `i + 1` belongs to `vocabulary[i]`.
    #[serde(default)]
    pub vocabulary: Vec<String>,
}

impl Architecture {
    /// Three hidden layers of 128, time embedding 32, condition embedding 16.
    pub fn default_for(data_dim: usize, vocabulary: Vec<String>) -> Self {
        Self {
            data_dim,
            hidden: vec![128, 128, 128],
            time_embed_dim: 32,
            cond_embed_dim: 16,
            vocabulary,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.data_dim == 0 {
            return Err(Error::Model("data dimension must be positive".into()));
        }
        if self.time_embed_dim == 0 || !self.time_embed_dim.is_multiple_of(2) {
            return Err(Error::Model(
                "time embedding width must be even and positive".into(),
            ));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Model("hidden widths must be positive".into()));
        }
        let mut names = self.vocabulary.clone();
        names.sort();
        names.dedup();
        if names.len() != self.vocabulary.len() {
            return Err(Error::Model("vocabulary has duplicate names".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.data_dim + self.time_embed_dim + self.cond_embed_dim
    }

    /// `(fan_out, fan_in)` of every dense layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim()];
        widths.extend(&self.hidden);
        widths.push(self.data_dim);
        widths.windows(2).map(|w| (w[1], w[0])).collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|(o, i)| o * i + o)
            .sum::<usize>()
            + self.cond_embed_dim * (self.vocabulary.len() + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Dense {
    /// `fan_out x fan_in`
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMetadata {
    pub iterations: usize,
    pub final_loss: f64,
    pub seed: u64,
    pub world_hash: String,
}

#[derive(Debug, Clone)]
pub struct Denoiser {
    pub(crate) arch: Architecture,
    pub(crate) layers: Vec<Dense>,
    /// `cond_embed_dim x (vocabulary + 1)`; column 0 is the null condition.
    pub(crate) cond_table: DMatrix<f64>,
    pub(crate) schedule: Arc<NoiseSchedule>,
    pub(crate) metadata: Option<TrainingMetadata>,
}

impl PartialEq for Denoiser {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch
            && self.layers == other.layers
            && self.cond_table == other.cond_table
            && *self.schedule == *other.schedule
            && self.metadata == other.metadata
    }
}

const MAX_PERIOD: f64 = 10_000.0;

pub(crate) fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

pub(crate) fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

/// Activations kept for backpropagation.
pub(crate) struct Trace {
    /// Input to each layer; `inputs[0]` is the assembled network input.
    pub inputs: Vec<DMatrix<f64>>,
    /// Pre-activation of each hidden layer.
    pub pre: Vec<DMatrix<f64>>,
    pub output: DMatrix<f64>,
}

impl Denoiser {
    /// Random initialization with weights `N(0, 1/fan_in)`, zero biases and
    /// `N(0, 1)` condition embeddings.
    pub fn new(arch: Architecture, schedule: Arc<NoiseSchedule>, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };
        let layers = arch
            .layer_shapes()
            .into_iter()
            .map(|(out, inp)| {
                let scale = (1.0 / inp as f64).sqrt();
                Dense {
                    weight: DMatrix::from_fn(out, inp, |_, _| scale * normal()),
                    bias: DVector::zeros(out),
                }
            })
            .collect();
        let cond_table =
            DMatrix::from_fn(arch.cond_embed_dim, arch.vocabulary.len() + 1, |_, _| {
                normal()
            });
        Ok(Self {
            arch,
            layers,
            cond_table,
            schedule,
            metadata: None,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn metadata(&self) -> Option<&TrainingMetadata> {
        self.metadata.as_ref()
    }

    pub fn num_parameters(&self) -> usize {
        self.arch.num_parameters()
    }

    /// Zeroes the output layer so every prediction is exactly zero.
    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().expect("at least one layer");
        last.weight.fill(0.0);
        last.bias.fill(0.0);
    }

    /// Sets every parameter to zero.
    pub fn zero_all(&mut self) {
        for l in &mut self.layers {
            l.weight.fill(0.0);
            l.bias.fill(0.0);
        }
        self.cond_table.fill(0.0);
    }

    /// Row of the condition table: 0 for the null condition.
    pub fn condition_row(&self, condition: Option<&str>) -> Result<usize> {
        match condition {
            None => Ok(0),
            Some(_) if self.arch.vocabulary.is_empty() => Ok(0),
            Some(c) => self
                .arch
                .vocabulary
                .iter()
                .position(|v| v == c)
                .map(|i| i + 1)
                .ok_or_else(|| Error::UnknownCondition(c.to_string())),
        }
    }

    pub(crate) fn time_embedding(&self, t: usize, out: &mut [f64]) {
        let half = self.arch.time_embed_dim / 2;
        for i in 0..half {
            let freq = (-(MAX_PERIOD.ln()) * i as f64 / half as f64).exp();
            let arg = t as f64 * freq;
            out[i] = arg.sin();
            out[half + i] = arg.cos();
        }
    }

    /// Network input columns for a batch of `(z, t, row)` triples.
    pub(crate) fn assemble(&self, z: &[Vec<f64>], t: &[usize], rows: &[usize]) -> DMatrix<f64> {
        let d = self.arch.data_dim;
        let te = self.arch.time_embed_dim;
        let mut x = DMatrix::zeros(self.arch.input_dim(), z.len());
        for (b, ((zb, &tb), &rb)) in z.iter().zip(t).zip(rows).enumerate() {
            let mut col = x.column_mut(b);
            let col = col.as_mut_slice();
            col[..d].copy_from_slice(zb);
            self.time_embedding(tb, &mut col[d..d + te]);
            col[d + te..].copy_from_slice(self.cond_table.column(rb).as_slice());
        }
        x
    }

    pub(crate) fn forward(&self, input: DMatrix<f64>) -> Trace {
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n - 1);
        let mut a = input;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut h = &layer.weight * &a;
            for mut col in h.column_iter_mut() {
                col += &layer.bias;
            }
            inputs.push(a);
            if i + 1 == n {
                return Trace {
                    inputs,
                    pre,
                    output: h,
                };
            }
            a = h.map(silu);
            pre.push(h);
        }
        unreachable!("loop returns on the last layer")
    }

    fn check_inputs(&self, z: &[f64], t: usize) -> Result<()> {
        check_dim(self.arch.data_dim, z.len())?;
        self.schedule.check_t(t, 1)
    }

    /// Batched prediction; one output vector per input.
    pub fn predict_batch(
        &self,
        z: &[Vec<f64>],
        t: &[usize],
        condition: Option<&str>,
    ) -> Result<Vec<Vec<f64>>> {
        if z.len() != t.len() {
            return Err(Error::Model("batch lengths differ".into()));
        }
        for (zb, &tb) in z.iter().zip(t) {
            self.check_inputs(zb, tb)?;
        }
        let row = self.condition_row(condition)?;
        let rows = vec![row; z.len()];
        let out = self.forward(self.assemble(z, t, &rows)).output;
        Ok(out
            .column_iter()
            .map(|c| c.iter().copied().collect())
            .collect())
    }
}

impl NoisePredictor for Denoiser {
    fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    fn dim(&self) -> usize {
        self.arch.data_dim
    }

    fn conditioning(&self) -> Conditioning {
        if self.arch.vocabulary.is_empty() {
            Conditioning::Free
        } else {
            Conditioning::Optional
        }
    }

    fn predict(&self, z: &[f64], t: usize, condition: Option<&str>) -> Result<Vec<f64>> {
        self.check_inputs(z, t)?;
        let row = self.condition_row(condition)?;
        let x = self.assemble(std::slice::from_ref(&z.to_vec()), &[t], &[row]);
        Ok(self.forward(x).output.as_slice().to_vec())
    }
}
