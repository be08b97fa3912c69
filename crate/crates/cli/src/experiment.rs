//! Turning a validated config into predictors, samples and metric rows.

use std::collections::BTreeMap;
use std::sync::Arc;

use gcfg::nn::{self, Architecture, Denoiser, TrainConfig};
use gcfg::rng::derive_seed;
use gcfg::sampler::generate_stack;
use gcfg::{
    AnalyticPredictor, GuidanceStack, GuidanceTerm, MixtureWorld, NoisePredictor, NoiseSchedule,
};
use serde::Serialize;

use crate::config::{ExperimentConfig, NamedSource, PredictorDecl, SourceDecl, StackDecl};
use crate::error::Result;
use crate::measure::{evaluate, MetricRow};

/// Seed domains under the global seed.
const INIT: u64 = 1;
const TRAIN: u64 = 2;
const SOURCE: u64 = 3;
const METRIC: u64 = 4;
const CELL: u64 = 5;

pub(crate) struct Trained {
    pub model: Arc<Denoiser>,
    /// The model before this experiment's training started.
    pub initial: Denoiser,
    pub config: TrainConfig,
    pub losses: Vec<f64>,
    /// Clean data the model was fit to (restriction applied).
    pub data: MixtureWorld,
    pub source_world: MixtureWorld,
}

pub(crate) struct Resolved {
    pub predictor: Arc<dyn NoisePredictor>,
    pub network: Option<Arc<Denoiser>>,
    pub trained: Option<Trained>,
}

/// Every seed used by a run, recorded in the manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Seeds {
    pub global: u64,
    pub init: BTreeMap<String, u64>,
    pub training: BTreeMap<String, u64>,
    pub sources: BTreeMap<String, u64>,
    pub metrics: BTreeMap<String, u64>,
    /// Sweep cells, keyed `w1,w2`.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub cells: BTreeMap<String, u64>,
}

/// An experiment whose predictors are trained or loaded and ready to sample.
pub struct Prepared {
    pub(crate) config: ExperimentConfig,
    pub(crate) world: Arc<MixtureWorld>,
    pub(crate) schedule: Arc<NoiseSchedule>,
    pub(crate) predictors: BTreeMap<String, Resolved>,
    pub(crate) seeds: Seeds,
}

/// Samples drawn for one metric source.
pub(crate) struct SourceSamples {
    pub points: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub samples: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub metrics: Vec<MetricRow>,
    pub seeds: Seeds,
}

impl RunOutcome {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|r| r.metric == name)
            .map(|r| r.value)
    }
}

impl Prepared {
    /// Validates `config`, then builds, loads and trains its predictors.
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let world = Arc::new(config.world.build()?);
        let schedule = Arc::new(config.schedule.build()?);
        let mut seeds = Seeds {
            global: config.seed,
            ..Seeds::default()
        };
        let ids: Vec<String> = config.predictors.keys().cloned().collect();
        let mut predictors: BTreeMap<String, Resolved> = BTreeMap::new();
        // validation rules out cycles, so repeated passes terminate
        while predictors.len() < ids.len() {
            for (index, id) in ids.iter().enumerate() {
                if predictors.contains_key(id) {
                    continue;
                }
                let decl = &config.predictors[id];
                if let PredictorDecl::Train(t) = decl {
                    if t.init_from
                        .as_ref()
                        .is_some_and(|p| !predictors.contains_key(p))
                    {
                        continue;
                    }
                }
                let resolved = resolve(
                    id,
                    index as u64,
                    decl,
                    &world,
                    &schedule,
                    &predictors,
                    &mut seeds,
                    &config,
                )?;
                predictors.insert(id.clone(), resolved);
            }
        }
        Ok(Self {
            config,
            world,
            schedule,
            predictors,
            seeds,
        })
    }

    /// Seeds fixed while preparing: initialization and training.
    pub fn seeds(&self) -> &Seeds {
        &self.seeds
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn world(&self) -> &MixtureWorld {
        &self.world
    }

    /// Networks trained in this experiment, by predictor id.
    pub fn trained_models(&self) -> BTreeMap<&str, &Denoiser> {
        self.predictors
            .iter()
            .filter_map(|(id, r)| r.trained.as_ref().map(|t| (id.as_str(), t.model.as_ref())))
            .collect()
    }

    pub(crate) fn stack(&self, decl: &StackDecl, weights: Option<&[f64]>) -> Result<GuidanceStack> {
        let base = self.predictors[&decl.base].predictor.clone();
        let terms = decl
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let w = weights.and_then(|w| w.get(i).copied()).unwrap_or(t.weight);
                GuidanceTerm::new(
                    self.predictors[&t.predictor].predictor.clone(),
                    t.condition.as_deref(),
                    w,
                )
            })
            .collect();
        Ok(GuidanceStack::new(base, terms)?)
    }

    fn source_stack(&self, source: &SourceDecl, weights: Option<&[f64]>) -> Result<GuidanceStack> {
        let main = self
            .config
            .stack
            .as_ref()
            .expect("validated: sources need a stack");
        match source {
            SourceDecl::Named(NamedSource::Main) => self.stack(main, weights),
            SourceDecl::Named(NamedSource::Base) => self.stack(
                &StackDecl {
                    base: main.base.clone(),
                    terms: Vec::new(),
                },
                None,
            ),
            SourceDecl::Stack { stack } => self.stack(stack, None),
        }
    }

    /// Distinct sources in order of first use; the main stack comes first.
    fn sources(&self) -> Vec<SourceDecl> {
        let mut out: Vec<SourceDecl> = Vec::new();
        let mut add = |s: &SourceDecl| {
            if !out.contains(s) {
                out.push(s.clone());
            }
        };
        if self.config.stack.is_some() {
            add(&SourceDecl::default());
        }
        for m in &self.config.metrics {
            if let Some(s) = m.source() {
                add(s);
            }
            if let crate::config::MetricDecl::Support { reference, .. } = m {
                add(reference);
            }
        }
        out
    }

    fn sample(
        &self,
        source: &SourceDecl,
        seed: u64,
        weights: Option<&[f64]>,
    ) -> Result<Vec<Vec<f64>>> {
        let stack = self.source_stack(source, weights)?;
        Ok(generate_stack(
            &stack,
            &self.config.sampler.with_seed(seed),
        )?)
    }

    /// Samples every source and evaluates every metric.
    pub fn execute(&self) -> Result<RunOutcome> {
        let mut seeds = self.seeds.clone();
        let g = self.config.seed;
        let mut drawn: Vec<(SourceDecl, SourceSamples)> = Vec::new();
        for (k, source) in self.sources().into_iter().enumerate() {
            let seed = derive_seed(g, &[SOURCE, k as u64]);
            seeds.sources.insert(source_label(&source, k), seed);
            let points = self.sample(&source, seed, None)?;
            drawn.push((source, SourceSamples { points }));
        }
        let lookup = |s: &SourceDecl| -> &SourceSamples {
            &drawn
                .iter()
                .find(|(d, _)| d == s)
                .expect("every source is drawn")
                .1
        };
        let mut metrics = Vec::new();
        for (j, m) in self.config.metrics.iter().enumerate() {
            let seed = derive_seed(g, &[METRIC, j as u64]);
            seeds.metrics.insert(format!("metrics[{j}]"), seed);
            metrics.extend(evaluate(self, m, &lookup, seed)?);
        }
        let samples = if self.config.stack.is_some() {
            lookup(&SourceDecl::default()).points.clone()
        } else {
            Vec::new()
        };
        let assignments = if samples.is_empty() {
            Vec::new()
        } else {
            gcfg::metrics::assignments(&samples, &self.world)?
        };
        Ok(RunOutcome {
            samples,
            assignments,
            metrics,
            seeds,
        })
    }

    /// Main-stack metrics for one sweep cell with the first two term weights
    /// replaced. Metrics on other sources and grid metrics are skipped.
    pub fn execute_cell(&self, weights: &[f64], cell: (u64, u64)) -> Result<Vec<MetricRow>> {
        let seed = self.cell_seed(cell);
        let main = SourceDecl::default();
        let samples = SourceSamples {
            points: self.sample(&main, seed, Some(weights))?,
        };
        let lookup = |_: &SourceDecl| -> &SourceSamples { &samples };
        let mut rows = Vec::new();
        for (j, m) in self.config.metrics.iter().enumerate() {
            use crate::config::MetricDecl::*;
            if m.source() != Some(&main)
                || !matches!(m, Moments { .. } | AssignmentRate { .. } | Frechet { .. })
            {
                continue;
            }
            let mseed = derive_seed(seed, &[METRIC, j as u64]);
            rows.extend(evaluate(self, m, &lookup, mseed)?);
        }
        Ok(rows)
    }

    pub fn cell_seed(&self, cell: (u64, u64)) -> u64 {
        derive_seed(self.config.seed, &[CELL, cell.0, cell.1])
    }
}

fn source_label(source: &SourceDecl, k: usize) -> String {
    match source {
        SourceDecl::Named(NamedSource::Main) => "main".into(),
        SourceDecl::Named(NamedSource::Base) => "base".into(),
        SourceDecl::Stack { .. } => format!("stack{k}"),
    }
}

pub(crate) fn label_of(prepared: &Prepared, source: &SourceDecl) -> String {
    let k = prepared
        .sources()
        .iter()
        .position(|s| s == source)
        .unwrap_or(0);
    source_label(source, k)
}

#[allow(clippy::too_many_arguments)]
fn resolve(
    id: &str,
    index: u64,
    decl: &PredictorDecl,
    world: &Arc<MixtureWorld>,
    schedule: &Arc<NoiseSchedule>,
    done: &BTreeMap<String, Resolved>,
    seeds: &mut Seeds,
    config: &ExperimentConfig,
) -> Result<Resolved> {
    Ok(match decl {
        PredictorDecl::Analytic { world: own } => {
            let w = match own {
                Some(d) => Arc::new(d.build()?),
                None => world.clone(),
            };
            Resolved {
                predictor: Arc::new(AnalyticPredictor::new(w, schedule.clone())),
                network: None,
                trained: None,
            }
        }
        PredictorDecl::Checkpoint { path } => {
            let model = Arc::new(nn::checkpoint::load(path)?);
            Resolved {
                predictor: model.clone(),
                network: Some(model),
                trained: None,
            }
        }
        PredictorDecl::Train(t) => {
            let source_world = match &t.world {
                Some(d) => d.build()?,
                None => (**world).clone(),
            };
            let initial = match &t.init_from {
                Some(parent) => done[parent]
                    .network
                    .as_ref()
                    .expect("validated: init_from names a network")
                    .as_ref()
                    .clone(),
                None => {
                    let arch = match &t.architecture {
                        Some(a) => Architecture {
                            data_dim: source_world.dim(),
                            hidden: a.hidden.clone(),
                            time_embed_dim: a.time_embed_dim,
                            cond_embed_dim: a.cond_embed_dim,
                            vocabulary: t.vocabulary.clone(),
                        },
                        None => Architecture::default_for(source_world.dim(), t.vocabulary.clone()),
                    };
                    let seed = derive_seed(config.seed, &[INIT, index]);
                    seeds.init.insert(id.to_string(), seed);
                    Denoiser::new(arch, schedule.clone(), seed)?
                }
            };
            let seed = derive_seed(config.seed, &[TRAIN, index]);
            seeds.training.insert(id.to_string(), seed);
            let train_config = t.training.with_seed(seed);
            let outcome = nn::train(initial.clone(), &source_world, &train_config)?;
            let data = match &train_config.dataset.restrict {
                Some(c) => gcfg::world::restrict(&source_world, c)?,
                None => source_world.clone(),
            };
            let model = Arc::new(outcome.model);
            Resolved {
                predictor: model.clone(),
                network: Some(model.clone()),
                trained: Some(Trained {
                    model,
                    initial,
                    config: train_config,
                    losses: outcome.losses,
                    data,
                    source_world,
                }),
            }
        }
    })
}
