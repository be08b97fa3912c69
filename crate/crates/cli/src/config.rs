//! Experiment configuration: one strict JSON document per run.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use gcfg::metrics::GridSpec;
use gcfg::nn::{DatasetSpec, OptimizerKind, TrainConfig};
use gcfg::sampler::{SamplerConfig, SamplerKind};
use gcfg::{MixtureWorld, ScheduleSpec};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub world: WorldDecl,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    pub predictors: BTreeMap<String, PredictorDecl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stack: Option<StackDecl>,
    #[serde(default)]
    pub sampler: SamplerDecl,
    #[serde(default)]
    pub metrics: Vec<MetricDecl>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/latest")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WorldDecl {
    Quadrant,
    Correlated,
    StandardNormal {
        dim: usize,
    },
    Gaussian {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
    Mixture(MixtureWorld),
}

impl WorldDecl {
    pub fn build(&self) -> gcfg::Result<MixtureWorld> {
        Ok(match self {
            WorldDecl::Quadrant => MixtureWorld::quadrant(),
            WorldDecl::Correlated => MixtureWorld::correlated(),
            WorldDecl::StandardNormal { dim } => {
                if *dim == 0 {
                    return Err(gcfg::Error::World("dimension must be positive".into()));
                }
                MixtureWorld::standard_normal(*dim)
            }
            WorldDecl::Gaussian { mean, covariance } => {
                MixtureWorld::gaussian(mean.clone(), covariance.clone())?
            }
            WorldDecl::Mixture(w) => w.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PredictorDecl {
    /// Exact noise prediction for `world` (the experiment world if absent).
    Analytic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        world: Option<WorldDecl>,
    },
    Checkpoint {
        path: PathBuf,
    },
    Train(TrainDecl),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainDecl {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world: Option<WorldDecl>,
    #[serde(default)]
    pub vocabulary: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub architecture: Option<ArchitectureDecl>,
    /// Continue from another trained or loaded predictor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_from: Option<String>,
    #[serde(default)]
    pub training: TrainingDecl,
    #[serde(default)]
    pub save: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureDecl {
    pub hidden: Vec<usize>,
    pub time_embed_dim: usize,
    pub cond_embed_dim: usize,
}

/// [`TrainConfig`] without the seed, which is derived from the global seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingDecl {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub optimizer: OptimizerKind,
    pub dataset: DatasetSpec,
}

impl Default for TrainingDecl {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            iterations: d.iterations,
            optimizer: d.optimizer,
            dataset: d.dataset,
        }
    }
}

impl TrainingDecl {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            iterations: self.iterations,
            seed,
            optimizer: self.optimizer,
            dataset: self.dataset.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackDecl {
    pub base: String,
    #[serde(default)]
    pub terms: Vec<TermDecl>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermDecl {
    pub predictor: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerDecl {
    pub kind: SamplerKind,
    pub num_inference_steps: usize,
    pub eta: f64,
    pub batch: usize,
}

impl Default for SamplerDecl {
    fn default() -> Self {
        let d = SamplerConfig::default();
        Self {
            kind: d.kind,
            num_inference_steps: d.num_inference_steps,
            eta: d.eta,
            batch: d.batch,
        }
    }
}

impl SamplerDecl {
    pub fn with_seed(&self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            kind: self.kind,
            num_inference_steps: self.num_inference_steps,
            eta: self.eta,
            seed,
            batch: self.batch,
        }
    }
}

/// Which samples a metric is computed on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SourceDecl {
    Named(NamedSource),
    Stack { stack: StackDecl },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedSource {
    /// The experiment stack.
    #[default]
    Main,
    /// The experiment stack's base predictor alone.
    Base,
}

impl Default for SourceDecl {
    fn default() -> Self {
        SourceDecl::Named(NamedSource::Main)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorDecl {
    pub condition: String,
    pub weight: f64,
}

fn default_mean_tol() -> f64 {
    0.05
}

fn default_cov_tol() -> f64 {
    0.1
}

fn default_factor() -> f64 {
    1.5
}

fn default_true() -> bool {
    true
}

fn default_min_count() -> usize {
    5
}

fn default_probes() -> usize {
    10_000
}

fn default_probe_size() -> usize {
    16
}

fn default_instances() -> usize {
    10_000
}

fn default_triples() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricDecl {
    Moments {
        #[serde(default)]
        source: SourceDecl,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expected_mean: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expected_covariance: Option<Vec<Vec<f64>>>,
        #[serde(default = "default_mean_tol")]
        mean_tolerance: f64,
        #[serde(default = "default_cov_tol")]
        covariance_tolerance: f64,
    },
    AssignmentRate {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        condition: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        components: Option<Vec<usize>>,
        #[serde(default)]
        source: SourceDecl,
    },
    /// Fréchet distance to a fit of fresh draws from `reference` (the
    /// experiment world if absent), optionally restricted to `condition`.
    Frechet {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reference: Option<WorldDecl>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        condition: Option<String>,
        #[serde(default)]
        source: SourceDecl,
    },
    GridDivergence {
        target: Vec<FactorDecl>,
        #[serde(default)]
        grid: GridSpec,
        #[serde(default = "default_true")]
        calibration: bool,
        #[serde(default = "default_factor")]
        calibration_factor: f64,
        #[serde(default)]
        source: SourceDecl,
    },
    Support {
        reference: SourceDecl,
        #[serde(default)]
        grid: GridSpec,
        #[serde(default = "default_min_count")]
        min_count: usize,
        #[serde(default)]
        source: SourceDecl,
    },
    OracleMse {
        predictor: String,
        #[serde(default = "default_probes")]
        probes: usize,
    },
    GradientCheck {
        predictor: String,
        #[serde(default = "default_probe_size")]
        probe_size: usize,
    },
    LossDrop {
        predictor: String,
    },
    TrainingDeterminism {
        predictor: String,
    },
    GuidanceAlgebra {
        #[serde(default = "default_instances")]
        instances: usize,
    },
    ScoreOracle {
        #[serde(default = "default_triples")]
        triples: usize,
    },
    NullText {},
}

impl MetricDecl {
    pub fn source(&self) -> Option<&SourceDecl> {
        match self {
            MetricDecl::Moments { source, .. }
            | MetricDecl::AssignmentRate { source, .. }
            | MetricDecl::Frechet { source, .. }
            | MetricDecl::GridDivergence { source, .. }
            | MetricDecl::Support { source, .. } => Some(source),
            _ => None,
        }
    }

    pub fn trained_predictor(&self) -> Option<&str> {
        match self {
            MetricDecl::OracleMse { predictor, .. }
            | MetricDecl::GradientCheck { predictor, .. }
            | MetricDecl::LossDrop { predictor }
            | MetricDecl::TrainingDeterminism { predictor } => Some(predictor),
            _ => None,
        }
    }
}

/// What a predictor can be asked for, known before anything is trained.
#[derive(Debug, Clone)]
pub(crate) struct PredictorShape {
    pub dim: usize,
    /// Analytic predictors accept their world's labels; networks accept
    /// their vocabulary.
    pub conditions: BTreeSet<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| LabError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks everything that can be checked without training or sampling
    /// and reports every violation at once.
    pub fn validate(&self) -> Result<()> {
        let mut v = Violations::default();
        let world = match self.world.build() {
            Ok(w) => Some(w),
            Err(e) => {
                v.push("world", e);
                None
            }
        };
        let schedule = match self.schedule.build() {
            Ok(s) => Some(s),
            Err(e) => {
                v.push("schedule", e);
                None
            }
        };
        let shapes = self.predictor_shapes(world.as_ref(), &mut v);
        if let Some(schedule) = &schedule {
            for (id, p) in &self.predictors {
                if let PredictorDecl::Checkpoint { path } = p {
                    if let Ok(text) = std::fs::read_to_string(path) {
                        if let Ok(ck) = gcfg::nn::Checkpoint::from_json(&text) {
                            if ck.schedule != *schedule.spec() {
                                v.push(
                                    &format!("predictors.{id}.path"),
                                    "checkpoint was trained with a different schedule",
                                );
                            }
                        }
                    }
                }
            }
            if let Err(e) = self.sampler.with_seed(0).validate(schedule) {
                v.push("sampler", e);
            }
        }
        let data_dim = world.as_ref().map(|w| w.dim());
        if let Some(stack) = &self.stack {
            check_stack("stack", stack, &shapes, data_dim, &mut v);
        }
        for (i, m) in self.metrics.iter().enumerate() {
            let at = format!("metrics[{i}]");
            self.check_metric(&at, m, world.as_ref(), &shapes, &mut v);
        }
        v.finish()
    }

    fn predictor_shapes(
        &self,
        world: Option<&MixtureWorld>,
        v: &mut Violations,
    ) -> BTreeMap<String, PredictorShape> {
        let mut shapes = BTreeMap::new();
        // networks may depend on each other through init_from; resolve in
        // dependency order and report cycles
        let mut pending: Vec<&String> = self.predictors.keys().collect();
        let mut progressed = true;
        while progressed && !pending.is_empty() {
            progressed = false;
            let mut still = Vec::new();
            for id in pending {
                let at = format!("predictors.{id}");
                let shape = match &self.predictors[id] {
                    PredictorDecl::Analytic { world: own } => {
                        let w = match own {
                            Some(d) => d
                                .build()
                                .map_err(|e| v.push(&format!("{at}.world"), e))
                                .ok(),
                            None => world.cloned(),
                        };
                        w.map(|w| PredictorShape {
                            dim: w.dim(),
                            conditions: w.labels().keys().cloned().collect(),
                        })
                    }
                    PredictorDecl::Checkpoint { path } => match std::fs::read_to_string(path) {
                        Err(e) => {
                            v.push(&format!("{at}.path"), format!("{}: {e}", path.display()));
                            None
                        }
                        Ok(text) => match gcfg::nn::Checkpoint::from_json(&text) {
                            Err(e) => {
                                v.push(&format!("{at}.path"), e);
                                None
                            }
                            Ok(ck) => Some(PredictorShape {
                                dim: ck.architecture.data_dim,
                                conditions: ck.architecture.vocabulary.iter().cloned().collect(),
                            }),
                        },
                    },
                    PredictorDecl::Train(t) => {
                        if let Some(parent) = &t.init_from {
                            match self.predictors.get(parent) {
                                None => {
                                    v.push(
                                        &format!("{at}.init_from"),
                                        format!("undeclared predictor id `{parent}`"),
                                    );
                                    continue;
                                }
                                Some(PredictorDecl::Analytic { .. }) => {
                                    v.push(
                                        &format!("{at}.init_from"),
                                        format!("`{parent}` is analytic and has no parameters"),
                                    );
                                    continue;
                                }
                                Some(_) => {}
                            }
                            if !shapes.contains_key(parent) {
                                still.push(id);
                                continue;
                            }
                        }
                        self.train_shape(&at, t, world, &shapes, v)
                    }
                };
                progressed = true;
                if let Some(s) = shape {
                    shapes.insert(id.clone(), s);
                } else {
                    shapes.insert(id.clone(), PredictorShape::unknown());
                }
            }
            pending = still;
        }
        for id in pending {
            v.push(
                &format!("predictors.{id}.init_from"),
                "initialization chain forms a cycle",
            );
            shapes.insert(id.clone(), PredictorShape::unknown());
        }
        shapes
    }

    fn train_shape(
        &self,
        at: &str,
        t: &TrainDecl,
        world: Option<&MixtureWorld>,
        shapes: &BTreeMap<String, PredictorShape>,
        v: &mut Violations,
    ) -> Option<PredictorShape> {
        let data = match &t.world {
            Some(d) => d
                .build()
                .map_err(|e| v.push(&format!("{at}.world"), e))
                .ok(),
            None => world.cloned(),
        };
        if let Err(e) = t.training.with_seed(0).validate() {
            v.push(&format!("{at}.training"), e);
        }
        let mut vocabulary: BTreeSet<String> = t.vocabulary.iter().cloned().collect();
        if vocabulary.len() != t.vocabulary.len() {
            v.push(&format!("{at}.vocabulary"), "duplicate entries");
        }
        if let Some(parent) = &t.init_from {
            if t.architecture.is_some() || !t.vocabulary.is_empty() {
                v.push(
                    at,
                    "a fine-tuned predictor inherits architecture and vocabulary from init_from",
                );
            }
            let p = &shapes[parent];
            vocabulary = p.conditions.clone();
            if let (Some(w), Some(_)) = (&data, p.is_known()) {
                if w.dim() != p.dim {
                    v.push(
                        at,
                        format!("world dimension {} differs from `{parent}`", w.dim()),
                    );
                }
            }
        }
        if let Some(a) = &t.architecture {
            if a.hidden.is_empty() || a.hidden.contains(&0) || a.time_embed_dim == 0 {
                v.push(
                    &format!("{at}.architecture"),
                    "layer and embedding widths must be positive",
                );
            }
            if a.time_embed_dim % 2 != 0 {
                v.push(&format!("{at}.architecture.time_embed_dim"), "must be even");
            }
            if a.cond_embed_dim == 0 && !vocabulary.is_empty() {
                v.push(
                    &format!("{at}.architecture.cond_embed_dim"),
                    "must be positive",
                );
            }
        }
        let data = data?;
        if let Some(r) = &t.training.dataset.restrict {
            if data.selection(r).is_err() {
                v.push(
                    &format!("{at}.training.dataset.restrict"),
                    format!("unknown condition `{r}`"),
                );
            }
        }
        for label in &t.training.dataset.labels {
            if data.selection(label).is_err() {
                v.push(
                    &format!("{at}.training.dataset.labels"),
                    format!("unknown condition `{label}`"),
                );
            }
            if !vocabulary.contains(label) {
                v.push(
                    &format!("{at}.training.dataset.labels"),
                    format!("`{label}` is not in the vocabulary"),
                );
            }
        }
        Some(PredictorShape {
            dim: data.dim(),
            conditions: vocabulary,
        })
    }

    fn check_metric(
        &self,
        at: &str,
        m: &MetricDecl,
        world: Option<&MixtureWorld>,
        shapes: &BTreeMap<String, PredictorShape>,
        v: &mut Violations,
    ) {
        if let Some(source) = m.source() {
            self.check_source(&format!("{at}.source"), source, shapes, world, v);
        }
        if let Some(id) = m.trained_predictor() {
            match self.predictors.get(id) {
                None => v.push(
                    &format!("{at}.predictor"),
                    format!("undeclared predictor id `{id}`"),
                ),
                Some(PredictorDecl::Train(_)) => {}
                Some(_) => v.push(
                    &format!("{at}.predictor"),
                    format!("`{id}` is not trained in this experiment"),
                ),
            }
        }
        let dim = world.map(|w| w.dim());
        let known = |c: &str| world.is_none_or(|w| w.selection(c).is_ok());
        match m {
            MetricDecl::Moments {
                expected_mean,
                expected_covariance,
                ..
            } => {
                if let (Some(mean), Some(d)) = (expected_mean, dim) {
                    if mean.len() != d {
                        v.push(
                            &format!("{at}.expected_mean"),
                            format!("expected {d} entries"),
                        );
                    }
                }
                if let (Some(cov), Some(d)) = (expected_covariance, dim) {
                    if cov.len() != d || cov.iter().any(|r| r.len() != d) {
                        v.push(
                            &format!("{at}.expected_covariance"),
                            format!("expected {d}x{d}"),
                        );
                    }
                }
            }
            MetricDecl::AssignmentRate {
                condition,
                components,
                ..
            } => match (condition, components) {
                (Some(c), None) => {
                    if !known(c) {
                        v.push(
                            &format!("{at}.condition"),
                            format!("unknown condition `{c}`"),
                        );
                    }
                }
                (None, Some(set)) => {
                    let k = world.map_or(usize::MAX, |w| w.components().len());
                    if set.is_empty() || set.iter().any(|&i| i >= k) {
                        v.push(
                            &format!("{at}.components"),
                            "empty set or index out of range",
                        );
                    }
                }
                _ => v.push(at, "give exactly one of `condition` and `components`"),
            },
            MetricDecl::Frechet {
                reference,
                condition,
                ..
            } => {
                let r = match reference {
                    Some(d) => d
                        .build()
                        .map_err(|e| v.push(&format!("{at}.reference"), e))
                        .ok(),
                    None => world.cloned(),
                };
                if let (Some(r), Some(c)) = (&r, condition) {
                    if r.selection(c).is_err() {
                        v.push(
                            &format!("{at}.condition"),
                            format!("unknown condition `{c}`"),
                        );
                    }
                }
                if let (Some(r), Some(d)) = (&r, dim) {
                    if r.dim() != d {
                        v.push(
                            &format!("{at}.reference"),
                            "dimension differs from the world",
                        );
                    }
                }
            }
            MetricDecl::GridDivergence {
                target,
                grid,
                calibration_factor,
                ..
            } => {
                for f in target {
                    if !known(&f.condition) {
                        v.push(
                            &format!("{at}.target"),
                            format!("unknown condition `{}`", f.condition),
                        );
                    }
                    if !f.weight.is_finite() {
                        v.push(&format!("{at}.target"), "weights must be finite");
                    }
                }
                if let Err(e) = grid.validate() {
                    v.push(&format!("{at}.grid"), e);
                }
                if dim.is_some_and(|d| d != 2) {
                    v.push(at, "grid metrics need a 2-dimensional world");
                }
                if !(*calibration_factor > 0.0) {
                    v.push(&format!("{at}.calibration_factor"), "must be positive");
                }
            }
            MetricDecl::Support {
                reference, grid, ..
            } => {
                self.check_source(&format!("{at}.reference"), reference, shapes, world, v);
                if let Err(e) = grid.validate() {
                    v.push(&format!("{at}.grid"), e);
                }
                if dim.is_some_and(|d| d != 2) {
                    v.push(at, "grid metrics need a 2-dimensional world");
                }
            }
            MetricDecl::OracleMse { probes, .. } if *probes == 0 => {
                v.push(&format!("{at}.probes"), "must be positive")
            }
            MetricDecl::GradientCheck { probe_size, .. } if *probe_size == 0 => {
                v.push(&format!("{at}.probe_size"), "must be positive")
            }
            MetricDecl::GuidanceAlgebra { instances } if *instances == 0 => {
                v.push(&format!("{at}.instances"), "must be positive")
            }
            MetricDecl::ScoreOracle { triples } if *triples == 0 => {
                v.push(&format!("{at}.triples"), "must be positive")
            }
            _ => {}
        }
    }

    fn check_source(
        &self,
        at: &str,
        source: &SourceDecl,
        shapes: &BTreeMap<String, PredictorShape>,
        world: Option<&MixtureWorld>,
        v: &mut Violations,
    ) {
        match source {
            SourceDecl::Named(_) => {
                if self.stack.is_none() {
                    v.push(at, "refers to the experiment stack, but none is declared");
                }
            }
            SourceDecl::Stack { stack } => check_stack(
                &format!("{at}.stack"),
                stack,
                shapes,
                world.map(|w| w.dim()),
                v,
            ),
        }
    }
}

impl PredictorShape {
    fn unknown() -> Self {
        Self {
            dim: 0,
            conditions: BTreeSet::new(),
        }
    }

    fn is_known(&self) -> Option<()> {
        (self.dim > 0).then_some(())
    }
}

fn check_stack(
    at: &str,
    stack: &StackDecl,
    shapes: &BTreeMap<String, PredictorShape>,
    data_dim: Option<usize>,
    v: &mut Violations,
) {
    let mut check_id = |field: String, id: &str, condition: Option<&str>| match shapes.get(id) {
        None => v.push(&field, format!("undeclared predictor id `{id}`")),
        Some(shape) => {
            if shape.is_known().is_none() {
                return;
            }
            if let Some(d) = data_dim {
                if shape.dim != d {
                    v.push(
                        &field,
                        format!("`{id}` predicts dimension {}, world has {d}", shape.dim),
                    );
                }
            }
            if let Some(c) = condition {
                if !shape.conditions.contains(c) {
                    v.push(&field, format!("`{id}` does not know condition `{c}`"));
                }
            }
        }
    };
    check_id(format!("{at}.base"), &stack.base, None);
    for (i, term) in stack.terms.iter().enumerate() {
        check_id(
            format!("{at}.terms[{i}].predictor"),
            &term.predictor,
            term.condition.as_deref(),
        );
    }
    for (i, term) in stack.terms.iter().enumerate() {
        if !term.weight.is_finite() {
            v.push(&format!("{at}.terms[{i}].weight"), "must be finite");
        }
    }
}

#[derive(Default)]
struct Violations(Vec<String>);

impl Violations {
    fn push(&mut self, field: &str, message: impl std::fmt::Display) {
        self.0.push(format!("{field}: {message}"));
    }

    fn finish(self) -> Result<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(LabError::Invalid(self.0))
        }
    }
}
