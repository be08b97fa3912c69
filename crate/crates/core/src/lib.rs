//! Multi-model, multi-condition classifier-free guidance for diffusion
//! sampling, verified against Gaussian-mixture worlds with exact scores.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod guidance;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod predictor;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod world;

pub use error::{Error, Result};
pub use guidance::{concept_stack, GuidanceStack, GuidanceTerm};
pub use predictor::{AnalyticPredictor, Conditioning, ConstantPredictor, NoisePredictor};
pub use schedule::{NoiseSchedule, ScheduleKind, ScheduleSpec};
pub use world::MixtureWorld;
