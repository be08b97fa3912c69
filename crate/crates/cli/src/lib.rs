//! Config-driven experiments for generalized classifier-free guidance:
//! declarative runs, weight sweeps, training and plots.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod measure;
pub mod output;
pub mod plot;
pub mod recipes;
pub mod sweep;

pub use config::ExperimentConfig;
pub use error::{LabError, Result};
pub use experiment::{Prepared, RunOutcome};
pub use measure::MetricRow;
pub use sweep::{Range, SweepRow};
