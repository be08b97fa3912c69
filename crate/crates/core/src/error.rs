use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("timestep {t} out of range [{min}, {max}]")]
    TimestepOutOfRange { t: usize, min: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid world: {0}")]
    World(String),

    #[error("unknown condition `{0}`")]
    UnknownCondition(String),

    #[error("predictor requires a condition")]
    ConditionRequired,

    #[error("schedule mismatch: {0}")]
    ScheduleMismatch(String),

    #[error("invalid guidance: {0}")]
    Guidance(String),

    #[error("guidance term {index} failed: {source}")]
    Term {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid sampler config: {0}")]
    Sampler(String),

    #[error("prediction failed at step {step} of chain {chain}: {source}")]
    Sampling {
        chain: usize,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("invalid training config: {0}")]
    TrainConfig(String),

    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("metric: {0}")]
    Metric(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
