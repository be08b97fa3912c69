use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config does not parse: {0}")]
    Parse(String),
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("unknown recipe or missing config file `{0}`; built-in recipes: {1}")]
    UnknownRecipe(String, String),
    #[error("bad range `{0}`: expected start:end:step with step > 0 and start <= end")]
    Range(String),
    #[error("sweep needs a stack with at least two terms")]
    SweepStack,
    #[error("{path}: {message}")]
    Plot { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] gcfg::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
