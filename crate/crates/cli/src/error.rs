use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("missing required setting `{0}`")]
    Missing(&'static str),

    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),

    #[error("gradient check failed: max relative error {0:.3e} is not below {1:.0e}")]
    GradCheck(f64, f64),

    #[error(transparent)]
    Core(#[from] latentqa::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
