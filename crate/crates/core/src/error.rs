use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("incompatible density: mean of p(rho0) - p(rho_bar) is {mean:e} (limit {limit:e})")]
    IncompatibleDensity { mean: f64, limit: f64 },

    #[error("compatibility violated: mean of source is {mean:e} (limit {limit:e})")]
    CompatibilityViolated { mean: f64, limit: f64 },

    #[error("mollifier under-resolved: epsilon {epsilon} must exceed {required}")]
    UnderResolved { epsilon: f64, required: f64 },

    #[error("verification failed in {stage}: {detail}")]
    Verification { stage: String, detail: String },

    #[error("chi(0) = {chi0} does not exceed n*lambda(0) = {required}; choose chi0 > {required}")]
    ChiTooSmall { chi0: f64, required: f64 },

    #[error("pressure law out of range: {0}")]
    PressureRange(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn verification(stage: &str, detail: impl Into<String>) -> Self {
        Error::Verification {
            stage: stage.to_string(),
            detail: detail.into(),
        }
    }
}
