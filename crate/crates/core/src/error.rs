use thiserror::Error;

pub type Result<T> = std::result::Result<T, SbbError>;

#[derive(Debug, Error)]
pub enum SbbError {
    #[error("structural error: {0}")]
    Structural(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("pushforward lost all mass (lost fraction {lost_fraction:.3e})")]
    LostMass { lost_fraction: f64 },

    #[error("map is not monotone near x = {x} (decrease {decrease:.3e})")]
    NonMonotone { x: f64, decrease: f64 },

    #[error("outside dom(H): A = {a} must be below beta = {beta}")]
    OutsideDomain { a: f64, beta: f64 },

    #[error("resolution/truncation failure: {0}")]
    Resolution(String),

    #[error("no convergence after {} iterations (last residual {:.3e})", .residuals.len(), .residuals.last().copied().unwrap_or(f64::NAN))]
    NonConvergence { residuals: Vec<f64> },

    #[error("oracle optimum on the scan boundary, enlarge box ({0})")]
    EnlargeBox(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
