use thiserror::Error;

pub type Result<T, E = TtdError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TtdError {
    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("metric error at ({x}, {y}): {reason}")]
    Metric { x: f64, y: f64, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("chart error: {0}")]
    Chart(String),

    #[error("expression error: {0}")]
    Expr(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl From<serde_json::Error> for TtdError {
    fn from(e: serde_json::Error) -> Self {
        TtdError::Format(e.to_string())
    }
}
