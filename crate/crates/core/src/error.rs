use tev_numerics::NumericsError;
use thiserror::Error;

pub type Result<T, E = TevError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TevError {
    #[error("tracking lost: {unmatched} of {total} markers unmatched")]
    TrackingLoss { unmatched: usize, total: usize },
    #[error("degenerate field: {markers} markers, at least 4 required")]
    DegenerateField { markers: usize },
    #[error("marker {index} displacement {magnitude:.3} mm exceeds cap {cap} mm")]
    DisplacementCap { index: usize, magnitude: f64, cap: f64 },
    #[error("corpus format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },
    #[error("stratification error: {0}")]
    Stratification(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("state error: {0}")]
    State(String),
    #[error("training diverged at epoch {epoch}: {msg}")]
    Diverged { epoch: usize, msg: String },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<tev_numerics::binio::FormatError> for TevError {
    fn from(e: tev_numerics::binio::FormatError) -> Self {
        TevError::Format {
            offset: e.offset,
            msg: e.msg,
        }
    }
}
