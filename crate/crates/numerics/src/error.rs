use thiserror::Error;

pub type Result<T, E = NumericsError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NumericsError {
    /// Two operands whose shapes cannot be combined.
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// A single operand with an unusable shape or an invalid geometry argument.
    #[error("{op}: {msg}")]
    Dimension { op: &'static str, msg: String },
    #[error("{op}: non-finite value produced")]
    NonFinite { op: &'static str },
    #[error("label error: {0}")]
    Label(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("checkpoint format error at byte {offset}: {msg}")]
    Checkpoint { offset: u64, msg: String },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl NumericsError {
    pub(crate) fn dim(op: &'static str, msg: impl Into<String>) -> Self {
        NumericsError::Dimension { op, msg: msg.into() }
    }

    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        NumericsError::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
