use thiserror::Error;

/// Errors raised by tensor construction, forward ops and backpropagation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch on axis {axis}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        axis: usize,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: rank mismatch: expected {expected}, got shape {shape:?}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },

    #[error("{op}: axis {axis} out of range for shape {shape:?}")]
    AxisOutOfRange {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },

    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { len: usize, shape: Vec<usize> },

    #[error("{op}: invalid attribute: {msg}")]
    InvalidAttr { op: &'static str, msg: String },

    #[error("{op}: expected {expected} inputs, got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("unknown op kind `{0}`")]
    UnknownOp(String),

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("graph is frozen after backward; build a new graph for the next forward pass")]
    GraphFrozen,

    #[error("variable {0} does not belong to this graph")]
    UnknownVar(usize),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
