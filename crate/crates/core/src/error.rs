use std::path::PathBuf;

use lfdepth_autodiff::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("view ({u}, {v}) is outside the {nu}x{nv} angular grid")]
    ViewOutOfRange { u: usize, v: usize, nu: usize, nv: usize },
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid {what}: {msg}")]
    Invalid { what: &'static str, msg: String },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{}: {err}", path.display())]
    Io { path: PathBuf, err: std::io::Error },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("missing view ({u}, {v}): {}", path.display())]
    MissingView { u: usize, v: usize, path: PathBuf },
    #[error("training diverged at epoch {epoch}: {term} = {value}")]
    Divergence {
        epoch: usize,
        term: &'static str,
        value: f64,
    },
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(what: &'static str, msg: impl Into<String>) -> Error {
    Error::Invalid {
        what,
        msg: msg.into(),
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |err| Error::Io { path, err }
}
