use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),

    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),

    #[error("vertex index {index} out of range for {n} vertices")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("invalid edge weight {weight} on ({i}, {j}); weights must be finite and > 0")]
    InvalidWeight { i: usize, j: usize, weight: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix of order {n} exceeds the dense oracle cap of {cap}")]
    OracleCapExceeded { n: usize, cap: usize },

    #[error("frequency response is not finite at eigenvalue {lambda}")]
    NonFiniteResponse { lambda: f64 },

    #[error("pole too close: |denominator| = {denominator:e} at lambda = {lambda}")]
    PoleProximity { lambda: f64, denominator: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("recursion became non-finite at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("feedback operator has spectral radius {radius:.6} >= 1 on this graph")]
    Unstable { radius: f64 },

    #[error("non-finite activations in layer {layer}")]
    NonFiniteActivation { layer: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{0}")]
    Format(String),

    #[error("cannot read {path}: {source}")]
    Input {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reads an input file, naming it in the error.
pub(crate) fn read_input(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Input {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn read_input_text(path: &std::path::Path) -> Result<String> {
    String::from_utf8(read_input(path)?).map_err(|_| Error::parse(path, 0, "not valid UTF-8"))
}

impl Error {
    /// Whether the error stems from bad input (flags, files, shapes) rather
    /// than a numerical failure at run time.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Diverged { .. }
                | Error::Unstable { .. }
                | Error::NonFiniteActivation { .. }
                | Error::NonFiniteResponse { .. }
                | Error::PoleProximity { .. }
                | Error::Io(_)
        )
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
