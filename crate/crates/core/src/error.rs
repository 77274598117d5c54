use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("covariance is not positive definite{}", component_suffix(*.component))]
    NotPositiveDefinite { component: Option<usize> },

    #[error("covariance is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient samples: {n} rows for {k} components")]
    InsufficientSamples { n: usize, k: usize },

    #[error("degenerate covariance in component {0}")]
    DegenerateCovariance(usize),

    #[error("degenerate kernel bandwidth")]
    DegenerateBandwidth,

    #[error("grid method limited to d<=2 (got d={0})")]
    GridDimension(usize),

    #[error("transform matrix is singular (|det| = {0:e})")]
    SingularTransform(f64),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Format(String),
}

fn component_suffix(c: Option<usize>) -> String {
    match c {
        Some(k) => format!(" (component {k})"),
        None => String::new(),
    }
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// The innermost error, with all context layers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
