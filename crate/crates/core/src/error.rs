use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A structural argument (sizes, counts, lengths) is inconsistent.
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    /// Frame contents violate an invariant (duplicate ids, dangling edges, ...).
    #[error("integrity error: {0}")]
    Integrity(String),

    /// A statistic is undefined for the supplied input (zero variance, no edges, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A unit lacks a field required by the requested operation.
    #[error("missing data: {0}")]
    Data(String),

    #[error("root not bracketed: f({lower}) = {f_lower}, f({upper}) = {f_upper}")]
    Bracket {
        lower: f64,
        upper: f64,
        f_lower: f64,
        f_upper: f64,
    },

    #[error("root finder did not converge in {iterations} iterations (bracket width {width:e})")]
    Convergence { iterations: usize, width: f64 },

    /// A delta-method quantity is singular at the boundary of the parameter space.
    #[error("boundary estimate: {0}")]
    Boundary(String),

    #[error("invalid misranking model: {0}")]
    Model(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }
}
