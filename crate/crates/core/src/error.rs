use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Every variant belongs to one of three categories (see [`ErrorCategory`]),
/// which the command-line front end maps onto process exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("unknown id {0:?}")]
    UnknownId(String),

    #[error("degenerate dataset: {0}")]
    Degenerate(String),

    #[error("single-class input: both classes are required")]
    SingleClass,

    #[error("no comparable pairs: {0}")]
    NoComparablePairs(String),

    #[error("no admissible threshold candidate")]
    NoAdmissibleThreshold,

    #[error("undefined test: {0}")]
    UndefinedTest(String),

    #[error("kernel matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("solver did not converge after {iterations} iterations (final violation {violation:e})")]
    NotConverged { iterations: usize, violation: f64 },

    #[error("pair ({i}, {j}): {source}")]
    Pair {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse classification used for exit codes and machine-readable reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Validation,
    Numerical,
    Io,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        match self {
            // already carries its path
            e @ (Error::Io { .. } | Error::Format { .. } | Error::InFile { .. }) => e,
            e => Error::InFile {
                path: path.into(),
                source: Box::new(e),
            },
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io { .. } => ErrorCategory::Io,
            Error::Degenerate(_)
            | Error::NotPsd { .. }
            | Error::NotConverged { .. }
            | Error::UndefinedTest(_) => ErrorCategory::Numerical,
            Error::Pair { source, .. } | Error::InFile { source, .. } => source.category(),
            _ => ErrorCategory::Validation,
        }
    }

    /// Short stable identifier for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::Validation(_) => "validation",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Shape(_) => "shape_mismatch",
            Error::DuplicateId(_) => "duplicate_id",
            Error::UnknownId(_) => "unknown_id",
            Error::Degenerate(_) => "degenerate_dataset",
            Error::SingleClass => "single_class",
            Error::NoComparablePairs(_) => "no_comparable_pairs",
            Error::NoAdmissibleThreshold => "no_admissible_threshold",
            Error::UndefinedTest(_) => "undefined_test",
            Error::NotPsd { .. } => "not_psd",
            Error::NotConverged { .. } => "not_converged",
            Error::Pair { source, .. } | Error::InFile { source, .. } => source.kind(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
