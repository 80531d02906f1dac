use std::path::PathBuf;

use thiserror::Error;

use crate::model::ValidationIssue;

/// Failures of the numeric kernels and score computations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("dimension mismatch: {left} vs {right}")]
    Dimension { left: usize, right: usize },
    #[error("degenerate vector: zero norm or non-finite values")]
    DegenerateVector,
    #[error("empty embedding set")]
    EmptySet,
    #[error("bundle has no references")]
    NoReferences,
}

/// Errors raised while reading or writing bundle files.
#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: I/O error: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: schema error at `{field}`: {message}")]
    Schema {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error("{path}: validation failed: {}", summarize(.issues))]
    Validation {
        path: PathBuf,
        issues: Vec<ValidationIssue>,
    },
}

fn summarize(issues: &[ValidationIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Errors of the benchmark protocols.
#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error("{bundle}: {source}")]
    Score {
        bundle: String,
        #[source]
        source: ScoreError,
    },
    #[error("{path}:{line}: bad record: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Errors while building an interpretability report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error("threshold must lie strictly inside (0, 1), got {0}")]
    Threshold(f64),
    #[error(transparent)]
    Score(#[from] ScoreError),
}
