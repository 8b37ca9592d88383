use std::path::PathBuf;

use thiserror::Error;

use crate::families::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("canonical parameter {eta} outside the {family} domain")]
    Domain { family: &'static str, eta: f64 },

    #[error("parameters violate the {family} domain: {}", format_violations(.violations))]
    Infeasible {
        family: &'static str,
        violations: Vec<Violation>,
    },

    #[error("{family} log-partition overflow at eta = {eta}")]
    Overflow { family: &'static str, eta: f64 },

    #[error("at sweep {sweep}: {source}")]
    Sweep {
        sweep: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("problem too large for exact evaluation: {0}")]
    TooLarge(String),

    #[error("model is not normalizable: {0}")]
    NotNormalizable(String),

    #[error("node count {0} is not a perfect square >= 4")]
    NotSquare(usize),

    #[error("line search failed to find a feasible step for node {node}")]
    LineSearch { node: usize },

    #[error("no neighborhood fit supplied for node {0}")]
    MissingFit(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: row {row}, column {column}: value {value} outside the {family} support")]
    Support {
        path: String,
        row: usize,
        column: usize,
        value: f64,
        family: &'static str,
    },

    #[error("trial family={family} p={p} n={n} replicate={replicate}: {source}")]
    Trial {
        family: &'static str,
        p: usize,
        n: usize,
        replicate: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: &str, line: usize, column: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_string(),
            line,
            column,
            message: message.into(),
        }
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
