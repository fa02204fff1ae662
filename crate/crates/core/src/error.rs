use thiserror::Error;

/// Errors raised anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid condition `{expr}`: {message}")]
    Condition { expr: String, message: String },

    #[error("domain validation failed: {0}")]
    Validation(String),

    #[error("unknown {kind} `{label}`")]
    UnknownLabel { kind: &'static str, label: String },

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("invalid network: {0}")]
    Network(String),

    #[error("evidence has zero probability under the model")]
    ZeroProbabilityEvidence,

    #[error("joint support of {0} states exceeds the exact-enumeration limit")]
    SupportTooLarge(u128),

    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error("dirichlet fit failed: {0}")]
    Fit(String),

    #[error("rule instantiation failed: {0}")]
    Instantiation(String),

    #[error("observation has zero likelihood under the current belief")]
    ZeroLikelihood,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
