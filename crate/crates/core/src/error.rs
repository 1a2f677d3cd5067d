use std::path::PathBuf;

use thiserror::Error;

/// Error categories shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error at line {line}: {message}")]
    Schema { line: u64, message: String },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("state error: {0}")]
    State(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("distribution error: {0}")]
    Distribution(String),

    #[error("divergence undefined: {0}")]
    DivergenceUndefined(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short category tag, used for CLI messages and exit codes.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Schema { .. } => "schema",
            Error::Dimension(_) => "dimension",
            Error::Domain(_) => "domain",
            Error::Size(_) => "size",
            Error::Parameter(_) => "parameter",
            Error::Graph(_) => "graph",
            Error::Numeric(_) => "numeric",
            Error::Data(_) => "data",
            Error::State(_) => "state",
            Error::Shape(_) => "shape",
            Error::Distribution(_) => "distribution",
            Error::DivergenceUndefined(_) => "divergence",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }

    /// Same category, message prefixed with `context`.
    pub fn context(self, context: impl std::fmt::Display) -> Self {
        let wrap = |m: String| format!("{context}: {m}");
        match self {
            Error::Schema { line, message } => Error::Schema {
                line,
                message: wrap(message),
            },
            Error::Dimension(m) => Error::Dimension(wrap(m)),
            Error::Domain(m) => Error::Domain(wrap(m)),
            Error::Size(m) => Error::Size(wrap(m)),
            Error::Parameter(m) => Error::Parameter(wrap(m)),
            Error::Graph(m) => Error::Graph(wrap(m)),
            Error::Numeric(m) => Error::Numeric(wrap(m)),
            Error::Data(m) => Error::Data(wrap(m)),
            Error::State(m) => Error::State(wrap(m)),
            Error::Shape(m) => Error::Shape(wrap(m)),
            Error::Distribution(m) => Error::Distribution(wrap(m)),
            Error::DivergenceUndefined(m) => Error::DivergenceUndefined(wrap(m)),
            Error::Config(m) => Error::Config(wrap(m)),
            io @ Error::Io { .. } => io,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
