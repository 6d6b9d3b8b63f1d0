use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("model evaluation produced a non-finite state at t={t}")]
    ModelEvaluation { t: usize },

    #[error("weight evaluation produced NaN at t={t}")]
    WeightEvaluation { t: usize },

    #[error("every particle weight is zero at t={t}")]
    WeightDegeneracy { t: usize },

    #[error("singular model at t={t}: {msg}")]
    Singular { t: usize, msg: String },

    #[error("constrained parent has zero weight at t={t}")]
    DegenerateConstraint { t: usize },

    #[error("every backward weight is zero at t={t}")]
    DegenerateSmoother { t: usize },

    #[error("IACT undefined: {0}")]
    UndefinedIact(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("sweep {sweep}, part {part}: {source}")]
    Chain {
        sweep: usize,
        part: u8,
        #[source]
        source: Box<Error>,
    },

    #[error("{label}: {source}")]
    Context {
        label: String,
        #[source]
        source: Box<Error>,
    },

    #[error("config error in `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("data error at row {row}, column {col}: {msg}")]
    Data { row: usize, col: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization: {0}")]
    Serialization(String),
}

/// Coarse classification used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numeric,
    Data,
}

impl Error {
    pub fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn context(self, label: impl Into<String>) -> Self {
        Error::Context {
            label: label.into(),
            source: Box::new(self),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config { .. } | Error::Precondition(_) => ErrorKind::Config,
            Error::Data { .. } | Error::Io { .. } | Error::Serialization(_) => ErrorKind::Data,
            Error::Chain { source, .. } | Error::Context { source, .. } => source.kind(),
            _ => ErrorKind::Numeric,
        }
    }
}
