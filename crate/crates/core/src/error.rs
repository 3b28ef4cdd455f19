use std::path::PathBuf;

use thiserror::Error;

/// Coarse failure class, used by the command line front-end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
    Io,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numeric => 4,
            ErrorClass::Io => 5,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("duplicate header: {0}")]
    DuplicateHeader(String),

    #[error("malformed row {row}: expected {expected} fields, found {found}")]
    MalformedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("unparseable numeric cell at row {row}, column {column:?}: {value:?}")]
    UnparseableCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("missing label value at row {row}")]
    MissingLabel { row: usize },

    #[error("invalid label at row {row}: {value:?}")]
    InvalidLabel { row: usize, value: String },

    #[error("degenerate categorical column {0:?}: fewer than two observed levels")]
    DegenerateCategorical(String),

    #[error("unimputable column {0:?}: no observed values")]
    UnimputableColumn(String),

    #[error("isolated sample at row {0}: shares no observed feature with any donor")]
    IsolatedSample(usize),

    #[error("invalid scale for column {0:?}")]
    InvalidScale(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("labels contain a single class")]
    SingleClass,

    #[error("unstratifiable: {0}")]
    Unstratifiable(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("complete separation detected")]
    CompleteSeparation,

    #[error("divergence at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("empty pool: every candidate feature was excluded")]
    EmptyPool,

    #[error("graphs are not comparable: {0}")]
    GraphMismatch(String),

    #[error("{stage} failed{}: {source}", iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    Stage {
        stage: String,
        iteration: Option<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &str, iteration: Option<usize>) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            iteration,
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::CompleteSeparation
            | Error::Divergence { .. }
            | Error::DegenerateDesign(_)
            | Error::Numeric(_) => ErrorClass::Numeric,
            Error::Io { .. } => ErrorClass::Io,
            Error::Csv(e) if e.is_io_error() => ErrorClass::Io,
            Error::Stage { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }
}
