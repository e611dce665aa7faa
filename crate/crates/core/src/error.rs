use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("incompatible snapshot: {0}")]
    IncompatibleSnapshot(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("cannot fit column `{column}`: no non-missing values")]
    Fit { column: String },

    #[error("cannot impute: {0}")]
    Impute(String),

    #[error("timestamps out of order at row {row}")]
    Ordering { row: usize },

    #[error("block `{block}` requires a target value for `{target}`")]
    MissingTarget { block: String, target: String },

    #[error("strategy error: {0}")]
    Strategy(String),

    #[error("schema error: missing column `{column}`")]
    Schema { column: String },

    #[error("row error at line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("scenario error at event {index}: {source}")]
    Scenario {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("ingest error: {0}")]
    Ingest(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
