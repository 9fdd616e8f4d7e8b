use std::path::PathBuf;

/// Errors produced anywhere in the clustering pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed header: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("{path}: line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("duplicate spot_id '{spot_id}' in {context}")]
    DuplicateSpot { spot_id: String, context: String },

    #[error("duplicate gene_id '{0}'")]
    DuplicateGene(String),

    #[error("negative expression at ({row}, {col})")]
    NegativeExpression { row: usize, col: usize },

    #[error("non-finite value at ({row}, {col}) in {context}")]
    NonFinite {
        row: usize,
        col: usize,
        context: String,
    },

    #[error("spot '{spot_id}' missing from {context}")]
    MissingSpot { spot_id: String, context: String },

    #[error("spots {first} and {second} share identical coordinates")]
    DuplicateCoordinates { first: String, second: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("spot '{0}' has zero total expression")]
    ZeroCountSpot(String),

    #[error("coordinate of spot '{spot_id}' ({x}, {y}) lies outside the {width}x{height} image")]
    OutsideImage {
        spot_id: String,
        x: f64,
        y: f64,
        width: u32,
        height: u32,
    },

    #[error("image: {0}")]
    Image(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at epoch {epoch}: total loss is {value}")]
    Diverged { epoch: usize, value: f64 },

    #[error("mixture component {component} collapsed after reinitialization")]
    ComponentCollapse { component: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config {origin}: {reason}")]
    Config { origin: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
