use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node index {index} out of range for graph with {n_nodes} nodes")]
    NodeOutOfRange { index: usize, n_nodes: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("node {0} assigned to more than one split")]
    OverlappingSplits(usize),

    #[error("node {0} is in a split but has no label")]
    UnlabeledSplitNode(usize),

    #[error("labeled node {0} is not assigned to any split")]
    UnassignedLabeledNode(usize),

    #[error("operation requires at least one extra relation, graph has none")]
    SingleRelation,

    #[error("invalid evidence selection: {0}")]
    InvalidEvidence(String),

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("training labels contain a single class")]
    SingleClass,

    #[error("empty input")]
    EmptyInput,

    #[error("invalid workflow: {0}")]
    InvalidWorkflow(String),

    #[error("no feasible workflow")]
    NoFeasibleWorkflow,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error in {source_name} line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("model blob: {0}")]
    Blob(String),

    #[error("planner client: {0}")]
    Client(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
