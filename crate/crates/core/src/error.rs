use std::path::PathBuf;

use crate::graph::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("duplicate edge {src} -> {dst}")]
    DuplicateEdge { src: NodeId, dst: NodeId },

    #[error("self-loop {0} -> {0} rejected (self-loops not enabled)")]
    SelfLoop(NodeId),

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("duplicate node {0}")]
    DuplicateNode(NodeId),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("aggregate kind mismatch: {0} vs {1}")]
    KindMismatch(&'static str, &'static str),

    #[error("model file version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("model shape inconsistency: {0}")]
    Shape(String),

    #[error("neighborhood depth {depth} is smaller than model depth {layers}")]
    InsufficientDepth { depth: usize, layers: usize },

    #[error("message for node {node} delivered to worker {worker}, which does not own it")]
    Misrouted { node: NodeId, worker: usize },

    #[error("broadcast reference to {0} has no registry entry")]
    UnresolvedBroadcast(NodeId),

    #[error("key {0} has no SELF_STATE record")]
    MissingSelfState(NodeId),

    #[error("key {0} has more than one SELF_STATE record")]
    DuplicateSelfState(NodeId),

    #[error("corrupt run file {path}: {msg}")]
    CorruptRun { path: PathBuf, msg: String },

    #[error(
        "node {node} needs {groups} shadow mirrors, more than the 256 a mirror id can address"
    )]
    TooManyMirrors { node: NodeId, groups: usize },

    #[error("output tables cover different node sets ({0})")]
    IdSetMismatch(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
