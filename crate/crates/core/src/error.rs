use std::path::PathBuf;

use thiserror::Error;

use crate::graph::NodeId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("{path}:{line}: edge endpoint {id} is not a known node id")]
    DanglingEndpoint { path: PathBuf, line: u64, id: i64 },

    #[error("{path}:{line}: label {label} is not binary (expected 0 or 1)")]
    NonBinaryLabel {
        path: PathBuf,
        line: u64,
        label: String,
    },

    #[error("vertex {0} is not part of the graph")]
    UnknownVertex(NodeId),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("class {0} has no samples")]
    EmptyClass(u8),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("PSI protocol aborted: {0}")]
    PsiAbort(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("training mask is empty")]
    EmptyMask,

    #[error("AUC is undefined when only one class is present")]
    SingleClass,

    #[error("history covers rounds up to {available}, window needs [{lo}, {hi}]")]
    InsufficientRounds {
        lo: usize,
        hi: usize,
        available: usize,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("malformed parameter blob: {0}")]
    Decode(String),

    #[error("client pair ({sender}, {receiver}): {source}")]
    Pair {
        sender: usize,
        receiver: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("client {client}: {source}")]
    Client {
        client: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("seed {seed}, arm {arm}, stage {stage}: {source}")]
    Experiment {
        seed: u64,
        arm: String,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
