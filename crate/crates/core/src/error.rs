use thiserror::Error;

use crate::model::NodeId;
use crate::time::Timestamp;

/// Errors raised by the provenance engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dangling reference to unknown record {0}")]
    DanglingReference(NodeId),

    #[error("temporal violation: {downstream} ({downstream_time}) does not follow {upstream} ({upstream_time})")]
    TemporalViolation { downstream: NodeId, downstream_time: Timestamp, upstream: NodeId, upstream_time: Timestamp },

    #[error("duplicate id {0}")]
    DuplicateId(NodeId),

    #[error("id {id} does not sort after the last assigned id {last}")]
    IdOutOfOrder { id: NodeId, last: NodeId },

    #[error("{context}: {id} is {found}, expected {expected}")]
    KindMismatch { context: String, id: NodeId, expected: String, found: String },

    #[error("invalid payload: {0}")]
    InvalidPayload(String),

    #[error("unknown id {0}")]
    UnknownId(String),

    #[error("label {0} matches more than one record")]
    AmbiguousLabel(String),

    #[error("bad window: start {start} is after end {end}")]
    BadWindow { start: Timestamp, end: Timestamp },

    #[error("malformed pattern {0:?}: at most one '*' is allowed")]
    MalformedPattern(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("malformed rule: {0}")]
    MalformedRule(String),

    #[error("{id} has category {found:?}, expected {expected:?}")]
    CategoryMismatch { id: NodeId, expected: String, found: Option<String> },

    #[error("model card version {version} for {model} does not exceed the latest attached version {latest}")]
    VersionRegression { model: String, version: u32, latest: u32 },

    #[error("invalid artifact: {0}")]
    InvalidArtifact(String),

    #[error("log integrity check failed at record {index}")]
    Integrity { index: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
