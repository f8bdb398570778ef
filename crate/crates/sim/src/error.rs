use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),

    #[error("fault window [{start}, {end}] is outside the horizon [0, {horizon}]")]
    WindowOutOfRange { start: i64, end: i64, horizon: i64 },

    #[error("unknown thread {0:?}: expected driver, lighting or ambulance")]
    UnknownThread(String),

    #[error("the log holds no {0} decision")]
    NoDecision(String),

    #[error(transparent)]
    Provenance(#[from] decprov_core::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
