use thiserror::Error;

use crate::condition::Stage;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown condition {0:?}")]
    UnknownCondition(String),
    #[error("condition {0} is not enabled")]
    ConditionDisabled(String),
    #[error("no session {0}")]
    UnknownSession(String),
    #[error("missing or wrong session token")]
    Unauthorized,
    #[error("session is finished")]
    SessionDone,
    #[error("expected a response to {expected}, got {got}")]
    OutOfOrder { expected: String, got: String },
    #[error("{0} was already answered")]
    Duplicate(String),
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("session is at stage {0:?}")]
    WrongStage(Stage),
    #[error("unknown survey question {0:?}")]
    UnknownQuestion(String),
    #[error("session {0} cannot be replaced: {1}")]
    NotReplaceable(String, &'static str),
    #[error("every pair block of {0} is assigned")]
    PoolExhausted(String),
    #[error("no kept sessions in {0}")]
    NoKeptSessions(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("content: {0}")]
    Content(String),
    #[error("event store: {0}")]
    Store(String),
    #[error(transparent)]
    Dataset(#[from] prefbench_core::DatasetError),
    #[error(transparent)]
    Preference(#[from] prefbench_core::PreferenceError),
    #[error(transparent)]
    Plan(#[from] prefbench_core::PlanError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
