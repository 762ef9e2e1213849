//! Task and session service: a durable store plus its HTTP front end.

mod http;
mod session;
mod store;

pub use http::{router, serve};
pub use session::{
    initial_state, ApplyError, LayoutView, MentionView, NodeColor, Session, SessionState, Snapshot,
    StateDelta, StateView, TreeNodeView,
};
pub use store::{DragOutcome, OpResponse, StrokeOutcome, TaskStore};

use crate::force_layout::LayoutError;
use crate::formats::FormatError;
use crate::stroke_geometry::StrokeError;
use serde_json::{json, Value};

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("sentence {sentence} does not exist; the task has {available}")]
    UnknownSentence { sentence: usize, available: usize },
    #[error("task {0:?} already exists with a different payload")]
    TaskConflict(String),
    #[error("session is at version {actual}, request was based on {expected}")]
    StaleSession { expected: u64, actual: u64 },
    #[error("nothing to undo")]
    NothingToUndo,
    #[error("nothing to redo")]
    NothingToRedo,
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Apply(#[from] ApplyError),
    #[error(transparent)]
    Stroke(#[from] StrokeError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("corrupt session log: {0}")]
    CorruptLog(String),
    #[error("storage error: {0}")]
    Io(#[from] std::io::Error),
}

impl ServerError {
    pub fn code(&self) -> &'static str {
        match self {
            ServerError::UnknownTask(_) => "UnknownTask",
            ServerError::UnknownSession(_) => "UnknownSession",
            ServerError::UnknownSentence { .. } => "UnknownSentence",
            ServerError::TaskConflict(_) => "TaskConflict",
            ServerError::StaleSession { .. } => "StaleSession",
            ServerError::NothingToUndo => "NothingToUndo",
            ServerError::NothingToRedo => "NothingToRedo",
            ServerError::BadRequest(_) => "BadRequest",
            ServerError::Format(e) => e.code(),
            ServerError::Apply(e) => e.code(),
            ServerError::Stroke(StrokeError::TooFewPoints) => "TooFewPoints",
            ServerError::Stroke(StrokeError::NonFinitePoint) => "NonFinitePoint",
            ServerError::Stroke(StrokeError::StaleEdges { .. }) => "StaleEdges",
            ServerError::Layout(LayoutError::EmptyCanvas) => "EmptyCanvas",
            ServerError::Layout(LayoutError::MissingPosition(_)) => "MissingPosition",
            ServerError::Layout(LayoutError::InvalidParams(_)) => "InvalidParams",
            ServerError::CorruptLog(_) => "CorruptLog",
            ServerError::Io(_) => "StorageError",
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            ServerError::UnknownTask(_) | ServerError::UnknownSession(_) => 404,
            ServerError::TaskConflict(_) | ServerError::StaleSession { .. } => 409,
            ServerError::BadRequest(_) | ServerError::Format(_) | ServerError::Stroke(_) => 400,
            ServerError::UnknownSentence { .. }
            | ServerError::NothingToUndo
            | ServerError::NothingToRedo
            | ServerError::Apply(_)
            | ServerError::Layout(_) => 422,
            ServerError::CorruptLog(_) | ServerError::Io(_) => 500,
        }
    }

    /// Structured extras for the error body.
    pub fn detail(&self) -> Value {
        match self {
            ServerError::UnknownTask(id) => json!({ "task_id": id }),
            ServerError::UnknownSession(id) => json!({ "session_id": id }),
            ServerError::UnknownSentence {
                sentence,
                available,
            } => {
                json!({ "sentence": sentence, "available": available })
            }
            ServerError::TaskConflict(id) => json!({ "task_id": id }),
            ServerError::StaleSession { expected, actual } => {
                json!({ "expected": expected, "actual": actual })
            }
            ServerError::Format(FormatError::TokenMismatch { expected, found }) => {
                json!({ "expected": expected, "found": found })
            }
            ServerError::Format(
                FormatError::UnbalancedBrackets { offset }
                | FormatError::EmptyConstituent { offset }
                | FormatError::SingleChildConstituent { offset },
            ) => json!({ "offset": offset }),
            ServerError::Apply(ApplyError::WrongKind { op, task }) => {
                json!({ "op_kind": op, "task_kind": task })
            }
            ServerError::Stroke(StrokeError::StaleEdges { child, parent }) => {
                json!({ "child": child, "parent": parent })
            }
            _ => Value::Null,
        }
    }

    pub fn body(&self) -> Value {
        json!({ "code": self.code(), "message": self.to_string(), "detail": self.detail() })
    }
}
