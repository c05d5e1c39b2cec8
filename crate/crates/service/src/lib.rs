//! Backend for collecting human preferences over segment pairs.
//!
//! Sessions walk a fixed plan of teaching pages, exercises, practice pairs,
//! elicitation pairs and a comprehension survey, depending on their
//! condition. Every mutation is appended to an event log; exports produce
//! datasets in the same JSONL schema the analysis tools read.

pub mod condition;
pub mod config;
pub mod content;
pub mod error;
pub mod http;
pub mod service;
pub mod session;
pub mod store;
pub mod survey;
pub mod world;

pub use condition::{Arm, Condition, Experiment, Stage};
pub use config::ServiceConfig;
pub use error::ServiceError;
pub use http::{router, serve};
pub use service::{CreateSession, CreatedSession, FilterDecision, ResponseAck, Service, SurveyResult};
pub use session::{Answer, Feedback, ItemPayload, NextItem, ResponseInput};
pub use survey::SurveyAnswers;
