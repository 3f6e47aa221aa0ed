//! Proactive procedural-task assistant.
//!
//! Wearable activity events drive a rule-based [`tracker`] that knows which
//! assembly step the user is on; [`prompt`] turns the recent conversation and
//! the tracker's suggestion into model prompts; [`engine`] runs live sessions
//! against a pluggable [`backend`]. Around that core sit a seeded activity-log
//! and conversation simulator ([`sim`]), a finetuning-dataset builder with
//! user-whim-agnostic target substitution ([`uwa`]) and a teacher-forced
//! evaluation harness ([`eval`]).
//!
//! Batch work (corpus generation, dataset building, evaluation) runs on rayon
//! when the `parallel` feature is enabled, which it is by default.

pub mod activity;
pub mod backend;
pub mod config;
pub mod convo;
pub mod engine;
pub mod eval;
pub mod http;
pub mod par;
pub mod prompt;
pub mod sim;
pub mod task;
pub mod tracker;
pub mod uwa;

#[cfg(test)]
mod stub_http;

pub use activity::ActivityClass;
pub use convo::{ClockTime, Conversation, Dialogue, Speaker};
pub use par::Execution;
pub use task::{StepId, TaskDef};
pub use tracker::{MistakeEvent, MistakeKind, ResponseCategory, StepInfo, StepTracker, TrackerState};
