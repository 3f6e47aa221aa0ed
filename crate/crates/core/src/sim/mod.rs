//! Activity-log generation, user simulation and ground-truth conversations.

mod generator;
mod io;
mod profile;
mod synth;
mod user;

pub use generator::{generate_corpus, generate_log, log_id, ActivityLog, GenerateError, SkillSampler};
pub use io::{read_conversation_dir, read_log, read_log_dir, write_conversation, write_log, LogIoError, LogSidecar};
pub use profile::{DurationRange, InvalidProfile, SkillProfile, MIN_DURATION_SECS};
pub use synth::{generate_with_model, salvage_generated, synthesize_conversation, SynthConfig, SynthError};
pub use user::{ScriptedUser, DEFAULT_COMMENTS};
