//! Pluggable chat backends.
//!
//! A backend receives the system and user prompt for one trigger and returns
//! raw text. The mock backends also read [`TurnHints`], the structured data
//! the prompts were built from; a remote model only sees the prompts.

mod remote;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::convo::{Conversation, Speaker};
use crate::http::HttpError;
use crate::tracker::StepInfo;

pub use remote::{RemoteChat, RemoteChatConfig};

/// Structured view of the trigger a prompt was built for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnHints {
    pub speaker: Speaker,
    pub trigger_text: String,
    pub step: StepInfo,
    /// Dialogue index of the trigger in its conversation.
    pub trigger_index: usize,
    /// Zero-based count of triggers before this one.
    pub ordinal: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub hints: TurnHints,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("backend timed out")]
    Timeout,
    #[error("backend returned status {0}")]
    Status(u16),
    #[error("backend transport error: {0}")]
    Transport(String),
    #[error("backend protocol error: {0}")]
    Protocol(String),
}

impl From<HttpError> for BackendError {
    fn from(e: HttpError) -> Self {
        match e {
            HttpError::Timeout => BackendError::Timeout,
            HttpError::Status(s) => BackendError::Status(s),
            HttpError::Transport(t) => BackendError::Transport(t),
            HttpError::Decode(d) => BackendError::Protocol(d),
        }
    }
}

pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for Arc<B> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

/// Says exactly the tracker's suggested message and is silent otherwise.
///
/// With `answer_users`, a User trigger without a suggestion gets a status
/// answer built from the step note.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleAssistant {
    pub answer_users: bool,
}

impl OracleAssistant {
    pub fn answering() -> Self {
        OracleAssistant { answer_users: true }
    }
}

impl ChatBackend for OracleAssistant {
    fn name(&self) -> &str {
        if self.answer_users {
            "oracle-answers"
        } else {
            "oracle"
        }
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let h = &request.hints;
        if let Some(msg) = &h.step.suggested_message {
            return Ok(msg.clone());
        }
        if self.answer_users && h.speaker == Speaker::User {
            return Ok(format!("Sure. {}", h.step.step_note));
        }
        Ok(String::new())
    }
}

const ENCOURAGEMENTS: [&str; 4] =
    ["Keep going, you're doing great!", "Nice work, keep it up!", "Good job so far!", "You're making great progress!"];

/// Relays suggestions and otherwise always says something encouraging.
#[derive(Debug, Clone, Copy, Default)]
pub struct ChattyAssistant;

impl ChatBackend for ChattyAssistant {
    fn name(&self) -> &str {
        "chatty"
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let h = &request.hints;
        Ok(match &h.step.suggested_message {
            Some(msg) => msg.clone(),
            None => ENCOURAGEMENTS[h.ordinal % ENCOURAGEMENTS.len()].to_string(),
        })
    }
}

/// Replays the assistant turns of a recorded conversation, keyed by trigger
/// ordinal. Consecutive assistant lines after one trigger are joined with a
/// space.
#[derive(Debug, Clone, Default)]
pub struct ScriptedAssistant {
    responses: Vec<String>,
}

impl ScriptedAssistant {
    pub fn from_conversation(c: &Conversation) -> Self {
        let d = &c.dialogues;
        let responses = c.triggers().map(|(i, _)| assistant_run_after(c, i)).collect::<Vec<_>>();
        debug_assert_eq!(responses.len(), d.iter().filter(|x| x.speaker.is_trigger()).count());
        ScriptedAssistant { responses }
    }

    pub fn responses(&self) -> &[String] {
        &self.responses
    }
}

/// Assistant lines directly following dialogue `index`, joined with spaces.
pub fn assistant_run_after(c: &Conversation, index: usize) -> String {
    c.dialogues[index + 1..]
        .iter()
        .take_while(|d| d.speaker == Speaker::Assistant)
        .map(|d| d.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

impl ChatBackend for ScriptedAssistant {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        Ok(self.responses.get(request.hints.ordinal).cloned().unwrap_or_default())
    }
}

/// Backend selection as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Oracle {
        #[serde(default)]
        answer_users: bool,
    },
    Chatty,
    Remote(RemoteChatConfig),
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Oracle { answer_users: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendConfigError {
    #[error("unknown backend {0:?} (expected oracle, oracle-answers, chatty or remote)")]
    Unknown(String),
    #[error("remote backend needs an endpoint and a model id")]
    IncompleteRemote,
}

impl BackendConfig {
    /// Parses a short backend id; `remote` takes its settings from `remote`.
    pub fn from_id(id: &str, remote: Option<&RemoteChatConfig>) -> Result<Self, BackendConfigError> {
        match id {
            "oracle" => Ok(BackendConfig::Oracle { answer_users: false }),
            "oracle-answers" => Ok(BackendConfig::Oracle { answer_users: true }),
            "chatty" => Ok(BackendConfig::Chatty),
            "remote" => remote.cloned().map(BackendConfig::Remote).ok_or(BackendConfigError::IncompleteRemote),
            other => Err(BackendConfigError::Unknown(other.to_string())),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            BackendConfig::Oracle { answer_users: false } => "oracle",
            BackendConfig::Oracle { answer_users: true } => "oracle-answers",
            BackendConfig::Chatty => "chatty",
            BackendConfig::Remote(_) => "remote",
        }
    }

    pub fn build(&self) -> Result<Arc<dyn ChatBackend>, BackendConfigError> {
        Ok(match self {
            BackendConfig::Oracle { answer_users } => Arc::new(OracleAssistant { answer_users: *answer_users }),
            BackendConfig::Chatty => Arc::new(ChattyAssistant),
            BackendConfig::Remote(cfg) => {
                if cfg.endpoint.is_empty() || cfg.model.is_empty() {
                    return Err(BackendConfigError::IncompleteRemote);
                }
                Arc::new(RemoteChat::new(cfg.clone()))
            }
        })
    }
}
