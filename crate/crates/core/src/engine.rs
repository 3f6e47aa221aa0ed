//! Live assistant sessions.
//!
//! A [`Session`] owns the conversation so far and the tracker state. Every
//! Wearable or User dialogue is one trigger: the tracker is updated, prompts
//! are built from the recent window, the backend is asked for a reply and a
//! non-empty reply is appended one second after the trigger.

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::backend::{ChatBackend, ChatRequest, TurnHints};
use crate::convo::{clean_response, ClockTime, Conversation, Dialogue, OutOfOrder, Speaker};
use crate::prompt::{build_system_prompt, build_user_prompt, PromptConfig, PromptError, TriggerContext};
use crate::sim::ScriptedUser;
use crate::task::TaskDef;
use crate::tracker::{classify_response, ResponseCategory, StepInfo, StepTracker, TrackerState, TriggerKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub prompt: PromptConfig,
    /// Replies equal to one of these (ignoring case) count as silence.
    pub silence_markers: Vec<String>,
    /// Seconds between a trigger and the assistant reply it caused.
    pub response_delay_secs: u32,
    /// Example conversations for one- and four-shot prompting.
    #[serde(skip)]
    pub examples: Vec<Conversation>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            prompt: PromptConfig::default(),
            silence_markers: vec!["(silence)".into(), "[silence]".into(), "<silence>".into()],
            response_delay_secs: 1,
            examples: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("assistant dialogues are produced by the session, not submitted to it")]
    AssistantTrigger,
    #[error(transparent)]
    OutOfOrder(#[from] OutOfOrder),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Outcome of one backend call.
#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    /// Post-processed reply; empty means silence.
    pub text: String,
    pub latency: Duration,
    pub error: Option<String>,
}

/// Calls the backend once and post-processes the reply. Backend failures are
/// logged and turned into silence.
pub fn invoke(
    backend: &dyn ChatBackend,
    system: &str,
    ctx: &TriggerContext,
    hints: TurnHints,
    silence_markers: &[String],
) -> Invocation {
    let request = ChatRequest { system: system.to_string(), user: build_user_prompt(ctx), hints };
    let started = Instant::now();
    let result = backend.complete(&request);
    let latency = started.elapsed();
    match result {
        Ok(raw) => Invocation { text: clean_response(&raw, silence_markers), latency, error: None },
        Err(e) => {
            log::warn!("backend {} failed at trigger {}: {e}", backend.name(), ctx.trigger_index);
            Invocation { text: String::new(), latency, error: Some(e.to_string()) }
        }
    }
}

/// What happened at one trigger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub trigger_index: usize,
    pub speaker: Speaker,
    pub step: StepInfo,
    /// Post-processed reply; empty for silence.
    pub response: String,
    pub category: Option<ResponseCategory>,
    pub latency_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub trigger: Dialogue,
    /// The appended assistant dialogue, if the reply was not silence.
    pub response: Option<Dialogue>,
    pub record: TurnRecord,
}

pub struct Session {
    task: Arc<TaskDef>,
    backend: Arc<dyn ChatBackend>,
    config: EngineConfig,
    system_prompt: String,
    state: TrackerState,
    conversation: Conversation,
    latencies: Vec<Duration>,
    ordinal: usize,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("task", &self.task.id)
            .field("backend", &self.backend.name())
            .field("dialogues", &self.conversation.len())
            .finish()
    }
}

impl Session {
    pub fn new(task: Arc<TaskDef>, backend: Arc<dyn ChatBackend>, config: EngineConfig) -> Result<Self, EngineError> {
        let system_prompt = build_system_prompt(&task, config.prompt.shots, &config.examples)?;
        Ok(Session {
            task,
            backend,
            config,
            system_prompt,
            state: TrackerState::default(),
            conversation: Conversation::new(),
            latencies: Vec::new(),
            ordinal: 0,
        })
    }

    pub fn task(&self) -> &TaskDef {
        &self.task
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn conversation(&self) -> &Conversation {
        &self.conversation
    }

    pub fn state(&self) -> &TrackerState {
        &self.state
    }

    pub fn latencies(&self) -> &[Duration] {
        &self.latencies
    }

    pub fn system_prompt(&self) -> &str {
        &self.system_prompt
    }

    /// Step info as seen by a user asking right now.
    pub fn current_info(&self) -> StepInfo {
        let tracker = StepTracker::new(&self.task);
        if self.conversation.is_empty() {
            return tracker.initial_info();
        }
        tracker.on_user(&self.state)
    }

    /// Emits the opening instruction. Only valid on an empty session.
    pub fn start(&mut self, time: ClockTime) -> Result<Dialogue, EngineError> {
        let greeting =
            Dialogue::new(time, Speaker::Assistant, self.task.greeting()).expect("task greeting is a valid utterance");
        self.conversation.push(greeting.clone())?;
        StepTracker::new(&self.task).on_assistant(&mut self.state);
        Ok(greeting)
    }

    /// Applies one Wearable or User dialogue and runs the backend for it.
    pub fn handle_event(&mut self, d: Dialogue) -> Result<Turn, EngineError> {
        if d.speaker == Speaker::Assistant {
            return Err(EngineError::AssistantTrigger);
        }
        self.conversation.push(d.clone())?;
        let task = Arc::clone(&self.task);
        let tracker = StepTracker::new(&task);
        let info = match d.activity() {
            Some(activity) => {
                let (next, info) = tracker.advance(&self.state, activity, d.time);
                self.state = next;
                info
            }
            None => tracker.on_user(&self.state),
        };
        let trigger_index = self.conversation.len() - 1;
        let ctx = TriggerContext::from_prefix(&self.conversation.dialogues, self.config.prompt.window, &info);
        let hints = TurnHints {
            speaker: d.speaker,
            trigger_text: d.text.clone(),
            step: info.clone(),
            trigger_index,
            ordinal: self.ordinal,
        };
        self.ordinal += 1;
        let out = invoke(self.backend.as_ref(), &self.system_prompt, &ctx, hints, &self.config.silence_markers);
        self.latencies.push(out.latency);

        let reply_time = d.time.saturating_add(self.config.response_delay_secs);
        let response = match Dialogue::new(reply_time, Speaker::Assistant, &out.text) {
            Ok(reply) if !out.text.is_empty() => {
                self.conversation.push(reply.clone())?;
                tracker.on_assistant(&mut self.state);
                Some(reply)
            }
            _ => None,
        };
        let text = response.as_ref().map(|r| r.text.clone()).unwrap_or_default();
        let category = classify_response(&TriggerKind::new(d.speaker, &info), &text);
        Ok(Turn {
            record: TurnRecord {
                trigger_index,
                speaker: d.speaker,
                step: info,
                response: text,
                category,
                latency_secs: out.latency.as_secs_f64(),
                error: out.error,
            },
            trigger: d,
            response,
        })
    }

    pub fn into_conversation(self) -> Conversation {
        self.conversation
    }
}

/// Who plays the user in a closed-loop run.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum UserScript {
    /// The user never speaks.
    Silent,
    /// Occasional comments at step boundaries.
    Simulated(ScriptedUser),
}

/// Seconds after a trigger at which a simulated user comment lands.
const COMMENT_DELAY_SECS: u32 = 2;

/// Plays an activity log through a session: wearable events at their
/// timestamps, simulated user comments right after step boundaries and the
/// backend's replies.
pub fn run_closed_loop(
    task: Arc<TaskDef>,
    events: &Conversation,
    user: UserScript,
    backend: Arc<dyn ChatBackend>,
    config: EngineConfig,
) -> Result<Conversation, EngineError> {
    let mut session = Session::new(task, backend, config)?;
    let Some(first) = events.dialogues.first() else {
        return Ok(Conversation { dialogues: Vec::new(), source: events.source.clone() });
    };
    session.start(first.time)?;
    let mut user = match user {
        UserScript::Silent => None,
        UserScript::Simulated(u) => Some(u),
    };
    for event in events.dialogues.iter().filter(|d| d.speaker.is_trigger()) {
        let turn = session.handle_event(at_or_after(event.clone(), session.conversation.last_time()))?;
        if let Some(user) = user.as_mut() {
            if let Some(comment) = user.comment(&turn.record.step) {
                let time = turn.trigger.time.saturating_add(COMMENT_DELAY_SECS);
                let d = Dialogue::new(time, Speaker::User, comment).expect("comment pool holds valid utterances");
                session.handle_event(at_or_after(d, session.conversation.last_time()))?;
            }
        }
    }
    let mut out = session.into_conversation();
    out.source = events.source.clone();
    Ok(out)
}

fn at_or_after(mut d: Dialogue, last: Option<ClockTime>) -> Dialogue {
    if let Some(last) = last {
        d.time = d.time.max(last);
    }
    d
}
