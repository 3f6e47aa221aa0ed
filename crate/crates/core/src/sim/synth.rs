//! Ground-truth conversations around activity logs.
//!
//! [`synthesize_conversation`] is a deterministic offline stand-in for asking a
//! large model to write the conversation; [`generate_with_model`] does ask one
//! and [`salvage_generated`] cleans up what comes back.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::generator::ActivityLog;
use super::user::DEFAULT_COMMENTS;
use crate::backend::{BackendError, RemoteChat};
use crate::convo::{normalize_document, parse_conversation, serialize_conversation, Conversation, Dialogue, Speaker};
use crate::prompt::build_datagen_prompt;
use crate::task::{StepId, TaskDef};
use crate::tracker::StepTracker;

const ENCOURAGEMENTS: [&str; 5] =
    ["Great job, keep going!", "You're doing well.", "Nice, steady progress.", "Keep it up!", "Looking good so far."];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Chance the user comments at a step boundary.
    pub comment_prob: f64,
    /// Chance the assistant holds back a step instruction until after the
    /// user's comment.
    pub defer_prob: f64,
    /// Chance of an encouragement at an uneventful activity.
    pub misc_prob: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { comment_prob: 0.3, defer_prob: 0.5, misc_prob: 0.1 }
    }
}

/// Writes a plausible assistant/user conversation around `log`.
///
/// The assistant greets at the log's start time, relays every tracker
/// suggestion one second after its trigger and occasionally encourages. At
/// step boundaries the user may comment two seconds after the trigger; the
/// assistant then either answers one second later or, if it deferred, gives
/// the instruction only then.
pub fn synthesize_conversation(task: &TaskDef, log: &ActivityLog, config: &SynthConfig, seed: u64) -> Conversation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = |x: f64| if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) };
    let tracker = StepTracker::new(task);
    let mut state = tracker.initial_state();
    let mut out = Conversation::new();
    let push = |out: &mut Conversation, d: Dialogue| {
        let last = out.last_time();
        let mut d = d;
        if let Some(last) = last {
            d.time = d.time.max(last);
        }
        out.push(d).expect("clamped to be monotone");
    };
    let say = |time, text: &str| Dialogue::new(time, Speaker::Assistant, text).expect("non-empty template");

    if log.conversation.is_empty() {
        return out;
    }
    push(&mut out, say(log.start_time, task.greeting()));
    for event in &log.conversation.dialogues {
        let Some(activity) = event.activity() else { continue };
        let t = event.time;
        push(&mut out, event.clone());
        let (next, info) = tracker.advance(&state, activity, t);
        state = next;
        match &info.suggested_message {
            Some(msg) => {
                let comments =
                    info.is_step_advance() && info.step_id != StepId::Done && rng.random_bool(p(config.comment_prob));
                let comment = comments.then(|| DEFAULT_COMMENTS[rng.random_range(0..DEFAULT_COMMENTS.len())]);
                let defer = comment.is_some() && rng.random_bool(p(config.defer_prob));
                if !defer {
                    push(&mut out, say(t.saturating_add(1), msg));
                    tracker.on_assistant(&mut state);
                }
                if let Some(c) = comment {
                    push(&mut out, Dialogue::new(t.saturating_add(2), Speaker::User, c).expect("valid comment"));
                    let reply = if defer {
                        format!("Great! {msg}")
                    } else {
                        format!("Sure. {}", tracker.on_user(&state).step_note)
                    };
                    push(&mut out, say(t.saturating_add(3), &reply));
                    tracker.on_assistant(&mut state);
                }
            }
            None => {
                if rng.random_bool(p(config.misc_prob)) {
                    let e = ENCOURAGEMENTS[rng.random_range(0..ENCOURAGEMENTS.len())];
                    push(&mut out, say(t.saturating_add(1), e));
                    tracker.on_assistant(&mut state);
                }
            }
        }
    }
    out.source = log.conversation.source.clone();
    out
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("generated conversation has no usable lines")]
    Unusable,
}

/// Asks a remote model to write the conversation for `log` using the
/// data-generation prompt, then salvages the reply.
pub fn generate_with_model(chat: &RemoteChat, task: &TaskDef, log: &ActivityLog) -> Result<Conversation, SynthError> {
    let system = build_datagen_prompt(task, &log.mistakes);
    let user = serialize_conversation(&log.conversation);
    let raw = chat.chat(&system, &user)?;
    let mut c = salvage_generated(&raw);
    if c.is_empty() {
        return Err(SynthError::Unusable);
    }
    c.source = log.conversation.source.clone();
    Ok(c)
}

/// Keeps the well-formed dialogue lines of model output. Lines that do not
/// parse (prose, markdown, unknown activities) are dropped and timestamps that
/// go backwards are raised to the previous one.
pub fn salvage_generated(raw: &str) -> Conversation {
    let mut out = Conversation::new();
    for line in normalize_document(raw).lines() {
        let line = line.trim_start_matches(['-', '*', '>', ' ']);
        let Ok(parsed) = parse_conversation(line) else { continue };
        for mut d in parsed.dialogues {
            if let Some(last) = out.last_time() {
                d.time = d.time.max(last);
            }
            out.push(d).expect("clamped to be monotone");
        }
    }
    out
}
