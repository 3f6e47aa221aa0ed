//! Live sessions: registry, per-session event loop and fan-out.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use chrono::Timelike;
use procassist::convo::DialogueError;
use procassist::convo::{ClockTime, Dialogue, Speaker};
use procassist::engine::{EngineError, Session, TurnRecord};
use procassist::prompt::Shots;
use procassist::tracker::StepInfo;
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use crate::error::ApiError;

const STREAM_BUFFER: usize = 256;

/// What a client gets back when it creates a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHandle {
    pub id: String,
    pub created_at: String,
    pub backend: String,
    pub shots: Shots,
    pub task: String,
}

/// Pushed on a session's stream after the snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StreamEvent {
    Dialogue {
        /// Position in the transcript.
        seq: usize,
        dialogue: Dialogue,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nonce: Option<String>,
    },
    Step {
        step: StepInfo,
    },
}

impl StreamEvent {
    pub fn name(&self) -> &'static str {
        match self {
            StreamEvent::Dialogue { .. } => "dialogue",
            StreamEvent::Step { .. } => "step",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub dialogues: Vec<Dialogue>,
    pub step: StepInfo,
}

/// Body of `POST /v1/sessions/{id}/events`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRequest {
    pub speaker: Speaker,
    /// Activity name for Wearable events, utterance for User events.
    #[serde(alias = "activity")]
    pub text: String,
    #[serde(default)]
    pub client_time: Option<ClockTime>,
    /// Echoed back so clients can reconcile optimistic echoes.
    #[serde(default)]
    pub nonce: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventResponse {
    pub trigger: Dialogue,
    pub responses: Vec<Dialogue>,
    pub step: StepInfo,
    pub record: TurnRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonce: Option<String>,
}

pub(crate) struct Live {
    session: Session,
    events: broadcast::Sender<StreamEvent>,
}

impl Live {
    fn publish(&self, event: StreamEvent) {
        // No subscribers is fine.
        let _ = self.events.send(event);
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot { dialogues: self.session.conversation().dialogues.clone(), step: self.session.current_info() }
    }
}

pub(crate) struct Slot {
    pub handle: SessionHandle,
    live: Arc<tokio::sync::Mutex<Live>>,
    touched: Mutex<Instant>,
}

impl Slot {
    fn touch(&self) {
        *self.touched.lock().expect("touch lock") = Instant::now();
    }
}

/// All live sessions of one server.
pub struct Registry {
    sessions: Mutex<HashMap<String, Arc<Slot>>>,
    next_id: AtomicU64,
    idle_timeout: Duration,
}

fn wall_clock() -> ClockTime {
    let now = chrono::Local::now().time();
    ClockTime::from_hms(now.hour(), now.minute(), now.second()).expect("wall clock is a valid time of day")
}

impl Registry {
    pub fn new(idle_timeout: Duration) -> Self {
        Registry { sessions: Mutex::new(HashMap::new()), next_id: AtomicU64::new(1), idle_timeout }
    }

    pub fn idle_timeout(&self) -> Duration {
        self.idle_timeout
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("registry lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Starts `session` (emitting its greeting) and registers it.
    pub(crate) fn insert(
        &self,
        mut session: Session,
        shots: Shots,
        start_time: Option<ClockTime>,
    ) -> Result<(SessionHandle, Dialogue, StepInfo), ApiError> {
        let greeting =
            session.start(start_time.unwrap_or_else(wall_clock)).map_err(|e| ApiError::Internal(e.to_string()))?;
        let step = session.current_info();
        let id = format!("s-{:06}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let handle = SessionHandle {
            id: id.clone(),
            created_at: chrono::Local::now().to_rfc3339(),
            backend: session.backend_name().to_string(),
            shots,
            task: session.task().id.clone(),
        };
        let (events, _) = broadcast::channel(STREAM_BUFFER);
        let slot = Slot {
            handle: handle.clone(),
            live: Arc::new(tokio::sync::Mutex::new(Live { session, events })),
            touched: Mutex::new(Instant::now()),
        };
        self.sessions.lock().expect("registry lock").insert(id, Arc::new(slot));
        Ok((handle, greeting, step))
    }

    fn get(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        let slot = self
            .sessions
            .lock()
            .expect("registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(id.into()))?;
        slot.touch();
        Ok(slot)
    }

    pub fn remove(&self, id: &str) -> bool {
        self.sessions.lock().expect("registry lock").remove(id).is_some()
    }

    /// Drops sessions idle for longer than the timeout. Returns how many.
    pub fn evict_idle(&self) -> usize {
        let now = Instant::now();
        let mut sessions = self.sessions.lock().expect("registry lock");
        let before = sessions.len();
        sessions.retain(|id, slot| {
            let keep = now.duration_since(*slot.touched.lock().expect("touch lock")) <= self.idle_timeout;
            if !keep {
                log::info!("evicting idle session {id}");
            }
            keep
        });
        before - sessions.len()
    }

    /// Applies one event. Events for the same session queue on its lock in
    /// arrival order; the backend call runs on the blocking pool.
    pub(crate) async fn post_event(&self, id: &str, req: EventRequest) -> Result<EventResponse, ApiError> {
        let slot = self.get(id)?;
        if req.speaker == Speaker::Assistant {
            return Err(ApiError::BadRequest("only User and Wearable events can be posted".into()));
        }
        let mut live = Arc::clone(&slot.live).lock_owned().await;
        let result = tokio::task::spawn_blocking(move || {
            let last = live.session.conversation().last_time();
            let time = match req.client_time {
                Some(t) => t,
                None => last.map_or_else(wall_clock, |l| wall_clock().max(l)),
            };
            if let Some(last) = last.filter(|l| time < *l) {
                return Err(ApiError::OutOfOrderTime(format!("event time {time} is before the last event at {last}")));
            }
            let trigger = Dialogue::new(time, req.speaker, &req.text).map_err(|e| match e {
                DialogueError::UnknownActivity(u) => ApiError::UnknownActivity(u.to_string()),
                other => ApiError::BadRequest(other.to_string()),
            })?;
            let seq = live.session.conversation().len();
            let turn = live.session.handle_event(trigger).map_err(|e| match e {
                EngineError::OutOfOrder(o) => ApiError::OutOfOrderTime(o.to_string()),
                other => ApiError::Internal(other.to_string()),
            })?;
            live.publish(StreamEvent::Dialogue { seq, dialogue: turn.trigger.clone(), nonce: req.nonce.clone() });
            if let Some(reply) = &turn.response {
                live.publish(StreamEvent::Dialogue { seq: seq + 1, dialogue: reply.clone(), nonce: None });
            }
            live.publish(StreamEvent::Step { step: turn.record.step.clone() });
            Ok(EventResponse {
                responses: turn.response.into_iter().collect(),
                step: turn.record.step.clone(),
                trigger: turn.trigger,
                record: turn.record,
                nonce: req.nonce,
            })
        })
        .await?;
        slot.touch();
        result
    }

    pub(crate) async fn snapshot(&self, id: &str) -> Result<(SessionHandle, Snapshot), ApiError> {
        let slot = self.get(id)?;
        let live = slot.live.lock().await;
        Ok((slot.handle.clone(), live.snapshot()))
    }

    /// Snapshot plus a receiver for everything published after it.
    pub(crate) async fn subscribe(&self, id: &str) -> Result<(Snapshot, broadcast::Receiver<StreamEvent>), ApiError> {
        let slot = self.get(id)?;
        let live = slot.live.lock().await;
        Ok((live.snapshot(), live.events.subscribe()))
    }
}
