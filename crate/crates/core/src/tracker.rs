//! Rule-based step tracker for the table-assembly task.
//!
//! The tracker keeps one counter per recognized activity, derives the current
//! step from the counters, flags ordering mistakes and proposes a message
//! whenever a step boundary is crossed or a mistake fires.

use serde::{Deserialize, Serialize};

use crate::activity::ActivityClass;
use crate::convo::{ClockTime, Conversation, Speaker};
use crate::task::{StepId, Targets, TaskDef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MistakeKind {
    ScrewFrameBeforeAllPlaced,
    ScrewLegBeforeFramesDone,
    DrillBeforeAllScrews,
}

impl MistakeKind {
    pub const ALL: [MistakeKind; 3] = [
        MistakeKind::ScrewFrameBeforeAllPlaced,
        MistakeKind::ScrewLegBeforeFramesDone,
        MistakeKind::DrillBeforeAllScrews,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MistakeEvent {
    pub kind: MistakeKind,
    pub time: ClockTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScrewTarget {
    Frame,
    Leg,
}

/// A suggested message that has not been delivered yet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suggestion {
    pub message: String,
    pub step: StepId,
    pub mistake: Option<MistakeKind>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackerState {
    pub tabletop_lifted: bool,
    pub sanded: bool,
    pub flipped: bool,
    pub frames_placed: u8,
    pub frame_screws: u8,
    pub legs_lifted: u8,
    pub leg_screws: u8,
    pub drilled: u8,
    pub table_placed: bool,
    pub mistakes: Vec<MistakeEvent>,
    pub last_suggested_step: Option<StepId>,
    /// Suggestion from the latest Wearable trigger, until an assistant line delivers it.
    pub pending: Option<Suggestion>,
    /// Last non-inert activity.
    pub last_progress: Option<ActivityClass>,
    /// Counter an Unscrew takes back.
    pub last_screw: Option<ScrewTarget>,
}

/// Step information handed to the assistant model with each prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepInfo {
    pub step_id: StepId,
    pub step_note: String,
    pub suggested_message: Option<String>,
    pub mistake: Option<MistakeKind>,
}

impl StepInfo {
    pub fn is_corrective(&self) -> bool {
        self.mistake.is_some() && self.suggested_message.is_some()
    }

    pub fn is_step_advance(&self) -> bool {
        self.mistake.is_none() && self.suggested_message.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseCategory {
    KeyInstruction,
    MistakeCorrection,
    Answer,
    Miscellaneous,
}

impl ResponseCategory {
    pub const ALL: [ResponseCategory; 4] = [
        ResponseCategory::KeyInstruction,
        ResponseCategory::MistakeCorrection,
        ResponseCategory::Answer,
        ResponseCategory::Miscellaneous,
    ];

    pub fn title(self) -> &'static str {
        match self {
            ResponseCategory::KeyInstruction => "Key instruction",
            ResponseCategory::MistakeCorrection => "Mistake correction",
            ResponseCategory::Answer => "Answer",
            ResponseCategory::Miscellaneous => "Miscellaneous",
        }
    }
}

/// What the tracker knew at a trigger, for response classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TriggerKind {
    pub speaker: Speaker,
    pub step_advance: bool,
    pub corrective: bool,
}

impl TriggerKind {
    pub fn new(speaker: Speaker, info: &StepInfo) -> Self {
        TriggerKind { speaker, step_advance: info.is_step_advance(), corrective: info.is_corrective() }
    }
}

/// Category of a response given at a trigger; `None` for silence.
pub fn classify_response(ctx: &TriggerKind, response: &str) -> Option<ResponseCategory> {
    if response.trim().is_empty() {
        return None;
    }
    Some(if ctx.corrective {
        ResponseCategory::MistakeCorrection
    } else if ctx.step_advance {
        ResponseCategory::KeyInstruction
    } else if ctx.speaker == Speaker::User {
        ResponseCategory::Answer
    } else {
        ResponseCategory::Miscellaneous
    })
}

/// Result of folding a whole conversation through the tracker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replay {
    pub state: TrackerState,
    /// Step info at every Wearable and User dialogue, keyed by dialogue index.
    pub steps: Vec<(usize, StepInfo)>,
}

#[derive(Debug, Clone, Copy)]
pub struct StepTracker<'t> {
    task: &'t TaskDef,
    targets: Targets,
}

fn bump(counter: &mut u8, max: u32) {
    if u32::from(*counter) < max {
        *counter += 1;
    }
}

impl<'t> StepTracker<'t> {
    pub fn new(task: &'t TaskDef) -> Self {
        StepTracker { task, targets: task.targets() }
    }

    pub fn task(&self) -> &'t TaskDef {
        self.task
    }

    pub fn initial_state(&self) -> TrackerState {
        TrackerState::default()
    }

    /// Step info before any activity: step 1.1 with the opening instruction.
    pub fn initial_info(&self) -> StepInfo {
        StepInfo {
            step_id: StepId::PlaceTabletop,
            step_note: self.step_note(&self.initial_state()),
            suggested_message: Some(self.task.greeting().to_string()),
            mistake: None,
        }
    }

    pub fn step_of(&self, s: &TrackerState) -> StepId {
        let t = &self.targets;
        if !s.tabletop_lifted {
            StepId::PlaceTabletop
        } else if !s.sanded {
            StepId::Sand
        } else if !s.flipped {
            StepId::Flip
        } else if u32::from(s.frames_placed) < t.frames {
            StepId::PlaceFrames
        } else if u32::from(s.frame_screws) < t.frame_screws {
            StepId::ScrewFrames
        } else if u32::from(s.leg_screws) < t.legs {
            StepId::AttachLegs
        } else if u32::from(s.drilled) < t.drills {
            StepId::Drill
        } else if !s.table_placed {
            StepId::PlaceTable
        } else {
            StepId::Done
        }
    }

    fn step_count(&self, s: &TrackerState, step: StepId) -> u8 {
        match step {
            StepId::PlaceFrames => s.frames_placed,
            StepId::ScrewFrames => s.frame_screws,
            StepId::AttachLegs => s.leg_screws,
            StepId::Drill => s.drilled,
            _ => 0,
        }
    }

    /// Human-readable progress sentence for the prompt's "Current step" line.
    pub fn step_note(&self, s: &TrackerState) -> String {
        let step = self.step_of(s);
        if step == StepId::Done {
            return self.task.completion_note.clone();
        }
        let count = self.step_count(s, step);
        let def = self.task.step(step);
        if count > 0 {
            if let (Some(progress), Some(target)) = (&def.progress, def.target) {
                let text = progress.replace("{count}", &count.to_string()).replace("{target}", &target.to_string());
                return format!("On step {step}: {text}");
            }
        }
        match step.previous() {
            Some(prev) => format!("Finished step {prev}: {}", self.task.step(prev).finished),
            None => format!("Not started yet. Next is step {step}."),
        }
    }

    /// Applies one recognized activity.
    pub fn advance(&self, state: &TrackerState, event: ActivityClass, time: ClockTime) -> (TrackerState, StepInfo) {
        let t = self.targets;
        let mut s = state.clone();
        let before = self.step_of(&s);
        let mut mistake = None;

        match event {
            ActivityClass::None | ActivityClass::Hammer => {}
            ActivityClass::LiftFloorChestHeavy => s.tabletop_lifted = true,
            ActivityClass::Sand => s.sanded = true,
            ActivityClass::LiftChestChestHeavy => s.flipped = true,
            ActivityClass::LiftFloorChestLight => bump(&mut s.frames_placed, t.frames),
            ActivityClass::LiftKneeChestHeavy => bump(&mut s.legs_lifted, t.legs),
            ActivityClass::Screw => {
                let frames_open = u32::from(s.frame_screws) < t.frame_screws;
                let after_leg_lift = s.last_progress == Some(ActivityClass::LiftKneeChestHeavy);
                if frames_open && after_leg_lift {
                    mistake = Some(MistakeKind::ScrewLegBeforeFramesDone);
                    bump(&mut s.leg_screws, t.legs);
                    s.last_screw = Some(ScrewTarget::Leg);
                } else if frames_open {
                    if s.flipped && u32::from(s.frames_placed) < t.frames {
                        mistake = Some(MistakeKind::ScrewFrameBeforeAllPlaced);
                    }
                    bump(&mut s.frame_screws, t.frame_screws);
                    s.last_screw = Some(ScrewTarget::Frame);
                } else {
                    bump(&mut s.leg_screws, t.legs);
                    s.last_screw = Some(ScrewTarget::Leg);
                }
            }
            ActivityClass::Unscrew => match s.last_screw {
                Some(ScrewTarget::Frame) => s.frame_screws = s.frame_screws.saturating_sub(1),
                Some(ScrewTarget::Leg) => s.leg_screws = s.leg_screws.saturating_sub(1),
                None => {}
            },
            ActivityClass::Drill => {
                if u32::from(s.frame_screws) + u32::from(s.leg_screws) < t.total_screws() {
                    mistake = Some(MistakeKind::DrillBeforeAllScrews);
                }
                bump(&mut s.drilled, t.drills);
            }
            ActivityClass::LiftChestKneeHeavy => s.table_placed = true,
        }
        if !event.is_inert() {
            s.last_progress = Some(event);
        }

        let after = self.step_of(&s);
        let mut note = self.step_note(&s);
        let suggestion = if let Some(kind) = mistake {
            s.mistakes.push(MistakeEvent { kind, time });
            note.push_str(&format!(" Mistake: the user {}.", self.task.mistake_text(kind).description));
            Some(Suggestion { message: self.task.mistake_text(kind).message.clone(), step: after, mistake: Some(kind) })
        } else if after > before {
            Some(Suggestion { message: self.task.instruction_for(after).to_string(), step: after, mistake: None })
        } else {
            None
        };
        if let Some(sg) = &suggestion {
            s.last_suggested_step = Some(sg.step);
        }
        s.pending = suggestion.clone();

        let info = StepInfo {
            step_id: after,
            step_note: note,
            suggested_message: suggestion.as_ref().map(|sg| sg.message.clone()),
            mistake: suggestion.and_then(|sg| sg.mistake),
        };
        (s, info)
    }

    /// Step info at a User trigger. An undelivered suggestion from the
    /// immediately preceding Wearable trigger is carried over.
    pub fn on_user(&self, state: &TrackerState) -> StepInfo {
        let mut note = self.step_note(state);
        if let Some(kind) = state.pending.as_ref().and_then(|p| p.mistake) {
            note.push_str(&format!(" Mistake: the user {}.", self.task.mistake_text(kind).description));
        }
        StepInfo {
            step_id: self.step_of(state),
            step_note: note,
            suggested_message: state.pending.as_ref().map(|p| p.message.clone()),
            mistake: state.pending.as_ref().and_then(|p| p.mistake),
        }
    }

    /// Records that the assistant spoke, which delivers any pending suggestion.
    pub fn on_assistant(&self, state: &mut TrackerState) {
        state.pending = None;
    }

    /// Folds the tracker over a conversation.
    pub fn replay(&self, c: &Conversation) -> Replay {
        let mut state = self.initial_state();
        let mut steps = Vec::new();
        for (i, d) in c.dialogues.iter().enumerate() {
            match d.speaker {
                Speaker::Wearable => {
                    // Parse-time validation guarantees a known activity.
                    let Some(activity) = d.activity() else { continue };
                    let (next, info) = self.advance(&state, activity, d.time);
                    state = next;
                    steps.push((i, info));
                }
                Speaker::User => steps.push((i, self.on_user(&state))),
                Speaker::Assistant => self.on_assistant(&mut state),
            }
        }
        Replay { state, steps }
    }
}
