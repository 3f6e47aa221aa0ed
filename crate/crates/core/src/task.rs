//! Task definitions: step list, counter targets and message templates.
//!
//! The table-assembly task ships built in; other definitions with the same
//! step structure can be loaded from TOML.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::tracker::MistakeKind;

const BUILTIN_TABLE_ASSEMBLY: &str = include_str!("../tasks/table_assembly.toml");

/// Position in the assembly flow. Ordered by progress.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum StepId {
    PlaceTabletop,
    Sand,
    Flip,
    PlaceFrames,
    ScrewFrames,
    AttachLegs,
    Drill,
    PlaceTable,
    Done,
}

impl StepId {
    pub const ALL: [StepId; 9] = [
        StepId::PlaceTabletop,
        StepId::Sand,
        StepId::Flip,
        StepId::PlaceFrames,
        StepId::ScrewFrames,
        StepId::AttachLegs,
        StepId::Drill,
        StepId::PlaceTable,
        StepId::Done,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StepId::PlaceTabletop => "1.1",
            StepId::Sand => "1.2",
            StepId::Flip => "1.3",
            StepId::PlaceFrames => "2.1",
            StepId::ScrewFrames => "2.2",
            StepId::AttachLegs => "3",
            StepId::Drill => "4",
            StepId::PlaceTable => "5",
            StepId::Done => "done",
        }
    }

    pub fn previous(self) -> Option<StepId> {
        let i = StepId::ALL.iter().position(|s| *s == self)?;
        i.checked_sub(1).map(|j| StepId::ALL[j])
    }
}

impl fmt::Display for StepId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StepId {
    type Err = TaskError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StepId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| TaskError::Invalid(format!("unknown step id {s:?}")))
    }
}

impl From<StepId> for String {
    fn from(s: StepId) -> String {
        s.as_str().to_string()
    }
}

impl TryFrom<String> for StepId {
    type Error = TaskError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("invalid task definition: {0}")]
    Invalid(String),
    #[error("task definition parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("reading task definition: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDef {
    pub id: StepId,
    /// Suggested message when this step becomes current.
    pub instruction: String,
    /// Past-tense summary used in "Finished step ..." notes.
    pub finished: String,
    /// Number of counted actions the step needs, for counted steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<u32>,
    /// Progress note with `{count}` and `{target}` placeholders.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub progress: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MistakeText {
    /// Corrective message suggested to the assistant.
    pub message: String,
    /// Clause completing "the user ..." in the data-generation prompt.
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MistakeTexts {
    pub screw_frame_before_all_placed: MistakeText,
    pub screw_leg_before_frames_done: MistakeText,
    pub drill_before_all_screws: MistakeText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatagenText {
    pub device_activities: String,
    pub manual: Vec<String>,
    pub order_note: String,
    pub no_mistakes: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDef {
    pub id: String,
    pub version: u32,
    /// Object being assembled, e.g. "a table".
    pub noun: String,
    pub intro: String,
    pub materials: String,
    pub outline: Vec<String>,
    pub notes: Vec<String>,
    pub completion_message: String,
    pub completion_note: String,
    pub datagen: DatagenText,
    pub steps: Vec<StepDef>,
    pub mistakes: MistakeTexts,
}

/// Counter targets of the counted steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Targets {
    pub frames: u32,
    pub frame_screws: u32,
    pub legs: u32,
    pub drills: u32,
}

impl Targets {
    pub fn total_screws(&self) -> u32 {
        self.frame_screws + self.legs
    }
}

impl TaskDef {
    pub fn table_assembly() -> TaskDef {
        TaskDef::from_toml_str(BUILTIN_TABLE_ASSEMBLY).expect("built-in task definition is valid")
    }

    pub fn from_toml_str(s: &str) -> Result<TaskDef, TaskError> {
        let def: TaskDef = toml::from_str(s)?;
        def.validate()?;
        Ok(def)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<TaskDef, TaskError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Looks up a task by id; only the built-in task is known.
    pub fn by_id(id: &str) -> Option<TaskDef> {
        let builtin = Self::table_assembly();
        (builtin.id == id).then_some(builtin)
    }

    fn validate(&self) -> Result<(), TaskError> {
        let ids: Vec<StepId> = self.steps.iter().map(|s| s.id).collect();
        if ids != StepId::ALL[..8] {
            return Err(TaskError::Invalid(format!(
                "steps must be 1.1, 1.2, 1.3, 2.1, 2.2, 3, 4, 5 in order, got {:?}",
                ids.iter().map(|s| s.as_str()).collect::<Vec<_>>()
            )));
        }
        for id in [StepId::PlaceFrames, StepId::ScrewFrames, StepId::AttachLegs, StepId::Drill] {
            let step = self.step(id);
            match (step.target, &step.progress) {
                (Some(t), Some(p)) if t > 0 && t <= u8::MAX as u32 && p.contains("{count}") => {}
                _ => {
                    return Err(TaskError::Invalid(format!(
                        "step {id} needs a target in 1..=255 and a progress template with {{count}}"
                    )))
                }
            }
        }
        if self.notes.is_empty() || self.outline.is_empty() {
            return Err(TaskError::Invalid("outline and notes must be non-empty".into()));
        }
        Ok(())
    }

    pub fn step(&self, id: StepId) -> &StepDef {
        self.steps.iter().find(|s| s.id == id).unwrap_or_else(|| panic!("validated task has step {id}"))
    }

    pub fn targets(&self) -> Targets {
        let t = |id| self.step(id).target.unwrap_or(1);
        Targets {
            frames: t(StepId::PlaceFrames),
            frame_screws: t(StepId::ScrewFrames),
            legs: t(StepId::AttachLegs),
            drills: t(StepId::Drill),
        }
    }

    /// The first message of a session.
    pub fn greeting(&self) -> &str {
        &self.step(StepId::PlaceTabletop).instruction
    }

    /// Message suggested when `step` becomes current.
    pub fn instruction_for(&self, step: StepId) -> &str {
        match step {
            StepId::Done => &self.completion_message,
            s => &self.step(s).instruction,
        }
    }

    pub fn mistake_text(&self, kind: MistakeKind) -> &MistakeText {
        match kind {
            MistakeKind::ScrewFrameBeforeAllPlaced => &self.mistakes.screw_frame_before_all_placed,
            MistakeKind::ScrewLegBeforeFramesDone => &self.mistakes.screw_leg_before_frames_done,
            MistakeKind::DrillBeforeAllScrews => &self.mistakes.drill_before_all_screws,
        }
    }
}
