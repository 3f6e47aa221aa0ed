//! Prompt assembly for the assistant model and the conversation generator.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::convo::{serialize_conversation, serialize_dialogues, window_of, Conversation, Dialogue, DEFAULT_WINDOW};
use crate::task::TaskDef;
use crate::tracker::{MistakeEvent, StepInfo};

/// Number of example conversations appended to the system prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Shots {
    #[default]
    Zero,
    One,
    Four,
}

impl Shots {
    pub fn count(self) -> usize {
        match self {
            Shots::Zero => 0,
            Shots::One => 1,
            Shots::Four => 4,
        }
    }
}

impl fmt::Display for Shots {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.count())
    }
}

impl From<Shots> for u8 {
    fn from(s: Shots) -> u8 {
        s.count() as u8
    }
}

impl TryFrom<u8> for Shots {
    type Error = PromptError;
    fn try_from(n: u8) -> Result<Self, Self::Error> {
        match n {
            0 => Ok(Shots::Zero),
            1 => Ok(Shots::One),
            4 => Ok(Shots::Four),
            other => Err(PromptError::InvalidShots(other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("shots must be 0, 1 or 4, got {0}")]
    InvalidShots(u8),
    #[error("{needed}-shot prompt needs {needed} example conversations, got {got}")]
    InsufficientExamples { needed: usize, got: usize },
}

/// Prompt settings shared by every turn of a session or evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    pub shots: Shots,
    pub window: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig { shots: Shots::Zero, window: DEFAULT_WINDOW }
    }
}

impl PromptConfig {
    /// Finetuned models are prompted like the zero-shot setting.
    pub fn finetuned() -> Self {
        Self::default()
    }

    pub fn with_shots(shots: Shots) -> Self {
        PromptConfig { shots, ..Self::default() }
    }
}

/// System and user prompt for one model call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub user: String,
    pub shots: Shots,
    pub window_size: usize,
}

/// Everything the user prompt is built from at one trigger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerContext {
    pub history_window: Vec<Dialogue>,
    pub step_note: String,
    pub suggested_message: Option<String>,
    pub trigger_index: usize,
}

impl TriggerContext {
    /// Context at `prefix.last()`, which must be the triggering dialogue.
    pub fn from_prefix(prefix: &[Dialogue], window: usize, info: &StepInfo) -> Self {
        TriggerContext {
            history_window: window_of(prefix, window).to_vec(),
            step_note: info.step_note.clone(),
            suggested_message: info.suggested_message.clone(),
            trigger_index: prefix.len().saturating_sub(1),
        }
    }
}

/// Task description, numbered steps and notes, followed by `shots` example
/// conversations.
pub fn build_system_prompt(task: &TaskDef, shots: Shots, examples: &[Conversation]) -> Result<String, PromptError> {
    let needed = shots.count();
    if examples.len() < needed {
        return Err(PromptError::InsufficientExamples { needed, got: examples.len() });
    }
    let mut out = String::new();
    out.push_str(&task.intro);
    out.push_str("\n\nMaterials: ");
    out.push_str(&task.materials);
    out.push_str("\n\nSteps:\n\n");
    for line in &task.outline {
        out.push_str(line);
        out.push('\n');
    }
    out.push_str("\nNotes:\n");
    for (i, note) in task.notes.iter().enumerate() {
        out.push_str(&format!("{}) {}\n", i + 1, note));
    }
    match shots {
        Shots::Zero => {}
        Shots::One => {
            out.push_str("\nBelow is an example of a conversation between a user and an assistant:\n\n");
            out.push_str(&serialize_conversation(&examples[0]));
        }
        Shots::Four => {
            out.push_str("\nBelow are examples of conversations between a user and an assistant:\n");
            for (i, ex) in examples[..needed].iter().enumerate() {
                out.push_str(&format!("\nExample {}:\n", i + 1));
                out.push_str(&serialize_conversation(ex));
            }
        }
    }
    Ok(out)
}

/// Recent history, current step and (when present) the suggested message.
pub fn build_user_prompt(ctx: &TriggerContext) -> String {
    let mut out = String::from("Recent conversation history:\n");
    out.push_str(&serialize_dialogues(&ctx.history_window));
    out.push_str("\nCurrent step: ");
    out.push_str(&ctx.step_note);
    out.push('\n');
    if let Some(msg) = &ctx.suggested_message {
        out.push_str("Suggested message: ");
        out.push_str(msg);
        out.push('\n');
    }
    out
}

pub fn build_prompt_bundle(system: &str, ctx: &TriggerContext, config: &PromptConfig) -> PromptBundle {
    PromptBundle {
        system: system.to_string(),
        user: build_user_prompt(ctx),
        shots: config.shots,
        window_size: config.window,
    }
}

/// One line per mistake: "At <time>, the user <description>."
pub fn render_mistakes(task: &TaskDef, mistakes: &[MistakeEvent]) -> String {
    if mistakes.is_empty() {
        return task.datagen.no_mistakes.clone();
    }
    mistakes
        .iter()
        .map(|m| format!("At {}, the user {}.", m.time, task.mistake_text(m.kind).description))
        .collect::<Vec<_>>()
        .join("\n")
}

/// System prompt asking a large model to write a conversation around an
/// activity log. The log itself goes in the user message.
pub fn build_datagen_prompt(task: &TaskDef, mistakes: &[MistakeEvent]) -> String {
    let noun = &task.noun;
    let mut out = String::new();
    out.push_str(&format!(
        "You are given an instruction manual for performing {noun} assembly task. You are also given an activity log of a user performing the task, which was obtained from a wearable device which can only detect certain activities such as {}.\n\n",
        task.datagen.device_activities
    ));
    out.push_str("Your task is to simulate a conversation between the user and an assistant, as if the assistant is guiding the user during the assembly process. Please also include the detected activities from the wearable device as if spoken by a speaker named 'Wearable'. The assistant uses this information from the wearable to track the user's actions, so that it can prompt the user for the next step, or tell the user how to resolve any mistakes. Please include timestamps for each dialogue, keeping in mind that the prompt guiding the user to perform a step should occur shortly before the user performs the step.\n\n");
    out.push_str("Ensure that:\n");
    out.push_str("1) the user is prompted for each high-level step shortly before they do it.\n");
    out.push_str("2) you include some dialog from the user, such as responses or questions. This dialog should also include timestamps. Also ensure that the user's dialog is consistent with the actions detected by the wearable.\n");
    out.push_str("3) the assistant is providing guidance as per the instructions, especially staying rigid regarding the sequence of steps. Even if the user deviates from the sequence, the assistant should insist on continuing to follow the sequence.\n\n");
    out.push_str(&format!("Instruction manual for assembling {noun}:\n\n"));
    out.push_str(&format!("Materials: {}\n\n", task.materials));
    for line in &task.datagen.manual {
        out.push_str(line);
        out.push('\n');
    }
    out.push('\n');
    out.push_str(&task.datagen.order_note);
    out.push_str("\n\nHere are the mistakes this user made while performing the assembly:\n\n");
    out.push_str(&render_mistakes(task, mistakes));
    out.push_str("\n\nFor the conversation, use the following format:\n");
    out.push_str("HH:MM:SS AM/PM - Assistant: dialogue\n");
    out.push_str("HH:MM:SS AM/PM - User: dialogue\n");
    out.push_str("HH:MM:SS AM/PM - Wearable: activity\n\n");
    out.push_str("In your response, do not include any text apart from the conversation.\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convo::{parse_conversation, ClockTime};
    use crate::task::StepId;
    use crate::tracker::MistakeKind;

    const TABLE3: &str = include_str!("../fixtures/table3_system_prompt.txt");
    const TABLE5: &str = include_str!("../fixtures/table5_datagen_prompt.txt");
    const TABLE6: &str = include_str!("../fixtures/table6_conversation.txt");

    fn table6() -> Conversation {
        parse_conversation(TABLE6).unwrap()
    }

    #[test]
    fn zero_shot_matches_golden_and_ends_after_notes() {
        let task = TaskDef::table_assembly();
        let p = build_system_prompt(&task, Shots::Zero, &[]).unwrap();
        assert_eq!(p, TABLE3);
        assert!(p
            .trim_end()
            .ends_with("4) Please refrain from saying something if the user is doing everything correctly."));
    }

    #[test]
    fn one_shot_contains_example() {
        let task = TaskDef::table_assembly();
        let p = build_system_prompt(&task, Shots::One, &[table6()]).unwrap();
        assert!(p.starts_with(TABLE3));
        assert!(p.contains("05:30:15 PM - Assistant: Please lift the tabletop"));
    }

    #[test]
    fn four_shot_appends_four_examples() {
        let task = TaskDef::table_assembly();
        let ex = vec![table6(); 4];
        let p = build_system_prompt(&task, Shots::Four, &ex).unwrap();
        assert_eq!(p.matches("05:30:15 PM - Assistant:").count(), 4);
        assert!(p.contains("Example 4:"));
        assert_eq!(
            build_system_prompt(&task, Shots::Four, &ex[..3]),
            Err(PromptError::InsufficientExamples { needed: 4, got: 3 })
        );
    }

    #[test]
    fn length_grows_with_shots() {
        let task = TaskDef::table_assembly();
        let ex = vec![table6(); 4];
        let lens: Vec<usize> = [Shots::Zero, Shots::One, Shots::Four]
            .iter()
            .map(|s| build_system_prompt(&task, *s, &ex).unwrap().len())
            .collect();
        assert!(lens[0] < lens[1] && lens[1] < lens[2]);
    }

    #[test]
    fn shots_parse() {
        assert_eq!(Shots::try_from(4).unwrap(), Shots::Four);
        assert_eq!(Shots::try_from(2), Err(PromptError::InvalidShots(2)));
        assert_eq!(serde_json::to_string(&Shots::One).unwrap(), "1");
    }

    #[test]
    fn user_prompt_with_empty_history() {
        let ctx = TriggerContext {
            history_window: vec![],
            step_note: "Not started yet. Next is step 1.1.".into(),
            suggested_message: None,
            trigger_index: 0,
        };
        assert_eq!(
            build_user_prompt(&ctx),
            "Recent conversation history:\n\nCurrent step: Not started yet. Next is step 1.1.\n"
        );
    }

    #[test]
    fn user_prompt_window_is_bounded() {
        let c = table6();
        let info = StepInfo {
            step_id: StepId::Drill,
            step_note: "x".into(),
            suggested_message: Some("y".into()),
            mistake: None,
        };
        let ctx = TriggerContext::from_prefix(&c.dialogues[..30], 5, &info);
        assert_eq!(ctx.trigger_index, 29);
        let p = build_user_prompt(&ctx);
        assert_eq!(p.lines().filter(|l| l.contains(" - ")).count(), 5);
        assert!(p.ends_with("Suggested message: y\n"));
    }

    #[test]
    fn datagen_prompt_golden() {
        let task = TaskDef::table_assembly();
        let m = MistakeEvent {
            kind: MistakeKind::ScrewFrameBeforeAllPlaced,
            time: ClockTime::from_hms(9, 59, 50).unwrap(),
        };
        let p = build_datagen_prompt(&task, &[m]);
        assert_eq!(p, TABLE5);
        assert!(p.contains("HH:MM:SS AM/PM - Assistant: dialogue"));
    }

    #[test]
    fn datagen_prompt_without_mistakes() {
        let task = TaskDef::table_assembly();
        let p = build_datagen_prompt(&task, &[]);
        assert!(p.contains("performing the assembly:\n\nThe user did not make any mistakes.\n\nFor the conversation"));
    }

    #[test]
    fn prompts_are_deterministic() {
        let task = TaskDef::table_assembly();
        let a = build_system_prompt(&task, Shots::One, &[table6()]).unwrap();
        let b = build_system_prompt(&task, Shots::One, &[table6()]).unwrap();
        assert_eq!(a, b);
    }
}
