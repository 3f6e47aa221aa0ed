//! Finetuning datasets from ground-truth conversations.
//!
//! Every Wearable or User dialogue becomes one training example whose target
//! is what the ground-truth assistant said right after it (possibly nothing).
//! In user-whim-agnostic mode, an instruction that the ground truth only gave
//! after an unprompted user comment is moved back to the trigger where the
//! tracker first suggested it, so the model does not learn to wait for
//! comments it cannot predict.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::assistant_run_after;
use crate::convo::{Conversation, Speaker};
use crate::par::Execution;
use crate::prompt::{build_system_prompt, build_user_prompt, Shots, TriggerContext};
use crate::task::TaskDef;
use crate::tracker::{classify_response, ResponseCategory, StepInfo, StepTracker, TriggerKind};

/// One place where the model is asked to respond.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerPoint {
    /// Index of the triggering dialogue in its conversation.
    pub index: usize,
    pub speaker: Speaker,
    pub context: TriggerContext,
    pub info: StepInfo,
    /// Assistant lines directly after the trigger, joined; empty for silence.
    pub gt_target: String,
    pub next_speaker: Option<Speaker>,
    /// Assistant lines after the single User line that follows the trigger.
    pub following_assistant_text: Option<String>,
}

impl TriggerPoint {
    /// Category of the ground-truth reply; `None` when it is silence.
    pub fn gt_category(&self) -> Option<ResponseCategory> {
        classify_response(&TriggerKind::new(self.speaker, &self.info), &self.gt_target)
    }
}

/// Trigger points of `c` with tracker context from a teacher-forced replay.
pub fn enumerate_triggers(c: &Conversation, task: &TaskDef, window: usize) -> Vec<TriggerPoint> {
    let tracker = StepTracker::new(task);
    let replay = tracker.replay(c);
    let d = &c.dialogues;
    replay
        .steps
        .into_iter()
        .map(|(i, info)| {
            let next_speaker = d.get(i + 1).map(|n| n.speaker);
            let following_assistant_text = match next_speaker {
                Some(Speaker::User) => Some(assistant_run_after(c, i + 1)).filter(|t| !t.is_empty()),
                _ => None,
            };
            TriggerPoint {
                index: i,
                speaker: d[i].speaker,
                context: TriggerContext::from_prefix(&d[..=i], window, &info),
                info,
                gt_target: assistant_run_after(c, i),
                next_speaker,
                following_assistant_text,
            }
        })
        .collect()
}

/// Whether the deferred-instruction rule applies: the ground truth is silent,
/// the tracker had a suggestion, a User line comes next and the assistant
/// speaks after it.
pub fn uwa_applies(tp: &TriggerPoint) -> bool {
    tp.gt_target.is_empty()
        && tp.context.suggested_message.is_some()
        && tp.next_speaker == Some(Speaker::User)
        && tp.following_assistant_text.as_deref().is_some_and(|t| !t.is_empty())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub system: String,
    pub user: String,
    pub target: String,
    pub uwa_substituted: bool,
    pub conversation_id: String,
    pub trigger_index: usize,
    pub speaker: Speaker,
    pub category: Option<ResponseCategory>,
    /// For a substituted example, the index of the user comment it skipped;
    /// for that user comment's own example, the index of the substituted one.
    pub uwa_pair: Option<usize>,
}

/// Builds the example for `tp`, substituting the target when the rule applies.
pub fn apply_uwa(tp: &TriggerPoint, system: &str, conversation_id: &str) -> TrainingExample {
    let substituted = uwa_applies(tp);
    let target =
        if substituted { tp.following_assistant_text.clone().unwrap_or_default() } else { tp.gt_target.clone() };
    plain_example(tp, system, conversation_id, target, substituted)
}

fn plain_example(
    tp: &TriggerPoint,
    system: &str,
    conversation_id: &str,
    target: String,
    substituted: bool,
) -> TrainingExample {
    TrainingExample {
        system: system.to_string(),
        user: build_user_prompt(&tp.context),
        category: classify_response(&TriggerKind::new(tp.speaker, &tp.info), &target),
        target,
        uwa_substituted: substituted,
        conversation_id: conversation_id.to_string(),
        trigger_index: tp.index,
        speaker: tp.speaker,
        uwa_pair: substituted.then_some(tp.index + 1),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetMode {
    Plain,
    Uwa,
}

impl std::str::FromStr for DatasetMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain" => Ok(DatasetMode::Plain),
            "uwa" => Ok(DatasetMode::Uwa),
            other => Err(format!("unknown dataset mode {other:?} (expected plain or uwa)")),
        }
    }
}

/// Examples for every trigger of one conversation.
pub fn conversation_examples(
    c: &Conversation,
    id: &str,
    task: &TaskDef,
    system: &str,
    mode: DatasetMode,
    window: usize,
) -> Vec<TrainingExample> {
    let triggers = enumerate_triggers(c, task, window);
    let mut out: Vec<TrainingExample> = triggers
        .iter()
        .map(|tp| match mode {
            DatasetMode::Uwa => apply_uwa(tp, system, id),
            DatasetMode::Plain => plain_example(tp, system, id, tp.gt_target.clone(), false),
        })
        .collect();
    let pairs: Vec<(usize, usize)> =
        out.iter().filter_map(|e| e.uwa_pair.map(|user_idx| (user_idx, e.trigger_index))).collect();
    for (user_idx, from) in pairs {
        if let Some(e) = out.iter_mut().find(|e| e.trigger_index == user_idx) {
            e.uwa_pair = Some(from);
        }
    }
    out
}

/// How conversations are split into training and evaluation sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Split {
    /// Shuffle the sorted ids with `seed`; the first `train` fraction trains.
    Fraction { train: f64, seed: u64 },
    /// These ids evaluate; all others train.
    Explicit { eval_ids: BTreeSet<String> },
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot build a dataset from an empty corpus")]
    EmptyCorpus,
    #[error("conversation id {0:?} appears more than once")]
    DuplicateId(String),
    #[error("split names unknown conversation id {0:?}")]
    UnknownId(String),
    #[error("train fraction must be in [0, 1], got {0}")]
    BadFraction(f64),
    #[error("writing dataset: {0}")]
    Io(#[from] io::Error),
}

/// Id used for a conversation without a source.
pub fn conversation_id(c: &Conversation, i: usize) -> String {
    c.source.clone().unwrap_or_else(|| format!("convo-{i:04}"))
}

/// Splits `ids` deterministically into (train, eval).
pub fn split_ids(ids: &[String], split: &Split) -> Result<(Vec<String>, Vec<String>), DatasetError> {
    let mut sorted = ids.to_vec();
    sorted.sort();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(DatasetError::DuplicateId(w[0].clone()));
    }
    match split {
        Split::Fraction { train, seed } => {
            if !(0.0..=1.0).contains(train) {
                return Err(DatasetError::BadFraction(*train));
            }
            sorted.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
            let n_train = (sorted.len() as f64 * train).round() as usize;
            let eval = sorted.split_off(n_train);
            sorted.sort();
            let mut eval = eval;
            eval.sort();
            Ok((sorted, eval))
        }
        Split::Explicit { eval_ids } => {
            if let Some(unknown) = eval_ids.iter().find(|id| sorted.binary_search(id).is_err()) {
                return Err(DatasetError::UnknownId(unknown.clone()));
            }
            let (eval, train) = sorted.into_iter().partition(|id| eval_ids.contains(id));
            Ok((train, eval))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendedTraining {
    pub method: String,
    pub lora_rank: u32,
    pub lora_alpha: u32,
    pub batch_size: u32,
    pub dropout: f64,
    pub learning_rate: f64,
    pub epochs: u32,
}

impl Default for RecommendedTraining {
    fn default() -> Self {
        RecommendedTraining {
            method: "lora".into(),
            lora_rank: 8,
            lora_alpha: 16,
            batch_size: 8,
            dropout: 0.075,
            learning_rate: 3e-5,
            epochs: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub mode: DatasetMode,
    pub conversations: usize,
    pub train_ids: Vec<String>,
    pub eval_ids: Vec<String>,
    pub train_examples: usize,
    pub eval_examples: usize,
    pub uwa_substituted: usize,
    pub empty_targets: usize,
    /// Ground-truth response categories of non-empty targets, by title.
    pub categories: BTreeMap<String, usize>,
    pub recommended_training: RecommendedTraining,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<TrainingExample>,
    pub eval: Vec<TrainingExample>,
    pub stats: DatasetStats,
}

/// One line of the JSONL output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub system: String,
    pub user: String,
    pub assistant: String,
    pub meta: RecordMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub conversation_id: String,
    pub trigger_index: usize,
    pub speaker: Speaker,
    pub uwa_substituted: bool,
    pub category: Option<ResponseCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uwa_pair: Option<usize>,
}

impl From<&TrainingExample> for DatasetRecord {
    fn from(e: &TrainingExample) -> Self {
        DatasetRecord {
            system: e.system.clone(),
            user: e.user.clone(),
            assistant: e.target.clone(),
            meta: RecordMeta {
                conversation_id: e.conversation_id.clone(),
                trigger_index: e.trigger_index,
                speaker: e.speaker,
                uwa_substituted: e.uwa_substituted,
                category: e.category,
                uwa_pair: e.uwa_pair,
            },
        }
    }
}

/// Builds the dataset. Finetuned models are prompted with the zero-shot
/// system prompt, so every example uses it.
pub fn build_dataset(
    corpus: &[Conversation],
    task: &TaskDef,
    mode: DatasetMode,
    split: &Split,
    window: usize,
    exec: Execution,
) -> Result<Dataset, DatasetError> {
    if corpus.is_empty() {
        return Err(DatasetError::EmptyCorpus);
    }
    let system = build_system_prompt(task, Shots::Zero, &[]).expect("zero-shot prompt needs no examples");
    let ids: Vec<String> = corpus.iter().enumerate().map(|(i, c)| conversation_id(c, i)).collect();
    let (train_ids, eval_ids) = split_ids(&ids, split)?;
    let indexed: Vec<(String, &Conversation)> = ids.iter().cloned().zip(corpus.iter()).collect();
    let per_convo = exec.map(&indexed, |(id, c)| conversation_examples(c, id, task, &system, mode, window));
    let by_id: BTreeMap<&str, &Vec<TrainingExample>> = ids.iter().map(String::as_str).zip(per_convo.iter()).collect();
    let gather = |set: &[String]| set.iter().flat_map(|id| by_id[id.as_str()].iter().cloned()).collect::<Vec<_>>();
    let train = gather(&train_ids);
    let eval = gather(&eval_ids);

    let all = train.iter().chain(&eval);
    let mut categories = BTreeMap::new();
    for cat in ResponseCategory::ALL {
        categories.insert(cat.title().to_string(), 0);
    }
    let (mut uwa, mut empty) = (0, 0);
    for e in all {
        uwa += usize::from(e.uwa_substituted);
        empty += usize::from(e.target.is_empty());
        if let Some(cat) = e.category {
            *categories.entry(cat.title().to_string()).or_insert(0) += 1;
        }
    }
    let stats = DatasetStats {
        mode,
        conversations: corpus.len(),
        train_examples: train.len(),
        eval_examples: eval.len(),
        train_ids,
        eval_ids,
        uwa_substituted: uwa,
        empty_targets: empty,
        categories,
        recommended_training: RecommendedTraining::default(),
    };
    Ok(Dataset { train, eval, stats })
}

pub fn to_jsonl(examples: &[TrainingExample]) -> String {
    let mut out = String::new();
    for e in examples {
        out.push_str(&serde_json::to_string(&DatasetRecord::from(e)).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Writes `train.jsonl`, `eval.jsonl` and `stats.json` into `dir`.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<(), DatasetError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("train.jsonl"), to_jsonl(&ds.train))?;
    fs::write(dir.join("eval.jsonl"), to_jsonl(&ds.eval))?;
    let stats = serde_json::to_string_pretty(&ds.stats).expect("stats serialize");
    fs::write(dir.join("stats.json"), stats + "\n")?;
    Ok(())
}
