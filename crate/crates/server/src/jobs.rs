//! Batch endpoints. Each job runs to completion on the blocking pool and
//! returns its result inline.

use procassist::convo::{parse_conversation, serialize_conversation, Conversation, DEFAULT_WINDOW};
use procassist::eval::{evaluate, render_report, EvalConfig, EvalError, EvalRecord, MetricsReport, ReportFormat};
use procassist::prompt::Shots;
use procassist::sim::{generate_corpus, synthesize_conversation, SkillProfile, SkillSampler, SynthConfig};
use procassist::tracker::MistakeEvent;
use procassist::uwa::{build_dataset, DatasetMode, DatasetRecord, DatasetStats, Split};
use procassist::{ClockTime, Execution};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::AppState;

pub const MAX_GENERATE: usize = 2000;

/// A conversation in a job request: bare text, or text with an id.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ConversationInput {
    Text(String),
    Named { id: String, text: String },
}

fn parse_inputs(inputs: &[ConversationInput]) -> Result<Vec<Conversation>, ApiError> {
    if inputs.is_empty() {
        return Err(ApiError::BadRequest("no conversations given".into()));
    }
    inputs
        .iter()
        .enumerate()
        .map(|(i, input)| {
            let (id, text) = match input {
                ConversationInput::Text(t) => (None, t),
                ConversationInput::Named { id, text } => (Some(id.clone()), text),
            };
            let mut c = parse_conversation(text).map_err(|e| ApiError::BadRequest(format!("conversation {i}: {e}")))?;
            c.source = id;
            Ok(c)
        })
        .collect()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateJob {
    pub count: usize,
    pub seed: u64,
    pub skill: SkillSampler,
    pub profile: SkillProfile,
    /// Also produce one ground-truth conversation per log.
    pub synthesize: bool,
    pub synth: SynthConfig,
}

impl Default for GenerateJob {
    fn default() -> Self {
        GenerateJob {
            count: 10,
            seed: 0,
            skill: SkillSampler::default(),
            profile: SkillProfile::default(),
            synthesize: false,
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratedLog {
    pub id: String,
    pub seed: u64,
    pub skill: f64,
    pub start_time: ClockTime,
    pub mistakes: Vec<MistakeEvent>,
    pub log: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conversation: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateResult {
    pub logs: Vec<GeneratedLog>,
}

pub fn run_generate(state: &AppState, job: GenerateJob) -> Result<GenerateResult, ApiError> {
    if job.count == 0 || job.count > MAX_GENERATE {
        return Err(ApiError::BadRequest(format!("count must be between 1 and {MAX_GENERATE}")));
    }
    job.profile.validate().map_err(|e| ApiError::BadConfig(e.to_string()))?;
    let logs = generate_corpus(&job.profile, job.skill, state.task.targets(), job.count, job.seed, Execution::Parallel)
        .map_err(|e| ApiError::BadConfig(e.to_string()))?;
    let logs = logs
        .into_iter()
        .map(|log| GeneratedLog {
            id: log.conversation.source.clone().unwrap_or_default(),
            seed: log.seed,
            skill: log.profile.skill,
            start_time: log.start_time,
            mistakes: log.mistakes.clone(),
            log: serialize_conversation(&log.conversation),
            conversation: job
                .synthesize
                .then(|| serialize_conversation(&synthesize_conversation(&state.task, &log, &job.synth, log.seed))),
        })
        .collect();
    Ok(GenerateResult { logs })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetJob {
    pub conversations: Vec<ConversationInput>,
    #[serde(default = "default_mode")]
    pub mode: DatasetMode,
    #[serde(default = "default_split")]
    pub split: Split,
    #[serde(default = "default_window")]
    pub window: usize,
}

fn default_mode() -> DatasetMode {
    DatasetMode::Uwa
}

fn default_split() -> Split {
    Split::Fraction { train: 0.8, seed: 0 }
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetResult {
    pub train: Vec<DatasetRecord>,
    pub eval: Vec<DatasetRecord>,
    pub stats: DatasetStats,
}

pub fn run_dataset(state: &AppState, job: DatasetJob) -> Result<DatasetResult, ApiError> {
    let corpus = parse_inputs(&job.conversations)?;
    let ds = build_dataset(&corpus, &state.task, job.mode, &job.split, job.window, Execution::Parallel)
        .map_err(|e| ApiError::BadRequest(e.to_string()))?;
    Ok(DatasetResult {
        train: ds.train.iter().map(DatasetRecord::from).collect(),
        eval: ds.eval.iter().map(DatasetRecord::from).collect(),
        stats: ds.stats,
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateJob {
    pub conversations: Vec<ConversationInput>,
    #[serde(default)]
    pub backend: Option<String>,
    #[serde(default)]
    pub shots: Option<Shots>,
    #[serde(default)]
    pub include_miscellaneous: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateResult {
    pub report: MetricsReport,
    /// Human-readable rendering of `report`.
    pub table: String,
    pub records: Vec<EvalRecord>,
}

pub fn run_evaluate(state: &AppState, job: EvaluateJob) -> Result<EvaluateResult, ApiError> {
    let gt = parse_inputs(&job.conversations)?;
    let backend = state.backend(job.backend.as_deref())?;
    let mut config = EvalConfig { engine: state.engine.clone(), ..EvalConfig::default() };
    if let Some(shots) = job.shots {
        config.engine.prompt.shots = shots;
    }
    if let Some(misc) = job.include_miscellaneous {
        config.include_miscellaneous = misc;
    }
    let ev = evaluate(backend.as_ref(), &gt, &state.task, state.scorer.as_ref(), &config, Execution::Parallel)
        .map_err(|e| match e {
            EvalError::ScorerUnavailable(e) => ApiError::Upstream(e.to_string()),
            EvalError::Prompt(e) => ApiError::BadConfig(e.to_string()),
            EvalError::EmptyEvaluation => ApiError::BadRequest(e.to_string()),
        })?;
    Ok(EvaluateResult { table: render_report(&ev.report, ReportFormat::Table), report: ev.report, records: ev.records })
}
