//! Teacher-forced evaluation of a backend against ground-truth conversations.
//!
//! At every trigger the backend sees prompts built from the ground-truth
//! history, never from its own earlier replies, so each reply can be compared
//! with the ground-truth reply at the same point.

mod report;
mod score;

use serde::{Deserialize, Serialize};

use crate::backend::{ChatBackend, TurnHints};
use crate::convo::Conversation;
use crate::engine::{invoke, EngineConfig};
use crate::par::Execution;
use crate::prompt::{build_system_prompt, PromptError};
use crate::task::TaskDef;
use crate::uwa::{conversation_id, enumerate_triggers};

pub use report::{
    aggregate, f_score, parse_report, render_report, CategoryMetrics, EvalRecord, MetricsReport, OverallMetrics,
    ReportFormat, ReportLabels,
};
pub use score::{
    judge_correct, lexical_similarity, LexicalScorer, Premise, RemoteScorer, RemoteScorerConfig, ScorePair,
    ScoreTriple, Scorer, ScorerError, ENT_THRESHOLD, SIM_THRESHOLD,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub engine: EngineConfig,
    pub sim_threshold: f64,
    pub ent_threshold: f64,
    pub include_miscellaneous: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            engine: EngineConfig::default(),
            sim_threshold: SIM_THRESHOLD,
            ent_threshold: ENT_THRESHOLD,
            include_miscellaneous: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("nothing to evaluate: no conversations given")]
    EmptyEvaluation,
    #[error(transparent)]
    ScorerUnavailable(#[from] ScorerError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub records: Vec<EvalRecord>,
}

/// Generates and scores replies for one ground-truth conversation.
fn evaluate_conversation(
    backend: &dyn ChatBackend,
    system: &str,
    id: &str,
    gt: &Conversation,
    task: &TaskDef,
    scorer: &dyn Scorer,
    config: &EvalConfig,
) -> Result<Vec<EvalRecord>, ScorerError> {
    let mut records: Vec<EvalRecord> = enumerate_triggers(gt, task, config.engine.prompt.window)
        .into_iter()
        .enumerate()
        .map(|(ordinal, tp)| {
            let hints = TurnHints {
                speaker: tp.speaker,
                trigger_text: gt.dialogues[tp.index].text.clone(),
                step: tp.info.clone(),
                trigger_index: tp.index,
                ordinal,
            };
            let out = invoke(backend, system, &tp.context, hints, &config.engine.silence_markers);
            EvalRecord {
                conversation_id: id.to_string(),
                trigger_index: tp.index,
                speaker: tp.speaker,
                category: tp.gt_category(),
                gen_text: out.text,
                gt_text: tp.gt_target,
                scores: None,
                correct: None,
                latency_secs: out.latency.as_secs_f64(),
            }
        })
        .collect();

    let to_score: Vec<usize> =
        (0..records.len()).filter(|&i| !records[i].gt_text.is_empty() && !records[i].gen_text.is_empty()).collect();
    if to_score.is_empty() {
        return Ok(records);
    }
    let pairs: Vec<ScorePair> = to_score
        .iter()
        .map(|&i| ScorePair { candidate: records[i].gen_text.clone(), reference: records[i].gt_text.clone() })
        .collect();
    let scores = scorer.score_batch(&pairs)?;
    for (&i, s) in to_score.iter().zip(scores) {
        records[i].correct = Some(judge_correct(&s, config.sim_threshold, config.ent_threshold));
        records[i].scores = Some(s);
    }
    Ok(records)
}

/// Evaluates `backend` on every trigger of every ground-truth conversation.
/// Fails as a whole if the scorer fails; no partial report is produced.
pub fn evaluate(
    backend: &dyn ChatBackend,
    gt: &[Conversation],
    task: &TaskDef,
    scorer: &dyn Scorer,
    config: &EvalConfig,
    exec: Execution,
) -> Result<Evaluation, EvalError> {
    if gt.is_empty() {
        return Err(EvalError::EmptyEvaluation);
    }
    let system = build_system_prompt(task, config.engine.prompt.shots, &config.engine.examples)?;
    let items: Vec<(String, &Conversation)> = gt.iter().enumerate().map(|(i, c)| (conversation_id(c, i), c)).collect();
    let per_convo =
        exec.try_map(&items, |(id, c)| evaluate_conversation(backend, &system, id, c, task, scorer, config))?;
    let records: Vec<EvalRecord> = per_convo.into_iter().flatten().collect();
    let labels = ReportLabels {
        backend: backend.name().to_string(),
        scorer: scorer.name().to_string(),
        conversations: gt.len(),
        sim_threshold: config.sim_threshold,
        ent_threshold: config.ent_threshold,
        include_miscellaneous: config.include_miscellaneous,
    };
    Ok(Evaluation { report: aggregate(&records, &labels), records })
}

/// One JSON object per line.
pub fn records_to_jsonl(records: &[EvalRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ChattyAssistant, OracleAssistant};
    use crate::convo::{ClockTime, Speaker};
    use crate::engine::{run_closed_loop, UserScript};
    use crate::sim::{generate_log, ScriptedUser, SkillProfile};
    use crate::tracker::ResponseCategory;
    use std::sync::Arc;

    fn gt_set(n: u64, user: bool, skill: f64) -> Vec<Conversation> {
        let task = Arc::new(TaskDef::table_assembly());
        (0..n)
            .map(|seed| {
                let log = generate_log(
                    &SkillProfile::default().with_skill(skill),
                    task.targets(),
                    seed,
                    ClockTime::from_hms(9, 0, 0).unwrap(),
                )
                .unwrap();
                let script =
                    if user { UserScript::Simulated(ScriptedUser::new(0.8, seed)) } else { UserScript::Silent };
                let backend: Arc<dyn ChatBackend> =
                    if user { Arc::new(OracleAssistant::answering()) } else { Arc::new(OracleAssistant::default()) };
                let mut c =
                    run_closed_loop(task.clone(), &log.conversation, script, backend, EngineConfig::default()).unwrap();
                c.source = Some(format!("gt-{seed}"));
                c
            })
            .collect()
    }

    #[test]
    fn oracle_scores_perfectly_on_its_own_transcripts() {
        let task = TaskDef::table_assembly();
        let gt = gt_set(4, false, 0.0);
        let ev = evaluate(
            &OracleAssistant::default(),
            &gt,
            &task,
            &LexicalScorer,
            &EvalConfig::default(),
            Execution::Parallel,
        )
        .unwrap();
        let r = &ev.report;
        assert_eq!(r.overall.recall, Some(1.0));
        assert_eq!(r.overall.precision, Some(1.0));
        assert_eq!(r.overall.f_score, Some(1.0));
        assert_eq!(r.tnr, Some(1.0));
        assert!(r.category(ResponseCategory::MistakeCorrection).support > 0);

        let gt = gt_set(4, true, 0.5);
        assert!(gt.iter().any(|c| c.count(Speaker::User) > 0));
        let ev = evaluate(
            &OracleAssistant::answering(),
            &gt,
            &task,
            &LexicalScorer,
            &EvalConfig::default(),
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(ev.report.overall.f_score, Some(1.0));
        assert!(ev.report.category(ResponseCategory::Answer).support > 0);
    }

    #[test]
    fn chatty_has_zero_tnr() {
        let task = TaskDef::table_assembly();
        let gt = gt_set(2, false, 1.0);
        let ev = evaluate(&ChattyAssistant, &gt, &task, &LexicalScorer, &EvalConfig::default(), Execution::Parallel)
            .unwrap();
        assert_eq!(ev.report.tnr, Some(0.0));
        assert!(ev.report.gt_empty > 0);
    }

    #[test]
    fn empty_input_is_an_error() {
        let task = TaskDef::table_assembly();
        assert_eq!(
            evaluate(&ChattyAssistant, &[], &task, &LexicalScorer, &EvalConfig::default(), Execution::Parallel),
            Err(EvalError::EmptyEvaluation)
        );
    }

    #[test]
    fn scorer_failure_fails_the_run() {
        struct Down;
        impl Scorer for Down {
            fn name(&self) -> &str {
                "down"
            }
            fn score(&self, _: &str, _: &str) -> Result<ScoreTriple, ScorerError> {
                Err(ScorerError::Unavailable("connection refused".into()))
            }
        }
        let task = TaskDef::table_assembly();
        let r = evaluate(
            &ChattyAssistant,
            &gt_set(1, false, 1.0),
            &task,
            &Down,
            &EvalConfig::default(),
            Execution::Parallel,
        );
        assert!(matches!(r, Err(EvalError::ScorerUnavailable(_))));
    }

    #[test]
    fn swapping_scorers_keeps_counts() {
        struct Zero;
        impl Scorer for Zero {
            fn name(&self) -> &str {
                "zero"
            }
            fn score(&self, _: &str, _: &str) -> Result<ScoreTriple, ScorerError> {
                Ok(ScoreTriple::similarity_only(0.0))
            }
        }
        let task = TaskDef::table_assembly();
        let gt = gt_set(2, true, 0.3);
        let a = evaluate(&ChattyAssistant, &gt, &task, &LexicalScorer, &EvalConfig::default(), Execution::Parallel)
            .unwrap();
        let b = evaluate(&ChattyAssistant, &gt, &task, &Zero, &EvalConfig::default(), Execution::Parallel).unwrap();
        for (x, y) in a.report.categories.iter().zip(&b.report.categories) {
            assert_eq!(x.support, y.support);
        }
        assert_eq!(a.report.gt_empty, b.report.gt_empty);
        assert_eq!(a.report.overall.generated, b.report.overall.generated);
        assert_eq!(b.report.overall.correct, 0);
    }

    #[test]
    fn records_dump_as_jsonl() {
        let task = TaskDef::table_assembly();
        let ev = evaluate(
            &OracleAssistant::default(),
            &gt_set(1, false, 1.0),
            &task,
            &LexicalScorer,
            &EvalConfig::default(),
            Execution::Parallel,
        )
        .unwrap();
        let dump = records_to_jsonl(&ev.records);
        assert_eq!(dump.lines().count(), ev.records.len());
        let first: EvalRecord = serde_json::from_str(dump.lines().next().unwrap()).unwrap();
        assert_eq!(first, ev.records[0]);
    }
}
