//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Criterion 7 talks to a real chat endpoint when `PROCASSIST_SMOKE_ENDPOINT`
//! is set (with `PROCASSIST_SMOKE_MODEL`, and optionally
//! `PROCASSIST_SMOKE_AUTH_ENV` naming the variable that holds the token and
//! `PROCASSIST_SMOKE_SCORER` pointing at a scoring service). Otherwise it runs
//! against an in-process stand-in speaking the same protocol.

#[path = "../src/stub_http.rs"]
mod stub_http;

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use procassist::backend::{
    BackendError, ChatBackend, ChatRequest, ChattyAssistant, OracleAssistant, RemoteChat, RemoteChatConfig,
};
use procassist::convo::{parse_conversation, serialize_conversation, Conversation};
use procassist::engine::{run_closed_loop, EngineConfig, UserScript};
use procassist::eval::{
    aggregate, evaluate, f_score, judge_correct, parse_report, render_report, EvalConfig, EvalRecord, LexicalScorer,
    MetricsReport, RemoteScorer, RemoteScorerConfig, ReportFormat, ReportLabels, Scorer,
};
use procassist::prompt::{build_system_prompt, build_user_prompt, Shots, TriggerContext};
use procassist::sim::{
    generate_corpus, generate_log, synthesize_conversation, ScriptedUser, SkillProfile, SkillSampler, SynthConfig,
};
use procassist::uwa::{build_dataset, conversation_examples, DatasetMode, Split};
use procassist::{
    ClockTime, Execution, MistakeEvent, MistakeKind, ResponseCategory, Speaker, StepId, StepTracker, TaskDef,
};
use serde_json::Value;
use stub_http::StubServer;

const TABLE4_HISTORY: &str = include_str!("../fixtures/table4_history.txt");
const TABLE4_USER_PROMPT: &str = include_str!("../fixtures/table4_user_prompt.txt");
const TABLE6: &str = include_str!("../fixtures/table6_conversation.txt");
const TABLE8: &str = include_str!("../fixtures/table8_conversation.txt");
const GOLDEN_RECORDS: &str = include_str!("../fixtures/golden_eval_records.jsonl");
const GOLDEN_REPORT: &str = include_str!("../fixtures/golden_eval_report.json");

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

/// Each non-blank line with whitespace runs collapsed to one space.
fn squash(doc: &str) -> Vec<String> {
    doc.lines().map(|l| l.split_whitespace().collect::<Vec<_>>().join(" ")).filter(|l| !l.is_empty()).collect()
}

fn format_fidelity() -> Outcome {
    for (name, doc) in [("table 4", TABLE4_HISTORY), ("table 6", TABLE6), ("table 8", TABLE8)] {
        let c = parse_conversation(doc).map_err(|e| format!("{name}: {e}"))?;
        check!(c.len() == squash(doc).len(), "{name}: parsed {} lines of {}", c.len(), squash(doc).len());
        let out = serialize_conversation(&c);
        check!(squash(&out) == squash(doc), "{name}: round trip differs");
        check!(parse_conversation(&out).map_err(|e| e.to_string())? == c, "{name}: reparse differs");
    }
    let task = TaskDef::table_assembly();
    let history = parse_conversation(TABLE4_HISTORY).unwrap();
    let replay = StepTracker::new(&task).replay(&history);
    let (last, info) = replay.steps.last().cloned().ok_or("table 4 history has no trigger")?;
    check!(last == history.len() - 1, "table 4 prompt is for the final line");
    let ctx = TriggerContext::from_prefix(&history.dialogues, 5, &info);
    let prompt = build_user_prompt(&ctx);
    check!(prompt == TABLE4_USER_PROMPT, "user prompt differs:\n{prompt}\n--- expected ---\n{TABLE4_USER_PROMPT}");
    Ok("tables 4, 6, 8 round-trip; table 4 user prompt byte-identical".into())
}

fn tracker_on_table8() -> Outcome {
    let task = TaskDef::table_assembly();
    let c = parse_conversation(TABLE8).unwrap();
    let replay = StepTracker::new(&task).replay(&c);
    let expected =
        vec![MistakeEvent { kind: MistakeKind::ScrewFrameBeforeAllPlaced, time: "09:59:50 AM".parse().unwrap() }];
    check!(replay.state.mistakes == expected, "mistakes {:?}", replay.state.mistakes);

    // Trigger ordinals where the tracker suggests something after a Wearable
    // event, and where the transcript's assistant speaks right after a trigger.
    let triggers: Vec<usize> = replay.steps.iter().map(|(i, _)| *i).collect();
    let suggested: Vec<usize> = replay
        .steps
        .iter()
        .enumerate()
        .filter(|(_, (i, info))| c.dialogues[*i].speaker == Speaker::Wearable && info.suggested_message.is_some())
        .map(|(k, _)| k)
        .collect();
    let spoken: Vec<usize> = triggers
        .iter()
        .enumerate()
        .filter(|(_, &i)| c.dialogues.get(i + 1).is_some_and(|n| n.speaker == Speaker::Assistant))
        .map(|(k, _)| k)
        .collect();
    let near = |k: usize, set: &[usize]| set.iter().any(|&s| s.abs_diff(k) <= 1);
    for &k in &spoken {
        let i = triggers[k];
        if c.dialogues[i].speaker == Speaker::Wearable {
            check!(near(k, &suggested), "assistant speaks after line {} without a suggestion nearby", i + 1);
        }
    }
    let last = replay.steps.last().unwrap();
    check!(last.1.step_id == StepId::Done, "final step {}", last.1.step_id);
    let exact = spoken.iter().filter(|k| suggested.contains(k)).count();
    let unvoiced: Vec<usize> = suggested.iter().filter(|&&k| !near(k, &spoken)).map(|&k| triggers[k] + 1).collect();
    Ok(format!(
        "1 mistake at 09:59:50 AM; every assistant turn has a suggestion within one trigger ({exact} exact); \
         suggestions the transcript leaves unvoiced at lines {unvoiced:?}; final step done"
    ))
}

fn uwa_on_table6() -> Outcome {
    let task = TaskDef::table_assembly();
    let c = parse_conversation(TABLE6).unwrap();
    let system = build_system_prompt(&task, Shots::Zero, &[]).unwrap();
    let examples = conversation_examples(&c, "table6", &task, &system, DatasetMode::Uwa, 5);
    let triggers = c.count(Speaker::Wearable) + c.count(Speaker::User);
    check!(examples.len() == triggers, "{} examples for {triggers} trigger lines", examples.len());

    // Hand walk (1-based fixture lines): a silent ground truth where the
    // tracker has a suggestion, the user speaks next and the assistant answers
    // the user. Trigger line -> line whose text becomes the target.
    let walk: BTreeMap<usize, usize> = [
        (4, 6),   // sanding done, flip instruction after the user's remark
        (14, 16), // fourth frame placed
        (23, 25), // eighth frame screw: legs instruction
        (34, 36), // fourth leg screw: drill instruction
        (49, 51), // table placed: completion
    ]
    .into();
    let substituted: BTreeMap<usize, &str> =
        examples.iter().filter(|e| e.uwa_substituted).map(|e| (e.trigger_index + 1, e.target.as_str())).collect();
    check!(
        substituted.keys().eq(walk.keys()),
        "substituted at lines {:?}, hand walk says {:?}",
        substituted.keys().collect::<Vec<_>>(),
        walk.keys().collect::<Vec<_>>()
    );
    for (line, from) in &walk {
        check!(substituted[line] == c.dialogues[from - 1].text, "line {line} target {:?}", substituted[line]);
    }
    check!(c.dialogues[24].text.contains("lift each leg"), "line 25 should be the legs instruction");
    check!(c.dialogues[35].text.contains("drill"), "line 36 should be the drill instruction");
    let plain = conversation_examples(&c, "table6", &task, &system, DatasetMode::Plain, 5);
    check!(plain.iter().all(|e| !e.uwa_substituted), "plain mode substituted");
    Ok(format!(
        "{} examples = {} Wearable + {} User lines; substituted at lines {:?} (legs at 8th frame screw, drill at 4th leg screw)",
        examples.len(),
        c.count(Speaker::Wearable),
        c.count(Speaker::User),
        substituted.keys().collect::<Vec<_>>()
    ))
}

fn generator_consistency() -> Outcome {
    let task = TaskDef::table_assembly();
    let sampler = SkillSampler::Uniform { min: 0.0, max: 1.0 };
    let base = SkillProfile::default();
    let logs =
        generate_corpus(&base, sampler, task.targets(), 200, 7, Execution::Parallel).map_err(|e| e.to_string())?;
    check!(logs.len() == 200, "{} logs", logs.len());
    let tracker = StepTracker::new(&task);
    let agree = logs.iter().filter(|l| tracker.replay(&l.conversation).state.mistakes == l.mistakes).count();
    check!(agree == 200, "replay agrees on {agree}/200 logs");
    let again =
        generate_corpus(&base, sampler, task.targets(), 200, 7, Execution::Sequential).map_err(|e| e.to_string())?;
    let bytes = |ls: &[procassist::sim::ActivityLog]| -> Vec<(String, String)> {
        ls.iter()
            .map(|l| {
                let side = serde_json::json!({ "seed": l.seed, "start": l.start_time, "mistakes": l.mistakes, "profile": l.profile });
                (serialize_conversation(&l.conversation), side.to_string())
            })
            .collect()
    };
    check!(bytes(&logs) == bytes(&again), "regeneration differs");
    let with_mistakes = logs.iter().filter(|l| !l.mistakes.is_empty()).count();
    let skills: Vec<f64> = logs.iter().map(|l| l.profile.skill).collect();
    let lo = skills.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = skills.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    check!(lo < 0.1 && hi > 0.9, "skills span only [{lo:.2}, {hi:.2}]");
    Ok(format!("200/200 replays agree ({with_mistakes} logs with mistakes); regeneration byte-identical"))
}

fn oracle_corpus(n: u64) -> Vec<Conversation> {
    let task = Arc::new(TaskDef::table_assembly());
    let sampler_logs = generate_corpus(
        &SkillProfile::default(),
        SkillSampler::default(),
        task.targets(),
        n as usize,
        2024,
        Execution::Parallel,
    )
    .unwrap();
    sampler_logs
        .iter()
        .enumerate()
        .map(|(i, log)| {
            let user =
                if i % 2 == 0 { UserScript::Simulated(ScriptedUser::new(0.5, i as u64)) } else { UserScript::Silent };
            let backend: Arc<dyn ChatBackend> = Arc::new(OracleAssistant::answering());
            let mut c =
                run_closed_loop(task.clone(), &log.conversation, user, backend, EngineConfig::default()).unwrap();
            c.source = Some(format!("oracle-{i:02}"));
            c
        })
        .collect()
}

fn closed_loop_self_consistency() -> Outcome {
    let task = TaskDef::table_assembly();
    let gt = oracle_corpus(60);
    let users = gt.iter().map(|c| c.count(Speaker::User)).sum::<usize>();
    let config = EvalConfig::default();
    let oracle = evaluate(&OracleAssistant::answering(), &gt, &task, &LexicalScorer, &config, Execution::Parallel)
        .map_err(|e| e.to_string())?
        .report;
    let o = &oracle.overall;
    check!(
        o.recall == Some(1.0) && o.precision == Some(1.0) && o.f_score == Some(1.0) && oracle.tnr == Some(1.0),
        "oracle R={:?} P={:?} F={:?} TNR={:?}",
        o.recall,
        o.precision,
        o.f_score,
        oracle.tnr
    );
    check!(oracle.category(ResponseCategory::Answer).support > 0, "no user questions in the corpus");
    let chatty = evaluate(&ChattyAssistant, &gt, &task, &LexicalScorer, &config, Execution::Parallel)
        .map_err(|e| e.to_string())?
        .report;
    check!(chatty.tnr == Some(0.0), "chatty TNR {:?}", chatty.tnr);
    Ok(format!(
        "60 conversations, {} triggers ({users} user lines): oracle R=P=F=TNR=1.0, chatty TNR=0.0",
        oracle.triggers
    ))
}

/// Numbers equal within 1e-9, everything else exactly.
fn approx_eq(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => (x.as_f64().unwrap() - y.as_f64().unwrap()).abs() < 1e-9,
        (Value::Array(x), Value::Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| approx_eq(p, q)),
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| approx_eq(v, w)))
        }
        _ => a == b,
    }
}

fn metric_arithmetic() -> Outcome {
    let records: Vec<EvalRecord> =
        GOLDEN_RECORDS.lines().map(serde_json::from_str).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    for r in &records {
        if let Some(s) = &r.scores {
            check!(
                r.correct == Some(judge_correct(s, 0.3, 0.0)),
                "hand label disagrees with thresholds at {}",
                r.trigger_index
            );
        }
    }
    let labels = ReportLabels {
        backend: "hand".into(),
        scorer: "hand-scored".into(),
        conversations: 2,
        sim_threshold: 0.3,
        ent_threshold: 0.0,
        include_miscellaneous: true,
    };
    let report = aggregate(&records, &labels);
    let golden: Value = serde_json::from_str(GOLDEN_REPORT).unwrap();
    let got = serde_json::to_value(&report).unwrap();
    check!(approx_eq(&got, &golden), "report differs from golden:\n{}", serde_json::to_string_pretty(&got).unwrap());
    let reparsed: MetricsReport =
        parse_report(&render_report(&report, ReportFormat::Structured)).map_err(|e| e.to_string())?;
    check!(reparsed == report, "structured report does not round-trip");

    // Direct recount.
    let support = records.iter().filter(|r| !r.gt_text.is_empty()).count();
    let generated = records.iter().filter(|r| !r.gen_text.is_empty()).count();
    let correct = records.iter().filter(|r| r.correct == Some(true)).count();
    let (rc, pr) = (correct as f64 / support as f64, correct as f64 / generated as f64);
    check!(report.overall.f_score == Some(2.0 * rc * pr / (rc + pr)), "F differs from 2RP/(R+P)");

    let f = f_score(0.72, 0.74);
    check!((f - 0.73).abs() <= 0.005, "F(0.72, 0.74) = {f}");
    let table = render_report(&report, ReportFormat::Table);
    check!(table.lines().count() >= 3 && table.contains("TNR"), "table rendering incomplete");
    Ok(format!("{} hand-scored records reproduce the golden report; F(0.72, 0.74) = {f:.4}", records.len()))
}

/// Counts backend failures that would otherwise surface as silence.
struct Counting<B> {
    inner: B,
    calls: AtomicUsize,
    errors: AtomicUsize,
}

impl<B: ChatBackend> ChatBackend for Counting<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let out = self.inner.complete(request);
        if out.is_err() {
            self.errors.fetch_add(1, Ordering::SeqCst);
        }
        out
    }
}

/// A stand-in chat model: relays the suggested message with a timestamp
/// prefix, as a finetuned model would emit it, and otherwise says nothing.
fn stand_in_chat() -> StubServer {
    StubServer::start(|req| {
        if req.path != "/v1/chat/completions" {
            return (404, "{}".into());
        }
        let body = req.json();
        let user = body["messages"][1]["content"].as_str().unwrap_or_default();
        let reply = user
            .lines()
            .find_map(|l| l.strip_prefix("Suggested message: "))
            .map(|m| format!("10:00:00 AM - Assistant: {m}"))
            .unwrap_or_default();
        let resp = serde_json::json!({ "choices": [{ "message": { "role": "assistant", "content": reply } }] });
        (200, resp.to_string())
    })
}

fn endpoint_smoke() -> Outcome {
    let task = TaskDef::table_assembly();
    let _stub;
    let (cfg, target) = match std::env::var("PROCASSIST_SMOKE_ENDPOINT") {
        Ok(endpoint) => {
            let model = std::env::var("PROCASSIST_SMOKE_MODEL").map_err(|_| "PROCASSIST_SMOKE_MODEL is not set")?;
            let mut cfg = RemoteChatConfig::new(&endpoint, model);
            cfg.auth_env = std::env::var("PROCASSIST_SMOKE_AUTH_ENV").ok();
            (cfg, endpoint)
        }
        Err(_) => {
            _stub = stand_in_chat();
            (RemoteChatConfig::new(format!("{}/v1", _stub.url), "stand-in"), "in-process stand-in".to_string())
        }
    };
    let scorer: Box<dyn Scorer> = match std::env::var("PROCASSIST_SMOKE_SCORER") {
        Ok(url) => Box::new(RemoteScorer::new(RemoteScorerConfig::new(url))),
        Err(_) => Box::new(LexicalScorer),
    };
    let backend = Counting { inner: RemoteChat::new(cfg), calls: AtomicUsize::new(0), errors: AtomicUsize::new(0) };

    let gt: Vec<Conversation> = (0..3u64)
        .map(|seed| {
            let log =
                generate_log(&SkillProfile::default(), task.targets(), seed, ClockTime::from_hms(9, 0, 0).unwrap())
                    .unwrap();
            synthesize_conversation(&task, &log, &SynthConfig::default(), seed).with_source(format!("smoke-{seed}"))
        })
        .collect();
    let ev = evaluate(&backend, &gt, &task, scorer.as_ref(), &EvalConfig::default(), Execution::Parallel)
        .map_err(|e| e.to_string())?;
    let (calls, errors) = (backend.calls.load(Ordering::SeqCst), backend.errors.load(Ordering::SeqCst));
    check!(errors == 0, "{errors} of {calls} backend calls failed");
    check!(calls == ev.report.triggers && calls > 0, "{calls} calls for {} triggers", ev.report.triggers);
    let r = &ev.report;
    check!(r.categories.len() == 4, "report has {} categories", r.categories.len());
    check!(r.overall.recall.is_some() && r.tnr.is_some() && r.mean_latency_secs.is_some(), "report has empty cells");
    let table = render_report(r, ReportFormat::Table);
    check!(table.contains("Rcl") && table.contains("FSc") && table.contains("Tm"), "table header incomplete");
    // Also exercise dataset building on the same conversations.
    build_dataset(&gt, &task, DatasetMode::Uwa, &Split::Fraction { train: 0.67, seed: 0 }, 5, Execution::Parallel)
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "{target}: {calls} calls, 0 errors; F={:.2} TNR={:.2} (absolute scores need the finetuned models)",
        r.overall.f_score.unwrap_or(0.0),
        r.tnr.unwrap_or(0.0)
    ))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("1 format fidelity", Duration::from_secs(1), format_fidelity),
        ("2 tracker on table 8", Duration::from_secs(1), tracker_on_table8),
        ("3 UWA extraction on table 6", Duration::from_secs(1), uwa_on_table6),
        ("4 generator/tracker consistency", Duration::from_secs(10), generator_consistency),
        ("5 closed-loop oracle self-consistency", Duration::from_secs(30), closed_loop_self_consistency),
        ("6 metric arithmetic", Duration::from_secs(1), metric_arithmetic),
        ("7 end-to-end endpoint smoke", Duration::from_secs(120), endpoint_smoke),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, limit, run) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(_) if took > limit => Err(format!("took {took:.2?}, limit {limit:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name} ({took:.2?}): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} ({took:.2?}): {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
