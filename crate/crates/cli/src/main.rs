use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use procassist::backend::{BackendConfig, RemoteChat, RemoteChatConfig};
use procassist::config::{AppConfig, ScorerConfig};
use procassist::convo::{parse_conversation, serialize_conversation};
use procassist::engine::{run_closed_loop, UserScript};
use procassist::eval::{
    evaluate, records_to_jsonl, render_report, EvalConfig, Premise, RemoteScorerConfig, ReportFormat,
};
use procassist::prompt::Shots;
use procassist::sim::{
    generate_corpus, generate_log, generate_with_model, read_conversation_dir, read_log_dir, synthesize_conversation,
    write_conversation, write_log, ScriptedUser, SkillProfile, SkillSampler, SynthConfig,
};
use procassist::uwa::{build_dataset, write_dataset, DatasetMode, Split};
use procassist::{ClockTime, Execution};

#[derive(Parser)]
#[command(name = "procassist", version, about = "Proactive assistant for procedural tasks")]
struct Cli {
    /// Application config file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Process items one at a time instead of in parallel.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic wearable activity logs.
    GenLogs(GenLogs),
    /// Write assistant/user conversations around activity logs.
    GenConvos(GenConvos),
    /// Build a finetuning dataset from conversations.
    BuildDataset(BuildDataset),
    /// Score a backend against ground-truth conversations.
    Evaluate(Evaluate),
    /// Run one closed-loop session and print the conversation.
    Simulate(Simulate),
    /// Serve the session API.
    Serve(Serve),
}

#[derive(Args)]
struct GenLogs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixed skill for every log; otherwise skills are uniform in [skill-min, skill-max].
    #[arg(long, conflicts_with_all = ["skill_min", "skill_max"])]
    skill: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    skill_min: f64,
    #[arg(long, default_value_t = 1.0)]
    skill_max: f64,
    /// Skill profile file (TOML or JSON).
    #[arg(long)]
    profile: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConvoGenerator {
    /// Rule-based writer, no model needed.
    Synth,
    /// The configured remote chat model with the data-generation prompt.
    Remote,
}

#[derive(Args)]
struct GenConvos {
    /// Directory written by gen-logs.
    #[arg(long)]
    logs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = ConvoGenerator::Synth)]
    generator: ConvoGenerator,
    #[arg(long, default_value_t = 3)]
    per_log: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
}

#[derive(Args)]
struct BuildDataset {
    /// Directory of conversation .txt files.
    #[arg(long)]
    convos: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "uwa")]
    mode: DatasetMode,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// File listing evaluation conversation ids, one per line; overrides the fraction.
    #[arg(long)]
    eval_ids: Option<PathBuf>,
    #[arg(long)]
    window: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScorerKind {
    Lexical,
    Remote,
}

#[derive(Args)]
struct Evaluate {
    #[arg(long)]
    convos: PathBuf,
    /// oracle, oracle-answers, chatty or remote.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, value_parser = parse_shots)]
    shots: Option<Shots>,
    #[arg(long, value_enum)]
    scorer: Option<ScorerKind>,
    #[arg(long)]
    scorer_endpoint: Option<String>,
    /// Use the ground truth as the entailment premise.
    #[arg(long)]
    reference_premise: bool,
    #[arg(long)]
    exclude_miscellaneous: bool,
    #[arg(long, default_value = "table")]
    format: ReportFormat,
    /// Also write report.json, report.txt and records.jsonl here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Simulate {
    /// Activity log file; otherwise one is generated.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    skill: f64,
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Chance of a scripted user comment at each step change.
    #[arg(long, default_value_t = 0.0)]
    comment_prob: f64,
}

#[derive(Args)]
struct Serve {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
}

fn parse_shots(s: &str) -> Result<Shots, String> {
    let n: u8 = s.parse().map_err(|_| format!("shots must be 0, 1 or 4, got {s:?}"))?;
    Shots::try_from(n).map_err(|e| e.to_string())
}

fn load_config(path: Option<&Path>) -> Result<AppConfig> {
    match path {
        Some(p) => AppConfig::from_path(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(AppConfig::default()),
    }
}

fn load_profile(path: &Path) -> Result<SkillProfile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let profile: SkillProfile = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text)?
    } else {
        toml::from_str(&text)?
    };
    profile.validate()?;
    Ok(profile)
}

/// Backend from `--backend`/`--endpoint`/`--model` on top of the config file.
fn resolve_backend(
    config: &AppConfig,
    id: Option<&str>,
    endpoint: Option<&str>,
    model: Option<&str>,
) -> Result<BackendConfig> {
    let mut remote = match &config.backend {
        BackendConfig::Remote(r) => Some(r.clone()),
        _ => None,
    };
    if endpoint.is_some() || model.is_some() {
        let base = remote.take().unwrap_or_else(|| RemoteChatConfig::new("", ""));
        remote = Some(RemoteChatConfig {
            endpoint: endpoint.map_or(base.endpoint.clone(), str::to_string),
            model: model.map_or(base.model.clone(), str::to_string),
            ..base
        });
    }
    Ok(match id {
        Some(id) => BackendConfig::from_id(id, remote.as_ref())?,
        None if remote.is_some() && (endpoint.is_some() || model.is_some()) => {
            BackendConfig::Remote(remote.expect("checked"))
        }
        None => config.backend.clone(),
    })
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let config = load_config(cli.config.as_deref())?;
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match cli.command {
        Command::GenLogs(args) => gen_logs(&config, args, exec),
        Command::GenConvos(args) => gen_convos(&config, args),
        Command::BuildDataset(args) => build(&config, args, exec),
        Command::Evaluate(args) => run_evaluate(&config, args, exec),
        Command::Simulate(args) => simulate(&config, args),
        Command::Serve(args) => serve(&config, args),
    }
}

fn gen_logs(config: &AppConfig, args: GenLogs, exec: Execution) -> Result<()> {
    let task = config.load_task()?;
    let profile = match &args.profile {
        Some(p) => load_profile(p)?,
        None => SkillProfile::default(),
    };
    let sampler = match args.skill {
        Some(skill) => SkillSampler::Fixed { skill },
        None => SkillSampler::Uniform { min: args.skill_min, max: args.skill_max },
    };
    let logs = generate_corpus(&profile, sampler, task.targets(), args.count, args.seed, exec)?;
    for log in &logs {
        let id = log.conversation.source.as_deref().expect("corpus logs carry ids");
        write_log(&args.out, id, log)?;
    }
    let mistakes: usize = logs.iter().map(|l| l.mistakes.len()).sum();
    println!("wrote {} logs ({mistakes} mistakes) to {}", logs.len(), args.out.display());
    Ok(())
}

fn gen_convos(config: &AppConfig, args: GenConvos) -> Result<()> {
    let task = config.load_task()?;
    let logs = read_log_dir(&args.logs)?;
    if logs.is_empty() {
        bail!("no logs found in {}", args.logs.display());
    }
    let remote = match args.generator {
        ConvoGenerator::Synth => None,
        ConvoGenerator::Remote => {
            match resolve_backend(config, Some("remote"), args.endpoint.as_deref(), args.model.as_deref())? {
                BackendConfig::Remote(cfg) => Some(RemoteChat::new(cfg)),
                _ => unreachable!("remote id resolves to a remote backend"),
            }
        }
    };
    let (mut written, mut skipped) = (0, 0);
    for log in &logs {
        let log_id = log.conversation.source.as_deref().unwrap_or("log");
        for k in 0..args.per_log {
            let id = format!("{log_id}-c{k}");
            let convo = match &remote {
                None => synthesize_conversation(
                    &task,
                    log,
                    &SynthConfig::default(),
                    args.seed ^ log.seed.wrapping_add(k as u64),
                ),
                Some(chat) => match generate_with_model(chat, &task, log) {
                    Ok(c) => c,
                    Err(e) => {
                        log::warn!("{id}: {e}; skipped");
                        skipped += 1;
                        continue;
                    }
                },
            };
            write_conversation(&args.out, &id, &convo)?;
            written += 1;
        }
    }
    println!("wrote {written} conversations to {} ({skipped} skipped)", args.out.display());
    Ok(())
}

fn build(config: &AppConfig, args: BuildDataset, exec: Execution) -> Result<()> {
    let task = config.load_task()?;
    let corpus = read_conversation_dir(&args.convos)?;
    let split = match &args.eval_ids {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Split::Explicit {
                eval_ids: text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect(),
            }
        }
        None => Split::Fraction { train: args.train_fraction, seed: args.seed },
    };
    let window = args.window.unwrap_or(config.engine.prompt.window);
    let ds = build_dataset(&corpus, &task, args.mode, &split, window, exec)?;
    write_dataset(&args.out, &ds)?;
    let s = &ds.stats;
    println!(
        "{} conversations -> {} train / {} eval examples ({} UWA substitutions) in {}",
        s.conversations,
        s.train_examples,
        s.eval_examples,
        s.uwa_substituted,
        args.out.display()
    );
    Ok(())
}

fn run_evaluate(config: &AppConfig, args: Evaluate, exec: Execution) -> Result<()> {
    let task = config.load_task()?;
    let gt = read_conversation_dir(&args.convos)?;
    let backend =
        resolve_backend(config, args.backend.as_deref(), args.endpoint.as_deref(), args.model.as_deref())?.build()?;
    let mut scorer_cfg = match args.scorer {
        None => config.scorer.clone(),
        Some(ScorerKind::Lexical) => ScorerConfig::Lexical,
        Some(ScorerKind::Remote) => match (&config.scorer, &args.scorer_endpoint) {
            (_, Some(url)) => ScorerConfig::Remote(RemoteScorerConfig::new(url)),
            (ScorerConfig::Remote(r), None) => ScorerConfig::Remote(r.clone()),
            _ => bail!("--scorer remote needs --scorer-endpoint or a [scorer] section in the config"),
        },
    };
    if let (ScorerConfig::Remote(r), true) = (&mut scorer_cfg, args.reference_premise) {
        r.premise = Premise::Reference;
    }
    let scorer = scorer_cfg.build();
    let mut eval_config = EvalConfig { engine: config.engine_config()?, ..EvalConfig::default() };
    if let Some(shots) = args.shots {
        eval_config.engine.prompt.shots = shots;
    }
    eval_config.include_miscellaneous = !args.exclude_miscellaneous;
    let ev = evaluate(backend.as_ref(), &gt, &task, scorer.as_ref(), &eval_config, exec)?;
    print!("{}", render_report(&ev.report, args.format));
    if let Some(out) = &args.out {
        fs::create_dir_all(out)?;
        fs::write(out.join("report.json"), render_report(&ev.report, ReportFormat::Structured))?;
        fs::write(out.join("report.txt"), render_report(&ev.report, ReportFormat::Table))?;
        fs::write(out.join("records.jsonl"), records_to_jsonl(&ev.records))?;
    }
    Ok(())
}

fn simulate(config: &AppConfig, args: Simulate) -> Result<()> {
    let task = Arc::new(config.load_task()?);
    let events = match &args.log {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_conversation(&text)?
        }
        None => {
            let profile = SkillProfile::default().with_skill(args.skill);
            generate_log(&profile, task.targets(), args.seed, ClockTime::from_hms(10, 0, 0).expect("valid time"))?
                .conversation
        }
    };
    let backend =
        resolve_backend(config, args.backend.as_deref(), args.endpoint.as_deref(), args.model.as_deref())?.build()?;
    let user = if args.comment_prob > 0.0 {
        UserScript::Simulated(ScriptedUser::new(args.comment_prob, args.seed))
    } else {
        UserScript::Silent
    };
    let convo = run_closed_loop(task, &events, user, backend, config.engine_config()?)?;
    print!("{}", serialize_conversation(&convo));
    Ok(())
}

fn serve(config: &AppConfig, args: Serve) -> Result<()> {
    let state = Arc::new(procassist_server::AppState::from_config(config)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port)).await?;
        log::info!("listening on http://{}", listener.local_addr()?);
        procassist_server::serve(listener, state).await?;
        Ok(())
    })
}
