use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::http::{HttpError, JsonClient};

/// Similarity of a generated reply to the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreTriple {
    pub similarity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bertscore_f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entailment: Option<f64>,
}

impl ScoreTriple {
    pub fn similarity_only(similarity: f64) -> Self {
        ScoreTriple { similarity, bertscore_f1: None, entailment: None }
    }
}

pub const SIM_THRESHOLD: f64 = 0.3;
pub const ENT_THRESHOLD: f64 = 0.0;

/// A reply is correct when it is similar enough or entailed enough.
pub fn judge_correct(scores: &ScoreTriple, sim_threshold: f64, ent_threshold: f64) -> bool {
    scores.similarity > sim_threshold || scores.entailment.is_some_and(|e| e > ent_threshold)
}

fn token_counts(s: &str) -> HashMap<String, u32> {
    let mut counts = HashMap::new();
    for tok in s.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        *counts.entry(tok.to_lowercase()).or_insert(0) += 1;
    }
    counts
}

/// Cosine similarity of lowercase token-count vectors, in [0, 1].
/// Texts without any word characters score 0.
pub fn lexical_similarity(a: &str, b: &str) -> f64 {
    let (ca, cb) = (token_counts(a), token_counts(b));
    let dot: u64 = ca.iter().map(|(t, n)| u64::from(*n) * u64::from(cb.get(t).copied().unwrap_or(0))).sum();
    let sq = |c: &HashMap<String, u32>| c.values().map(|n| u64::from(*n).pow(2)).sum::<u64>();
    let denom = (sq(&ca) as f64 * sq(&cb) as f64).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (dot as f64 / denom).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScorerError {
    #[error("scorer unavailable: {0}")]
    Unavailable(String),
    #[error("scorer returned {got} results for {sent} pairs")]
    BatchMismatch { sent: usize, got: usize },
}

impl From<HttpError> for ScorerError {
    fn from(e: HttpError) -> Self {
        ScorerError::Unavailable(e.to_string())
    }
}

/// One (candidate, reference) pair to score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorePair {
    pub candidate: String,
    pub reference: String,
}

pub trait Scorer: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, candidate: &str, reference: &str) -> Result<ScoreTriple, ScorerError>;
    fn score_batch(&self, pairs: &[ScorePair]) -> Result<Vec<ScoreTriple>, ScorerError> {
        pairs.iter().map(|p| self.score(&p.candidate, &p.reference)).collect()
    }
}

/// Dependency-free scorer: lexical similarity only.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalScorer;

impl Scorer for LexicalScorer {
    fn name(&self) -> &str {
        "lexical"
    }
    fn score(&self, candidate: &str, reference: &str) -> Result<ScoreTriple, ScorerError> {
        Ok(ScoreTriple::similarity_only(lexical_similarity(candidate, reference)))
    }
}

/// Which text is the entailment premise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Premise {
    /// The generated reply entails the ground truth.
    #[default]
    Candidate,
    Reference,
}

fn default_metrics() -> Vec<String> {
    vec!["similarity".into(), "bertscore".into(), "entailment".into()]
}

fn default_batch() -> usize {
    32
}

fn default_timeout() -> f64 {
    30.0
}

fn default_retries() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteScorerConfig {
    pub endpoint: String,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<String>,
    #[serde(default)]
    pub premise: Premise,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
}

impl RemoteScorerConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteScorerConfig {
            endpoint: endpoint.into(),
            metrics: default_metrics(),
            premise: Premise::default(),
            batch_size: default_batch(),
            timeout_secs: default_timeout(),
            retries: default_retries(),
            auth_env: None,
        }
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    candidate: &'a str,
    reference: &'a str,
    metrics: &'a [String],
    premise: Premise,
}

#[derive(Serialize)]
struct BatchRequest<'a> {
    pairs: &'a [ScorePair],
    metrics: &'a [String],
    premise: Premise,
}

#[derive(Deserialize)]
struct BatchResponse {
    results: Vec<ScoreTriple>,
}

/// Client for a scoring service speaking `POST /v1/score` and
/// `POST /v1/score/batch`.
#[derive(Debug, Clone)]
pub struct RemoteScorer {
    config: RemoteScorerConfig,
    client: JsonClient,
    name: String,
}

impl RemoteScorer {
    pub fn new(config: RemoteScorerConfig) -> Self {
        let token = config.auth_env.as_deref().and_then(|v| std::env::var(v).ok());
        let client =
            JsonClient::new(&config.endpoint, Duration::from_secs_f64(config.timeout_secs.max(0.001)), config.retries)
                .with_bearer(token);
        let name = format!("remote({})", config.metrics.join("+"));
        RemoteScorer { config, client, name }
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.client = self.client.with_backoff(backoff);
        self
    }
}

impl Scorer for RemoteScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, candidate: &str, reference: &str) -> Result<ScoreTriple, ScorerError> {
        let body = ScoreRequest { candidate, reference, metrics: &self.config.metrics, premise: self.config.premise };
        Ok(self.client.post_json("/v1/score", &body)?)
    }

    fn score_batch(&self, pairs: &[ScorePair]) -> Result<Vec<ScoreTriple>, ScorerError> {
        let mut out = Vec::with_capacity(pairs.len());
        for chunk in pairs.chunks(self.config.batch_size.max(1)) {
            let body = BatchRequest { pairs: chunk, metrics: &self.config.metrics, premise: self.config.premise };
            let resp: BatchResponse = self.client.post_json("/v1/score/batch", &body)?;
            if resp.results.len() != chunk.len() {
                return Err(ScorerError::BatchMismatch { sent: chunk.len(), got: resp.results.len() });
            }
            out.extend(resp.results);
        }
        Ok(out)
    }
}
