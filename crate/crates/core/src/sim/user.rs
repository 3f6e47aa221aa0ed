use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tracker::StepInfo;

/// Trivially informative comments a user makes after finishing a step.
pub const DEFAULT_COMMENTS: [&str; 6] = [
    "Okay done, what's next?",
    "Done. What should I do now?",
    "Let me start with the next step now.",
    "Alright, that part is finished.",
    "Okay, what now?",
    "Finished that one.",
];

/// Simulated user who sometimes speaks up at step boundaries.
#[derive(Debug, Clone)]
pub struct ScriptedUser {
    comment_prob: f64,
    pool: Vec<String>,
    rng: ChaCha8Rng,
}

impl ScriptedUser {
    /// `comment_prob` is clamped to [0, 1].
    pub fn new(comment_prob: f64, seed: u64) -> Self {
        ScriptedUser {
            comment_prob: if comment_prob.is_nan() { 0.0 } else { comment_prob.clamp(0.0, 1.0) },
            pool: DEFAULT_COMMENTS.iter().map(|s| s.to_string()).collect(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Replaces the comment pool. An empty pool silences the user.
    pub fn with_pool<I, S>(mut self, pool: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.pool = pool.into_iter().map(Into::into).collect();
        self
    }

    pub fn pool(&self) -> &[String] {
        &self.pool
    }

    /// A comment for the trigger described by `info`, if the user makes one.
    /// Only step boundaries that are not corrections draw a comment.
    pub fn comment(&mut self, info: &StepInfo) -> Option<String> {
        if !info.is_step_advance() || self.pool.is_empty() {
            return None;
        }
        if !self.rng.random_bool(self.comment_prob) {
            return None;
        }
        let i = self.rng.random_range(0..self.pool.len());
        Some(self.pool[i].clone())
    }
}
