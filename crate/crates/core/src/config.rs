//! Application configuration file.
//!
//! ```toml
//! task_file = "tasks/bookshelf.toml"   # optional, defaults to the built-in task
//! example_files = ["ex1.txt"]           # conversations for one/four-shot prompts
//!
//! [backend]
//! kind = "remote"
//! endpoint = "http://localhost:8000/v1"
//! model = "qwen2.5-3b-uwa"
//! auth_env = "CHAT_API_KEY"
//!
//! [engine.prompt]
//! shots = 0
//! window = 5
//!
//! [scorer]
//! kind = "remote"
//! endpoint = "http://localhost:9000"
//!
//! [server]
//! idle_timeout_secs = 1800
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::BackendConfig;
use crate::convo::{parse_conversation, Conversation};
use crate::engine::EngineConfig;
use crate::eval::{LexicalScorer, RemoteScorer, RemoteScorerConfig, Scorer};
use crate::task::TaskDef;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScorerConfig {
    #[default]
    Lexical,
    Remote(RemoteScorerConfig),
}

impl ScorerConfig {
    pub fn build(&self) -> Box<dyn Scorer> {
        match self {
            ScorerConfig::Lexical => Box::new(LexicalScorer),
            ScorerConfig::Remote(cfg) => Box::new(RemoteScorer::new(cfg.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub idle_timeout_secs: u64,
    /// Environment variable holding a static bearer token clients must send.
    pub auth_token_env: Option<String>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig { idle_timeout_secs: 30 * 60, auth_token_env: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct AppConfig {
    pub task_file: Option<PathBuf>,
    pub example_files: Vec<PathBuf>,
    pub backend: BackendConfig,
    pub engine: EngineConfig,
    pub scorer: ScorerConfig,
    pub server: ServerConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Toml { path: PathBuf, source: toml::de::Error },
    #[error("example conversation {path}: {message}")]
    Example { path: PathBuf, message: String },
    #[error(transparent)]
    Task(#[from] crate::task::TaskError),
}

impl AppConfig {
    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let mut cfg: AppConfig =
            toml::from_str(&text).map_err(|source| ConfigError::Toml { path: path.into(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.task_file.as_mut() {
            resolve(p);
        }
        cfg.example_files.iter_mut().for_each(resolve);
        Ok(cfg)
    }

    pub fn load_task(&self) -> Result<TaskDef, ConfigError> {
        Ok(match &self.task_file {
            Some(p) => TaskDef::from_path(p)?,
            None => TaskDef::table_assembly(),
        })
    }

    pub fn load_examples(&self) -> Result<Vec<Conversation>, ConfigError> {
        self.example_files
            .iter()
            .map(|p| {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.clone(), source })?;
                parse_conversation(&text).map_err(|e| ConfigError::Example { path: p.clone(), message: e.to_string() })
            })
            .collect()
    }

    /// Engine settings with the example conversations loaded.
    pub fn engine_config(&self) -> Result<EngineConfig, ConfigError> {
        let mut engine = self.engine.clone();
        engine.examples = self.load_examples()?;
        Ok(engine)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::Shots;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: AppConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, AppConfig::default());
        assert_eq!(cfg.server.idle_timeout_secs, 1800);
        assert_eq!(cfg.backend.id(), "oracle");
    }

    #[test]
    fn full_file_parses() {
        let dir = tempfile::tempdir().unwrap();
        let example = dir.path().join("ex.txt");
        std::fs::write(&example, "10:00:00 AM - Assistant: Hi\n").unwrap();
        let path = dir.path().join("app.toml");
        std::fs::write(
            &path,
            r#"
example_files = ["ex.txt"]

[backend]
kind = "remote"
endpoint = "http://localhost:8000/v1"
model = "qwen"
auth_env = "KEY"
temperature = 0.2

[engine.prompt]
shots = 1

[scorer]
kind = "remote"
endpoint = "http://localhost:9000"
premise = "reference"

[server]
idle_timeout_secs = 60
"#,
        )
        .unwrap();
        let cfg = AppConfig::from_path(&path).unwrap();
        assert_eq!(cfg.backend.id(), "remote");
        assert_eq!(cfg.engine.prompt.shots, Shots::One);
        assert_eq!(cfg.engine.prompt.window, 5);
        assert_eq!(cfg.example_files, vec![example]);
        assert_eq!(cfg.engine_config().unwrap().examples.len(), 1);
        assert!(matches!(cfg.scorer, ScorerConfig::Remote(ref r) if r.premise == crate::eval::Premise::Reference));
        assert_eq!(cfg.server.idle_timeout_secs, 60);
        assert_eq!(cfg.load_task().unwrap().id, "table-assembly");
    }

    #[test]
    fn shipped_example_parses() {
        let cfg: AppConfig = toml::from_str(include_str!("../../../config/procassist.example.toml")).unwrap();
        assert_eq!(cfg.backend.id(), "remote");
        assert!(matches!(cfg.scorer, ScorerConfig::Remote(_)));
        assert_eq!(cfg.server.auth_token_env.as_deref(), Some("PROCASSIST_SERVER_TOKEN"));
    }

    #[test]
    fn bad_shots_are_rejected() {
        assert!(toml::from_str::<AppConfig>("[engine.prompt]\nshots = 2\n").is_err());
    }
}
