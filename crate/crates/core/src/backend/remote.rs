use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatRequest};
use crate::http::JsonClient;

fn default_timeout() -> f64 {
    60.0
}

fn default_retries() -> u32 {
    2
}

/// Connection settings for an OpenAI-compatible chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteChatConfig {
    /// Base URL; `/chat/completions` is appended.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
    #[serde(default)]
    pub temperature: f32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

impl RemoteChatConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteChatConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            auth_env: None,
            temperature: 0.0,
            max_tokens: None,
            timeout_secs: default_timeout(),
            retries: default_retries(),
        }
    }
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    messages: [Message<'a>; 2],
    temperature: f32,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Chat model behind an HTTP chat-completions API.
#[derive(Debug, Clone)]
pub struct RemoteChat {
    config: RemoteChatConfig,
    client: JsonClient,
}

impl RemoteChat {
    pub fn new(config: RemoteChatConfig) -> Self {
        let token = config.auth_env.as_deref().and_then(|var| std::env::var(var).ok());
        let client =
            JsonClient::new(&config.endpoint, Duration::from_secs_f64(config.timeout_secs.max(0.001)), config.retries)
                .with_bearer(token);
        RemoteChat { config, client }
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.client = self.client.with_backoff(backoff);
        self
    }

    pub fn config(&self) -> &RemoteChatConfig {
        &self.config
    }
}

impl ChatBackend for RemoteChat {
    fn name(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.chat(&request.system, &request.user)
    }
}

impl RemoteChat {
    /// One chat completion with a system and a user message.
    pub fn chat(&self, system: &str, user: &str) -> Result<String, BackendError> {
        let body = CompletionRequest {
            model: &self.config.model,
            messages: [Message { role: "system", content: system }, Message { role: "user", content: user }],
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
        };
        let resp: CompletionResponse = self.client.post_json("/chat/completions", &body)?;
        let choice =
            resp.choices.into_iter().next().ok_or_else(|| BackendError::Protocol("response has no choices".into()))?;
        Ok(choice.message.content.unwrap_or_default())
    }
}
