//! Blocking JSON-over-HTTP client with timeout and retry.

use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HttpError {
    #[error("request timed out")]
    Timeout,
    #[error("server returned status {0}")]
    Status(u16),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Decode(String),
}

impl HttpError {
    fn is_retryable(&self) -> bool {
        match self {
            HttpError::Timeout | HttpError::Transport(_) => true,
            HttpError::Status(s) => *s == 429 || *s >= 500,
            HttpError::Decode(_) => false,
        }
    }
}

impl From<ureq::Error> for HttpError {
    fn from(e: ureq::Error) -> Self {
        match e {
            ureq::Error::StatusCode(s) => HttpError::Status(s),
            ureq::Error::Timeout(_) => HttpError::Timeout,
            ureq::Error::Json(j) => HttpError::Decode(j.to_string()),
            other => HttpError::Transport(other.to_string()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct JsonClient {
    agent: ureq::Agent,
    base_url: String,
    bearer: Option<String>,
    retries: u32,
    backoff: Duration,
}

impl JsonClient {
    pub fn new(base_url: impl Into<String>, timeout: Duration, retries: u32) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        JsonClient {
            agent,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            bearer: None,
            retries,
            backoff: Duration::from_millis(200),
        }
    }

    pub fn with_bearer(mut self, token: Option<String>) -> Self {
        self.bearer = token.filter(|t| !t.is_empty());
        self
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    /// POSTs `body` to `base_url + path`, retrying transient failures with
    /// exponential backoff.
    pub fn post_json<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: &Req) -> Result<Resp, HttpError> {
        let url = format!("{}{}", self.base_url, path);
        let mut attempt = 0;
        loop {
            match self.post_once(&url, body) {
                Ok(r) => return Ok(r),
                Err(e) if e.is_retryable() && attempt < self.retries => {
                    log::debug!("POST {url} failed ({e}), retry {}/{}", attempt + 1, self.retries);
                    thread::sleep(self.backoff * 2u32.saturating_pow(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn post_once<Req: Serialize, Resp: DeserializeOwned>(&self, url: &str, body: &Req) -> Result<Resp, HttpError> {
        let mut req = self.agent.post(url);
        if let Some(token) = &self.bearer {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send_json(body)?;
        resp.body_mut().read_json::<Resp>().map_err(|e| HttpError::Decode(e.to_string()))
    }
}
