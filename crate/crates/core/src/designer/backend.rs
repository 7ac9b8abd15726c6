use std::collections::VecDeque;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::LlmError;
use crate::prompt::PromptBundle;

fn default_temperature() -> f64 {
    0.7
}

fn default_max_retries() -> u32 {
    5
}

fn default_timeout_s() -> f64 {
    120.0
}

fn default_api_key_env() -> String {
    "OPENAI_API_KEY".into()
}

/// Chat-completion endpoint settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    pub base_url: String,
    pub model_name: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
}

impl LlmConfig {
    pub fn check(&self) -> Result<(), LlmError> {
        if self.max_retries == 0 {
            return Err(LlmError::Config("max_retries must be >= 1".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(LlmError::Config("temperature must be >= 0".into()));
        }
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(LlmError::Config("timeout_s must be > 0".into()));
        }
        if self.base_url.is_empty() || self.model_name.is_empty() {
            return Err(LlmError::Config("base_url and model_name are required".into()));
        }
        Ok(())
    }
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model_name: "gpt-4".into(),
            temperature: default_temperature(),
            max_retries: default_max_retries(),
            timeout_s: default_timeout_s(),
            api_key_env: default_api_key_env(),
        }
    }
}

/// Something that answers a prompt with the assistant's message text.
pub trait ChatBackend {
    fn complete(&mut self, bundle: &PromptBundle) -> Result<String, LlmError>;
}

/// Request body for `POST {base_url}/chat/completions`.
pub fn chat_request_body(bundle: &PromptBundle, cfg: &LlmConfig) -> Value {
    json!({
        "model": cfg.model_name,
        "temperature": cfg.temperature,
        "messages": [
            {"role": "system", "content": bundle.system_text},
            {"role": "user", "content": bundle.user_text},
        ],
    })
}

/// Extracts `choices[0].message.content` from a response body.
pub fn parse_chat_response(body: &str) -> Result<String, LlmError> {
    let value: Value = serde_json::from_str(body)
        .map_err(|e| LlmError::MalformedResponse(format!("response is not JSON: {e}")))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| {
            LlmError::MalformedResponse("missing choices[0].message.content".into())
        })
}

/// Blocking OpenAI-compatible chat-completion client.
pub struct HttpBackend {
    cfg: LlmConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl HttpBackend {
    /// Reads the bearer token from the environment variable named in `cfg`;
    /// a missing variable sends no authorization header.
    pub fn new(cfg: LlmConfig) -> Result<Self, LlmError> {
        cfg.check()?;
        let api_key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            cfg,
            agent,
            api_key,
        })
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'))
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&mut self, bundle: &PromptBundle) -> Result<String, LlmError> {
        let mut request = self
            .agent
            .post(self.endpoint())
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(chat_request_body(bundle, &self.cfg))
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(LlmError::Api { status, body });
        }
        parse_chat_response(&body)
    }
}

/// Replays a fixed list of replies in order, recording every prompt it sees.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    replies: VecDeque<String>,
    seen: Vec<PromptBundle>,
}

impl ScriptedBackend {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            replies: replies.into_iter().map(Into::into).collect(),
            seen: Vec::new(),
        }
    }

    /// One JSON string literal per non-blank line.
    pub fn from_lines(text: &str) -> Result<Self, LlmError> {
        let replies = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str::<String>(l).map_err(|e| {
                    LlmError::Config(format!("mock reply line {}: {e}", i + 1))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(replies))
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Config(format!("reading {}: {e}", path.display())))?;
        Self::from_lines(&text)
    }

    /// Discards the next `n` replies, e.g. those consumed before a resume.
    pub fn skip(&mut self, n: usize) {
        let n = n.min(self.replies.len());
        self.replies.drain(..n);
    }

    pub fn remaining(&self) -> usize {
        self.replies.len()
    }

    pub fn prompts(&self) -> &[PromptBundle] {
        &self.seen
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&mut self, bundle: &PromptBundle) -> Result<String, LlmError> {
        self.seen.push(bundle.clone());
        self.replies.pop_front().ok_or(LlmError::ScriptExhausted)
    }
}
