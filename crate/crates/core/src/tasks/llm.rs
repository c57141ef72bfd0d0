//! Chat-completion client used as a mutator.
//!
//! Sends `{model, messages, max_tokens}` as JSON, reads either an
//! OpenAI-style (`choices[0].message.content`) or Anthropic-style
//! (`content[].text`) response, and parses the first fenced block as a
//! SKILL.md. Transport failures are retried with exponential backoff.

use std::thread;
use std::time::Duration;

use rand::RngCore;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::Mutator;
use crate::error::{Error, Result};
use crate::skill_doc::{parse_fenced_skill, SkillDoc};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub max_tokens: u32,
    /// Environment variable holding the API key; unset means no auth header.
    pub api_key_env: String,
    /// `authorization` sends `Bearer <key>`; any other header gets the raw key.
    pub auth_header: String,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    pub backoff_ms: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "mutator".into(),
            max_tokens: 4096,
            api_key_env: "MOCHA_API_KEY".into(),
            auth_header: "authorization".into(),
            timeout_secs: 120,
            max_attempts: 3,
            backoff_ms: 500,
        }
    }
}

pub struct LlmMutator {
    config: LlmConfig,
    client: Client,
    api_key: Option<String>,
}

enum Attempt {
    Retry(String),
    Fatal(String),
}

impl LlmMutator {
    pub fn new(config: LlmConfig) -> Result<Self> {
        if config.max_attempts == 0 {
            return Err(Error::invalid("llm.max_attempts", "must be at least 1"));
        }
        let client = Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Task(format!("building HTTP client: {e}")))?;
        let api_key = std::env::var(&config.api_key_env).ok();
        Ok(LlmMutator {
            config,
            client,
            api_key,
        })
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": self.config.max_tokens,
        })
    }

    fn attempt(&self, body: &Value) -> std::result::Result<String, Attempt> {
        let mut req = self.client.post(&self.config.endpoint).json(body);
        if let Some(key) = &self.api_key {
            req = if self.config.auth_header.eq_ignore_ascii_case("authorization") {
                req.bearer_auth(key)
            } else {
                req.header(self.config.auth_header.as_str(), key)
            };
        }
        let resp = req.send().map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(format!("HTTP {status}")));
        }
        let value: Value = resp
            .json()
            .map_err(|e| Attempt::Fatal(format!("response is not JSON: {e}")))?;
        response_text(&value).ok_or_else(|| Attempt::Fatal(format!("no text in response: {value}")))
    }

    /// Sends the prompt and returns the model's text, retrying transient
    /// failures.
    pub fn complete(&self, prompt: &str) -> Result<String> {
        let body = self.request_body(prompt);
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut last = String::new();
        for attempt in 1..=self.config.max_attempts {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(msg)) => return Err(Error::Task(msg)),
                Err(Attempt::Retry(msg)) => {
                    log::warn!("mutator request attempt {attempt} failed: {msg}");
                    last = msg;
                    if attempt < self.config.max_attempts {
                        thread::sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        Err(Error::Task(format!(
            "mutator endpoint failed after {} attempts: {last}",
            self.config.max_attempts
        )))
    }
}

/// Text content of a chat-completion response in either common shape.
pub fn response_text(value: &Value) -> Option<String> {
    if let Some(s) = value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
    {
        return Some(s.to_string());
    }
    let blocks = value.get("content")?.as_array()?;
    let text: Vec<&str> = blocks
        .iter()
        .filter_map(|b| b.get("text").and_then(Value::as_str))
        .collect();
    if text.is_empty() {
        None
    } else {
        Some(text.concat())
    }
}

impl Mutator for LlmMutator {
    fn mutate(&mut self, prompt: &str, _rng: &mut dyn RngCore) -> Result<SkillDoc> {
        let text = self.complete(prompt)?;
        parse_fenced_skill(&text).map_err(|e| {
            log::warn!("unparseable mutator response ({e}):\n{text}");
            Error::Task(format!("unparseable mutator response: {e}"))
        })
    }
}
