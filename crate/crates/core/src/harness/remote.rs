//! Chat-completions client for remote samplers.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

pub const DEFAULT_API_KEY_ENV: &str = "HYPOSPACE_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Total request attempts, including the first.
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            initial_backoff_ms: 500,
            max_backoff_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, doubling from the initial value.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64 << attempt.saturating_sub(1).min(20);
        Duration::from_millis(
            self.initial_backoff_ms
                .saturating_mul(factor)
                .min(self.max_backoff_ms),
        )
    }
}

/// Endpoint settings. The API key is read from the environment variable
/// named by `api_key_env` and is never stored or logged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model: String::new(),
            temperature: None,
            max_tokens: None,
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            timeout_secs: 120,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub total_tokens: Option<u64>,
}

impl Usage {
    pub fn total(&self) -> Option<u64> {
        self.total_tokens
            .or(match (self.prompt_tokens, self.completion_tokens) {
                (Some(p), Some(c)) => Some(p + c),
                _ => None,
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatReply {
    pub text: String,
    pub usage: Option<Usage>,
    /// Failed attempts before the one that succeeded.
    pub retries: u32,
}

fn request_body(config: &RemoteConfig, prompt: &str) -> Value {
    let mut body = json!({
        "model": config.model,
        "messages": [{"role": "user", "content": prompt}],
    });
    if let Some(t) = config.temperature {
        body["temperature"] = json!(t);
    }
    if let Some(m) = config.max_tokens {
        body["max_tokens"] = json!(m);
    }
    body
}

fn parse_reply(body: &str) -> Result<(String, Option<Usage>)> {
    let v: Value = serde_json::from_str(body)
        .map_err(|e| Error::Sampler(format!("response is not JSON: {e}")))?;
    let text = v["choices"][0]["message"]["content"]
        .as_str()
        .ok_or_else(|| Error::Sampler("response lacks choices[0].message.content".into()))?
        .to_string();
    let usage = v
        .get("usage")
        .filter(|u| u.is_object())
        .map(|u| serde_json::from_value::<Usage>(u.clone()))
        .transpose()
        .map_err(|e| Error::Sampler(format!("malformed usage block: {e}")))?;
    Ok((text, usage))
}

/// Sends one single-message chat request, retrying transport errors and
/// non-2xx statuses with exponential backoff.
pub fn send_chat(config: &RemoteConfig, prompt: &str) -> Result<ChatReply> {
    let key = std::env::var(&config.api_key_env).map_err(|_| {
        Error::Config(format!(
            "environment variable {} is not set",
            config.api_key_env
        ))
    })?;
    send_chat_with_key(config, prompt, &key)
}

pub fn send_chat_with_key(config: &RemoteConfig, prompt: &str, api_key: &str) -> Result<ChatReply> {
    if config.endpoint.is_empty() {
        return Err(Error::Config("remote endpoint is not set".into()));
    }
    let attempts = config.retry.max_attempts.max(1);
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
        .build()
        .into();
    let body = request_body(config, prompt);
    let mut last = String::new();
    for attempt in 1..=attempts {
        let sent = agent
            .post(&config.endpoint)
            .header("Authorization", &format!("Bearer {api_key}"))
            .send_json(&body);
        match sent {
            Ok(resp) if resp.status().is_success() => {
                let text = resp
                    .into_body()
                    .read_to_string()
                    .map_err(|e| Error::Sampler(format!("reading response: {e}")))?;
                let (text, usage) = parse_reply(&text)?;
                return Ok(ChatReply {
                    text,
                    usage,
                    retries: attempt - 1,
                });
            }
            Ok(resp) => last = format!("HTTP {}", resp.status().as_u16()),
            Err(e) => last = e.to_string(),
        }
        if attempt < attempts {
            std::thread::sleep(config.retry.backoff(attempt));
        }
    }
    Err(Error::Transport {
        attempts,
        message: last,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            max_attempts: 5,
            initial_backoff_ms: 100,
            max_backoff_ms: 350,
        };
        let ms: Vec<u128> = (1..=4).map(|a| p.backoff(a).as_millis()).collect();
        assert_eq!(ms, vec![100, 200, 350, 350]);
    }

    #[test]
    fn reply_parsing() {
        let (t, u) = parse_reply(
            r#"{"choices":[{"message":{"content":"EXPR: x"}}],"usage":{"prompt_tokens":3,"completion_tokens":4}}"#,
        )
        .unwrap();
        assert_eq!(t, "EXPR: x");
        assert_eq!(u.unwrap().total(), Some(7));
        assert!(parse_reply(r#"{"choices":[]}"#).is_err());
    }

    #[test]
    fn missing_key_is_a_config_error() {
        let cfg = RemoteConfig {
            endpoint: "http://127.0.0.1:9".into(),
            api_key_env: "HYPOSPACE_TEST_UNSET_KEY".into(),
            ..Default::default()
        };
        assert!(matches!(send_chat(&cfg, "hi"), Err(Error::Config(_))));
    }
}
