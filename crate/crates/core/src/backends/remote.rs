//! OpenAI-style chat-completion client with exponential backoff.

use std::time::{Duration, Instant};

use rand::Rng;
use serde::Deserialize;
use serde_json::json;

use super::{BackendConfig, BackendError, GradeReply, Grader};
use crate::prompting::{parse_reply, RenderedPrompt};

pub const API_KEY_ENV: &str = "GRADEGUARD_API_KEY";

const MAX_BACKOFF: Duration = Duration::from_secs(30);

#[derive(Debug, Deserialize)]
struct ChatCompletion {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ChatMessage,
}

#[derive(Debug, Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

pub struct RemoteBackend {
    agent: ureq::Agent,
    api_key: Option<String>,
}

enum Attempt {
    Done(String),
    Retry(BackendError),
    Fatal(BackendError),
}

impl RemoteBackend {
    /// Builds a client, reading the API key from `GRADEGUARD_API_KEY`.
    pub fn from_env(config: &BackendConfig) -> Self {
        Self::new(config, std::env::var(API_KEY_ENV).ok())
    }

    pub fn new(config: &BackendConfig, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.request_timeout()))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, api_key }
    }

    fn attempt(&self, config: &BackendConfig, prompt: &RenderedPrompt, attempts: u32) -> Attempt {
        let body = json!({
            "model": config.model_id,
            "temperature": config.temperature,
            "messages": [{ "role": "user", "content": prompt.text }],
        });
        let mut req = self.agent.post(&config.endpoint_url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(&body) {
            Ok(resp) => resp,
            Err(ureq::Error::Timeout(_)) => return Attempt::Retry(BackendError::Timeout { attempts }),
            Err(e) => return Attempt::Retry(BackendError::Unavailable { attempts, reason: e.to_string() }),
        };
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Attempt::Retry(BackendError::Unavailable { attempts, reason: format!("http status {status}") });
        }
        if !(200..300).contains(&status) {
            return Attempt::Fatal(BackendError::Unavailable { attempts, reason: format!("http status {status}") });
        }
        match resp.body_mut().read_json::<ChatCompletion>() {
            Ok(completion) => {
                let text = completion.choices.into_iter().next().and_then(|c| c.message.content).unwrap_or_default();
                Attempt::Done(text)
            }
            Err(ureq::Error::Timeout(_)) => Attempt::Retry(BackendError::Timeout { attempts }),
            Err(e) => Attempt::Fatal(BackendError::Unavailable {
                attempts,
                reason: format!("malformed completion body: {e}"),
            }),
        }
    }
}

/// Delay before retry number `retry` (1-based): base * 2^(retry-1), with
/// up to 25% random jitter, capped at 30 s.
pub(crate) fn backoff_delay(base_ms: u64, retry: u32) -> Duration {
    let exp = base_ms.saturating_mul(1u64 << (retry.saturating_sub(1)).min(16));
    let jitter = rand::rng().random_range(0..=exp / 4 + 1);
    Duration::from_millis(exp + jitter).min(MAX_BACKOFF)
}

impl Grader for RemoteBackend {
    fn grade_once(
        &self,
        config: &BackendConfig,
        prompt: &RenderedPrompt,
        repetition_index: u32,
    ) -> Result<GradeReply, BackendError> {
        let started = Instant::now();
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(config, prompt, attempts) {
                Attempt::Done(raw_text) => {
                    return Ok(GradeReply {
                        record_id: prompt.record_id.clone(),
                        repetition_index,
                        parsed: parse_reply(&raw_text),
                        raw_text,
                        latency_ms: started.elapsed().as_millis() as u64,
                        error: None,
                    })
                }
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(e) => {
                    if attempts > config.max_retries {
                        return Err(e);
                    }
                    log::warn!("{}: attempt {attempts} failed ({e}), retrying", prompt.record_id);
                    std::thread::sleep(backoff_delay(config.retry_base_ms, attempts));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_grows_exponentially() {
        let d1 = backoff_delay(100, 1).as_millis();
        let d3 = backoff_delay(100, 3).as_millis();
        assert!((100..=126).contains(&d1), "{d1}");
        assert!((400..=501).contains(&d3), "{d3}");
        assert_eq!(backoff_delay(10_000, 20), MAX_BACKOFF);
    }
}
