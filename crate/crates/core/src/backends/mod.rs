//! Grader backends: a remote chat-completion client and a seeded mock.
//!
//! Every backend answers one rendered prompt at a time through [`Grader`].
//! Repeated grading fans the repetitions out over a bounded worker pool;
//! because each mock reply is seeded by `(seed, record, repetition,
//! temperature)`, results do not depend on scheduling.

mod mock;
mod remote;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompting::{ParsedReply, RenderedPrompt};

pub use mock::{MockBackend, MockProfile};
pub use remote::{RemoteBackend, API_KEY_ENV};

pub const DEFAULT_REPETITIONS: usize = 10;
pub const MAX_TEMPERATURE: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempt(s): {reason}")]
    Unavailable { attempts: u32, reason: String },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("invalid backend configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Remote,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub backend_kind: BackendKind,
    pub model_id: String,
    pub temperature: f64,
    pub endpoint_url: String,
    pub max_retries: u32,
    /// Base delay of the exponential backoff between attempts.
    pub retry_base_ms: u64,
    pub parallelism_limit: usize,
    pub request_timeout_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            backend_kind: BackendKind::Mock,
            model_id: "mock".into(),
            temperature: 1.0,
            endpoint_url: String::new(),
            max_retries: 4,
            retry_base_ms: 500,
            parallelism_limit: 4,
            request_timeout_ms: 60_000,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !(0.0..=MAX_TEMPERATURE).contains(&self.temperature) {
            return Err(BackendError::InvalidConfig(format!(
                "temperature {} outside [0, {MAX_TEMPERATURE}]",
                self.temperature
            )));
        }
        if self.parallelism_limit == 0 {
            return Err(BackendError::InvalidConfig("parallelism_limit must be >= 1".into()));
        }
        if self.backend_kind == BackendKind::Remote && self.endpoint_url.is_empty() {
            return Err(BackendError::InvalidConfig("remote backend needs endpoint_url".into()));
        }
        Ok(())
    }

    pub fn with_temperature(&self, temperature: f64) -> Self {
        Self { temperature, ..self.clone() }
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_millis(self.request_timeout_ms)
    }
}

/// One backend answer for one repetition of one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeReply {
    pub record_id: String,
    pub repetition_index: u32,
    pub raw_text: String,
    pub parsed: ParsedReply,
    pub latency_ms: u64,
    /// Set when the request itself failed; `parsed` is then Unparseable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl GradeReply {
    pub fn grade(&self) -> Option<f64> {
        self.parsed.grade()
    }

    pub fn failed(record_id: &str, repetition_index: u32, err: &BackendError) -> Self {
        Self {
            record_id: record_id.to_string(),
            repetition_index,
            raw_text: String::new(),
            parsed: ParsedReply::Unparseable,
            latency_ms: 0,
            error: Some(err.to_string()),
        }
    }
}

pub trait Grader: Sync {
    fn grade_once(
        &self,
        config: &BackendConfig,
        prompt: &RenderedPrompt,
        repetition_index: u32,
    ) -> Result<GradeReply, BackendError>;
}

/// Returned when some repetition exhausted its retries. `replies` still
/// holds all `t` entries, with the failed ones marked Unparseable.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{failed} of {} repetitions failed: {error}", replies.len())]
pub struct PartialGrading {
    pub error: BackendError,
    pub failed: usize,
    pub replies: Vec<GradeReply>,
}

/// Grades one prompt `t` times with at most `config.parallelism_limit`
/// requests in flight. Output is ordered by repetition index 1..=t.
pub fn grade_repeated(
    backend: &dyn Grader,
    config: &BackendConfig,
    prompt: &RenderedPrompt,
    t: usize,
) -> Result<Vec<GradeReply>, PartialGrading> {
    grade_repeated_with_limit(backend, config, prompt, t, config.parallelism_limit)
}

pub(crate) fn grade_repeated_with_limit(
    backend: &dyn Grader,
    config: &BackendConfig,
    prompt: &RenderedPrompt,
    t: usize,
    limit: usize,
) -> Result<Vec<GradeReply>, PartialGrading> {
    let indices: Vec<u32> = (1..=t as u32).collect();
    let results = parallel_map(&indices, limit, |&rep| backend.grade_once(config, prompt, rep));
    let mut replies = Vec::with_capacity(t);
    let mut first_error = None;
    let mut failed = 0;
    for (rep, result) in indices.iter().zip(results) {
        match result {
            Ok(reply) => replies.push(reply),
            Err(e) => {
                failed += 1;
                replies.push(GradeReply::failed(&prompt.record_id, *rep, &e));
                first_error.get_or_insert(e);
            }
        }
    }
    match first_error {
        None => Ok(replies),
        Some(error) => Err(PartialGrading { error, failed, replies }),
    }
}

/// Applies `f` to every item on at most `limit` scoped worker threads,
/// returning results in input order.
pub fn parallel_map<T, R, F>(items: &[T], limit: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = limit.max(1).min(items.len());
    if workers <= 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("result slots poisoned")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("result slots poisoned").into_iter().map(|r| r.expect("every slot is filled")).collect()
}
