//! Seeded stochastic grader used as the test oracle.
//!
//! grade = quantize_half(clamp(true_grade + eps, 0, 5)), eps ~ N(0, sd) with
//! sd = base_noise_sd + difficulty[record] + temperature term. The
//! temperature term is `temperature_gain * T`, or
//! `temperature_gain * |T - optimum|` when a U-shaped profile is requested.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendConfig, BackendError, GradeReply, Grader, MAX_TEMPERATURE};
use crate::lattice;
use crate::prompting::{format_reply, parse_reply, RenderedPrompt};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockProfile {
    pub base_noise_sd: f64,
    /// Extra noise sd per record id.
    pub difficulty_map: BTreeMap<String, f64>,
    pub temperature_gain: f64,
    /// When set, the temperature term is minimised at this temperature.
    pub temperature_optimum: Option<f64>,
    /// Probability of a degenerate reply at temperature 2; scales linearly
    /// from 0 at temperature 0.
    pub unparseable_rate_at_t2: f64,
    /// Records for which every request fails (transport failure injection).
    pub unavailable_records: BTreeSet<String>,
}

impl Default for MockProfile {
    fn default() -> Self {
        Self {
            base_noise_sd: 0.5,
            difficulty_map: BTreeMap::new(),
            temperature_gain: 0.25,
            temperature_optimum: None,
            unparseable_rate_at_t2: 0.0,
            unavailable_records: BTreeSet::new(),
        }
    }
}

impl MockProfile {
    pub fn noiseless() -> Self {
        Self { base_noise_sd: 0.0, temperature_gain: 0.0, ..Self::default() }
    }

    pub fn from_json_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::InvalidConfig(format!("{}: {e}", path.display())))?;
        let profile: Self =
            serde_json::from_str(&text).map_err(|e| BackendError::InvalidConfig(format!("{}: {e}", path.display())))?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |what: &str| Err(BackendError::InvalidConfig(format!("mock profile: {what}")));
        if !(self.base_noise_sd >= 0.0) || !(self.temperature_gain >= 0.0) {
            return bad("noise magnitudes must be >= 0");
        }
        if self.difficulty_map.values().any(|v| !(*v >= 0.0)) {
            return bad("difficulty noise must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.unparseable_rate_at_t2) {
            return bad("unparseable_rate_at_t2 must be a probability");
        }
        Ok(())
    }

    /// Gaussian noise sd for one record at one temperature.
    pub fn noise_sd(&self, record_id: &str, temperature: f64) -> f64 {
        let temp_term = match self.temperature_optimum {
            Some(opt) => self.temperature_gain * (temperature - opt).abs(),
            None => self.temperature_gain * temperature,
        };
        self.base_noise_sd + self.difficulty_map.get(record_id).copied().unwrap_or(0.0) + temp_term
    }

    pub fn unparseable_probability(&self, temperature: f64) -> f64 {
        self.unparseable_rate_at_t2 * (temperature / MAX_TEMPERATURE).clamp(0.0, 1.0)
    }
}

/// Seed for one (seed, record, repetition, temperature) draw.
pub(crate) fn draw_seed(seed: u64, record_id: &str, repetition_index: u32, temperature: f64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(record_id.as_bytes());
    h.update([0u8]);
    h.update(repetition_index.to_le_bytes());
    // Milli-degree resolution so 0.1 + 0.2 and 0.3 hash identically.
    h.update(((temperature * 1000.0).round() as i64).to_le_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

const DEGENERATE_WORDS: [&str; 12] = [
    "whereupon",
    "purple",
    "semantics",
    "lattice",
    "umbrella",
    "of",
    "the",
    "dances",
    "quantum",
    "variable",
    "forever",
    "integrating",
];

#[derive(Debug, Clone)]
pub struct MockBackend {
    profile: MockProfile,
    seed: u64,
    truths: HashMap<String, f64>,
}

impl MockBackend {
    pub fn new(profile: MockProfile, seed: u64, truths: HashMap<String, f64>) -> Self {
        Self { profile, seed, truths }
    }

    pub fn profile(&self) -> &MockProfile {
        &self.profile
    }
}

fn feedback_for(error: f64) -> &'static str {
    match error.abs() {
        0.0 => "The answer matches the reference answer.",
        e if e <= 1.0 => "The answer is mostly consistent with the reference but misses some detail.",
        _ => "The answer diverges substantially from the reference answer.",
    }
}

impl Grader for MockBackend {
    fn grade_once(
        &self,
        config: &BackendConfig,
        prompt: &RenderedPrompt,
        repetition_index: u32,
    ) -> Result<GradeReply, BackendError> {
        let record_id = prompt.record_id.as_str();
        if repetition_index == 0 {
            return Err(BackendError::InvalidConfig("repetition_index starts at 1".into()));
        }
        if self.profile.unavailable_records.contains(record_id) {
            return Err(BackendError::Unavailable {
                attempts: config.max_retries + 1,
                reason: format!("injected failure for {record_id}"),
            });
        }
        let truth = *self
            .truths
            .get(record_id)
            .ok_or_else(|| BackendError::InvalidConfig(format!("mock has no true grade for {record_id}")))?;
        let temperature = config.temperature;
        let mut rng = ChaCha8Rng::seed_from_u64(draw_seed(self.seed, record_id, repetition_index, temperature));

        let degenerate = rng.random::<f64>() < self.profile.unparseable_probability(temperature);
        let raw_text = if degenerate {
            let n = rng.random_range(8..20);
            (0..n).map(|_| DEGENERATE_WORDS[rng.random_range(0..DEGENERATE_WORDS.len())]).collect::<Vec<_>>().join(" ")
        } else {
            let sd = self.profile.noise_sd(record_id, temperature);
            let eps =
                if sd > 0.0 { Normal::new(0.0, sd).expect("sd is finite and positive").sample(&mut rng) } else { 0.0 };
            let grade = lattice::quantize_half(truth + eps);
            format_reply(grade, feedback_for(grade - truth))
        };
        Ok(GradeReply {
            record_id: record_id.to_string(),
            repetition_index,
            parsed: parse_reply(&raw_text),
            raw_text,
            latency_ms: 0,
            error: None,
        })
    }
}
