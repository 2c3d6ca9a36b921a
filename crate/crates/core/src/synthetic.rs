//! Seeded synthetic corpora with a matching heteroscedastic mock profile,
//! for demos and desk-scale experiments.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backends::MockProfile;
use crate::corpus::{AnswerRecord, Corpus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub records: usize,
    pub records_per_question: usize,
    pub high_noise_fraction: f64,
    pub low_noise_sd: f64,
    pub high_noise_sd: f64,
    pub temperature_gain: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            records: 500,
            records_per_question: 10,
            high_noise_fraction: 0.2,
            low_noise_sd: 0.3,
            high_noise_sd: 1.5,
            temperature_gain: 0.0,
            seed: 2024,
        }
    }
}

/// Generates the corpus and the profile. High-noise records are a seeded
/// random subset of size `round(records * high_noise_fraction)`; their
/// extra sd is `high_noise_sd - low_noise_sd`. True grades are uniform over
/// the half-point lattice.
pub fn heteroscedastic(spec: &SyntheticSpec) -> (Corpus, MockProfile, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let per_q = spec.records_per_question.max(1);
    let records: Vec<AnswerRecord> = (0..spec.records)
        .map(|i| {
            let q = i / per_q + 1;
            AnswerRecord {
                record_id: format!("syn-{i:05}"),
                question_id: format!("{}.{}", q / 10 + 1, q % 10 + 1),
                question_text: format!("Synthetic question {q}: explain the concept."),
                reference_answer: format!("Reference answer for synthetic question {q}."),
                student_answer: format!("Student answer number {i} to question {q}."),
                true_grade: rng.random_range(0..=10u32) as f64 * 0.5,
            }
        })
        .collect();

    let mut ids: Vec<String> = records.iter().map(|r| r.record_id.clone()).collect();
    ids.shuffle(&mut rng);
    let n_high = (spec.records as f64 * spec.high_noise_fraction).round() as usize;
    let mut high: Vec<String> = ids.into_iter().take(n_high).collect();
    high.sort();

    let profile = MockProfile {
        base_noise_sd: spec.low_noise_sd,
        difficulty_map: high.iter().map(|id| (id.clone(), spec.high_noise_sd - spec.low_noise_sd)).collect(),
        temperature_gain: spec.temperature_gain,
        ..MockProfile::default()
    };
    let corpus = Corpus::new(records, format!("synthetic (seed {})", spec.seed)).expect("generated records are valid");
    (corpus, profile, high)
}
