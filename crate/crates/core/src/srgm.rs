//! Self-reflective grading: grade the full corpus t times at the tuned
//! temperature, auto-assign confident grades, route the rest to a human,
//! merge human grades back, and summarise the run.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendConfig, GradeReply, Grader};
use crate::corpus::Corpus;
use crate::crm::{grade_prompts, render_all};
use crate::lattice;
use crate::metrics::{self, inf_as_null, BucketCounts, RepeatedGrading, BUCKET_LABELS};
use crate::prompting::{PromptError, PromptTemplate};

/// Temperature of the single-shot baseline that runs without routing.
pub const DEFAULT_BASELINE_TEMPERATURE: f64 = 1.0;
pub const MAX_SAMPLE_FEEDBACKS: usize = 3;

#[derive(Debug, Error)]
pub enum SrgmError {
    #[error("optimal IS must be > 0, got {0}")]
    BadThreshold(f64),
    #[error("need t >= 2 repetitions, got {0}")]
    TooFewRepetitions(usize),
    #[error("unknown record {0:?}")]
    UnknownRecord(String),
    #[error("record {0:?} was graded confidently and is not awaiting review")]
    NotRouted(String),
    #[error("grade {grade} for {record_id:?} is not on the 0-5 half-point scale")]
    InvalidGrade { record_id: String, grade: f64 },
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Confident,
    Routed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Auto,
    Human,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeDecision {
    pub record_id: String,
    pub predicted_mean: Option<f64>,
    /// Mean rounded to the half-point lattice.
    pub predicted_grade: Option<f64>,
    #[serde(with = "inf_as_null")]
    pub indecisiveness_score: f64,
    pub status: Status,
    /// `None` while a routed item awaits review.
    pub final_grade: Option<f64>,
    pub provenance: Option<Provenance>,
    #[serde(default)]
    pub sample_feedbacks: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl GradeDecision {
    pub fn is_pending(&self) -> bool {
        self.final_grade.is_none()
    }

    fn from_grading(g: &RepeatedGrading, threshold: f64, failure: Option<String>) -> Self {
        let confident = failure.is_none() && metrics::confidence_indicator(g.indecisiveness_score, threshold) == 1;
        let predicted_grade = g.predicted_grade();
        Self {
            record_id: g.record_id.clone(),
            predicted_mean: g.mean_grade,
            predicted_grade,
            indecisiveness_score: g.indecisiveness_score,
            status: if confident { Status::Confident } else { Status::Routed },
            final_grade: if confident { predicted_grade } else { None },
            provenance: confident.then_some(Provenance::Auto),
            sample_feedbacks: g.feedbacks.iter().take(MAX_SAMPLE_FEEDBACKS).cloned().collect(),
            note: failure,
        }
    }
}

/// Everything one grading pass produced, including the raw replies.
#[derive(Debug, Clone, PartialEq)]
pub struct GradingRun {
    pub decisions: Vec<GradeDecision>,
    pub gradings: Vec<RepeatedGrading>,
    pub replies: Vec<GradeReply>,
}

impl GradingRun {
    /// Repetition-1 grade of every record: a single-shot grade at the
    /// temperature of this run.
    pub fn single_shot(&self) -> Vec<SingleShot> {
        let mut first: HashMap<&str, Option<f64>> = HashMap::new();
        for r in self.replies.iter().filter(|r| r.repetition_index == 1) {
            first.insert(&r.record_id, r.grade());
        }
        self.decisions
            .iter()
            .map(|d| SingleShot {
                record_id: d.record_id.clone(),
                grade: first.get(d.record_id.as_str()).copied().flatten(),
            })
            .collect()
    }
}

/// Grades every record `t` times and splits confident from routed items.
pub fn grade_corpus(
    corpus: &Corpus,
    backend: &dyn Grader,
    config: &BackendConfig,
    template: &PromptTemplate,
    t: usize,
    optimal_is: f64,
) -> Result<GradingRun, SrgmError> {
    if !(optimal_is > 0.0) {
        return Err(SrgmError::BadThreshold(optimal_is));
    }
    if t < 2 {
        return Err(SrgmError::TooFewRepetitions(t));
    }
    let prompts = render_all(template, corpus)?;
    let outcomes = grade_prompts(backend, config, &prompts, t);
    let mut run = GradingRun {
        decisions: Vec::with_capacity(prompts.len()),
        gradings: Vec::with_capacity(prompts.len()),
        replies: Vec::with_capacity(prompts.len() * t),
    };
    for (prompt, outcome) in prompts.iter().zip(outcomes) {
        let (replies, failure) = match outcome {
            Ok(replies) => (replies, None),
            Err(partial) => {
                let note = format!("backend failure: {}", partial.error);
                (partial.replies, Some(note))
            }
        };
        let g = RepeatedGrading::from_replies(&prompt.record_id, &replies);
        run.decisions.push(GradeDecision::from_grading(&g, optimal_is, failure));
        run.gradings.push(g);
        run.replies.extend(replies);
    }
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleShot {
    pub record_id: String,
    pub grade: Option<f64>,
}

/// One grade per record from repetition 1 at `config.temperature`.
pub fn single_shot_grades(
    corpus: &Corpus,
    backend: &dyn Grader,
    config: &BackendConfig,
    template: &PromptTemplate,
) -> Result<(Vec<SingleShot>, Vec<GradeReply>), SrgmError> {
    let prompts = render_all(template, corpus)?;
    let replies: Vec<GradeReply> = crate::backends::parallel_map(&prompts, config.parallelism_limit, |p| {
        backend.grade_once(config, p, 1).unwrap_or_else(|e| GradeReply::failed(&p.record_id, 1, &e))
    });
    let shots = replies.iter().map(|r| SingleShot { record_id: r.record_id.clone(), grade: r.grade() }).collect();
    Ok((shots, replies))
}

/// A human grade for one routed record (the review-results file format).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewResult {
    pub record_id: String,
    pub grade: f64,
}

/// Applies human grades to routed decisions; later entries for the same
/// record override earlier ones.
pub fn merge_human_grades(
    decisions: &[GradeDecision],
    review_results: &[ReviewResult],
) -> Result<Vec<GradeDecision>, SrgmError> {
    let index: HashMap<&str, usize> = decisions.iter().enumerate().map(|(i, d)| (d.record_id.as_str(), i)).collect();
    let mut merged = decisions.to_vec();
    for r in review_results {
        let &i = index.get(r.record_id.as_str()).ok_or_else(|| SrgmError::UnknownRecord(r.record_id.clone()))?;
        if merged[i].status != Status::Routed {
            return Err(SrgmError::NotRouted(r.record_id.clone()));
        }
        if !lattice::is_on_lattice(r.grade) {
            return Err(SrgmError::InvalidGrade { record_id: r.record_id.clone(), grade: r.grade });
        }
        merged[i].final_grade = Some(r.grade);
        merged[i].provenance = Some(Provenance::Human);
    }
    Ok(merged)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub threshold: f64,
    pub tuned_temperature: f64,
    pub default_temperature: f64,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub info: RunInfo,
    pub record_count: usize,
    /// Single-shot RMSE at the default temperature.
    pub rmse_without_gg: Option<f64>,
    /// Single-shot RMSE at the tuned temperature.
    pub rmse_min_temp: Option<f64>,
    /// RMSE of mean-of-t grades over the confident subset.
    pub rmse_with_gg: Option<f64>,
    /// RMSE of final grades (auto and human) over every record that has one.
    pub rmse_blended: Option<f64>,
    pub confident_count: usize,
    pub routed_count: usize,
    pub pending_count: usize,
    pub bucket_counts_without: BucketCounts,
    pub bucket_counts_with: BucketCounts,
    /// Per bucket, in `[-5,-1), [-1,1]-{0}, {0}, (1,5]` order.
    pub reduction_percentages: [f64; 4],
}

fn pairs_from_shots(shots: &[SingleShot], truths: &HashMap<String, f64>) -> Vec<(f64, f64)> {
    shots.iter().filter_map(|s| Some((s.grade?, *truths.get(&s.record_id)?))).collect()
}

/// (without - with) / without * 100, with 0/0 reported as 0.
pub fn reduction_percent(without: usize, with: usize) -> f64 {
    if without == 0 {
        0.0
    } else {
        (without as f64 - with as f64) / without as f64 * 100.0
    }
}

pub fn build_report(
    decisions: &[GradeDecision],
    baseline_default: &[SingleShot],
    baseline_min_temp: &[SingleShot],
    truths: &HashMap<String, f64>,
    info: RunInfo,
) -> RunReport {
    let without_pairs = pairs_from_shots(baseline_default, truths);
    let min_temp_pairs = pairs_from_shots(baseline_min_temp, truths);

    let mut confident_mean_pairs = Vec::new();
    let mut confident_grade_pairs = Vec::new();
    let mut final_pairs = Vec::new();
    let mut routed = 0;
    let mut pending = 0;
    for d in decisions {
        let Some(&truth) = truths.get(&d.record_id) else { continue };
        match d.status {
            Status::Confident => {
                if let (Some(m), Some(g)) = (d.predicted_mean, d.predicted_grade) {
                    confident_mean_pairs.push((m, truth));
                    confident_grade_pairs.push((g, truth));
                }
            }
            Status::Routed => routed += 1,
        }
        match d.final_grade {
            Some(g) => final_pairs.push((g, truth)),
            None => pending += 1,
        }
    }
    let without = metrics::bucket_errors(&without_pairs);
    let with = metrics::bucket_errors(&confident_grade_pairs);
    let (wo, wi) = (without.as_array(), with.as_array());
    RunReport {
        info,
        record_count: decisions.len(),
        rmse_without_gg: metrics::rmse(&without_pairs).ok(),
        rmse_min_temp: metrics::rmse(&min_temp_pairs).ok(),
        rmse_with_gg: metrics::rmse(&confident_mean_pairs).ok(),
        rmse_blended: metrics::rmse(&final_pairs).ok(),
        confident_count: confident_mean_pairs.len(),
        routed_count: routed,
        pending_count: pending,
        bucket_counts_without: without,
        bucket_counts_with: with,
        reduction_percentages: std::array::from_fn(|i| reduction_percent(wo[i], wi[i])),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.2}"))
}

/// Plain-text tables: misclassification buckets and the RMSE summary.
pub fn render_text_report(report: &RunReport) -> String {
    let mut s = String::new();
    let i = &report.info;
    let _ = writeln!(
        s,
        "Run: {} records, t = {}, tuned temperature {:.2}, IS threshold {:.4}",
        report.record_count, i.t, i.tuned_temperature, i.threshold
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "Misclassifications");
    let _ = writeln!(s, "{:<12} {:>10} {:>10} {:>11}", "Range", "Without GG", "With GG", "Reduction");
    let (wo, wi) = (report.bucket_counts_without.as_array(), report.bucket_counts_with.as_array());
    for b in 0..4 {
        let _ = writeln!(
            s,
            "{:<12} {:>10} {:>10} {:>10.2}%",
            BUCKET_LABELS[b], wo[b], wi[b], report.reduction_percentages[b]
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "RMSE summary");
    let _ = writeln!(
        s,
        "{:<44} {:>8}",
        format!("Without GG (default temperature {:.1})", i.default_temperature),
        opt(report.rmse_without_gg)
    );
    let _ = writeln!(
        s,
        "{:<44} {:>8}",
        format!("Without GG (min RMSE temperature {:.1})", i.tuned_temperature),
        opt(report.rmse_min_temp)
    );
    let _ = writeln!(s, "{:<44} {:>8}", "With GG (confident subset, mean of t)", opt(report.rmse_with_gg));
    let _ = writeln!(s, "{:<44} {:>8}", "Blended (auto + human final grades)", opt(report.rmse_blended));
    let _ = writeln!(s, "{:<44} {:>8}", "Confident instances", report.confident_count);
    let _ = writeln!(s, "{:<44} {:>8}", "Routed to human", report.routed_count);
    let _ = writeln!(s, "{:<44} {:>8}", "Pending review", report.pending_count);
    s
}
