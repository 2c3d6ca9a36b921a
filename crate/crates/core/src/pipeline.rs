//! End-to-end orchestration of the stages, for callers that want the whole
//! run in one call (the CLI `pipeline` subcommand, bindings, experiments).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendConfig, GradeReply, Grader, DEFAULT_REPETITIONS};
use crate::corpus::{self, CleaningRules, Corpus};
use crate::crm::{self, CrmError, TemperatureSweepResult};
use crate::irm::{self, CalibrationResult, IrmError, ThresholdMode};
use crate::metrics::{RepeatedGrading, ScoredItem};
use crate::prompting::PromptTemplate;
use crate::srgm::{self, GradingRun, RunInfo, RunReport, SingleShot, SrgmError, DEFAULT_BASELINE_TEMPERATURE};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cleaning removed every record")]
    EmptyAfterCleaning,
    #[error(transparent)]
    Crm(#[from] CrmError),
    #[error(transparent)]
    Irm(#[from] IrmError),
    #[error(transparent)]
    Srgm(#[from] SrgmError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineSettings {
    pub t: usize,
    pub temperature_grid: Vec<f64>,
    pub threshold_grid: Vec<f64>,
    pub exclusion_cutoff: f64,
    pub threshold_mode: ThresholdMode,
    pub baseline_temperature: f64,
    /// Seed of the stratified sample.
    pub seed: u64,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            t: DEFAULT_REPETITIONS,
            temperature_grid: crm::default_temperature_grid(),
            threshold_grid: irm::default_threshold_grid(),
            exclusion_cutoff: irm::DEFAULT_EXCLUSION_CUTOFF,
            threshold_mode: ThresholdMode::NcalInflection,
            baseline_temperature: DEFAULT_BASELINE_TEMPERATURE,
            seed: 0,
        }
    }
}

/// Scored items for threshold calibration: the corpus graded `t` times at
/// `config.temperature`. Records without any parsed grade are kept with an
/// infinite IS so they never count as confident.
pub fn calibration_items(
    corpus: &Corpus,
    backend: &dyn Grader,
    config: &BackendConfig,
    template: &PromptTemplate,
    t: usize,
) -> Result<(Vec<ScoredItem>, Vec<RepeatedGrading>), PipelineError> {
    if t < 2 {
        return Err(CrmError::TooFewRepetitions(t).into());
    }
    let prompts = crm::render_all(template, corpus).map_err(CrmError::from)?;
    let outcomes = crm::grade_prompts(backend, config, &prompts, t);
    let mut items = Vec::with_capacity(prompts.len());
    let mut gradings = Vec::with_capacity(prompts.len());
    for ((prompt, outcome), record) in prompts.iter().zip(outcomes).zip(corpus.records()) {
        let replies: Vec<GradeReply> = match outcome {
            Ok(r) => r,
            Err(partial) => partial.replies,
        };
        let g = RepeatedGrading::from_replies(&prompt.record_id, &replies);
        items.push(ScoredItem::from_grading(record.true_grade, &g));
        gradings.push(g);
    }
    Ok((items, gradings))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub cleaned: Corpus,
    pub sample: Corpus,
    pub sweep: TemperatureSweepResult,
    pub calibration: CalibrationResult,
    pub threshold: f64,
    pub run: GradingRun,
    pub baseline: Vec<SingleShot>,
    pub baseline_replies: Vec<GradeReply>,
    pub report: RunReport,
}

/// Clean, sample, tune, calibrate, grade, baseline, report. No human grades
/// are merged; routed records stay pending.
pub fn run_pipeline(
    corpus: &Corpus,
    backend: &dyn Grader,
    config: &BackendConfig,
    template: &PromptTemplate,
    settings: &PipelineSettings,
) -> Result<PipelineOutput, PipelineError> {
    let cleaned = corpus::clean_corpus(corpus, &CleaningRules::default());
    if cleaned.is_empty() {
        return Err(PipelineError::EmptyAfterCleaning);
    }
    let sample = corpus::sbus_sample(&cleaned, settings.seed);
    let sweep = crm::sweep_temperature(&sample, backend, config, template, &settings.temperature_grid, settings.t)?;
    let tuned = config.with_temperature(sweep.best_temperature);
    let (items, _) = calibration_items(&sample, backend, &tuned, template, settings.t)?;
    let calibration = irm::calibrate(&items, &settings.threshold_grid, settings.exclusion_cutoff)?;
    let threshold = calibration.threshold(settings.threshold_mode);
    let run = srgm::grade_corpus(&cleaned, backend, &tuned, template, settings.t, threshold)?;
    let baseline_cfg = config.with_temperature(settings.baseline_temperature);
    let (baseline, baseline_replies) = srgm::single_shot_grades(&cleaned, backend, &baseline_cfg, template)?;
    let info = RunInfo {
        threshold,
        tuned_temperature: sweep.best_temperature,
        default_temperature: settings.baseline_temperature,
        t: settings.t,
    };
    let report = srgm::build_report(&run.decisions, &baseline, &run.single_shot(), &cleaned.truths(), info);
    Ok(PipelineOutput { cleaned, sample, sweep, calibration, threshold, run, baseline, baseline_replies, report })
}
