//! Creativity regulator: sweep the decoding temperature and keep the one
//! whose mean-of-t grades have the lowest RMSE against the true grades.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{self, BackendConfig, Grader, MAX_TEMPERATURE};
use crate::corpus::Corpus;
use crate::metrics::{self, RepeatedGrading};
use crate::prompting::{render_prompt, PromptError, PromptTemplate, RenderedPrompt};

#[derive(Debug, Error)]
pub enum CrmError {
    #[error("temperature grid is empty")]
    EmptyGrid,
    #[error("temperature {0} outside [0, 2]")]
    TemperatureOutOfRange(f64),
    #[error("sampled corpus is empty")]
    EmptyCorpus,
    #[error("need t >= 2 repetitions, got {0}")]
    TooFewRepetitions(usize),
    #[error("no temperature point had a majority of successfully graded records")]
    NoValidPoint,
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// 0.0, 0.1, ..., 2.0.
pub fn default_temperature_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub temperature: f64,
    pub rmse: f64,
    pub mae: f64,
    /// Unparseable repetitions over all successfully requested repetitions.
    pub unparseable_fraction: f64,
    /// Records whose grading failed or yielded no parsed grade.
    pub failed_records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSweepResult {
    /// One entry per valid grid temperature, in grid order.
    pub points: Vec<SweepPoint>,
    /// Grid temperatures where more than half the records failed.
    pub invalid_temperatures: Vec<f64>,
    pub best_temperature: f64,
    pub t: usize,
}

impl TemperatureSweepResult {
    pub fn best_point(&self) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.temperature == self.best_temperature)
    }
}

pub(crate) fn render_all(template: &PromptTemplate, corpus: &Corpus) -> Result<Vec<RenderedPrompt>, PromptError> {
    corpus.records().iter().map(|r| render_prompt(template, r)).collect()
}

/// Grades every prompt t times at `config.temperature`, fanning out over
/// records with at most `parallelism_limit` requests in flight. Records
/// with any failed repetition come back as `Err` with partial replies.
pub(crate) fn grade_prompts(
    backend: &dyn Grader,
    config: &BackendConfig,
    prompts: &[RenderedPrompt],
    t: usize,
) -> Vec<Result<Vec<backends::GradeReply>, backends::PartialGrading>> {
    backends::parallel_map(prompts, config.parallelism_limit, |p| {
        backends::grade_repeated_with_limit(backend, config, p, t, 1)
    })
}

pub fn sweep_temperature(
    sampled: &Corpus,
    backend: &dyn Grader,
    config: &BackendConfig,
    template: &PromptTemplate,
    grid: &[f64],
    t: usize,
) -> Result<TemperatureSweepResult, CrmError> {
    if grid.is_empty() {
        return Err(CrmError::EmptyGrid);
    }
    if let Some(&bad) = grid.iter().find(|x| !(0.0..=MAX_TEMPERATURE).contains(*x)) {
        return Err(CrmError::TemperatureOutOfRange(bad));
    }
    if sampled.is_empty() {
        return Err(CrmError::EmptyCorpus);
    }
    if t < 2 {
        return Err(CrmError::TooFewRepetitions(t));
    }
    let prompts = render_all(template, sampled)?;
    let truths: Vec<f64> = sampled.records().iter().map(|r| r.true_grade).collect();

    let mut points = Vec::with_capacity(grid.len());
    let mut invalid = Vec::new();
    for &temperature in grid {
        let cfg = config.with_temperature(temperature);
        let outcomes = grade_prompts(backend, &cfg, &prompts, t);
        let mut pairs = Vec::with_capacity(outcomes.len());
        let mut failed = 0usize;
        let mut unparseable = 0usize;
        let mut requested = 0usize;
        for ((outcome, prompt), truth) in outcomes.iter().zip(&prompts).zip(&truths) {
            let replies = match outcome {
                Ok(replies) => replies,
                Err(_) => {
                    failed += 1;
                    continue;
                }
            };
            let g = RepeatedGrading::from_replies(&prompt.record_id, replies);
            requested += g.t;
            unparseable += g.unparseable_count;
            match g.mean_grade {
                Some(m) => pairs.push((m, *truth)),
                None => failed += 1,
            }
        }
        if 2 * failed > prompts.len() || pairs.is_empty() {
            log::warn!("temperature {temperature}: {failed} of {} records failed, point excluded", prompts.len());
            invalid.push(temperature);
            continue;
        }
        points.push(SweepPoint {
            temperature,
            rmse: metrics::rmse(&pairs).expect("pairs non-empty"),
            mae: metrics::mae(&pairs).expect("pairs non-empty"),
            unparseable_fraction: if requested == 0 { 0.0 } else { unparseable as f64 / requested as f64 },
            failed_records: failed,
        });
    }

    let best = points
        .iter()
        .min_by(|a, b| a.rmse.total_cmp(&b.rmse).then(a.temperature.total_cmp(&b.temperature)))
        .ok_or(CrmError::NoValidPoint)?;
    Ok(TemperatureSweepResult { best_temperature: best.temperature, points, invalid_temperatures: invalid, t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{MockBackend, MockProfile};
    use crate::corpus::AnswerRecord;

    fn corpus(n: usize) -> Corpus {
        let records = (0..n)
            .map(|i| AnswerRecord {
                record_id: format!("r{i}"),
                question_id: format!("{}", i / 5),
                question_text: "q".into(),
                reference_answer: "ref".into(),
                student_answer: format!("answer {i}"),
                true_grade: (i % 11) as f64 * 0.5,
            })
            .collect();
        Corpus::new(records, "test").unwrap()
    }

    #[test]
    fn default_grid_has_21_points() {
        let g = default_temperature_grid();
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[20], 2.0);
        assert_eq!(g[3], 0.3);
    }

    #[test]
    fn input_validation() {
        let c = corpus(3);
        let b = MockBackend::new(MockProfile::noiseless(), 0, c.truths());
        let cfg = BackendConfig::default();
        let tpl = PromptTemplate::default();
        assert!(matches!(sweep_temperature(&c, &b, &cfg, &tpl, &[], 10), Err(CrmError::EmptyGrid)));
        assert!(matches!(sweep_temperature(&c, &b, &cfg, &tpl, &[2.5], 10), Err(CrmError::TemperatureOutOfRange(_))));
        assert!(matches!(
            sweep_temperature(&Corpus::default(), &b, &cfg, &tpl, &[1.0], 10),
            Err(CrmError::EmptyCorpus)
        ));
    }

    #[test]
    fn failed_majority_marks_point_invalid() {
        let c = corpus(4);
        let mut p = MockProfile::noiseless();
        p.unavailable_records.extend(["r0".to_string(), "r1".to_string(), "r2".to_string()]);
        let b = MockBackend::new(p, 0, c.truths());
        let r = sweep_temperature(&c, &b, &BackendConfig::default(), &PromptTemplate::default(), &[0.5, 1.0], 4);
        assert!(matches!(r, Err(CrmError::NoValidPoint)));
    }

    #[test]
    fn ties_break_toward_lower_temperature() {
        let c = corpus(6);
        let b = MockBackend::new(MockProfile::noiseless(), 0, c.truths());
        let r = sweep_temperature(&c, &b, &BackendConfig::default(), &PromptTemplate::default(), &[1.5, 0.4, 0.9], 3)
            .unwrap();
        assert_eq!(r.best_temperature, 0.4);
        let temps: Vec<f64> = r.points.iter().map(|p| p.temperature).collect();
        assert_eq!(temps, vec![1.5, 0.4, 0.9]);
    }
}
