//! One function per subcommand. Each reads its inputs from the run
//! directory, writes its outputs there, and refreshes the manifest.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use gradeguard::backends::{BackendKind, Grader, MockBackend, RemoteBackend};
use gradeguard::corpus::{self, CleaningReport, CleaningRules, Corpus};
use gradeguard::crm::{self, TemperatureSweepResult};
use gradeguard::irm::{self, CalibrationResult, ThresholdMode};
use gradeguard::pipeline::calibration_items;
use gradeguard::plot;
use gradeguard::srgm::{self, GradeDecision, GradingRun, ReviewResult, RunInfo, RunReport, SingleShot, Status};
use gradeguard::synthetic::{self, SyntheticSpec};
use gradeguard::GradeReply;
use serde::{Deserialize, Serialize};

use crate::artifacts::*;
use crate::config::RunConfig;
use crate::error::CliError;

pub struct Ctx {
    pub cfg: RunConfig,
    pub dir: RunDir,
}

impl Ctx {
    pub fn new(cfg: RunConfig) -> Result<Self, CliError> {
        cfg.validate()?;
        let hash = cfg.hash()?;
        let dir = RunDir::create(&cfg.run_dir, cfg.seed, hash)?;
        Ok(Self { cfg, dir })
    }

    fn backend(&self, truths: HashMap<String, f64>) -> Result<Box<dyn Grader>, CliError> {
        Ok(match self.cfg.backend.backend_kind {
            BackendKind::Mock => Box::new(MockBackend::new(self.cfg.mock_profile()?, self.cfg.seed, truths)),
            BackendKind::Remote => Box::new(RemoteBackend::from_env(&self.cfg.backend)),
        })
    }

    fn load_csv(&self, name: &str, produced_by: &str) -> Result<Corpus, CliError> {
        Ok(corpus::load_corpus(&self.dir.require(name, produced_by)?)?)
    }
}

/// Calibration plus the temperature it was measured at.
#[derive(Debug, Serialize, Deserialize)]
pub struct CalibrationArtifact {
    pub tuned_temperature: f64,
    #[serde(flatten)]
    pub calibration: CalibrationResult,
}

/// What `grade` used, for `report`.
#[derive(Debug, Serialize, Deserialize)]
pub struct GradingArtifact {
    pub threshold_mode: ThresholdMode,
    pub info: RunInfo,
}

pub fn sample(ctx: &Ctx) -> Result<String, CliError> {
    let raw = corpus::load_corpus(ctx.cfg.corpus_path()?)?;
    let cleaned = corpus::clean_corpus(&raw, &CleaningRules::default());
    let report: CleaningReport = cleaned.provenance.cleaning.clone().unwrap_or_default();
    if cleaned.is_empty() {
        return Err(CliError::new("corpus", "cleaning removed every record"));
    }
    let sampled = corpus::sbus_sample(&cleaned, ctx.cfg.seed);
    cleaned.save_csv(&ctx.dir.path(CORPUS_CLEAN))?;
    ctx.dir.write_json(CLEANING_REPORT, &report)?;
    sampled.save_csv(&ctx.dir.path(SAMPLE))?;
    Ok(format!(
        "cleaned {} -> {} records ({} removed); sampled {} across {} questions",
        report.records_in,
        report.records_out,
        report.removed.len(),
        sampled.len(),
        cleaned.question_ids().len()
    ))
}

pub fn tune(ctx: &Ctx) -> Result<String, CliError> {
    let sampled = ctx.load_csv(SAMPLE, "sample")?;
    let backend = ctx.backend(sampled.truths())?;
    let template = ctx.cfg.prompt_template()?;
    let sweep = crm::sweep_temperature(
        &sampled,
        backend.as_ref(),
        &ctx.cfg.backend,
        &template,
        &ctx.cfg.temperature_grid,
        ctx.cfg.t,
    )?;
    ctx.dir.write_json(SWEEP, &sweep)?;
    let best = sweep.best_point().map(|p| p.rmse).unwrap_or(f64::NAN);
    Ok(format!("best temperature {:.2} (RMSE {best:.4})", sweep.best_temperature))
}

pub fn calibrate(ctx: &Ctx) -> Result<String, CliError> {
    let sweep: TemperatureSweepResult = ctx.dir.read_json(SWEEP, "tune")?;
    let sampled = ctx.load_csv(SAMPLE, "sample")?;
    let backend = ctx.backend(sampled.truths())?;
    let tuned = ctx.cfg.backend.with_temperature(sweep.best_temperature);
    let (items, _) = calibration_items(&sampled, backend.as_ref(), &tuned, &ctx.cfg.prompt_template()?, ctx.cfg.t)?;
    let calibration = irm::calibrate(&items, &ctx.cfg.threshold_grid, ctx.cfg.exclusion_cutoff)?;
    let msg = format!(
        "S-CAL minimum {:.4}, N-CAL inflection {:.4}{}",
        calibration.optimal_is_scal,
        calibration.optimal_is_ncal,
        if calibration.ncal_fallback { " (fallback)" } else { "" }
    );
    ctx.dir.write_json(CALIBRATION, &CalibrationArtifact { tuned_temperature: sweep.best_temperature, calibration })?;
    Ok(msg)
}

pub fn grade(ctx: &Ctx) -> Result<String, CliError> {
    let cal: CalibrationArtifact = ctx.dir.read_json(CALIBRATION, "calibrate")?;
    let cleaned = ctx.load_csv(CORPUS_CLEAN, "sample")?;
    let backend = ctx.backend(cleaned.truths())?;
    let template = ctx.cfg.prompt_template()?;
    let threshold = cal.calibration.threshold(ctx.cfg.threshold_mode);
    let tuned = ctx.cfg.backend.with_temperature(cal.tuned_temperature);
    let run = srgm::grade_corpus(&cleaned, backend.as_ref(), &tuned, &template, ctx.cfg.t, threshold)?;
    let baseline_cfg = ctx.cfg.backend.with_temperature(ctx.cfg.baseline_temperature);
    let (baseline, baseline_replies) = srgm::single_shot_grades(&cleaned, backend.as_ref(), &baseline_cfg, &template)?;

    ctx.dir.write_jsonl(DECISIONS, &run.decisions)?;
    ctx.dir.write_jsonl(REPLIES, &run.replies)?;
    ctx.dir.write_jsonl(BASELINE, &baseline)?;
    ctx.dir.write_jsonl(BASELINE_REPLIES, &baseline_replies)?;
    let info = RunInfo {
        threshold,
        tuned_temperature: cal.tuned_temperature,
        default_temperature: ctx.cfg.baseline_temperature,
        t: ctx.cfg.t,
    };
    ctx.dir.write_json(GRADING, &GradingArtifact { threshold_mode: ctx.cfg.threshold_mode, info })?;
    // Human grades belong to the previous decisions.
    ctx.dir.remove(MERGED)?;
    let routed = run.decisions.iter().filter(|d| d.status == Status::Routed).count();
    Ok(format!(
        "graded {} records at T={:.2}, threshold {threshold:.4}: {} confident, {routed} routed",
        run.decisions.len(),
        cal.tuned_temperature,
        run.decisions.len() - routed
    ))
}

pub fn merge(ctx: &Ctx, results_path: Option<&Path>) -> Result<String, CliError> {
    let decisions: Vec<GradeDecision> = ctx.dir.read_jsonl(DECISIONS, "grade")?;
    let path: PathBuf = match results_path {
        Some(p) => p.to_path_buf(),
        None => ctx.dir.require(REVIEW_RESULTS, "review serve")?,
    };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let results: Vec<ReviewResult> = serde_json::from_str(&text).map_err(|e| CliError::corrupt(&path, e))?;
    let merged = srgm::merge_human_grades(&decisions, &results)?;
    ctx.dir.write_jsonl(MERGED, &merged)?;
    let pending = merged.iter().filter(|d| d.is_pending()).count();
    Ok(format!("merged {} human grades; {pending} records still pending", results.len()))
}

pub fn report(ctx: &Ctx) -> Result<String, CliError> {
    let decisions: Vec<GradeDecision> = if ctx.dir.path(MERGED).is_file() {
        ctx.dir.read_jsonl(MERGED, "merge")?
    } else {
        ctx.dir.read_jsonl(DECISIONS, "grade")?
    };
    let grading: GradingArtifact = ctx.dir.read_json(GRADING, "grade")?;
    let baseline: Vec<SingleShot> = ctx.dir.read_jsonl(BASELINE, "grade")?;
    let replies: Vec<GradeReply> = ctx.dir.read_jsonl(REPLIES, "grade")?;
    let cleaned = ctx.load_csv(CORPUS_CLEAN, "sample")?;
    let run = GradingRun { decisions, gradings: Vec::new(), replies };
    let report: RunReport =
        srgm::build_report(&run.decisions, &baseline, &run.single_shot(), &cleaned.truths(), grading.info);
    let text = srgm::render_text_report(&report);
    ctx.dir.write_json(REPORT_JSON, &report)?;
    ctx.dir.write(REPORT_TXT, &text)?;
    Ok(text.trim_end().to_string())
}

pub fn plot(ctx: &Ctx) -> Result<String, CliError> {
    let sweep: TemperatureSweepResult = ctx.dir.read_json(SWEEP, "tune")?;
    let cal: CalibrationArtifact = ctx.dir.read_json(CALIBRATION, "calibrate")?;
    let c = &cal.calibration;
    let charts =
        [plot::sweep_chart(&sweep), plot::fits_chart(c, &c.scal), plot::fits_chart(c, &c.ncal), plot::cal_chart(c)];
    let comment = format!("seed={} config_hash={}", ctx.dir.seed, ctx.dir.config_hash);
    for (name, mut chart) in PLOTS.iter().zip(charts) {
        chart.comment = Some(comment.clone());
        ctx.dir.write(name, chart.to_svg())?;
    }
    Ok(format!("wrote {}", PLOTS.join(", ")))
}

type Step = fn(&Ctx) -> Result<String, CliError>;

pub fn pipeline(ctx: &Ctx) -> Result<String, CliError> {
    let steps: [Step; 6] = [sample, tune, calibrate, grade, report, plot];
    let mut out = Vec::new();
    for step in steps {
        out.push(step(ctx)?);
        ctx.dir.write_manifest()?;
    }
    Ok(out.join("\n"))
}

pub fn review_serve(ctx: &Ctx, bind: &str, ui_dir: Option<&Path>) -> Result<String, CliError> {
    ctx.dir.require(DECISIONS, "grade")?;
    ctx.dir.require(CORPUS_CLEAN, "sample")?;
    let mut serve_cfg = gradeguard_review::ServeConfig::for_run_dir(&ctx.dir.root, bind);
    serve_cfg.ui_dir = ui_dir.map(Path::to_path_buf);
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::new("review_service", e.to_string()))?;
    rt.block_on(gradeguard_review::serve(serve_cfg))?;
    Ok(format!("review results written to {}", ctx.dir.path(REVIEW_RESULTS).display()))
}

/// Writes a synthetic corpus, its mock profile, the high-noise id list and
/// a config that points at them.
pub fn synth(out_dir: &Path, spec: &SyntheticSpec) -> Result<String, CliError> {
    if !(0.0..=1.0).contains(&spec.high_noise_fraction) {
        return Err(CliError::config(format!("high_noise_fraction {} outside [0, 1]", spec.high_noise_fraction)));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let (corpus, profile, high) = synthetic::heteroscedastic(spec);
    corpus.save_csv(&out_dir.join("corpus.csv"))?;
    let write = |name: &str, text: String| {
        let p = out_dir.join(name);
        std::fs::write(&p, text).map_err(|e| CliError::io(&p, e))
    };
    write("mock_profile.json", serde_json::to_string_pretty(&profile).expect("profile serializes") + "\n")?;
    write("high_noise_ids.json", serde_json::to_string_pretty(&high).expect("ids serialize") + "\n")?;
    write(
        "gradeguard.toml",
        format!(
            "corpus = \"corpus.csv\"\nmock_profile = \"mock_profile.json\"\nrun_dir = \"run\"\nseed = {}\nt = 10\n\n[backend]\nbackend_kind = \"mock\"\n",
            spec.seed
        ),
    )?;
    Ok(format!("wrote {} records ({} high-noise) to {}", corpus.len(), high.len(), out_dir.display()))
}
