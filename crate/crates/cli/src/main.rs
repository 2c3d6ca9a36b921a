//! `gradeguard`: run the grading pipeline stage by stage inside a run
//! directory, or all at once with `pipeline`.

mod artifacts;
mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gradeguard::irm::ThresholdMode;
use gradeguard::synthetic::SyntheticSpec;
use gradeguard::BackendKind;

use crate::commands::Ctx;
use crate::config::{Overrides, RunConfig};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "gradeguard", version, about = "Confidence-aware short-answer grading with human review routing")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Repetitions per answer.
    #[arg(long, short, global = true)]
    t: Option<usize>,
    /// Comma-separated temperatures for `tune`.
    #[arg(long, global = true, value_delimiter = ',')]
    temperature_grid: Option<Vec<f64>>,
    #[arg(long, global = true, value_enum)]
    threshold_mode: Option<ModeArg>,
    #[arg(long, global = true)]
    baseline_temperature: Option<f64>,
    #[arg(long, global = true)]
    template: Option<PathBuf>,
    #[arg(long, global = true)]
    mock_profile: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    endpoint: Option<String>,
    #[arg(long, global = true)]
    parallelism: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    NcalInflection,
    ScalMinimum,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Mock,
    Remote,
}

#[derive(Subcommand)]
enum Command {
    /// Clean the corpus and draw the score-stratified sample.
    Sample,
    /// Sweep the temperature grid on the sample.
    Tune,
    /// Fit the threshold calibration at the tuned temperature.
    Calibrate,
    /// Grade the whole corpus and route uncertain answers.
    Grade,
    /// Human review service.
    Review {
        #[command(subcommand)]
        command: ReviewCommand,
    },
    /// Apply human grades to the routed decisions.
    Merge {
        /// Review results file; defaults to review_results.json in the run directory.
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Write report.json and report.txt, and print the tables.
    Report,
    /// Render the sweep, fit and CAL charts as SVG.
    Plot,
    /// sample, tune, calibrate, grade, report and plot in one go.
    Pipeline,
    /// Write a seeded synthetic corpus with a matching mock profile.
    Synth {
        #[arg(long, default_value = "synthetic")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 500)]
        records: usize,
        #[arg(long, default_value_t = 0.2)]
        high_noise_fraction: f64,
        #[arg(long, default_value_t = 0.3)]
        low_noise_sd: f64,
        #[arg(long, default_value_t = 1.5)]
        high_noise_sd: f64,
        #[arg(long, default_value_t = 0.0)]
        temperature_gain: f64,
    },
}

#[derive(Subcommand)]
enum ReviewCommand {
    /// Serve the review API until Ctrl-C, then write review_results.json.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        /// Built review UI bundle to serve at `/`.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::Tune => "tune",
            Command::Calibrate => "calibrate",
            Command::Grade => "grade",
            Command::Review { .. } => "review serve",
            Command::Merge { .. } => "merge",
            Command::Report => "report",
            Command::Plot => "plot",
            Command::Pipeline => "pipeline",
            Command::Synth { .. } => "synth",
        }
    }
}

impl GlobalArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            corpus: self.corpus.clone(),
            run_dir: self.run_dir.clone(),
            seed: self.seed,
            t: self.t,
            temperature_grid: self.temperature_grid.clone(),
            threshold_mode: self.threshold_mode.map(|m| match m {
                ModeArg::NcalInflection => ThresholdMode::NcalInflection,
                ModeArg::ScalMinimum => ThresholdMode::ScalMinimum,
            }),
            baseline_temperature: self.baseline_temperature,
            template: self.template.clone(),
            mock_profile: self.mock_profile.clone(),
            backend_kind: self.backend.map(|b| match b {
                BackendArg::Mock => BackendKind::Mock,
                BackendArg::Remote => BackendKind::Remote,
            }),
            model_id: self.model.clone(),
            endpoint_url: self.endpoint.clone(),
            parallelism_limit: self.parallelism,
        }
    }
}

fn run(cli: Cli) -> Result<String, CliError> {
    if let Command::Synth { out_dir, records, high_noise_fraction, low_noise_sd, high_noise_sd, temperature_gain } =
        &cli.command
    {
        let spec = SyntheticSpec {
            records: *records,
            high_noise_fraction: *high_noise_fraction,
            low_noise_sd: *low_noise_sd,
            high_noise_sd: *high_noise_sd,
            temperature_gain: *temperature_gain,
            seed: cli.global.seed.unwrap_or(SyntheticSpec::default().seed),
            ..SyntheticSpec::default()
        };
        return commands::synth(out_dir, &spec);
    }
    let mut cfg = RunConfig::load(cli.global.config.as_deref())?;
    cfg.apply(cli.global.overrides());
    let ctx = Ctx::new(cfg)?;
    let msg = match &cli.command {
        Command::Sample => commands::sample(&ctx)?,
        Command::Tune => commands::tune(&ctx)?,
        Command::Calibrate => commands::calibrate(&ctx)?,
        Command::Grade => commands::grade(&ctx)?,
        Command::Review { command: ReviewCommand::Serve { bind, ui_dir } } => {
            commands::review_serve(&ctx, bind, ui_dir.as_deref())?
        }
        Command::Merge { results } => commands::merge(&ctx, results.as_deref())?,
        Command::Report => commands::report(&ctx)?,
        Command::Plot => commands::plot(&ctx)?,
        Command::Pipeline => commands::pipeline(&ctx)?,
        Command::Synth { .. } => unreachable!("handled above"),
    };
    ctx.dir.write_manifest()?;
    Ok(msg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::new("usage", e.to_string().trim_end());
            eprintln!("{}", err.to_json("gradeguard"));
            return ExitCode::from(2);
        }
    };
    let name = cli.command.name();
    match run(cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json(name));
            ExitCode::FAILURE
        }
    }
}
