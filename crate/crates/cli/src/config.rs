//! Run configuration: a TOML document plus command-line overrides.

use std::path::{Path, PathBuf};

use gradeguard::backends::{BackendConfig, MockProfile, MAX_TEMPERATURE};
use gradeguard::irm::{self, ThresholdMode};
use gradeguard::prompting::PromptTemplate;
use gradeguard::{crm, srgm};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

const MIN_THRESHOLD_POINTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub run_dir: PathBuf,
    pub seed: u64,
    pub t: usize,
    pub temperature_grid: Vec<f64>,
    pub threshold_grid: Vec<f64>,
    pub exclusion_cutoff: f64,
    pub threshold_mode: ThresholdMode,
    pub baseline_temperature: f64,
    /// Sectioned prompt template file; the built-in template when absent.
    pub template: Option<PathBuf>,
    pub course: Option<String>,
    /// Mock profile JSON file. Mutually exclusive with an inline `[mock]` table.
    pub mock_profile: Option<PathBuf>,
    pub mock: Option<MockProfile>,
    pub backend: BackendConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            run_dir: PathBuf::from("run"),
            seed: 0,
            t: gradeguard::backends::DEFAULT_REPETITIONS,
            temperature_grid: crm::default_temperature_grid(),
            threshold_grid: irm::default_threshold_grid(),
            exclusion_cutoff: irm::DEFAULT_EXCLUSION_CUTOFF,
            threshold_mode: ThresholdMode::NcalInflection,
            baseline_temperature: srgm::DEFAULT_BASELINE_TEMPERATURE,
            template: None,
            course: None,
            mock_profile: None,
            mock: None,
            backend: BackendConfig::default(),
        }
    }
}

/// Values given on the command line; each one replaces the file value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub corpus: Option<PathBuf>,
    pub run_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub t: Option<usize>,
    pub temperature_grid: Option<Vec<f64>>,
    pub threshold_mode: Option<ThresholdMode>,
    pub baseline_temperature: Option<f64>,
    pub template: Option<PathBuf>,
    pub mock_profile: Option<PathBuf>,
    pub backend_kind: Option<gradeguard::BackendKind>,
    pub model_id: Option<String>,
    pub endpoint_url: Option<String>,
    pub parallelism_limit: Option<usize>,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    /// Parses a config document. Relative paths are taken relative to
    /// `base_dir`, normally the directory holding the file.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        resolve(base_dir, &mut cfg.corpus);
        resolve(base_dir, &mut cfg.template);
        resolve(base_dir, &mut cfg.mock_profile);
        if cfg.run_dir.is_relative() {
            cfg.run_dir = base_dir.join(&cfg.run_dir);
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message)))
    }

    pub fn apply(&mut self, o: Overrides) {
        macro_rules! set {
            ($($field:ident).+ <- $value:expr) => {
                if let Some(v) = $value {
                    self.$($field).+ = v;
                }
            };
        }
        set!(run_dir <- o.run_dir);
        set!(seed <- o.seed);
        set!(t <- o.t);
        set!(temperature_grid <- o.temperature_grid);
        set!(threshold_mode <- o.threshold_mode);
        set!(baseline_temperature <- o.baseline_temperature);
        set!(backend.backend_kind <- o.backend_kind);
        set!(backend.model_id <- o.model_id);
        set!(backend.endpoint_url <- o.endpoint_url);
        set!(backend.parallelism_limit <- o.parallelism_limit);
        if o.corpus.is_some() {
            self.corpus = o.corpus;
        }
        if o.template.is_some() {
            self.template = o.template;
        }
        if o.mock_profile.is_some() {
            self.mock_profile = o.mock_profile;
            self.mock = None;
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::config(m));
        if self.t < 2 {
            return bad(format!("t = {} but at least 2 repetitions are needed", self.t));
        }
        if self.temperature_grid.is_empty() {
            return bad("temperature_grid is empty".into());
        }
        let temp_ok = |x: f64| (0.0..=MAX_TEMPERATURE).contains(&x);
        if let Some(x) = self.temperature_grid.iter().find(|x| !temp_ok(**x)) {
            return bad(format!("temperature_grid value {x} outside [0, {MAX_TEMPERATURE}]"));
        }
        if !temp_ok(self.baseline_temperature) {
            return bad(format!("baseline_temperature {} outside [0, {MAX_TEMPERATURE}]", self.baseline_temperature));
        }
        if self.threshold_grid.len() < MIN_THRESHOLD_POINTS {
            return bad(format!("threshold_grid needs at least {MIN_THRESHOLD_POINTS} points for the quartic fit"));
        }
        if self.threshold_grid.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return bad("threshold_grid values must be finite and >= 0".into());
        }
        if self.threshold_grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("threshold_grid must be strictly increasing".into());
        }
        if !(self.exclusion_cutoff >= 0.0 && self.exclusion_cutoff.is_finite()) {
            return bad(format!("exclusion_cutoff {} must be finite and >= 0", self.exclusion_cutoff));
        }
        if self.mock.is_some() && self.mock_profile.is_some() {
            return bad("give either mock_profile or a [mock] table, not both".into());
        }
        if let Some(m) = &self.mock {
            m.validate().map_err(CliError::config_from)?;
        }
        self.backend.validate().map_err(CliError::config_from)
    }

    pub fn corpus_path(&self) -> Result<&Path, CliError> {
        self.corpus
            .as_deref()
            .ok_or_else(|| CliError::config("no corpus path given (set `corpus` or pass --corpus)".into()))
    }

    pub fn mock_profile(&self) -> Result<MockProfile, CliError> {
        match (&self.mock, &self.mock_profile) {
            (Some(m), _) => Ok(m.clone()),
            (None, Some(path)) => MockProfile::from_json_file(path).map_err(CliError::config_from),
            (None, None) => Ok(MockProfile::default()),
        }
    }

    pub fn prompt_template(&self) -> Result<PromptTemplate, CliError> {
        let course = self.course.clone().unwrap_or_else(|| PromptTemplate::default().course);
        match &self.template {
            Some(path) => PromptTemplate::from_file(path, &course).map_err(|e| CliError::config(e.to_string())),
            None => Ok(PromptTemplate { course, ..PromptTemplate::default() }),
        }
    }

    /// sha256 over the canonical JSON of every setting that affects outputs.
    /// Input files enter by content digest, so moving them or the run
    /// directory leaves the hash unchanged.
    pub fn hash(&self) -> Result<String, CliError> {
        let digest =
            |p: &Option<PathBuf>| -> Result<Option<String>, CliError> { p.as_deref().map(file_sha256).transpose() };
        let mut backend = self.backend.clone();
        backend.endpoint_url = backend.endpoint_url.trim_end_matches('/').to_string();
        let view = serde_json::json!({
            "corpus_sha256": digest(&self.corpus)?,
            "template_sha256": digest(&self.template)?,
            "mock_profile_sha256": digest(&self.mock_profile)?,
            "mock": self.mock,
            "course": self.course,
            "seed": self.seed,
            "t": self.t,
            "temperature_grid": self.temperature_grid,
            "threshold_grid": self.threshold_grid,
            "exclusion_cutoff": self.exclusion_cutoff,
            "threshold_mode": self.threshold_mode,
            "baseline_temperature": self.baseline_temperature,
            "backend": backend,
        });
        Ok(sha256_hex(view.to_string().as_bytes()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_then_flags() {
        let text = "seed = 5\nt = 4\nrun_dir = \"out\"\ncorpus = \"c.csv\"\n[backend]\nparallelism_limit = 2\n";
        let mut cfg = RunConfig::from_toml(text, Path::new("/base")).unwrap();
        assert_eq!(cfg.corpus.as_deref(), Some(Path::new("/base/c.csv")));
        assert_eq!(cfg.run_dir, Path::new("/base/out"));
        assert_eq!(cfg.backend.parallelism_limit, 2);
        cfg.apply(Overrides { seed: Some(9), parallelism_limit: Some(7), ..Overrides::default() });
        assert_eq!((cfg.seed, cfg.t, cfg.backend.parallelism_limit), (9, 4, 7));
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_and_bad_ranges_are_rejected() {
        assert!(RunConfig::from_toml("seeed = 1\n", Path::new(".")).is_err());
        assert!(RunConfig::from_toml("[backend]\ntemprature = 1.0\n", Path::new(".")).is_err());
        for text in [
            "t = 1",
            "temperature_grid = [0.5, 2.5]",
            "exclusion_cutoff = -1.0",
            "threshold_grid = [0.1, 0.05, 0.2, 0.3, 0.4]",
        ] {
            let cfg = RunConfig::from_toml(text, Path::new(".")).unwrap();
            assert_eq!(cfg.validate().unwrap_err().kind, "config", "{text}");
        }
    }

    #[test]
    fn hash_ignores_run_dir_but_not_settings() {
        let a = RunConfig::default();
        let b = RunConfig { run_dir: "elsewhere".into(), ..a.clone() };
        let c = RunConfig { seed: 1, ..a.clone() };
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        assert_ne!(a.hash().unwrap(), c.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 64);
    }
}
