//! Flat run-directory layout. JSON artifacts carry the seed and config hash
//! inline; CSV, JSONL and SVG files are covered by `manifest.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::sha256_hex;
use crate::error::CliError;

pub const CORPUS_CLEAN: &str = "corpus_clean.csv";
pub const CLEANING_REPORT: &str = "cleaning_report.json";
pub const SAMPLE: &str = "sample.csv";
pub const SWEEP: &str = "sweep.json";
pub const CALIBRATION: &str = "calibration.json";
pub const DECISIONS: &str = "decisions.jsonl";
pub const REPLIES: &str = "replies.jsonl";
pub const BASELINE: &str = "baseline.jsonl";
pub const BASELINE_REPLIES: &str = "baseline_replies.jsonl";
pub const GRADING: &str = "grading.json";
pub const REVIEW_RESULTS: &str = "review_results.json";
pub const MERGED: &str = "decisions_merged.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const PLOTS: [&str; 4] = ["sweep.svg", "fits_scal.svg", "fits_ncal.svg", "cal.svg"];
pub const MANIFEST: &str = "manifest.json";

const TRACKED: [&str; 14] = [
    CORPUS_CLEAN,
    CLEANING_REPORT,
    SAMPLE,
    SWEEP,
    CALIBRATION,
    DECISIONS,
    REPLIES,
    BASELINE,
    BASELINE_REPLIES,
    GRADING,
    REVIEW_RESULTS,
    MERGED,
    REPORT_JSON,
    REPORT_TXT,
];

#[derive(Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub seed: u64,
    pub config_hash: String,
    #[serde(flatten)]
    pub body: T,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config_hash: String,
    /// File name to sha256 of its bytes.
    pub files: BTreeMap<String, String>,
}

pub struct RunDir {
    pub root: PathBuf,
    pub seed: u64,
    pub config_hash: String,
}

impl RunDir {
    pub fn create(root: &Path, seed: u64, config_hash: String) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self { root: root.to_path_buf(), seed, config_hash })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Path of an artifact that an earlier subcommand must have written.
    pub fn require(&self, name: &str, produced_by: &str) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(CliError::missing(name, produced_by))
        }
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        let p = self.path(name);
        std::fs::write(&p, contents).map_err(|e| CliError::io(&p, e))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, body: &T) -> Result<(), CliError> {
        let env = Envelope { seed: self.seed, config_hash: self.config_hash.clone(), body };
        let mut text = serde_json::to_string_pretty(&env).map_err(|e| CliError::new("serialize", e.to_string()))?;
        text.push('\n');
        self.write(name, text)
    }

    pub fn read_json<T: DeserializeOwned>(&self, name: &str, produced_by: &str) -> Result<T, CliError> {
        let p = self.require(name, produced_by)?;
        let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
        let env: Envelope<T> = serde_json::from_str(&text).map_err(|e| CliError::corrupt(&p, e))?;
        if env.config_hash != self.config_hash {
            log::warn!("{name} was written under config {} (current {})", env.config_hash, self.config_hash);
        }
        Ok(env.body)
    }

    pub fn write_jsonl<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<(), CliError> {
        self.write(name, gradeguard::jsonl::to_string(rows))
    }

    pub fn read_jsonl<T: DeserializeOwned>(&self, name: &str, produced_by: &str) -> Result<Vec<T>, CliError> {
        let p = self.require(name, produced_by)?;
        let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
        gradeguard::jsonl::parse(&text).map_err(|e| CliError::corrupt(&p, e))
    }

    pub fn remove(&self, name: &str) -> Result<(), CliError> {
        let p = self.path(name);
        match std::fs::remove_file(&p) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(CliError::io(&p, e)),
            _ => Ok(()),
        }
    }

    /// Rewrites `manifest.json` from whatever tracked files exist now.
    pub fn write_manifest(&self) -> Result<(), CliError> {
        let mut files = BTreeMap::new();
        for name in TRACKED.iter().chain(PLOTS.iter()) {
            let p = self.path(name);
            if p.is_file() {
                let bytes = std::fs::read(&p).map_err(|e| CliError::io(&p, e))?;
                files.insert(name.to_string(), sha256_hex(&bytes));
            }
        }
        let m = Manifest { seed: self.seed, config_hash: self.config_hash.clone(), files };
        let mut text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        text.push('\n');
        self.write(MANIFEST, text)
    }
}
