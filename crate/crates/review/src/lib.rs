//! Review queue service: serves the routed decisions of a grading run to a
//! human evaluator over HTTP+JSON and collects their grades.
//!
//! Endpoints:
//!
//! - `GET /api/queue`: pending items, most uncertain first
//! - `GET /api/item/{record_id}`
//! - `POST /api/review` with `{record_id, grade}`
//! - `GET /api/progress`: `{pending, done}`
//!
//! Every accepted submission is appended (and flushed) to a JSONL log. The
//! final grades are written on shutdown in the format read by
//! [`gradeguard::srgm::merge_human_grades`].

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gradeguard::corpus::{self, Corpus, CorpusError};
use gradeguard::lattice;
use gradeguard::metrics::inf_as_null;
use gradeguard::srgm::{GradeDecision, Provenance, ReviewResult, Status};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tower_http::services::ServeDir;

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure { addr: String, source: std::io::Error },
    #[error("corrupt decisions file {path}: {message}")]
    CorruptDecisionsFile { path: PathBuf, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Pending,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub record_id: String,
    pub question_text: String,
    pub reference_answer: String,
    pub student_answer: String,
    pub predicted_mean: Option<f64>,
    #[serde(with = "inf_as_null")]
    pub indecisiveness_score: f64,
    pub sample_feedbacks: Vec<String>,
    pub status: ItemStatus,
    pub human_grade: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub pending: usize,
    pub done: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubmitError {
    InvalidGrade(String),
    UnknownRecord(String),
    NotRouted(String),
}

impl SubmitError {
    pub fn status(&self) -> StatusCode {
        match self {
            SubmitError::InvalidGrade(_) => StatusCode::UNPROCESSABLE_ENTITY,
            SubmitError::UnknownRecord(_) => StatusCode::NOT_FOUND,
            SubmitError::NotRouted(_) => StatusCode::CONFLICT,
        }
    }

    fn code(&self) -> &'static str {
        match self {
            SubmitError::InvalidGrade(_) => "invalid_grade",
            SubmitError::UnknownRecord(_) => "unknown_record",
            SubmitError::NotRouted(_) => "not_routed",
        }
    }

    fn reason(&self) -> &str {
        match self {
            SubmitError::InvalidGrade(r) | SubmitError::UnknownRecord(r) | SubmitError::NotRouted(r) => r,
        }
    }
}

impl IntoResponse for SubmitError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.code(), "reason": self.reason() });
        (self.status(), Json(body)).into_response()
    }
}

/// One line of the append-only review log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub record_id: String,
    pub grade: f64,
    pub previous: Option<f64>,
    pub unix_ms: u64,
}

/// Routed items plus submission bookkeeping. All mutation goes through
/// [`ReviewState::submit`].
#[derive(Debug)]
pub struct ReviewState {
    items: Vec<ReviewItem>,
    index: HashMap<String, usize>,
    confident: HashSet<String>,
    log: Option<File>,
    seq: u64,
}

impl ReviewState {
    /// Builds the queue from the routed decisions. Routed decisions that
    /// already carry a human grade start out done.
    pub fn new(decisions: &[GradeDecision], corpus: &Corpus) -> Result<Self, String> {
        let mut items = Vec::new();
        let mut confident = HashSet::new();
        for d in decisions {
            if d.status == Status::Confident {
                confident.insert(d.record_id.clone());
                continue;
            }
            let r = corpus
                .get(&d.record_id)
                .ok_or_else(|| format!("decision for {:?} has no corpus record", d.record_id))?;
            let human = (d.provenance == Some(Provenance::Human)).then_some(d.final_grade).flatten();
            items.push(ReviewItem {
                record_id: d.record_id.clone(),
                question_text: r.question_text.clone(),
                reference_answer: r.reference_answer.clone(),
                student_answer: r.student_answer.clone(),
                predicted_mean: d.predicted_mean,
                indecisiveness_score: d.indecisiveness_score,
                sample_feedbacks: d.sample_feedbacks.clone(),
                status: if human.is_some() { ItemStatus::Done } else { ItemStatus::Pending },
                human_grade: human,
            });
        }
        let index = items.iter().enumerate().map(|(i, it)| (it.record_id.clone(), i)).collect();
        Ok(Self { items, index, confident, log: None, seq: 0 })
    }

    /// Appends accepted submissions to `path` (created if missing).
    pub fn with_log(mut self, path: &Path) -> Result<Self, ReviewError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| ReviewError::Io { path: path.into(), source })?;
        self.log = Some(file);
        Ok(self)
    }

    /// Pending items by descending IS; undefined IS first, ties by id.
    pub fn queue(&self) -> Vec<ReviewItem> {
        let mut q: Vec<ReviewItem> = self.items.iter().filter(|i| i.status == ItemStatus::Pending).cloned().collect();
        q.sort_by(|a, b| {
            b.indecisiveness_score.total_cmp(&a.indecisiveness_score).then_with(|| a.record_id.cmp(&b.record_id))
        });
        q
    }

    pub fn item(&self, record_id: &str) -> Result<&ReviewItem, SubmitError> {
        match self.index.get(record_id) {
            Some(&i) => Ok(&self.items[i]),
            None if self.confident.contains(record_id) => Err(SubmitError::NotRouted(format!(
                "{record_id} was graded confidently and is not in the review queue"
            ))),
            None => Err(SubmitError::UnknownRecord(format!("no record {record_id}"))),
        }
    }

    pub fn progress(&self) -> Progress {
        let done = self.items.iter().filter(|i| i.status == ItemStatus::Done).count();
        Progress { pending: self.items.len() - done, done }
    }

    /// Records a human grade. A repeated submission for the same record
    /// replaces the earlier grade; both stay in the log.
    pub fn submit(&mut self, record_id: &str, grade: f64) -> Result<ReviewItem, SubmitError> {
        self.item(record_id)?;
        let i = self.index[record_id];
        if !lattice::is_on_lattice(grade) {
            return Err(SubmitError::InvalidGrade(format!("grade {grade} is not on the 0-5 scale in steps of 0.5")));
        }
        self.seq += 1;
        let item = &mut self.items[i];
        let entry = LogEntry {
            seq: self.seq,
            record_id: record_id.to_string(),
            grade,
            previous: item.human_grade,
            unix_ms: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64),
        };
        item.human_grade = Some(grade);
        item.status = ItemStatus::Done;
        if let Some(log) = &mut self.log {
            let line = serde_json::to_string(&entry).expect("log entry serializes");
            if let Err(e) = writeln!(log, "{line}").and_then(|_| log.flush()) {
                log::error!("review log write failed: {e}");
            }
        }
        Ok(item.clone())
    }

    /// Final human grades, in decision order.
    pub fn results(&self) -> Vec<ReviewResult> {
        self.items
            .iter()
            .filter_map(|i| Some(ReviewResult { record_id: i.record_id.clone(), grade: i.human_grade? }))
            .collect()
    }
}

pub fn load_decisions(path: &Path) -> Result<Vec<GradeDecision>, ReviewError> {
    let text = std::fs::read_to_string(path).map_err(|source| ReviewError::Io { path: path.into(), source })?;
    gradeguard::jsonl::parse(&text)
        .map_err(|e| ReviewError::CorruptDecisionsFile { path: path.into(), message: e.to_string() })
}

pub fn write_results(path: &Path, results: &[ReviewResult]) -> Result<(), ReviewError> {
    let text = serde_json::to_string_pretty(results).expect("results serialize") + "\n";
    std::fs::write(path, text).map_err(|source| ReviewError::Io { path: path.into(), source })
}

pub type SharedState = Arc<RwLock<ReviewState>>;

#[derive(Debug, Deserialize)]
struct Submission {
    record_id: String,
    grade: f64,
}

async fn queue(State(s): State<SharedState>) -> Json<Vec<ReviewItem>> {
    Json(s.read().expect("state lock").queue())
}

async fn item(State(s): State<SharedState>, UrlPath(id): UrlPath<String>) -> Result<Json<ReviewItem>, SubmitError> {
    s.read().expect("state lock").item(&id).cloned().map(Json)
}

async fn progress(State(s): State<SharedState>) -> Json<Progress> {
    Json(s.read().expect("state lock").progress())
}

async fn review(State(s): State<SharedState>, Json(sub): Json<Submission>) -> Result<Json<ReviewItem>, SubmitError> {
    s.write().expect("state lock").submit(&sub.record_id, sub.grade).map(Json)
}

const PLACEHOLDER_PAGE: &str = "<!doctype html>
<html><head><meta charset=\"utf-8\"><title>Review queue</title></head>
<body>
<h1>Review queue</h1>
<p>No UI bundle is being served. The JSON API is available at
<code>/api/queue</code>, <code>/api/item/{record_id}</code>, <code>/api/progress</code>
and <code>POST /api/review</code>.</p>
</body></html>
";

async fn placeholder() -> Html<&'static str> {
    Html(PLACEHOLDER_PAGE)
}

/// API routes, plus the UI bundle from `ui_dir` (or a placeholder page).
pub fn router(state: SharedState, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/queue", get(queue))
        .route("/api/item/{record_id}", get(item))
        .route("/api/review", post(review))
        .route("/api/progress", get(progress))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(placeholder)),
    }
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub decisions_path: PathBuf,
    pub corpus_path: PathBuf,
    pub bind_address: String,
    pub log_path: PathBuf,
    pub results_path: PathBuf,
    pub ui_dir: Option<PathBuf>,
}

impl ServeConfig {
    /// Conventional layout inside a run directory.
    pub fn for_run_dir(run_dir: &Path, bind_address: &str) -> Self {
        Self {
            decisions_path: run_dir.join("decisions.jsonl"),
            corpus_path: run_dir.join("corpus_clean.csv"),
            bind_address: bind_address.into(),
            log_path: run_dir.join("review_log.jsonl"),
            results_path: run_dir.join("review_results.json"),
            ui_dir: None,
        }
    }
}

pub fn load_state(config: &ServeConfig) -> Result<ReviewState, ReviewError> {
    let decisions = load_decisions(&config.decisions_path)?;
    let corpus = corpus::load_corpus(&config.corpus_path)?;
    ReviewState::new(&decisions, &corpus)
        .map_err(|message| ReviewError::CorruptDecisionsFile { path: config.decisions_path.clone(), message })?
        .with_log(&config.log_path)
}

pub async fn bind(addr: &str) -> Result<tokio::net::TcpListener, ReviewError> {
    tokio::net::TcpListener::bind(addr).await.map_err(|source| ReviewError::BindFailure { addr: addr.into(), source })
}

/// Serves until `shutdown` resolves, then writes the review results.
pub async fn serve_until(
    listener: tokio::net::TcpListener,
    state: SharedState,
    config: &ServeConfig,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ReviewError> {
    let app = router(state.clone(), config.ui_dir.as_deref());
    let addr: Option<SocketAddr> = listener.local_addr().ok();
    log::info!("review service listening on {addr:?}");
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|source| ReviewError::Io { path: config.bind_address.clone().into(), source })?;
    let results = state.read().expect("state lock").results();
    write_results(&config.results_path, &results)
}

/// Loads the run and serves until Ctrl-C.
pub async fn serve(config: ServeConfig) -> Result<(), ReviewError> {
    let state = Arc::new(RwLock::new(load_state(&config)?));
    let listener = bind(&config.bind_address).await?;
    serve_until(listener, state, &config, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}

#[cfg(test)]
mod tests {
    use super::*;
    use gradeguard::corpus::AnswerRecord;

    fn fixture() -> (Vec<GradeDecision>, Corpus) {
        let rec = |id: &str| AnswerRecord {
            record_id: id.into(),
            question_id: "1.1".into(),
            question_text: format!("question for {id}"),
            reference_answer: "reference".into(),
            student_answer: format!("answer {id}"),
            true_grade: 3.0,
        };
        let dec = |id: &str, s: f64, status: Status| GradeDecision {
            record_id: id.into(),
            predicted_mean: Some(3.0),
            predicted_grade: Some(3.0),
            indecisiveness_score: s,
            status,
            final_grade: (status == Status::Confident).then_some(3.0),
            provenance: (status == Status::Confident).then_some(Provenance::Auto),
            sample_feedbacks: vec!["fine".into()],
            note: None,
        };
        let corpus = Corpus::new(["a", "b", "c", "d"].iter().map(|id| rec(id)).collect(), "fixture").unwrap();
        let decisions = vec![
            dec("a", 0.12, Status::Routed),
            dec("b", 0.05, Status::Routed),
            dec("c", 0.20, Status::Routed),
            dec("d", 0.01, Status::Confident),
        ];
        (decisions, corpus)
    }

    #[test]
    fn queue_orders_most_uncertain_first() {
        let (d, c) = fixture();
        let s = ReviewState::new(&d, &c).unwrap();
        let ids: Vec<String> = s.queue().into_iter().map(|i| i.record_id).collect();
        assert_eq!(ids, ["c", "a", "b"]);
        assert_eq!(s.progress(), Progress { pending: 3, done: 0 });
    }

    #[test]
    fn submission_rules() {
        let (d, c) = fixture();
        let mut s = ReviewState::new(&d, &c).unwrap();
        assert!(matches!(s.submit("a", 2.3), Err(SubmitError::InvalidGrade(_))));
        assert!(matches!(s.submit("a", 5.5), Err(SubmitError::InvalidGrade(_))));
        assert!(matches!(s.submit("zz", 2.0), Err(SubmitError::UnknownRecord(_))));
        assert!(matches!(s.submit("d", 2.0), Err(SubmitError::NotRouted(_))));
        let it = s.submit("a", 3.5).unwrap();
        assert_eq!((it.status, it.human_grade), (ItemStatus::Done, Some(3.5)));
        s.submit("a", 4.0).unwrap();
        assert_eq!(s.progress(), Progress { pending: 2, done: 1 });
        assert_eq!(s.results(), vec![ReviewResult { record_id: "a".into(), grade: 4.0 }]);
    }

    #[test]
    fn missing_corpus_record_is_reported() {
        let (d, _) = fixture();
        let empty = Corpus::new(vec![], "none").unwrap();
        assert!(ReviewState::new(&d, &empty).is_err());
    }

    #[test]
    fn merged_human_grades_start_done() {
        let (mut d, c) = fixture();
        d[0].final_grade = Some(1.0);
        d[0].provenance = Some(Provenance::Human);
        let s = ReviewState::new(&d, &c).unwrap();
        assert_eq!(s.progress(), Progress { pending: 2, done: 1 });
    }
}
