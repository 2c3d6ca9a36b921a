//! Confidence-aware automated short-answer grading.
//!
//! The pipeline grades every answer repeatedly through a pluggable backend,
//! tunes the decoding temperature by RMSE on a score-stratified sample,
//! calibrates an indecisiveness threshold from fitted loss curves, and routes
//! answers whose repeated grades disagree too much to a human reviewer.
//!
//! Module map:
//!
//! - [`corpus`]: CSV ingestion, cleaning, score-based uniform sampling.
//! - [`prompting`]: context-aware prompt rendering and reply parsing.
//! - [`backends`]: remote chat-completion client and the seeded mock grader.
//! - [`metrics`]: mean grade, indecisiveness score, RMSE/MAE, error buckets.
//! - [`crm`]: temperature sweep.
//! - [`irm`]: threshold sweep, logistic/quartic fits, CAL optima.
//! - [`srgm`]: full-corpus grading, routing, human-grade merge, run reports.
//! - [`pipeline`]: all stages in one call.

// Range checks are written as `!(x >= lo)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backends;
pub mod corpus;
pub mod crm;
pub mod irm;
pub mod jsonl;
pub mod lattice;
pub mod metrics;
pub mod pipeline;
pub mod plot;
pub mod prompting;
pub mod srgm;
pub mod synthetic;

pub use backends::{BackendConfig, BackendKind, GradeReply, Grader, MockBackend, MockProfile};
pub use corpus::{AnswerRecord, Corpus, GradeBand};
pub use irm::{CalCurve, CalMode, CalibrationResult, LogisticFit, PolyFit, ThresholdPoint};
pub use metrics::{BucketCounts, RepeatedGrading};
pub use prompting::{ParsedReply, PromptTemplate, RenderedPrompt};
pub use srgm::{GradeDecision, RunReport};
