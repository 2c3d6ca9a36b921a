//! Context-aware prompt rendering and strict reply parsing.
//!
//! A prompt assigns the grader an instructor role, presents the question with
//! the instructor's reference answer as the one-shot benchmark, states the
//! grading policy, and fixes a two-line reply contract:
//!
//! ```text
//! GRADE: <number>
//! FEEDBACK: <text>
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::AnswerRecord;
use crate::lattice;

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("record {record_id:?} has an empty {field}")]
    EmptyField { record_id: String, field: &'static str },
    #[error("template is missing the {0} placeholder")]
    MissingPlaceholder(&'static str),
    #[error("io error reading template: {0}")]
    Io(String),
}

pub const GRADE_TAG: &str = "GRADE:";
pub const FEEDBACK_TAG: &str = "FEEDBACK:";

const DEFAULT_ROLE: &str = "You are an experienced instructor for the course {{course}}. \
You grade short written answers from your students fairly and consistently.";

const DEFAULT_TASK: &str = "Question:\n{{question}}\n\n\
Reference answer (written by the instructor; use it as the benchmark a full-credit answer is compared against):\n{{reference}}\n\n\
Student answer:\n{{answer}}";

const DEFAULT_POLICY: &str = "Grading policy:\n\
- Compare the student answer with the reference answer and judge its correctness and completeness.\n\
- Award a grade between 0 and 5, where 0 is completely wrong and 5 is fully correct.\n\
- Grades must be multiples of 0.5 (for example 2.5 or 4.0); give partial credit for partially correct answers.";

pub const DEFAULT_OUTPUT_FORMAT: &str = "Reply in exactly this format:\n\
GRADE: <number>\n\
FEEDBACK: <one or two sentences explaining the grade>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub course: String,
    /// Role assignment; may use `{{course}}`.
    pub role_preamble: String,
    /// Must contain `{{question}}`, `{{reference}}` and `{{answer}}`.
    pub task_text: String,
    pub policy_text: String,
    pub output_format_spec: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            course: "Introduction to Computer Science".into(),
            role_preamble: DEFAULT_ROLE.into(),
            task_text: DEFAULT_TASK.into(),
            policy_text: DEFAULT_POLICY.into(),
            output_format_spec: DEFAULT_OUTPUT_FORMAT.into(),
        }
    }
}

impl PromptTemplate {
    /// Parses a template document made of `[role]`, `[task]`, `[policy]` and
    /// `[format]` sections. Missing sections keep their defaults.
    pub fn from_text(text: &str, course: &str) -> Result<Self, PromptError> {
        let mut t = Self { course: course.to_string(), ..Self::default() };
        let mut current: Option<&str> = None;
        let mut buf = String::new();
        let flush = |name: Option<&str>, buf: &mut String, t: &mut Self| {
            let body = buf.trim().to_string();
            buf.clear();
            match name {
                Some("role") => t.role_preamble = body,
                Some("task") => t.task_text = body,
                Some("policy") => t.policy_text = body,
                Some("format") => t.output_format_spec = body,
                _ => {}
            }
        };
        for line in text.lines() {
            let trimmed = line.trim();
            if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                if matches!(name, "role" | "task" | "policy" | "format") {
                    flush(current, &mut buf, &mut t);
                    current = Some(match name {
                        "role" => "role",
                        "task" => "task",
                        "policy" => "policy",
                        _ => "format",
                    });
                    continue;
                }
            }
            buf.push_str(line);
            buf.push('\n');
        }
        flush(current, &mut buf, &mut t);
        t.validate()?;
        Ok(t)
    }

    pub fn from_file(path: &Path, course: &str) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path).map_err(|e| PromptError::Io(e.to_string()))?;
        Self::from_text(&text, course)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        for p in ["{{question}}", "{{reference}}", "{{answer}}"] {
            if !self.task_text.contains(p) {
                return Err(PromptError::MissingPlaceholder(p));
            }
        }
        if !self.output_format_spec.contains(GRADE_TAG) || !self.output_format_spec.contains(FEEDBACK_TAG) {
            return Err(PromptError::MissingPlaceholder("GRADE:/FEEDBACK: output contract"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub record_id: String,
}

pub fn render_prompt(template: &PromptTemplate, record: &AnswerRecord) -> Result<RenderedPrompt, PromptError> {
    let fields = [
        ("question_text", &record.question_text),
        ("reference_answer", &record.reference_answer),
        ("student_answer", &record.student_answer),
    ];
    for (name, value) in fields {
        if value.trim().is_empty() {
            return Err(PromptError::EmptyField { record_id: record.record_id.clone(), field: name });
        }
    }
    let fill = |s: &str| {
        s.replace("{{course}}", &template.course)
            .replace("{{question}}", &record.question_text)
            .replace("{{reference}}", &record.reference_answer)
            .replace("{{answer}}", &record.student_answer)
    };
    let text = [
        fill(&template.role_preamble),
        fill(&template.task_text),
        fill(&template.policy_text),
        template.output_format_spec.clone(),
    ]
    .join("\n\n");
    Ok(RenderedPrompt { text, record_id: record.record_id.clone() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParsedReply {
    Graded { grade: f64, feedback: String },
    Unparseable,
}

impl ParsedReply {
    pub fn grade(&self) -> Option<f64> {
        match self {
            ParsedReply::Graded { grade, .. } => Some(*grade),
            ParsedReply::Unparseable => None,
        }
    }

    pub fn feedback(&self) -> Option<&str> {
        match self {
            ParsedReply::Graded { feedback, .. } => Some(feedback),
            ParsedReply::Unparseable => None,
        }
    }
}

/// Extracts the first `GRADE:` numeral (clamped to [0,5], rounded to 0.5)
/// and the text after `FEEDBACK:`.
pub fn parse_reply(reply_text: &str) -> ParsedReply {
    let mut rest = reply_text;
    let mut grade = None;
    while let Some(pos) = rest.find(GRADE_TAG) {
        let after = &rest[pos + GRADE_TAG.len()..];
        if let Some(value) = leading_number(after) {
            grade = Some(value);
            break;
        }
        rest = after;
    }
    let Some(raw) = grade else {
        return ParsedReply::Unparseable;
    };
    let feedback = reply_text
        .find(FEEDBACK_TAG)
        .map(|p| reply_text[p + FEEDBACK_TAG.len()..].trim().to_string())
        .unwrap_or_default();
    ParsedReply::Graded { grade: lattice::quantize_half(raw), feedback }
}

fn leading_number(s: &str) -> Option<f64> {
    let s = s.trim_start_matches([' ', '\t', '*']);
    let bytes = s.as_bytes();
    let mut end = 0;
    if end < bytes.len() && (bytes[end] == b'-' || bytes[end] == b'+') {
        end += 1;
    }
    let digits_start = end;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    let mut has_digits = end > digits_start;
    if end < bytes.len() && bytes[end] == b'.' {
        let frac_start = end + 1;
        let mut e = frac_start;
        while e < bytes.len() && bytes[e].is_ascii_digit() {
            e += 1;
        }
        if e > frac_start {
            has_digits = true;
            end = e;
        }
    }
    if !has_digits {
        return None;
    }
    s[..end].parse().ok().filter(|v: &f64| v.is_finite())
}

/// Formats a reply in the contract layout.
pub fn format_reply(grade: f64, feedback: &str) -> String {
    format!("{GRADE_TAG} {grade:.1}\n{FEEDBACK_TAG} {feedback}")
}
