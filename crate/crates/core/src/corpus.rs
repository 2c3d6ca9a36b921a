//! Short-answer corpus: CSV ingestion, cleaning, and score-based uniform
//! sampling (one answer per grade band per question).

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice;

pub const CSV_HEADER: [&str; 6] =
    ["record_id", "question_id", "question_text", "reference_answer", "student_answer", "true_grade"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: u64, column: String, message: String },
    #[error("duplicate record_id {0:?}")]
    DuplicateId(String),
    #[error("row {row}: grade {grade} is not on the 0-5 half-point scale")]
    GradeOutOfScale { row: u64, grade: f64 },
    #[error("question {question_id:?} has more than one reference answer")]
    InconsistentReference { question_id: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub record_id: String,
    pub question_id: String,
    pub question_text: String,
    pub reference_answer: String,
    pub student_answer: String,
    pub true_grade: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub record_id: String,
    pub rule: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub source: String,
    pub records_in: usize,
    pub records_out: usize,
    pub removed: Vec<Removal>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub cleaning: Option<CleaningReport>,
}

/// An ordered, validated collection of answer records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    records: Vec<AnswerRecord>,
    pub provenance: Provenance,
}

impl Corpus {
    /// Builds a corpus, enforcing unique ids, lattice grades, and one
    /// reference answer per question.
    pub fn new(records: Vec<AnswerRecord>, source: impl Into<String>) -> Result<Self, CorpusError> {
        let mut ids = HashSet::with_capacity(records.len());
        let mut references: HashMap<&str, &str> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            if !ids.insert(r.record_id.as_str()) {
                return Err(CorpusError::DuplicateId(r.record_id.clone()));
            }
            if !lattice::is_on_lattice(r.true_grade) {
                return Err(CorpusError::GradeOutOfScale { row: i as u64 + 1, grade: r.true_grade });
            }
            match references.get(r.question_id.as_str()) {
                Some(existing) if *existing != r.reference_answer => {
                    return Err(CorpusError::InconsistentReference { question_id: r.question_id.clone() })
                }
                Some(_) => {}
                None => {
                    references.insert(&r.question_id, &r.reference_answer);
                }
            }
        }
        Ok(Self { records, provenance: Provenance { source: source.into(), cleaning: None } })
    }

    pub fn records(&self) -> &[AnswerRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, record_id: &str) -> Option<&AnswerRecord> {
        self.records.iter().find(|r| r.record_id == record_id)
    }

    pub fn question_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        let mut ids: Vec<&str> =
            self.records.iter().map(|r| r.question_id.as_str()).filter(|q| seen.insert(*q)).collect();
        ids.sort_by(|a, b| compare_question_ids(a, b));
        ids
    }

    pub fn truths(&self) -> HashMap<String, f64> {
        self.records.iter().map(|r| (r.record_id.clone(), r.true_grade)).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CorpusError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for r in &self.records {
            w.write_record([
                r.record_id.as_str(),
                r.question_id.as_str(),
                r.question_text.as_str(),
                r.reference_answer.as_str(),
                r.student_answer.as_str(),
                &format_grade(r.true_grade),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), CorpusError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn format_grade(g: f64) -> String {
    if g.fract() == 0.0 {
        format!("{g:.0}")
    } else {
        format!("{g:.1}")
    }
}

/// Orders dotted question ids numerically where possible ("1.6" < "1.10").
pub fn compare_question_ids(a: &str, b: &str) -> Ordering {
    let mut pa = a.split('.');
    let mut pb = b.split('.');
    loop {
        match (pa.next(), pb.next()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(x), Some(y)) => {
                let ord = match (x.parse::<u64>(), y.parse::<u64>()) {
                    (Ok(nx), Ok(ny)) => nx.cmp(&ny),
                    _ => x.cmp(y),
                };
                if ord != Ordering::Equal {
                    return ord;
                }
            }
        }
    }
}

/// Reads a corpus from CSV with the canonical header.
pub fn read_corpus<R: Read>(reader: R, source: &str) -> Result<Corpus, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut columns = [0usize; 6];
    for (slot, name) in columns.iter_mut().zip(CSV_HEADER) {
        *slot = headers.iter().position(|h| h.trim() == name).ok_or_else(|| CorpusError::Parse {
            row: 0,
            column: name.to_string(),
            message: "missing column in header".into(),
        })?;
    }

    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i as u64 + 1;
        let row = row.map_err(|e| CorpusError::Parse { row: row_no, column: String::new(), message: e.to_string() })?;
        let field = |c: usize| -> Result<String, CorpusError> {
            let value = row.get(columns[c]).unwrap_or("").trim();
            if value.is_empty() {
                return Err(CorpusError::Parse {
                    row: row_no,
                    column: CSV_HEADER[c].to_string(),
                    message: "empty field".into(),
                });
            }
            Ok(value.to_string())
        };
        let record_id = field(0)?;
        let grade_text = field(5)?;
        let true_grade: f64 = grade_text.parse().map_err(|_| CorpusError::Parse {
            row: row_no,
            column: CSV_HEADER[5].to_string(),
            message: format!("not a decimal number: {grade_text:?}"),
        })?;
        if !lattice::is_on_lattice(true_grade) {
            return Err(CorpusError::GradeOutOfScale { row: row_no, grade: true_grade });
        }
        if !ids.insert(record_id.clone()) {
            return Err(CorpusError::DuplicateId(record_id));
        }
        records.push(AnswerRecord {
            record_id,
            question_id: field(1)?,
            question_text: field(2)?,
            reference_answer: field(3)?,
            student_answer: field(4)?,
            true_grade,
        });
    }
    Corpus::new(records, source)
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let file = std::fs::File::open(path)?;
    read_corpus(std::io::BufReader::new(file), &path.display().to_string())
}

/// Student-answer rejection rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningRules {
    /// Characters allowed beyond printable ASCII and ordinary whitespace.
    pub extra_allowed: String,
    /// A run of at least this many non-space characters marks missing spaces.
    pub max_token_run: usize,
}

impl Default for CleaningRules {
    fn default() -> Self {
        Self { extra_allowed: String::new(), max_token_run: 25 }
    }
}

pub const RULE_DISALLOWED_CHARACTER: &str = "disallowed character";
pub const RULE_MISSING_SPACES: &str = "missing spaces";

impl CleaningRules {
    fn is_allowed(&self, c: char) -> bool {
        matches!(c, ' '..='~' | '\n' | '\t' | '\r') || self.extra_allowed.contains(c)
    }

    /// The first rule the text violates, if any.
    pub fn violation(&self, text: &str) -> Option<&'static str> {
        if text.chars().any(|c| !self.is_allowed(c)) {
            return Some(RULE_DISALLOWED_CHARACTER);
        }
        let longest = text.split(char::is_whitespace).map(|tok| tok.chars().count()).max().unwrap_or(0);
        if self.max_token_run > 0 && longest >= self.max_token_run {
            return Some(RULE_MISSING_SPACES);
        }
        None
    }
}

/// Removes records whose student answer violates a cleaning rule.
pub fn clean_corpus(corpus: &Corpus, rules: &CleaningRules) -> Corpus {
    let mut kept = Vec::with_capacity(corpus.len());
    let mut removed = Vec::new();
    for r in corpus.records() {
        match rules.violation(&r.student_answer) {
            Some(rule) => removed.push(Removal { record_id: r.record_id.clone(), rule: rule.to_string() }),
            None => kept.push(r.clone()),
        }
    }
    let report = CleaningReport {
        source: corpus.provenance.source.clone(),
        records_in: corpus.len(),
        records_out: kept.len(),
        removed,
    };
    Corpus {
        records: kept,
        provenance: Provenance { source: corpus.provenance.source.clone(), cleaning: Some(report) },
    }
}

/// A half-open (or, for the first band, closed) range of grade points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradeBand {
    pub lower: f64,
    pub upper: f64,
    pub lower_inclusive: bool,
}

impl GradeBand {
    pub const CANONICAL: [GradeBand; 5] = [
        GradeBand { lower: 0.0, upper: 1.0, lower_inclusive: true },
        GradeBand { lower: 1.0, upper: 2.0, lower_inclusive: false },
        GradeBand { lower: 2.0, upper: 3.0, lower_inclusive: false },
        GradeBand { lower: 3.0, upper: 4.0, lower_inclusive: false },
        GradeBand { lower: 4.0, upper: 5.0, lower_inclusive: false },
    ];

    pub fn contains(&self, g: f64) -> bool {
        let above = if self.lower_inclusive { g >= self.lower } else { g > self.lower };
        above && g <= self.upper
    }

    /// Index of the canonical band holding `g`: [0,1] for g <= 1, else
    /// (n, n+1] with n = ceil(g) - 1.
    pub fn index_of(g: f64) -> Option<usize> {
        if !(0.0..=5.0).contains(&g) {
            return None;
        }
        if g <= 1.0 {
            Some(0)
        } else {
            Some(g.ceil() as usize - 1)
        }
    }
}

/// Score-Based Uniform Sampling: per question and canonical band, one
/// record drawn uniformly (seeded) from those whose grade lies in the band.
pub fn sbus_sample(corpus: &Corpus, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_question: BTreeMap<QuestionKey, [Vec<&AnswerRecord>; 5]> = BTreeMap::new();
    for r in corpus.records() {
        let band = GradeBand::index_of(r.true_grade).expect("corpus grades are validated");
        by_question.entry(QuestionKey(r.question_id.clone())).or_default()[band].push(r);
    }
    let mut picked = Vec::new();
    for bands in by_question.values() {
        for eligible in bands {
            if let Some(r) = eligible.choose(&mut rng) {
                picked.push((*r).clone());
            }
        }
    }
    Corpus {
        records: picked,
        provenance: Provenance {
            source: format!("{} (S-BUS seed {seed})", corpus.provenance.source),
            cleaning: corpus.provenance.cleaning.clone(),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct QuestionKey(String);

impl PartialOrd for QuestionKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QuestionKey {
    fn cmp(&self, other: &Self) -> Ordering {
        compare_question_ids(&self.0, &other.0).then_with(|| self.0.cmp(&other.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TABLE1_CSV: &str = "\
record_id,question_id,question_text,reference_answer,student_answer,true_grade
1.6.a,1.6,Where do C++ programs begin to execute?,\"At the beginning of the scope, before it is used.\",After declaration of the variable's data type.,1
1.6.b,1.6,Where do C++ programs begin to execute?,\"At the beginning of the scope, before it is used.\",\"In the very beginning of the program, before the main starts.\",2
1.6.c,1.6,Where do C++ programs begin to execute?,\"At the beginning of the scope, before it is used.\",Variables can be declared in classes and methods.,2.5
1.6.d,1.6,Where do C++ programs begin to execute?,\"At the beginning of the scope, before it is used.\",Anywhere in the same scope before they are used.,3.5
1.6.e,1.6,Where do C++ programs begin to execute?,\"At the beginning of the scope, before it is used.\",\"They can be declared globally just before the main method, but also outside of it.\",5
";

    fn record(id: &str, q: &str, grade: f64, answer: &str) -> AnswerRecord {
        AnswerRecord {
            record_id: id.into(),
            question_id: q.into(),
            question_text: format!("question {q}"),
            reference_answer: format!("reference {q}"),
            student_answer: answer.into(),
            true_grade: grade,
        }
    }

    #[test]
    fn loads_table1_fixture() {
        let c = read_corpus(TABLE1_CSV.as_bytes(), "fixture").unwrap();
        assert_eq!(c.len(), 5);
        let grades: Vec<f64> = c.records().iter().map(|r| r.true_grade).collect();
        assert_eq!(grades, vec![1.0, 2.0, 2.5, 3.5, 5.0]);
        assert_eq!(c.records()[1].student_answer, "In the very beginning of the program, before the main starts.");
    }

    #[test]
    fn empty_data_section_is_empty_corpus() {
        let c = read_corpus(
            "record_id,question_id,question_text,reference_answer,student_answer,true_grade\n".as_bytes(),
            "empty",
        )
        .unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn quarter_grade_rejected() {
        let csv = "record_id,question_id,question_text,reference_answer,student_answer,true_grade\n\
                   a,1.1,q,r,s,5.25\n";
        match read_corpus(csv.as_bytes(), "x") {
            Err(CorpusError::GradeOutOfScale { row: 1, grade }) => assert_eq!(grade, 5.25),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let csv = "record_id,question_id,question_text,reference_answer,student_answer,true_grade\n\
                   a,1.1,q,r,s,1\na,1.1,q,r,t,2\n";
        assert!(matches!(
            read_corpus(csv.as_bytes(), "x"),
            Err(CorpusError::DuplicateId(id)) if id == "a"
        ));
    }

    #[test]
    fn parse_error_reports_row_and_column() {
        let csv = "record_id,question_id,question_text,reference_answer,student_answer,true_grade\n\
                   a,1.1,q,r,s,1\nb,1.1,q,r,t,abc\n";
        match read_corpus(csv.as_bytes(), "x") {
            Err(CorpusError::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "true_grade");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn conflicting_reference_rejected() {
        let mut b = record("b", "1.1", 2.0, "x");
        b.reference_answer = "other".into();
        let err = Corpus::new(vec![record("a", "1.1", 1.0, "x"), b], "t").unwrap_err();
        assert!(matches!(err, CorpusError::InconsistentReference { .. }));
    }

    #[test]
    fn cleaning_rules() {
        let rules = CleaningRules::default();
        assert_eq!(rules.violation("int•x=5"), Some(RULE_DISALLOWED_CHARACTER));
        assert_eq!(rules.violation("A plain ASCII sentence."), None);
        assert_eq!(rules.violation("thevariableisdeclaredatthetop ok"), Some(RULE_MISSING_SPACES));
        let c =
            Corpus::new(vec![record("a", "1.1", 1.0, "int•x=5"), record("b", "1.1", 2.0, "fine answer")], "t").unwrap();
        let cleaned = clean_corpus(&c, &rules);
        assert_eq!(cleaned.len(), 1);
        let report = cleaned.provenance.cleaning.as_ref().unwrap();
        assert_eq!(report.removed, vec![Removal { record_id: "a".into(), rule: RULE_DISALLOWED_CHARACTER.into() }]);
        assert_eq!(report.records_in, 2);
        assert_eq!(report.records_out, 1);
    }

    #[test]
    fn extra_allowed_characters() {
        let rules = CleaningRules { extra_allowed: "•".into(), ..Default::default() };
        assert_eq!(rules.violation("int•x=5"), None);
    }

    #[test]
    fn band_membership() {
        assert_eq!(GradeBand::index_of(0.0), Some(0));
        assert_eq!(GradeBand::index_of(1.0), Some(0));
        assert_eq!(GradeBand::index_of(1.5), Some(1));
        assert_eq!(GradeBand::index_of(2.0), Some(1));
        assert_eq!(GradeBand::index_of(4.5), Some(4));
        assert_eq!(GradeBand::index_of(5.0), Some(4));
        assert_eq!(GradeBand::index_of(5.5), None);
    }

    #[test]
    fn sbus_table1_selects_all_five() {
        let c = read_corpus(TABLE1_CSV.as_bytes(), "fixture").unwrap();
        let s = sbus_sample(&c, 7);
        assert_eq!(s.len(), 5);
        let grades: Vec<f64> = s.records().iter().map(|r| r.true_grade).collect();
        assert_eq!(grades, vec![1.0, 2.0, 2.5, 3.5, 5.0]);
    }

    #[test]
    fn sbus_single_answer() {
        let c = Corpus::new(vec![record("only", "2.1", 3.0, "x")], "t").unwrap();
        let s = sbus_sample(&c, 1);
        assert_eq!(s.records()[0].record_id, "only");
    }

    #[test]
    fn sbus_frequency_is_uniform() {
        let c = Corpus::new(
            vec![record("a", "3.1", 0.5, "x"), record("b", "3.1", 0.5, "y"), record("c", "3.1", 4.5, "z")],
            "t",
        )
        .unwrap();
        let mut a_count = 0;
        for seed in 0..1000 {
            let s = sbus_sample(&c, seed);
            assert_eq!(s.len(), 2);
            if s.records()[0].record_id == "a" {
                a_count += 1;
            }
        }
        // Binomial(1000, 0.5): sd ~ 15.8, allow ~4.4 sd.
        assert!((430..=570).contains(&a_count), "a selected {a_count} times");
    }

    #[test]
    fn sbus_output_order() {
        let c = Corpus::new(
            vec![record("x1", "1.10", 4.0, "x"), record("x2", "1.6", 4.0, "x"), record("x3", "1.6", 0.0, "x")],
            "t",
        )
        .unwrap();
        let ids: Vec<String> = sbus_sample(&c, 0).records().iter().map(|r| r.record_id.clone()).collect();
        assert_eq!(ids, vec!["x3", "x2", "x1"]);
    }

    #[test]
    fn csv_round_trip() {
        let c = read_corpus(TABLE1_CSV.as_bytes(), "fixture").unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let back = read_corpus(buf.as_slice(), "fixture").unwrap();
        assert_eq!(back.records(), c.records());
    }
}
