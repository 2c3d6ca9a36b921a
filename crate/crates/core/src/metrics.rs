//! Scalar statistics over repeated grades: mean, Indecisiveness Score (IS),
//! confidence indicator, RMSE/MAE, confident-subset RMSE, error buckets.
//!
//! The IS is the Bessel-corrected sample standard deviation of the repeated
//! grades divided by a fixed normaliser of 10, so thresholds live on a
//! 0..~0.25 scale for grades in [0, 5].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::GradeReply;
use crate::lattice;

/// Fixed IS normaliser. Deliberately not tied to the repetition count.
pub const IS_NORMALIZER: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("empty input")]
    EmptyList,
    #[error("need at least 2 grades, got {0}")]
    TooFewGrades(usize),
}

pub fn mean_grade(grades: &[f64]) -> Result<f64, MetricsError> {
    if grades.is_empty() {
        return Err(MetricsError::EmptyList);
    }
    Ok(grades.iter().sum::<f64>() / grades.len() as f64)
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(values: &[f64]) -> Result<f64, MetricsError> {
    if values.len() < 2 {
        return Err(MetricsError::TooFewGrades(values.len()));
    }
    let m = mean_grade(values)?;
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    Ok((ss / (values.len() - 1) as f64).sqrt())
}

/// Population standard deviation (n denominator).
pub fn population_sd(values: &[f64]) -> Result<f64, MetricsError> {
    let m = mean_grade(values)?;
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    Ok((ss / values.len() as f64).sqrt())
}

/// IS = sample_sd(grades) / 10.
pub fn indecisiveness_score(grades: &[f64]) -> Result<f64, MetricsError> {
    Ok(sample_sd(grades)? / IS_NORMALIZER)
}

/// 1 when the item is confident (s <= threshold), else 0.
pub fn confidence_indicator(s: f64, threshold: f64) -> u8 {
    u8::from(s <= threshold)
}

pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyList);
    }
    let ss: f64 = pairs.iter().map(|(p, t)| (p - t).powi(2)).sum();
    Ok((ss / pairs.len() as f64).sqrt())
}

pub fn mae(pairs: &[(f64, f64)]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyList);
    }
    Ok(pairs.iter().map(|(p, t)| (p - t).abs()).sum::<f64>() / pairs.len() as f64)
}

/// Serde adapter writing non-finite scores (undefined IS) as JSON null.
pub mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// The t repeated grades of one record and their summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatedGrading {
    pub record_id: String,
    /// Parsed grades only.
    pub grades: Vec<f64>,
    pub feedbacks: Vec<String>,
    pub unparseable_count: usize,
    pub t: usize,
    /// Absent when no repetition could be parsed.
    pub mean_grade: Option<f64>,
    /// Infinite (serialised as null) when more than t/2 repetitions were
    /// unparseable or fewer than two grades were parsed.
    #[serde(with = "inf_as_null")]
    pub indecisiveness_score: f64,
}

impl RepeatedGrading {
    pub fn from_replies(record_id: &str, replies: &[GradeReply]) -> Self {
        let mut grades = Vec::with_capacity(replies.len());
        let mut feedbacks = Vec::new();
        for r in replies {
            if let Some(g) = r.grade() {
                grades.push(g);
                if let Some(fb) = r.parsed.feedback() {
                    feedbacks.push(fb.to_string());
                }
            }
        }
        Self::from_grades(record_id, grades, feedbacks, replies.len())
    }

    pub fn from_grades(record_id: &str, grades: Vec<f64>, feedbacks: Vec<String>, t: usize) -> Self {
        let unparseable_count = t.saturating_sub(grades.len());
        let mean = mean_grade(&grades).ok();
        let s = if 2 * unparseable_count > t {
            f64::INFINITY
        } else {
            indecisiveness_score(&grades).unwrap_or(f64::INFINITY)
        };
        Self {
            record_id: record_id.to_string(),
            grades,
            feedbacks,
            unparseable_count,
            t,
            mean_grade: mean,
            indecisiveness_score: s,
        }
    }

    /// Mean rounded to the half-point lattice (ties up).
    pub fn predicted_grade(&self) -> Option<f64> {
        self.mean_grade.map(lattice::round_half_up)
    }
}

/// (true grade, mean of repeated grades, IS) for one record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub true_grade: f64,
    pub mean_grade: f64,
    #[serde(with = "inf_as_null")]
    pub indecisiveness_score: f64,
}

impl ScoredItem {
    pub fn new(true_grade: f64, mean_grade: f64, indecisiveness_score: f64) -> Self {
        Self { true_grade, mean_grade, indecisiveness_score }
    }

    /// Items without a parsed mean carry NaN; their IS is infinite so they
    /// never enter a confident subset.
    pub fn from_grading(true_grade: f64, g: &RepeatedGrading) -> Self {
        Self::new(true_grade, g.mean_grade.unwrap_or(f64::NAN), g.indecisiveness_score)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidentRmse {
    /// RMSE over confident items, `None` when no item is confident.
    pub e_k: Option<f64>,
    pub n_k: usize,
}

/// RMSE of (true grade, mean) over items with IS <= threshold.
pub fn confident_rmse(items: &[ScoredItem], threshold: f64) -> ConfidentRmse {
    let mut n_k = 0usize;
    let mut ss = 0.0;
    for it in items {
        if confidence_indicator(it.indecisiveness_score, threshold) == 1 {
            n_k += 1;
            ss += (it.true_grade - it.mean_grade).powi(2);
        }
    }
    ConfidentRmse { e_k: (n_k > 0).then(|| (ss / n_k as f64).sqrt()), n_k }
}

/// Error (predicted - true) counts over the ranges [-5,-1), [-1,1]\{0},
/// {0} and (1,5].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketCounts {
    pub below_minus_one: usize,
    pub within_one_nonzero: usize,
    pub exact: usize,
    pub above_one: usize,
}

pub const BUCKET_LABELS: [&str; 4] = ["[-5,-1)", "[-1,1]-{0}", "{0}", "(1,5]"];

impl BucketCounts {
    pub fn as_array(&self) -> [usize; 4] {
        [self.below_minus_one, self.within_one_nonzero, self.exact, self.above_one]
    }

    pub fn total(&self) -> usize {
        self.as_array().iter().sum()
    }

    pub fn add(&mut self, error: f64) {
        const EPS: f64 = 1e-9;
        if error.abs() < EPS {
            self.exact += 1;
        } else if error < -1.0 - EPS {
            self.below_minus_one += 1;
        } else if error > 1.0 + EPS {
            self.above_one += 1;
        } else {
            self.within_one_nonzero += 1;
        }
    }
}

pub fn bucket_errors(pairs: &[(f64, f64)]) -> BucketCounts {
    let mut b = BucketCounts::default();
    for (p, t) in pairs {
        b.add(p - t);
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const TABLE2_Q1: [f64; 10] = [3.5, 4.5, 1.0, 2.5, 0.5, 2.5, 1.0, 4.5, 3.5, 2.0];

    #[test]
    fn mean_examples() {
        // 25.5 / 10 by hand.
        assert_relative_eq!(mean_grade(&TABLE2_Q1).unwrap(), 2.55, epsilon = 1e-12);
        assert_eq!(mean_grade(&[4.0; 10]).unwrap(), 4.0);
        assert_eq!(mean_grade(&[0.0, 5.0]).unwrap(), 2.5);
        assert_eq!(mean_grade(&[]), Err(MetricsError::EmptyList));
    }

    #[test]
    fn indecisiveness_examples() {
        // Sum of squared deviations is 18.725 by hand; 18.725 / 9 = 2.0806.
        let s = indecisiveness_score(&TABLE2_Q1).unwrap();
        assert_relative_eq!(s, (18.725f64 / 9.0).sqrt() / 10.0, epsilon = 1e-12);
        assert!((s - 0.14424).abs() < 5e-5);
        assert_eq!(indecisiveness_score(&[3.0; 10]).unwrap(), 0.0);
        assert_eq!(indecisiveness_score(&[3.0]), Err(MetricsError::TooFewGrades(1)));
        let q2 = [3.5, 4.5, 4.5, 4.5, 2.5, 4.5, 4.5, 3.5, 2.5, 1.5];
        assert!((population_sd(&q2).unwrap() - 1.04).abs() < 0.005);
    }

    #[test]
    fn indicator_boundary_is_confident() {
        assert_eq!(confidence_indicator(0.03, 0.05), 1);
        assert_eq!(confidence_indicator(0.07, 0.05), 0);
        assert_eq!(confidence_indicator(0.05, 0.05), 1);
        assert_eq!(confidence_indicator(f64::INFINITY, 0.5), 0);
    }

    #[test]
    fn rmse_mae_examples() {
        let pairs = [(2.0, 2.0), (3.0, 5.0)];
        assert_relative_eq!(rmse(&pairs).unwrap(), 2f64.sqrt(), epsilon = 1e-12);
        assert_eq!(mae(&pairs).unwrap(), 1.0);
        assert_eq!(rmse(&[(1.0, 1.0), (4.5, 4.5)]).unwrap(), 0.0);
        assert_eq!(mae(&[]), Err(MetricsError::EmptyList));
    }

    #[test]
    fn confident_rmse_limits() {
        let items = [ScoredItem::new(2.0, 2.5, 0.01), ScoredItem::new(4.0, 3.0, 0.10), ScoredItem::new(1.0, 1.0, 0.05)];
        let all = confident_rmse(&items, 1.0);
        let pairs: Vec<(f64, f64)> = items.iter().map(|i| (i.mean_grade, i.true_grade)).collect();
        assert_eq!(all.n_k, 3);
        assert_relative_eq!(all.e_k.unwrap(), rmse(&pairs).unwrap(), epsilon = 1e-12);
        assert_eq!(confident_rmse(&items, 0.001), ConfidentRmse { e_k: None, n_k: 0 });
        let mid = confident_rmse(&items, 0.05);
        assert_eq!(mid.n_k, 2);
        assert_relative_eq!(mid.e_k.unwrap(), (0.25f64 / 2.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn bucket_examples() {
        let b = bucket_errors(&[(3.0, 3.0), (2.0, 3.0), (1.5, 3.0), (4.5, 3.0), (3.5, 3.0), (4.0, 3.0)]);
        assert_eq!(b.exact, 1);
        assert_eq!(b.within_one_nonzero, 3);
        assert_eq!(b.below_minus_one, 1);
        assert_eq!(b.above_one, 1);
        assert_eq!(b.total(), 6);
    }

    #[test]
    fn unparseable_override() {
        let g = RepeatedGrading::from_grades("r", vec![3.0, 3.0, 3.0, 3.0], vec![], 10);
        assert_eq!(g.unparseable_count, 6);
        assert!(g.indecisiveness_score.is_infinite());
        assert_eq!(g.mean_grade, Some(3.0));
        let g = RepeatedGrading::from_grades("r", vec![3.0; 5], vec![], 10);
        assert_eq!(g.indecisiveness_score, 0.0);
        let g = RepeatedGrading::from_grades("r", vec![], vec![], 10);
        assert_eq!(g.mean_grade, None);
        let json = serde_json::to_string(&g).unwrap();
        assert!(json.contains("\"indecisiveness_score\":null"));
        let back: RepeatedGrading = serde_json::from_str(&json).unwrap();
        assert!(back.indecisiveness_score.is_infinite());
    }

    #[test]
    fn predicted_grade_rounds_half_up() {
        let g = RepeatedGrading::from_grades("r", vec![2.0, 2.5], vec![], 2);
        assert_eq!(g.predicted_grade(), Some(2.5));
        let g = RepeatedGrading::from_grades("r", TABLE2_Q1.to_vec(), vec![], 10);
        assert_eq!(g.predicted_grade(), Some(2.5));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn grades() -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec((0u32..=10).prop_map(|h| h as f64 * 0.5), 2..20)
        }

        proptest! {
            #[test]
            fn is_translation_invariant_and_scales(gs in grades(), shift in -3.0f64..3.0, scale in 0.1f64..4.0) {
                let s = indecisiveness_score(&gs).unwrap();
                let shifted: Vec<f64> = gs.iter().map(|g| g + shift).collect();
                let scaled: Vec<f64> = gs.iter().map(|g| g * scale).collect();
                prop_assert!((indecisiveness_score(&shifted).unwrap() - s).abs() < 1e-9);
                prop_assert!((indecisiveness_score(&scaled).unwrap() - s * scale).abs() < 1e-9);
            }

            #[test]
            fn mae_never_exceeds_rmse(ps in prop::collection::vec((0.0f64..5.0, 0.0f64..5.0), 1..50)) {
                prop_assert!(mae(&ps).unwrap() <= rmse(&ps).unwrap() + 1e-12);
            }

            #[test]
            fn n_k_nondecreasing(
                items in prop::collection::vec((0.0f64..5.0, 0.0f64..5.0, 0.0f64..0.3), 1..40),
                a in 0.0f64..0.3, b in 0.0f64..0.3,
            ) {
                let items: Vec<ScoredItem> = items.into_iter().map(|(t, m, s)| ScoredItem::new(t, m, s)).collect();
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(confident_rmse(&items, lo).n_k <= confident_rmse(&items, hi).n_k);
            }

            #[test]
            fn buckets_partition(errs in prop::collection::vec(-10i32..=10, 0..60)) {
                let pairs: Vec<(f64, f64)> = errs.iter().map(|&e| (2.5 + e as f64 * 0.25, 2.5)).collect();
                prop_assert_eq!(bucket_errors(&pairs).total(), pairs.len());
            }
        }
    }
}
