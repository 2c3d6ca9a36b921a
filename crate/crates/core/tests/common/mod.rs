//! Brute-force reference implementations shared by the integration tests.
//! They deliberately avoid the library's own code paths.
#![allow(dead_code)]

use gradeguard::metrics::ScoredItem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

pub fn mean(v: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in v {
        s += x;
    }
    s / v.len() as f64
}

/// Sample variance from pairwise differences: sum_{i<j} (xi - xj)^2 / (n (n - 1)).
pub fn pairwise_sample_var(v: &[f64]) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            acc += (v[i] - v[j]).powi(2);
        }
    }
    acc / (n * (n - 1)) as f64
}

pub fn is_oracle(grades: &[f64]) -> f64 {
    pairwise_sample_var(grades).sqrt() / 10.0
}

pub fn rmse(pairs: &[(f64, f64)]) -> f64 {
    let sq: Vec<f64> = pairs.iter().map(|(a, b)| (a - b) * (a - b)).collect();
    mean(&sq).sqrt()
}

pub fn mae(pairs: &[(f64, f64)]) -> f64 {
    let abs: Vec<f64> = pairs.iter().map(|(a, b)| (a - b).abs()).collect();
    mean(&abs)
}

/// (N_k, E_k) by explicit re-filtering.
pub fn confident(items: &[ScoredItem], th: f64) -> (usize, Option<f64>) {
    let kept: Vec<(f64, f64)> =
        items.iter().filter(|it| it.indecisiveness_score <= th).map(|it| (it.mean_grade, it.true_grade)).collect();
    if kept.is_empty() {
        (0, None)
    } else {
        (kept.len(), Some(rmse(&kept)))
    }
}

/// Buckets in integer half-point units: errors on the lattice are exact
/// multiples of 0.5.
pub fn buckets(pairs: &[(f64, f64)]) -> [usize; 4] {
    let mut b = [0usize; 4];
    for (p, t) in pairs {
        let h = ((p - t) * 2.0).round() as i64;
        let i = match h {
            h if h < -2 => 0,
            0 => 2,
            h if h > 2 => 3,
            _ => 1,
        };
        b[i] += 1;
    }
    b
}

pub fn lattice_grade(rng: &mut impl Rng) -> f64 {
    rng.random_range(0..=10u32) as f64 * 0.5
}

pub fn random_grades(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| lattice_grade(rng)).collect()
}

/// Random scored items with IS spread over [0, 0.3].
pub fn random_items(seed: u64, n: usize) -> Vec<ScoredItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let truth = lattice_grade(&mut rng);
            let t = rng.random_range(2..=12usize);
            let grades = random_grades(&mut rng, t);
            ScoredItem::new(truth, mean(&grades), is_oracle(&grades) * rng.random_range(0.0..1.0))
        })
        .collect()
}

/// Exact distribution of one mock grade: `quantize_half(clamp(truth + N(0, sd)))`
/// has mass on each lattice value g equal to the normal mass of the interval
/// rounding to g, with the clamp folding both tails onto 0 and 5.
pub fn mock_grade_pmf(truth: f64, sd: f64) -> Vec<(f64, f64)> {
    if sd == 0.0 {
        return vec![(truth, 1.0)];
    }
    let n = Normal::new(truth, sd).unwrap();
    (0..=10)
        .map(|h| {
            let g = h as f64 * 0.5;
            let lo = if h == 0 { f64::NEG_INFINITY } else { g - 0.25 };
            let hi = if h == 10 { f64::INFINITY } else { g + 0.25 };
            (g, n.cdf(hi) - n.cdf(lo))
        })
        .collect()
}

pub fn pmf_moments(pmf: &[(f64, f64)]) -> (f64, f64) {
    let m: f64 = pmf.iter().map(|(g, p)| g * p).sum();
    let v: f64 = pmf.iter().map(|(g, p)| (g - m).powi(2) * p).sum();
    (m, v)
}

/// Expected squared error of the mean of `t` independent mock grades.
pub fn expected_sq_error_of_mean(truth: f64, sd: f64, t: usize) -> f64 {
    let (m, v) = pmf_moments(&mock_grade_pmf(truth, sd));
    (m - truth).powi(2) + v / t as f64
}

pub fn logistic(l: f64, k: f64, t0: f64, x: f64) -> f64 {
    l / (1.0 + (-k * (x - t0)).exp())
}

pub fn poly_sse(c: &[f64; 5], xs: &[f64], ys: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(x, y)| {
            let mut v = 0.0;
            for (i, ci) in c.iter().enumerate() {
                v += ci * x.powi(i as i32);
            }
            (v - y).powi(2)
        })
        .sum()
}

pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) || (a - b).abs() < 1e-15
}
