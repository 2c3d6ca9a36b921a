mod common;

use std::collections::HashMap;

use gradeguard::backends::{grade_repeated, BackendConfig, Grader, MockBackend, MockProfile};
use gradeguard::irm::{self, fit_logistic, fit_poly4, threshold_sweep};
use gradeguard::metrics::{self, confident_rmse, indecisiveness_score, RepeatedGrading};
use gradeguard::prompting::{render_prompt, PromptTemplate};
use gradeguard::srgm::grade_corpus;
use gradeguard::synthetic::{heteroscedastic, SyntheticSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[test]
fn metrics_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let n = rng.random_range(2..=30);
        let grades = common::random_grades(&mut rng, n);
        assert!(common::rel_close(metrics::mean_grade(&grades).unwrap(), common::mean(&grades), 1e-12));
        assert!(common::rel_close(indecisiveness_score(&grades).unwrap(), common::is_oracle(&grades), 1e-9));

        let truths = common::random_grades(&mut rng, n);
        let pairs: Vec<(f64, f64)> = grades.iter().copied().zip(truths).collect();
        assert!(common::rel_close(metrics::rmse(&pairs).unwrap(), common::rmse(&pairs), 1e-12));
        assert!(common::rel_close(metrics::mae(&pairs).unwrap(), common::mae(&pairs), 1e-12));
        assert_eq!(metrics::bucket_errors(&pairs).as_array(), common::buckets(&pairs));
    }
}

#[test]
fn sweep_matches_refilter() {
    for seed in 0..20 {
        let items = common::random_items(seed, 50);
        let grid = irm::default_threshold_grid();
        let sweep = threshold_sweep(&items, &grid).unwrap();
        let n = items.len() as f64;
        for p in &sweep {
            let (n_k, e_k) = common::confident(&items, p.s_k);
            assert_eq!(p.n_k, n_k);
            assert_eq!(p.penalty, 1.0 - n_k as f64 / n);
            match (p.e_k, e_k) {
                (Some(a), Some(b)) => assert!(common::rel_close(a, b, 1e-12)),
                (None, None) => {}
                other => panic!("defined-ness differs at {}: {other:?}", p.s_k),
            }
            let c = confident_rmse(&items, p.s_k);
            assert_eq!(c.n_k, n_k);
        }
    }
}

#[test]
fn mock_grade_distribution_matches_normal_cdf() {
    let truths: HashMap<String, f64> = [("a".to_string(), 2.5), ("b".to_string(), 4.5)].into_iter().collect();
    let profile = MockProfile { base_noise_sd: 0.6, temperature_gain: 0.2, ..MockProfile::default() };
    let backend = MockBackend::new(profile, 99, truths.clone());
    let record = |id: &str| gradeguard::AnswerRecord {
        record_id: id.into(),
        question_id: "1.1".into(),
        question_text: "q".into(),
        reference_answer: "r".into(),
        student_answer: "s".into(),
        true_grade: truths[id],
    };
    let template = PromptTemplate::default();
    for (id, temp) in [("a", 1.0), ("b", 1.5)] {
        let cfg = BackendConfig::default().with_temperature(temp);
        let prompt = render_prompt(&template, &record(id)).unwrap();
        let replies = grade_repeated(&backend, &cfg, &prompt, 20_000).unwrap();
        let grades: Vec<f64> = replies.iter().filter_map(|r| r.grade()).collect();
        let sd = 0.6 + 0.2 * temp;
        let (m, v) = common::pmf_moments(&common::mock_grade_pmf(truths[id], sd));
        let mc_m = common::mean(&grades);
        let mc_sd = (grades.iter().map(|g| (g - mc_m).powi(2)).sum::<f64>() / (grades.len() - 1) as f64).sqrt();
        assert!((mc_m - m).abs() < 0.03, "{id}: mean {mc_m} vs {m}");
        assert!((mc_sd / v.sqrt() - 1.0).abs() < 0.1, "{id}: sd {mc_sd} vs {}", v.sqrt());
    }
}

#[test]
fn grading_is_independent_of_parallelism() {
    let spec = SyntheticSpec { records: 60, ..SyntheticSpec::default() };
    let (corpus, profile, _) = heteroscedastic(&spec);
    let backend = MockBackend::new(profile, 5, corpus.truths());
    let template = PromptTemplate::default();
    let run = |limit: usize| {
        let cfg = BackendConfig { parallelism_limit: limit, ..BackendConfig::default() };
        grade_corpus(&corpus, &backend, &cfg, &template, 10, 0.05).unwrap()
    };
    let serial = run(1);
    let parallel = run(8);
    assert_eq!(serial.decisions, parallel.decisions);
    assert_eq!(serial.replies, parallel.replies);
}

#[test]
fn repeated_grading_agrees_with_direct_is() {
    let truths: HashMap<String, f64> = [("x".to_string(), 3.0)].into_iter().collect();
    let backend = MockBackend::new(MockProfile::default(), 3, truths);
    let record = gradeguard::AnswerRecord {
        record_id: "x".into(),
        question_id: "1.1".into(),
        question_text: "q".into(),
        reference_answer: "r".into(),
        student_answer: "s".into(),
        true_grade: 3.0,
    };
    let prompt = render_prompt(&PromptTemplate::default(), &record).unwrap();
    let replies = grade_repeated(&backend, &BackendConfig::default(), &prompt, 10).unwrap();
    let g = RepeatedGrading::from_replies("x", &replies);
    let grades: Vec<f64> = replies.iter().map(|r| r.grade().unwrap()).collect();
    assert!(common::rel_close(g.indecisiveness_score, common::is_oracle(&grades), 1e-9));
    assert_eq!(backend.grade_once(&BackendConfig::default(), &prompt, 4).unwrap(), replies[3]);
}

#[test]
fn logistic_fit_under_noise() {
    let xs: Vec<f64> = (0..40).map(|i| i as f64 * 0.005).collect();
    let noise = Normal::new(0.0, 0.01).unwrap();
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ys: Vec<f64> = xs.iter().map(|&x| common::logistic(1.0, 30.0, 0.08, x) + noise.sample(&mut rng)).collect();
        let fit = fit_logistic(&xs, &ys).unwrap();
        assert!(fit.residual_rms <= 0.02, "seed {seed}: residual {}", fit.residual_rms);
    }
}

#[test]
fn poly_fit_is_least_squares_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let xs: Vec<f64> = (0..101).map(|i| i as f64 * 0.005).collect();
        let ys: Vec<f64> = xs.iter().map(|_| rng.random_range(0.0..1.0)).collect();
        let fit = fit_poly4(&xs, &ys).unwrap();
        let best = common::poly_sse(&fit.coefficients, &xs, &ys);
        for _ in 0..200 {
            let mut c = fit.coefficients;
            let i = rng.random_range(0..5);
            c[i] += rng.random_range(-1e-3..1e-3);
            assert!(common::poly_sse(&c, &xs, &ys) >= best * (1.0 - 1e-12));
        }
    }
}
