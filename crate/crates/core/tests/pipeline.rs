mod common;

use gradeguard::backends::{BackendConfig, MockBackend, MockProfile};
use gradeguard::corpus::sbus_sample;
use gradeguard::crm::{default_temperature_grid, sweep_temperature};
use gradeguard::pipeline::{run_pipeline, PipelineSettings};
use gradeguard::prompting::PromptTemplate;
use gradeguard::srgm::{merge_human_grades, Provenance, ReviewResult, Status};
use gradeguard::synthetic::{heteroscedastic, SyntheticSpec};

#[test]
fn u_shaped_sweep_tracks_expected_rmse_oracle() {
    let spec = SyntheticSpec { records: 200, high_noise_fraction: 0.0, ..SyntheticSpec::default() };
    let (corpus, _, _) = heteroscedastic(&spec);
    let profile = MockProfile {
        base_noise_sd: 0.2,
        temperature_gain: 3.0,
        temperature_optimum: Some(0.83),
        ..MockProfile::default()
    };
    let backend = MockBackend::new(profile.clone(), 17, corpus.truths());
    let grid = default_temperature_grid();
    let sweep =
        sweep_temperature(&corpus, &backend, &BackendConfig::default(), &PromptTemplate::default(), &grid, 10).unwrap();

    let expected: Vec<f64> = grid
        .iter()
        .map(|&temp| {
            let sq: Vec<f64> = corpus
                .records()
                .iter()
                .map(|r| common::expected_sq_error_of_mean(r.true_grade, profile.noise_sd(&r.record_id, temp), 10))
                .collect();
            common::mean(&sq).sqrt()
        })
        .collect();
    let oracle_best = grid[(0..grid.len()).min_by(|&a, &b| expected[a].total_cmp(&expected[b])).unwrap()];
    assert_eq!(oracle_best, 0.8);
    assert_eq!(sweep.best_temperature, 0.8);
    for (p, e) in sweep.points.iter().zip(&expected) {
        assert!((p.rmse - e).abs() < 0.2 * e + 0.02, "T={}: {} vs oracle {e}", p.temperature, p.rmse);
    }
}

#[test]
fn gain_only_profile_prefers_lowest_temperature() {
    let (corpus, _, _) = heteroscedastic(&SyntheticSpec { records: 100, ..SyntheticSpec::default() });
    let profile = MockProfile { base_noise_sd: 0.0, temperature_gain: 0.5, ..MockProfile::default() };
    let backend = MockBackend::new(profile, 1, corpus.truths());
    let grid = [0.3, 0.5, 1.0, 2.0];
    let sweep =
        sweep_temperature(&corpus, &backend, &BackendConfig::default(), &PromptTemplate::default(), &grid, 5).unwrap();
    assert_eq!(sweep.best_temperature, 0.3);
}

#[test]
fn pipeline_is_deterministic_and_mergeable() {
    let spec = SyntheticSpec { records: 120, ..SyntheticSpec::default() };
    let (corpus, profile, _) = heteroscedastic(&spec);
    let settings = PipelineSettings { temperature_grid: vec![0.5, 1.0], seed: 3, ..PipelineSettings::default() };
    let run = || {
        let backend = MockBackend::new(profile.clone(), 8, corpus.truths());
        run_pipeline(&corpus, &backend, &BackendConfig::default(), &PromptTemplate::default(), &settings).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(serde_json::to_string(&a.report).unwrap(), serde_json::to_string(&b.report).unwrap());
    assert_eq!(a.sample, sbus_sample(&a.cleaned, 3));
    assert_eq!(a.report.record_count, 120);
    assert_eq!(a.report.confident_count + a.report.routed_count, 120);

    let routed: Vec<&str> =
        a.run.decisions.iter().filter(|d| d.status == Status::Routed).map(|d| d.record_id.as_str()).collect();
    let results: Vec<ReviewResult> =
        routed.iter().map(|id| ReviewResult { record_id: id.to_string(), grade: 2.5 }).collect();
    let merged = merge_human_grades(&a.run.decisions, &results).unwrap();
    assert!(merged.iter().all(|d| d.final_grade.is_some()));
    for d in merged.iter().filter(|d| d.status == Status::Routed) {
        assert_eq!(d.provenance, Some(Provenance::Human));
        assert_eq!(d.final_grade, Some(2.5));
    }
}
