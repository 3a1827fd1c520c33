//! Library-level pipeline runs driven by [`RunConfig`].

use phg_core::error::exit_code;
use phg_core::harness::{run_pipeline, run_scenario, scenarios, RunConfig, ScenarioContext};

fn point_config(source: &std::path::Path) -> RunConfig {
    RunConfig {
        model_file: Some("point".into()),
        source_file: Some(source.to_path_buf()),
        ..Default::default()
    }
}

fn source_file(dir: &std::path::Path, a: f64) -> std::path::PathBuf {
    let path = dir.join("source.json");
    std::fs::write(
        &path,
        format!(r#"{{"truncation": null, "terms": [{{"i": 1, "j": 0, "coeff": [{a}]}}]}}"#),
    )
    .unwrap();
    path
}

#[test]
fn trivial_source_gives_an_empty_expansion() {
    let cfg = RunConfig {
        model_file: Some("circle:3".into()),
        ..Default::default()
    };
    let r = run_pipeline(&cfg).unwrap();
    assert!(r.passed());
    assert!(r.coefficients.iter().all(|c| c.value == 0.0));
}

#[test]
fn point_model_recovers_the_log_coefficient() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = point_config(&source_file(dir.path(), 0.06));
    let r = run_pipeline(&cfg).unwrap();
    assert!(r.passed());
    let c11 = r.discrepancies.iter().find(|d| d.i == 1.0 && d.j == 1).unwrap();
    assert!((c11.oracle - 0.04).abs() < 0.02 * 0.04);
    assert_eq!(r.free_components.len(), 1);
}

#[test]
fn explicit_boundary_data_moves_only_the_free_component() {
    let dir = tempfile::tempdir().unwrap();
    let base_cfg = point_config(&source_file(dir.path(), 0.06));
    let base = run_pipeline(&base_cfg).unwrap();
    let shifted = run_pipeline(&RunConfig {
        boundary: Some(vec![-0.009]),
        ..base_cfg
    })
    .unwrap();
    assert!(
        shifted.passed(),
        "{:#?} {:#?} {:#?}",
        shifted.checks,
        shifted.remainder_slopes,
        shifted.discrepancies
    );
    let c11 = |r: &phg_core::modeode::ExpansionReport| {
        r.discrepancies.iter().find(|d| d.i == 1.0 && d.j == 1).unwrap().oracle
    };
    assert!((c11(&base) - c11(&shifted)).abs() < 1e-8);
    assert!((base.free_components[0].value - shifted.free_components[0].value).abs() > 1e-3);
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = point_config(&source_file(dir.path(), 0.06));
    cfg.order = 1.5;
    assert_eq!(run_pipeline(&cfg).unwrap_err().exit_code(), exit_code::INPUT_ERROR);
    let mut cfg = point_config(&source_file(dir.path(), 0.06));
    cfg.boundary = Some(vec![0.0, 0.0]);
    assert_eq!(run_pipeline(&cfg).unwrap_err().exit_code(), exit_code::INPUT_ERROR);
    let mut cfg = point_config(&source_file(dir.path(), 0.06));
    cfg.tolerances.picard_max_iter = 1;
    assert_eq!(
        run_pipeline(&cfg).unwrap_err().exit_code(),
        exit_code::NUMERICAL_FAILURE
    );
}

#[test]
fn every_bundled_scenario_passes() {
    let ctx = ScenarioContext::default();
    for s in scenarios() {
        let r = run_scenario(s.name, &ctx).unwrap();
        assert!(r.passed(), "{}: {:#?}", s.name, r.checks);
        assert!(!r.checks.is_empty(), "{} has no checks", s.name);
    }
}

#[test]
fn randomised_scenarios_follow_the_seed() {
    for name in ["indicial-algebra", "mode-ode"] {
        let a = run_scenario(name, &ScenarioContext { seed: 3, order: None }).unwrap();
        let b = run_scenario(name, &ScenarioContext { seed: 3, order: None }).unwrap();
        let c = run_scenario(name, &ScenarioContext { seed: 4, order: None }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.checks[0].observed, c.checks[0].observed);
        assert!(c.passed());
    }
}
