use std::fs;

use cusplab::artifacts::{read_csv, sha256_file, Manifest};
use cusplab::config::{parse_config, serialize_config, RunConfig};
use cusplab::pipeline::{run_pipeline, Stage, StageError, CLASSICAL_CSV, EIGENVALUES_CSV, REPORT_JSON};

fn small(dir: &std::path::Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.output_dir = dir.to_path_buf();
    cfg.classical.n_trajectories = 3;
    cfg.classical.horizons = vec![1e2, 1e3];
    cfg.lyapunov.n_trajectories = 3;
    cfg.lyapunov.t = 2e3;
    cfg.spectral.nx = 60;
    cfg.spectral.nu = 12;
    cfg.spectral.k = 12;
    cfg.spectral.localization_count = 4;
    cfg.spectral.stability_l = 24.0;
    cfg
}

#[test]
fn classical_stage_writes_hashed_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let out = run_pipeline(&cfg, &[Stage::Classical]).unwrap();
    assert!(out.files.iter().any(|f| f == CLASSICAL_CSV));
    let (header, rows) = read_csv(&dir.path().join(CLASSICAL_CSV)).unwrap();
    assert!(!header.is_empty());
    assert!(!rows.is_empty());
    let manifest = Manifest::load(dir.path());
    assert!(manifest.stage_complete("classical"));
    assert!(!manifest.stage_complete("spectrum"));
    assert_eq!(manifest.files[CLASSICAL_CSV], sha256_file(&dir.path().join(CLASSICAL_CSV)).unwrap());
}

#[test]
fn analysis_without_inputs_names_missing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let err = run_pipeline(&cfg, &[Stage::Analysis]).unwrap_err();
    assert_eq!(err.stage, Stage::Analysis);
    match err.source {
        StageError::Missing(files) => {
            assert!(files.iter().any(|f| f == CLASSICAL_CSV || f.contains("classical")));
            assert!(files.iter().any(|f| f == EIGENVALUES_CSV || f.contains("spectral")));
        }
        other => panic!("unexpected error {other}"),
    }
    assert!(!Manifest::load(dir.path()).stage_complete("analysis"));
}

#[test]
fn full_small_run_is_repeatable() {
    let base = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for name in ["a", "b"] {
        let cfg = small(&base.path().join(name));
        run_pipeline(&cfg, &Stage::ALL).unwrap();
        let manifest = Manifest::load(&cfg.output_dir);
        for stage in Stage::ALL {
            assert!(manifest.stage_complete(stage.name()), "{stage} incomplete");
        }
        reports.push(fs::read(cfg.output_dir.join(REPORT_JSON)).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn stages_can_run_separately() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    run_pipeline(&cfg, &[Stage::Classical, Stage::Lyapunov]).unwrap();
    run_pipeline(&cfg, &[Stage::Spectrum]).unwrap();
    run_pipeline(&cfg, &[Stage::Analysis]).unwrap();
    let manifest = Manifest::load(dir.path());
    assert!(Stage::ALL.iter().all(|s| manifest.stage_complete(s.name())));
}

#[test]
fn resolved_config_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    run_pipeline(&cfg, &[Stage::Classical]).unwrap();
    let text = fs::read_to_string(dir.path().join("config.resolved")).unwrap();
    assert_eq!(parse_config(&text).unwrap(), cfg);
    assert_eq!(serialize_config(&cfg), text);
}

#[test]
fn config_errors_carry_line_numbers() {
    let err = parse_config("alpha = 2\nseed = 1\nspectral.Nx = -3\n").unwrap_err();
    assert_eq!(err.line, 3);
    let err = parse_config("alpha = 2\nnot_a_key = 1\n").unwrap_err();
    assert_eq!(err.line, 2);
    let err = parse_config("alpha = 0.5\n").unwrap_err();
    assert_eq!(err.line, 1);
}
