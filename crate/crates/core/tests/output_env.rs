//! Kept in its own test binary: it mutates the process environment.

use seeu_core::harness::{run_experiment, Algorithm, ExperimentConfig, OUTPUT_DIR_ENV};

#[test]
fn output_dir_can_be_overridden() {
    let configured = tempfile::tempdir().unwrap();
    let actual = tempfile::tempdir().unwrap();
    std::env::set_var(OUTPUT_DIR_ENV, actual.path());
    let cfg = ExperimentConfig {
        algorithms: vec![Algorithm::Memoryless],
        horizons: vec![100, 200, 400],
        replications: 2,
        oracle_resolution: 20,
        output_dir: configured.path().to_path_buf(),
        ..ExperimentConfig::default()
    };
    let res = run_experiment(&cfg);
    std::env::remove_var(OUTPUT_DIR_ENV);
    let res = res.unwrap();
    assert_eq!(res.output_dir, actual.path());
    assert!(actual.path().join("aggregate.csv").is_file());
    assert!(!configured.path().join("aggregate.csv").exists());
}
