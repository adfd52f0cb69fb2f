use seeu_core::learners::{
    best_memoryless_policy, run_etc, run_memoryless, run_seeu, FixedEstimator, Knowledge,
    LearnerConfig, ModelSource,
};
use seeu_core::model::{benchmark_model, BeliefState};
use seeu_core::planner::{plan, PlannerConfig};
use seeu_core::sim::{init_env, Phase};

#[test]
fn known_model_exploitation_earns_planned_gain() {
    let model = benchmark_model::<f64>();
    let cfg = LearnerConfig {
        tau1: 50,
        tau2: 20_000.0,
        ..LearnerConfig::default()
    };
    let gain = plan(&model, &cfg.planner).unwrap().gain;
    let mut est = FixedEstimator {
        model: model.clone(),
        radius_obs: 0.0,
        radius_trans: 0.0,
    };
    let mut env = init_env(&model, &BeliefState::uniform(2), 21).unwrap();
    let horizon = 100_100;
    let recs = run_seeu(
        &mut env,
        &Knowledge::from_model(&model),
        &cfg,
        horizon,
        &mut est,
    )
    .unwrap();
    assert!(recs
        .iter()
        .all(|r| r.source.is_none_or(|s| s == ModelSource::Estimate)));
    let log = env.log();
    let exploit: Vec<f64> = (0..log.len())
        .filter(|&t| log.episode_marks[t].phase == Phase::Exploit)
        .map(|t| log.rewards[t])
        .collect();
    assert!(exploit.len() >= 99_000);
    let avg = exploit.iter().sum::<f64>() / exploit.len() as f64;
    assert!(
        (avg - gain).abs() < 0.05,
        "exploitation average {avg} vs gain {gain}"
    );
}

#[test]
fn memoryless_gain_matches_long_simulation() {
    let model = benchmark_model::<f64>();
    let best = best_memoryless_policy(&model).unwrap();
    let n = 1_000_000;
    let mut env = init_env(&model, &BeliefState::uniform(2), 77).unwrap();
    run_memoryless(&mut env, &best.map, n).unwrap();
    let avg = env.log().rewards.iter().sum::<f64>() / n as f64;
    assert!((avg - best.gain).abs() < 0.02, "{avg} vs {}", best.gain);
    let planned = plan(&model, &PlannerConfig::with_resolution(200))
        .unwrap()
        .gain;
    assert!(
        planned - best.gain > 0.1,
        "oracle gap {}",
        planned - best.gain
    );
}

#[test]
fn seeded_runs_repeat_exactly() {
    let model = benchmark_model::<f64>();
    let cfg = LearnerConfig {
        tau1: 100,
        tau2: 100.0,
        seed: 5,
        ..LearnerConfig::default()
    };
    let run = || {
        let mut env = init_env(&model, &BeliefState::uniform(2), 13).unwrap();
        let mut est = seeu_core::learners::SpectralEstimator {
            config: cfg.spectral(),
        };
        run_etc(
            &mut env,
            &Knowledge::from_model(&model),
            &cfg,
            5_000,
            &mut est,
        )
        .unwrap();
        env.into_log()
    };
    assert_eq!(run(), run());
}
