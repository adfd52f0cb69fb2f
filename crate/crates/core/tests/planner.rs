use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use seeu_core::learners::best_memoryless_policy;
use seeu_core::model::{benchmark_model, theoretical_constants};
use seeu_core::planner::{
    bellman_residual, induced_mdp, optimistic_model, plan, relative_value_iteration, BeliefGrid,
    PlannerConfig,
};
use seeu_core::spectral::ParameterEstimate;

#[test]
fn grid_refinement_is_small_on_benchmark() {
    let model = benchmark_model::<f64>();
    let g = |n| {
        plan(&model, &PlannerConfig::with_resolution(n))
            .unwrap()
            .gain
    };
    let (g50, g100, g200) = (g(50), g(100), g(200));
    assert!((g50 - g100).abs() <= 0.01, "{g50} vs {g100}");
    assert!((g100 - g200).abs() <= 0.005, "{g100} vs {g200}");
}

#[test]
fn benchmark_gain_is_between_memoryless_and_r_max() {
    let model = benchmark_model::<f64>();
    let p = plan(&model, &PlannerConfig::with_resolution(200)).unwrap();
    let ml = best_memoryless_policy(&model).unwrap().gain;
    assert!(p.gain > ml, "planned {} memoryless {ml}", p.gain);
    assert!(p.gain <= model.r_max());
    let d = theoretical_constants(&model).unwrap().span_bound_d;
    assert!(p.bias_span() <= d);
}

#[test]
fn bellman_residual_within_twice_tolerance() {
    let model = benchmark_model::<f64>();
    let grid = BeliefGrid::new(2, 50, 1_000_000).unwrap();
    let mdp = induced_mdp(&model, &grid).unwrap();
    let tol = 1e-8;
    let sol = relative_value_iteration(&mdp, tol, 1_000_000).unwrap();
    assert!(bellman_residual(&mdp, sol.gain, &sol.bias) <= 2.0 * tol);
}

#[test]
fn optimistic_gain_dominates_truth() {
    let model = benchmark_model::<f64>();
    let cfg = PlannerConfig::with_resolution(50);
    let truth = plan(&model, &cfg).unwrap().gain;
    let fine = plan(&model, &PlannerConfig::with_resolution(100))
        .unwrap()
        .gain;
    let slack = (truth - fine).abs();
    let center = ParameterEstimate {
        p_hat: model.transitions().to_vec(),
        omega_hat: model.observations().to_vec(),
        counts: vec![1, 1],
        radii_obs: vec![0.05; 2],
        radii_trans: vec![0.05; 2],
        permutation: vec![vec![0, 1]; 2],
    };
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = optimistic_model(&center, model.rewards(), 4.0, 64, 0.01, &cfg, &mut rng).unwrap();
        assert!(
            c.plan.gain >= truth - slack,
            "seed {seed}: {} < {truth}",
            c.plan.gain
        );
        assert_eq!(c.gains.len(), 65);
        assert!(!c.fallback);
    }
}

#[test]
fn single_precision_plan_agrees() {
    let model = benchmark_model::<f64>();
    let g64 = plan(&model, &PlannerConfig::with_resolution(50))
        .unwrap()
        .gain;
    let m32 = model.cast::<f32>().unwrap();
    let g32 = plan(&m32, &PlannerConfig::with_resolution(50))
        .unwrap()
        .gain;
    assert!((g64 - g32 as f64).abs() < 1e-3, "{g64} vs {g32}");
}
