//! Greedy coverage against the exhaustive best union.

use mlci_core::gridworld::{sample_demos, shipped_gridworld};
use mlci_core::inference::{
    brute_force_best_combination, greedy_coverage, greedy_iterative_inference, InferenceConfig,
};
use mlci_core::mdp::ConstraintKind;
use mlci_testkit::checks::{bound_instance, greedy_bound_rows, greedy_factor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn factors() {
    assert_eq!(greedy_factor(1), 1.0);
    assert_eq!(greedy_factor(2), 0.75);
    assert!((greedy_factor(3) - 19.0 / 27.0).abs() < 1e-15);
}

#[test]
fn bound_holds_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for k in 0..20 {
        let p = bound_instance(&mut rng);
        for row in greedy_bound_rows(&p, 3).unwrap() {
            assert!(row.holds(), "instance {k}: {row:?}");
            // greedy never beats the exhaustive optimum
            assert!(row.greedy <= row.optimal + 1e-12, "instance {k}: {row:?}");
        }
    }
}

#[test]
fn tiny_grid_pair_bound() {
    let world = shipped_gridworld("tiny_3x3_oracle").unwrap();
    let demos = sample_demos(&world, 20, 1).unwrap();
    let config = InferenceConfig { threshold: 0.0, max_iters: Some(2), ..InferenceConfig::default() };
    let result = greedy_iterative_inference(&world.nominal, &demos, &config).unwrap();
    let coverage = greedy_coverage(&world.nominal, &result).unwrap();
    let (_, optimal) = brute_force_best_combination(&world.nominal, &demos, 2, &ConstraintKind::ALL).unwrap();
    let greedy = *coverage.last().unwrap();
    assert!(greedy >= 0.75 * optimal, "{greedy} vs {optimal}");
}
