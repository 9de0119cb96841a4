//! Observation model for constraints on stochastic MDPs.

use mlci_core::mdp::{stochastic_observation_model, Successor};
use mlci_testkit::checks::{deterministic_observation_matches, observation_errors, stochastic_toy};

#[test]
fn toy_rows_renormalize_and_policy_matches_survivors() {
    let (mdp, c) = stochastic_toy();
    let (row, pol) = observation_errors(&mdp, &c).unwrap();
    assert!(row <= 1e-9, "row error {row:e}");
    assert!(pol <= 1e-6, "policy error {pol:e}");
}

#[test]
fn toy_rows_follow_formula() {
    let (mdp, c) = stochastic_toy();
    let observed = stochastic_observation_model(&mdp, &c).unwrap();
    // 0.2 of state 0, action 0 reaches the emptied state
    let row = observed.mdp.successors(0, 0);
    assert_eq!(row.len(), 2);
    assert!((row[0].prob - 0.5 / 0.8).abs() < 1e-15 && (row[1].prob - 0.3 / 0.8).abs() < 1e-15);
    assert_eq!(observed.mdp.successors(1, 1), &[Successor::new(1, 1.0)]);
    assert!((observed.survival(0, 1) - 0.6).abs() < 1e-15);
    assert!(observed.mdp.is_empty_state(2));
}

#[test]
fn deterministic_instances_match_closure() {
    for seed in 0..200 {
        deterministic_observation_matches(seed).unwrap();
    }
}
