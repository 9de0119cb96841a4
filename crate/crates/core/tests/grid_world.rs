//! Grid worlds end to end: sampling, rewards, ingestion, reward learning and
//! inference on the shipped configurations.

use mlci_core::accrual::expected_feature_counts;
use mlci_core::gridworld::{
    build_gridworld, paper_experiment, run_experiment, sample_demos, shipped_gridworld, GridConfig, GridError, Move,
};
use mlci_core::inference::InferenceConfig;
use mlci_core::io::{ingest_external_demos, write_json, DemoEntry, DemosFile, DEMOS_SCHEMA};
use mlci_core::maxent::{backward_pass, learn_reward_weights};
use mlci_core::mdp::{
    accrued_features, trajectory_reward, validate_trajectory, AugmentedFeatureMap, ConstraintKind, Violation,
};

#[test]
fn sampled_demos_avoid_every_planted_constraint() {
    let world = shipped_gridworld("paper_9x9").unwrap();
    let demos = sample_demos(&world, 200, 3).unwrap();
    let map = AugmentedFeatureMap::new(&world.nominal);
    let forbidden: Vec<usize> = world.truth.closed(&world.nominal).minimal().iter().map(|&c| map.index_of(c)).collect();
    for xi in demos.iter() {
        assert!(validate_trajectory(&world.true_mdp, xi).is_feasible());
        let acc = accrued_features(&map, xi);
        assert!(forbidden.iter().all(|&i| !acc.contains(i)), "{xi:?}");
    }
}

#[test]
fn distance_reward_is_weighted_path_length() {
    let world = shipped_gridworld("paper_9x9").unwrap();
    let w = world.config.distance_weight;
    for xi in sample_demos(&world, 50, 4).unwrap().iter() {
        let length: f64 = xi
            .actions
            .iter()
            .zip(xi.states.windows(2))
            .filter(|(_, s)| s[0] != s[1])
            .map(|(&a, _)| if Move::from_index(a).unwrap().is_diagonal() { std::f64::consts::SQRT_2 } else { 1.0 })
            .sum();
        let r = trajectory_reward(&world.nominal, xi).unwrap();
        assert!((r - w * length).abs() < 1e-12, "{r} vs {}", w * length);
    }
}

fn detour(lift: usize, above: bool) -> Vec<[usize; 2]> {
    // diagonal out of row 3, across the room, diagonal back to the goal
    let y = |d: usize| if above { 3 + d } else { 3 - d };
    let mut cells: Vec<[usize; 2]> = (0..=lift).map(|d| [d, y(d)]).collect();
    cells.extend((lift + 1..9 - lift).map(|x| [x, y(lift)]));
    cells.extend((0..=lift).rev().map(|d| [9 - d, y(d)]));
    cells
}

fn write_cells(dir: &tempfile::TempDir, name: &str, paths: Vec<Vec<[usize; 2]>>) -> std::path::PathBuf {
    let path = dir.path().join(name);
    let file = DemosFile {
        schema: DEMOS_SCHEMA.to_owned(),
        manifest: None,
        trajectories: paths.into_iter().map(|c| DemoEntry { states: None, actions: None, cells: Some(c) }).collect(),
    };
    write_json(&path, &file).unwrap();
    path
}

#[test]
fn human_room_ingestion_and_state_only_inference() {
    let world = shipped_gridworld("human_room_grid").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<_> = (0..16).map(|i| detour(2 + i % 2, i % 4 < 2)).collect();
    let path = write_cells(&dir, "room.json", paths);
    let demos = ingest_external_demos(&path, &world).unwrap();
    assert_eq!(demos.len(), 16);
    for xi in demos.iter() {
        assert_eq!(xi.actions.len(), world.nominal.horizon());
        assert!(validate_trajectory(&world.true_mdp, xi).is_feasible());
    }

    let config = InferenceConfig { kinds: vec![ConstraintKind::State], ..InferenceConfig::default() };
    let result = mlci_core::inference::greedy_iterative_inference(&world.nominal, &demos, &config).unwrap();
    assert!(!result.selected.is_empty());
    assert!(result.selected.iter().all(|c| c.kind == ConstraintKind::State));
    // the obstacle is never crossed, so its cells are the likeliest constraints
    let layout = world.layout();
    let (x, y) = layout.cell(result.selected[0].index);
    assert!((1..=8).contains(&x) && (1..=5).contains(&y), "first pick ({x}, {y})");

    let jump = write_cells(&dir, "jump.json", vec![vec![[0, 3], [2, 3]]]);
    match ingest_external_demos(&jump, &world) {
        Err(GridError::InfeasibleDemo { violation: Violation::NotAdjacent { t: 0, .. }, .. }) => {}
        other => panic!("{other:?}"),
    }
    let empty = write_cells(&dir, "empty.json", vec![]);
    assert!(ingest_external_demos(&empty, &world).is_err());
}

fn five_by_five() -> GridConfig {
    GridConfig::from_toml_str("width = 5\nheight = 5\nstart = [0, 0]\ngoal = [4, 0]\ndistance_weight = -2.0\n").unwrap()
}

#[test]
fn learned_distance_weight_is_negative_for_short_paths() {
    let world = build_gridworld(&five_by_five()).unwrap();
    let demos = sample_demos(&world, 100, 5).unwrap();
    let fit = learn_reward_weights(&world.nominal, &demos, 0.05, 200).unwrap();
    assert!(fit.weights[0] < 0.0, "{:?}", fit.weights);
    assert!(fit.log_likelihood.last() > fit.log_likelihood.first());
}

#[test]
fn learned_weights_match_feature_counts() {
    let world = build_gridworld(&five_by_five()).unwrap();
    let demos = sample_demos(&world, 100, 6).unwrap();
    let fit = learn_reward_weights(&world.nominal, &demos, 0.05, 2000).unwrap();
    let mdp = world.nominal.with_reward_weights(fit.weights.clone()).unwrap();
    let (pol, _) = backward_pass(&mdp).unwrap();
    let expected = expected_feature_counts(&mdp, &pol).unwrap();
    let empirical = mlci_core::maxent::empirical_feature_counts(&mdp, &demos);
    for (e, m) in empirical.iter().zip(&expected) {
        assert!((e - m).abs() < 1e-3, "{e} vs {m}");
    }
}

#[test]
fn nine_by_nine_selects_the_feature_first() {
    let report = paper_experiment(0, 100, 0.1).unwrap();
    let first = report.result.selected[0];
    assert_eq!(first.kind, ConstraintKind::Feature);
    let world = shipped_gridworld("paper_9x9").unwrap();
    assert_eq!(world.nominal.feature_names()[first.index], "blue");
    assert!(!report
        .result
        .selected
        .iter()
        .any(|c| *c == mlci_core::mdp::MinimalConstraint::action(Move::UpLeft.index())));
}

#[test]
fn experiment_is_deterministic() {
    let world = shipped_gridworld("tiny_3x3_oracle").unwrap();
    let config = InferenceConfig::default();
    assert_eq!(run_experiment(&world, 9, 30, &config).unwrap(), run_experiment(&world, 9, 30, &config).unwrap());
}
