//! Maximum-likelihood constraint selection and greedy iterative inference.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use fixedbitset::FixedBitSet;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accrual::{eliminated_mass_compound, feature_accrual_history, AccrualError};
use crate::maxent::{backward_pass, kl_empirical_model, DemoSet, SolverError, TimeVaryingPolicy};
use crate::mdp::{
    accrued_features, apply_constraints, stochastic_observation_model, AugmentedFeatureMap, ConstraintKind,
    ConstraintSet, Mdp, MdpError, MinimalConstraint, Violation,
};

/// Upper bound on the number of unions the brute-force search evaluates.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("demonstration {index} is infeasible on the nominal MDP: {violation}")]
    InfeasibleDemo { index: usize, violation: Violation },
    #[error("no demonstration-respecting candidate")]
    NoCandidates,
    #[error("{combinations} combinations exceed the brute-force limit")]
    TooLarge { combinations: u128 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Accrual(#[from] AccrualError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub constraint: MinimalConstraint,
    pub eliminated_mass: f64,
    pub demo_respecting: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The best candidate's KL reduction did not exceed the threshold.
    Threshold,
    /// No selectable candidate remained.
    Exhausted,
    MaxIters,
    /// Every remaining candidate eliminates zero mass.
    NoPositiveMass,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Threshold => "threshold",
            StopReason::Exhausted => "exhausted",
            StopReason::MaxIters => "max_iters",
            StopReason::NoPositiveMass => "no_positive_mass",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub constraint: MinimalConstraint,
    /// Mass eliminated under the model the candidate was scored on.
    pub eliminated_mass: f64,
    pub kl_before: f64,
    pub kl_after: f64,
    pub delta_kl: f64,
    pub log_z_before: f64,
    pub log_z_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub selected: Vec<MinimalConstraint>,
    /// Accepted iterations in order.
    pub iterations: Vec<IterationLog>,
    /// The candidate whose evaluation ended the loop, when one was scored.
    pub rejected: Option<IterationLog>,
    pub stop_reason: StopReason,
    pub initial_kl: f64,
    pub final_kl: f64,
    pub final_log_z: f64,
}

impl InferenceResult {
    pub fn constraint_set(&self) -> ConstraintSet {
        ConstraintSet::from_minimal(self.selected.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceConfig {
    pub threshold: f64,
    /// Defaults to `n_φ` when `None`.
    pub max_iters: Option<usize>,
    pub kinds: Vec<ConstraintKind>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self { threshold: 0.1, max_iters: None, kinds: ConstraintKind::ALL.to_vec() }
    }
}

impl InferenceConfig {
    pub fn with_threshold(threshold: f64) -> Self {
        Self { threshold, ..Self::default() }
    }
}

/// Union of the augmented indicators accrued by any demonstration.
fn demo_footprint(map: &AugmentedFeatureMap, demos: &DemoSet) -> FixedBitSet {
    let mut bits = FixedBitSet::with_capacity(map.n_phi());
    for (xi, _) in demos.distinct() {
        bits.union_with(&accrued_features(map, xi));
    }
    bits
}

fn check_demos(mdp: &Mdp, demos: &DemoSet) -> Result<(), InferenceError> {
    match demos.first_infeasible(mdp) {
        Some((index, violation)) => Err(InferenceError::InfeasibleDemo { index, violation }),
        None => Ok(()),
    }
}

/// Every minimal constraint with its nominal eliminated mass.
///
/// A hypothesis is demo-respecting iff no demonstration accrues its
/// indicator.
pub fn candidate_hypotheses(
    mdp: &Mdp,
    map: &AugmentedFeatureMap,
    demos: &DemoSet,
) -> Result<Vec<Hypothesis>, InferenceError> {
    check_demos(mdp, demos)?;
    let (pol, _) = backward_pass(mdp)?;
    let masses = feature_accrual_history(mdp, map, &pol)?.final_column();
    let footprint = demo_footprint(map, demos);
    Ok(map
        .constraints()
        .enumerate()
        .map(|(i, constraint)| Hypothesis {
            constraint,
            eliminated_mass: masses[i],
            demo_respecting: !footprint.contains(i),
        })
        .collect())
}

/// Descending mass, ties in canonical constraint order.
fn by_mass(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.eliminated_mass.total_cmp(&a.eliminated_mass).then_with(|| a.constraint.cmp(&b.constraint))
}

/// Rescores `hyps` by the accrual pass on `(mdp, pol)` and ranks the
/// demo-respecting ones.
fn rank(
    mdp: &Mdp,
    map: &AugmentedFeatureMap,
    pol: &TimeVaryingPolicy,
    hyps: &[Hypothesis],
) -> Result<Vec<Hypothesis>, InferenceError> {
    let masses = feature_accrual_history(mdp, map, pol)?.final_column();
    let mut ranked: Vec<Hypothesis> = hyps
        .iter()
        .filter(|h| h.demo_respecting)
        .map(|h| Hypothesis { eliminated_mass: masses[map.index_of(h.constraint)], ..*h })
        .collect();
    ranked.sort_by(by_mass);
    Ok(ranked)
}

/// The demo-respecting hypothesis eliminating the most mass under `pol`.
pub fn select_max_likelihood_constraint(
    mdp: &Mdp,
    pol: &TimeVaryingPolicy,
    hyps: &[Hypothesis],
) -> Result<Hypothesis, InferenceError> {
    let map = AugmentedFeatureMap::new(mdp);
    rank(mdp, &map, pol, hyps)?.into_iter().next().ok_or(InferenceError::NoCandidates)
}

/// The model a constraint set induces: observed MDP, its scoring policy, and
/// the demonstrations' KL divergence from it.
struct Scored {
    mdp: Mdp,
    policy: TimeVaryingPolicy,
    log_z: f64,
    kl: f64,
}

/// Closes `c` on `nominal`, or `None` when a demonstration would become
/// infeasible or nothing survives.
fn demo_preserving(nominal: &Mdp, c: &ConstraintSet, demos: &DemoSet) -> Option<ConstraintSet> {
    let closed = c.closed(nominal);
    let observed = stochastic_observation_model(nominal, &closed).ok()?;
    demos.all_feasible(&observed.mdp).then_some(closed)
}

fn score(nominal: &Mdp, closed: &ConstraintSet, demos: &DemoSet) -> Result<Scored, InferenceError> {
    let observed = stochastic_observation_model(nominal, closed)?;
    let (pol, z) = backward_pass(&observed.mdp)?;
    let kl = kl_empirical_model(demos, &observed.mdp, &z)?;
    let policy = observed.observe_policy(&pol);
    Ok(Scored { mdp: observed.mdp, policy, log_z: z.log_z, kl })
}

/// Greedy iterative constraint inference with a KL stopping rule.
///
/// Each iteration rescores all remaining demo-respecting hypotheses by
/// the accrual pass on the currently constrained model, takes the highest-mass
/// candidate whose addition keeps every demonstration feasible, and accepts
/// it iff the KL divergence drops by more than `config.threshold`.
pub fn greedy_iterative_inference(
    mdp: &Mdp,
    demos: &DemoSet,
    config: &InferenceConfig,
) -> Result<InferenceResult, InferenceError> {
    if config.threshold.is_nan() || config.threshold < 0.0 {
        return Err(InferenceError::InvalidArgument(format!(
            "threshold must be non-negative, got {}",
            config.threshold
        )));
    }
    check_demos(mdp, demos)?;
    let map = AugmentedFeatureMap::new(mdp);
    let max_iters = config.max_iters.unwrap_or(map.n_phi());
    let footprint = demo_footprint(&map, demos);
    let mut pool: Vec<Hypothesis> = map
        .constraints()
        .enumerate()
        .filter(|(_, c)| config.kinds.contains(&c.kind))
        .map(|(i, constraint)| Hypothesis { constraint, eliminated_mass: 0.0, demo_respecting: !footprint.contains(i) })
        .collect();

    // the empty set's closure prunes dead ends already present in the nominal model
    let mut selected = ConstraintSet::new().closed(mdp);
    let mut current = score(mdp, &selected, demos)?;
    let initial_kl = current.kl;
    let mut iterations = Vec::new();
    let mut rejected = None;
    let stop_reason = loop {
        if iterations.len() >= max_iters {
            break StopReason::MaxIters;
        }
        pool.retain(|h| !selected.contains(&h.constraint));
        let ranked = rank(&current.mdp, &map, &current.policy, &pool)?;
        let positive: Vec<&Hypothesis> = ranked.iter().filter(|h| h.eliminated_mass > 0.0).collect();
        if positive.is_empty() {
            break if ranked.is_empty() { StopReason::Exhausted } else { StopReason::NoPositiveMass };
        }
        let chosen = positive
            .par_iter()
            .find_map_first(|h| demo_preserving(mdp, &selected.with(h.constraint), demos).map(|closed| (**h, closed)));
        let Some((hyp, closed)) = chosen else {
            break StopReason::Exhausted;
        };
        let next = score(mdp, &closed, demos)?;
        let entry = IterationLog {
            iteration: iterations.len() + 1,
            constraint: hyp.constraint,
            eliminated_mass: hyp.eliminated_mass,
            kl_before: current.kl,
            kl_after: next.kl,
            delta_kl: current.kl - next.kl,
            log_z_before: current.log_z,
            log_z_after: next.log_z,
        };
        if !(entry.delta_kl > config.threshold) {
            rejected = Some(entry);
            break StopReason::Threshold;
        }
        selected = closed;
        current = next;
        iterations.push(entry);
    };
    Ok(InferenceResult {
        selected: selected.minimal().to_vec(),
        iterations,
        rejected,
        stop_reason,
        initial_kl,
        final_kl: current.kl,
        final_log_z: current.log_z,
    })
}

/// Nominal mass eliminated by the first `i` selections, for each `i`.
pub fn greedy_coverage(mdp: &Mdp, result: &InferenceResult) -> Result<Vec<f64>, InferenceError> {
    let (pol, _) = backward_pass(mdp)?;
    (1..=result.selected.len())
        .map(|i| {
            let c = ConstraintSet::from_minimal(result.selected[..i].iter().copied());
            Ok(eliminated_mass_compound(mdp, &pol, &c)?)
        })
        .collect()
}

/// `n choose k` for `k ≤ n`, saturating at `u128::MAX`.
fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k) as u128;
    let n = n as u128;
    let mut acc = 1u128;
    for i in 0..k {
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for pos in (0..k).rev() {
        if idx[pos] < n - k + pos {
            idx[pos] += 1;
            for j in pos + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exhaustive search for the union of at most `n_c` demo-respecting minimal
/// constraints eliminating the most nominal mass.
///
/// Unions may repeat a constraint, so every size up to `n_c` is searched.
/// Unions whose closure would make a demonstration infeasible are not
/// admissible. Ties keep the smallest union, then the lexicographically
/// first in canonical order.
pub fn brute_force_best_combination(
    mdp: &Mdp,
    demos: &DemoSet,
    n_c: usize,
    kinds: &[ConstraintKind],
) -> Result<(ConstraintSet, f64), InferenceError> {
    check_demos(mdp, demos)?;
    let map = AugmentedFeatureMap::new(mdp);
    let footprint = demo_footprint(&map, demos);
    let candidates: Vec<MinimalConstraint> = map
        .constraints()
        .enumerate()
        .filter(|(i, c)| kinds.contains(&c.kind) && !footprint.contains(*i))
        .map(|(_, c)| c)
        .collect();
    if candidates.is_empty() {
        return Err(InferenceError::NoCandidates);
    }
    let max_k = n_c.min(candidates.len());
    let combinations = (1..=max_k).fold(0u128, |acc, k| acc.saturating_add(binomial(candidates.len(), k)));
    if combinations > BRUTE_FORCE_LIMIT {
        return Err(InferenceError::TooLarge { combinations });
    }
    let (pol, _) = backward_pass(mdp)?;
    let mut best: Option<(ConstraintSet, f64)> = None;
    for k in 1..=max_k {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            let c = ConstraintSet::from_minimal(idx.iter().map(|&i| candidates[i]));
            if demo_preserving(mdp, &c, demos).is_some() {
                let mass = eliminated_mass_compound(mdp, &pol, &c)?;
                if best.as_ref().is_none_or(|(_, m)| mass > *m) {
                    best = Some((c, mass));
                }
            }
            if !next_combination(&mut idx, candidates.len()) {
                break;
            }
        }
    }
    best.ok_or(InferenceError::NoCandidates)
}

/// State-action pairs of `mdp` that the true system forbids: available in
/// the nominal model but not after applying `truth` with its closure.
pub fn forbidden_pairs(mdp: &Mdp, truth: &ConstraintSet) -> BTreeSet<(usize, usize)> {
    match apply_constraints(mdp, truth) {
        Ok(true_mdp) => mdp.available_pairs().filter(|&(s, a)| !true_mdp.is_available(s, a)).collect(),
        Err(_) => mdp.available_pairs().collect(),
    }
}

/// Fraction of selected constraints that are not constraints of the true
/// system; a selection is true iff all its nominal pairs are forbidden.
pub fn false_positive_rate(mdp: &Mdp, selected: &[MinimalConstraint], truth: &ConstraintSet) -> f64 {
    if selected.is_empty() {
        return 0.0;
    }
    let forbidden = forbidden_pairs(mdp, truth);
    let false_positives = selected
        .iter()
        .filter(|c| !mdp.available_pairs().filter(|&(s, a)| c.contains(mdp, s, a)).all(|p| forbidden.contains(&p)))
        .count();
    false_positives as f64 / selected.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{MdpBuilder, Trajectory};

    /// Two one-step routes from 0; route 1 (via state 2) is more rewarding.
    fn fork() -> Mdp {
        MdpBuilder::new(3, 2, 2)
            .edge(0, 0, 1, &[1.0, 0.0])
            .edge(0, 1, 2, &[0.0, 1.0])
            .edge(1, 0, 1, &[0.0, 0.0])
            .edge(2, 0, 2, &[0.0, 0.0])
            .start(0)
            .reward_weights(vec![0.0, 2.0])
            .horizon(1)
            .build()
            .unwrap()
    }

    fn demos_via_1(n: usize) -> DemoSet {
        DemoSet::new(vec![Trajectory::new(vec![0, 1], vec![0]); n]).unwrap()
    }

    #[test]
    fn hypotheses_mark_demo_footprint() {
        let mdp = fork();
        let map = AugmentedFeatureMap::new(&mdp);
        let hyps = candidate_hypotheses(&mdp, &map, &demos_via_1(3)).unwrap();
        assert_eq!(hyps.len(), map.n_phi());
        let respecting: Vec<String> =
            hyps.iter().filter(|h| h.demo_respecting).map(|h| h.constraint.to_string()).collect();
        // the final state is never acted in, so no demo accrues it
        assert_eq!(respecting, ["feature:1", "state:1", "state:2", "action:1"]);
    }

    #[test]
    fn greedy_picks_planted_route() {
        let mdp = fork();
        let res = greedy_iterative_inference(&mdp, &demos_via_1(5), &InferenceConfig::with_threshold(0.1)).unwrap();
        // every candidate removes the same route; canonical order prefers the feature
        assert_eq!(res.selected, vec![MinimalConstraint::feature(1)]);
        assert!(res.final_kl.abs() < 1e-12);
        let first = &res.iterations[0];
        assert!((first.delta_kl - (first.log_z_before - first.log_z_after)).abs() < 1e-12);
    }

    #[test]
    fn infinite_threshold_selects_nothing() {
        let mdp = fork();
        let res =
            greedy_iterative_inference(&mdp, &demos_via_1(2), &InferenceConfig::with_threshold(f64::INFINITY)).unwrap();
        assert!(res.selected.is_empty());
        assert_eq!(res.stop_reason, StopReason::Threshold);
        assert_eq!(res.rejected.unwrap().iteration, 1);
    }

    #[test]
    fn negative_threshold_rejected() {
        let err = greedy_iterative_inference(&fork(), &demos_via_1(1), &InferenceConfig::with_threshold(-1.0));
        assert!(matches!(err, Err(InferenceError::InvalidArgument(_))));
    }

    #[test]
    fn brute_force_single_matches_select() {
        let mdp = fork();
        let demos = demos_via_1(1);
        let (best, mass) = brute_force_best_combination(&mdp, &demos, 1, &ConstraintKind::ALL).unwrap();
        let (pol, _) = backward_pass(&mdp).unwrap();
        let map = AugmentedFeatureMap::new(&mdp);
        let hyps = candidate_hypotheses(&mdp, &map, &demos).unwrap();
        let top = select_max_likelihood_constraint(&mdp, &pol, &hyps).unwrap();
        assert_eq!(best.minimal(), &[top.constraint]);
        assert!((mass - top.eliminated_mass).abs() < 1e-12);
    }

    #[test]
    fn select_without_candidates() {
        let mdp = fork();
        let (pol, _) = backward_pass(&mdp).unwrap();
        assert_eq!(select_max_likelihood_constraint(&mdp, &pol, &[]), Err(InferenceError::NoCandidates));
    }

    #[test]
    fn false_positive_counts() {
        let mdp = fork();
        let truth = ConstraintSet::from_minimal([MinimalConstraint::state(2)]);
        assert_eq!(false_positive_rate(&mdp, &[], &truth), 0.0);
        // feature 1 lives only on (0,1), which closure forbids
        assert_eq!(false_positive_rate(&mdp, &[MinimalConstraint::feature(1)], &truth), 0.0);
        assert_eq!(false_positive_rate(&mdp, &[MinimalConstraint::state(1)], &truth), 1.0);
        let mixed = [MinimalConstraint::action(1), MinimalConstraint::state(1)];
        assert_eq!(false_positive_rate(&mdp, &mixed, &truth), 0.5);
    }

    #[test]
    fn combination_helpers() {
        assert_eq!(binomial(12, 3), 220);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(5, 5), 1);
        let mut idx = vec![0, 1];
        let mut n = 1;
        while next_combination(&mut idx, 4) {
            n += 1;
        }
        assert_eq!(n, 6);
    }
}
