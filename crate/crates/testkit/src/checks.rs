//! Comparisons of solver output against the enumeration oracle, and the
//! invariants every solver, accrual and inference run must satisfy.

use mlci_core::accrual::feature_accrual_history;
use mlci_core::inference::{greedy_iterative_inference, InferenceConfig};
use mlci_core::maxent::backward_pass;
use mlci_core::mdp::{stochastic_observation_model, AugmentedFeatureMap, ConstraintSet, Mdp, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::planted::planted;
use crate::{enumerate, enumerate_rollouts, log_partition, probabilities};

/// Probability tolerance for sums that should be exactly one.
pub const SUM_TOL: f64 = 1e-9;
/// Slack for monotonicity and `[0, 1]` bounds, absorbing rounding only.
pub const ORDER_TOL: f64 = 1e-12;
/// Absolute floor below which relative errors are not meaningful.
pub const ABS_FLOOR: f64 = 1e-300;

/// `|a - b| / max(|b|, floor)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / b.abs().max(ABS_FLOOR)
}

/// Relative error of `Z` from the backward pass against the enumerated sum.
pub fn partition_error(mdp: &Mdp) -> Result<f64, String> {
    let (_, z) = backward_pass(mdp).map_err(|e| e.to_string())?;
    let oracle = log_partition(&enumerate(mdp));
    // exp(a) / exp(b) - 1, without overflow
    Ok((z.log_z - oracle).exp_m1().abs())
}

/// Indicator `i` of the augmented map at `(s, a)`, from the raw tables.
fn raw_indicator(mdp: &Mdp, i: usize, s: usize, a: usize) -> bool {
    let (k, n_s) = (mdp.n_features(), mdp.n_states());
    if i < k {
        mdp.feature(s, a)[i] > 0.0
    } else if i < k + n_s {
        s == i - k
    } else {
        a == i - k - n_s
    }
}

fn accrues(mdp: &Mdp, xi: &Trajectory, i: usize) -> bool {
    xi.states.iter().zip(&xi.actions).any(|(&s, &a)| raw_indicator(mdp, i, s, a))
}

/// Largest relative error between `Φ̃_T` and the enumerated mass of
/// rollouts of the backward-pass policy accruing each indicator.
///
/// On deterministic MDPs the rollouts are also compared with the MaxEnt
/// distribution `∝ D_0 e^{βR}`, which does not involve the policy at all.
pub fn accrual_error(mdp: &Mdp) -> Result<f64, String> {
    let (pol, _) = backward_pass(mdp).map_err(|e| e.to_string())?;
    let map = AugmentedFeatureMap::new(mdp);
    let hist = feature_accrual_history(mdp, &map, &pol).map_err(|e| e.to_string())?;
    let rollouts = enumerate_rollouts(mdp, &pol);
    let joint = if mdp.is_deterministic() {
        let items = enumerate(mdp);
        let probs = probabilities(&items);
        Some(items.into_iter().map(|e| e.trajectory).zip(probs).collect::<Vec<_>>())
    } else {
        None
    };
    let mut worst: f64 = 0.0;
    for (i, &phi) in hist.final_column().iter().enumerate() {
        for dist in std::iter::once(&rollouts).chain(joint.as_ref()) {
            let oracle: f64 = dist.iter().filter(|(xi, _)| accrues(mdp, xi, i)).map(|(_, p)| p).sum();
            worst = worst.max(relative_error(phi, oracle));
        }
    }
    Ok(worst)
}

/// Policy normalization, `Φ̃` bounds and monotonicity, and `Σ_s D_{s,t} = 1`
/// on the nominal model; demonstration feasibility after every accepted
/// prefix, KL monotonicity, and the `ΔD_KL = Δ log Z` identity on a greedy
/// run with threshold zero.
pub fn check_invariants(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = planted(&mut rng, (seed % 2) as usize, 1 + (seed % 6) as usize);
    let mdp = &p.instance.mdp;
    let fail = |what: &str| Err(format!("seed {seed}: {what}"));

    let (pol, z) = backward_pass(mdp).map_err(|e| e.to_string())?;
    for t in 0..mdp.horizon() {
        for s in 0..mdp.n_states() {
            if z.value(t, s) == f64::NEG_INFINITY {
                continue;
            }
            let total: f64 = (0..mdp.n_actions()).map(|a| pol.prob(t, s, a)).sum();
            if (total - 1.0).abs() > SUM_TOL {
                return fail(&format!("π(·|{s},{t}) sums to {total}"));
            }
            if (0..mdp.n_actions()).any(|a| !mdp.is_available(s, a) && pol.prob(t, s, a) != 0.0) {
                return fail(&format!("π(·|{s},{t}) puts mass off A_s"));
            }
        }
    }

    let map = AugmentedFeatureMap::new(mdp);
    let hist = feature_accrual_history(mdp, &map, &pol).map_err(|e| e.to_string())?;
    for t in 1..=hist.horizon() {
        let col = hist.column(t);
        if col.iter().any(|&v| !(-ORDER_TOL..=1.0 + ORDER_TOL).contains(&v)) {
            return fail(&format!("Φ̃_{t} leaves [0, 1]"));
        }
        if t > 1 && col.iter().zip(hist.column(t - 1)).any(|(v, prev)| *v < prev - ORDER_TOL) {
            return fail(&format!("Φ̃_{t} decreases"));
        }
    }
    for t in 0..=hist.horizon() {
        let total: f64 = (0..mdp.n_states()).map(|s| hist.visitation(t, s)).sum();
        if (total - 1.0).abs() > SUM_TOL {
            return fail(&format!("Σ_s D_(s,{t}) = {total}"));
        }
    }

    let result = greedy_iterative_inference(mdp, &p.demos, &InferenceConfig::with_threshold(0.0))
        .map_err(|e| format!("seed {seed}: {e}"))?;
    for i in 1..=result.selected.len() {
        let c = ConstraintSet::from_minimal(result.selected[..i].iter().copied()).closed(mdp);
        let observed = stochastic_observation_model(mdp, &c).map_err(|e| format!("seed {seed}: {e}"))?;
        if !p.demos.all_feasible(&observed.mdp) {
            return fail(&format!("demonstrations infeasible after {i} selections"));
        }
    }
    let mut kl = result.initial_kl;
    for it in &result.iterations {
        if it.kl_before != kl || it.kl_after > it.kl_before {
            return fail(&format!("KL not monotone at iteration {}", it.iteration));
        }
        let by_log_z = it.log_z_before - it.log_z_after;
        if (it.delta_kl - by_log_z).abs() > SUM_TOL {
            return fail(&format!("ΔD_KL {} vs Δ log Z {by_log_z}", it.delta_kl));
        }
        kl = it.kl_after;
    }
    if kl != result.final_kl {
        return fail("final KL differs from the last accepted iteration");
    }
    Ok(())
}

/// Largest number of demo-respecting candidates for a bound instance.
pub const BOUND_MAX_CANDIDATES: usize = 12;

/// `1 - ((i - 1) / i)^i`.
pub fn greedy_factor(i: usize) -> f64 {
    let i = i as f64;
    1.0 - ((i - 1.0) / i).powf(i)
}

/// Greedy and brute-force compound masses at one iteration count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRow {
    pub i: usize,
    pub greedy: f64,
    pub optimal: f64,
}

impl BoundRow {
    pub fn holds(&self) -> bool {
        self.greedy >= greedy_factor(self.i) * self.optimal - ORDER_TOL
    }
}

/// A deterministic planted grid with between 2 and
/// [`BOUND_MAX_CANDIDATES`] demo-respecting candidates.
pub fn bound_instance(rng: &mut ChaCha8Rng) -> crate::planted::Planted {
    use mlci_core::inference::candidate_hypotheses;
    loop {
        let n_demos = rng.gen_range(2..6);
        let p = planted(rng, 0, n_demos);
        let mdp = &p.instance.mdp;
        let map = AugmentedFeatureMap::new(mdp);
        let Ok(hyps) = candidate_hypotheses(mdp, &map, &p.demos) else { continue };
        let n = hyps.iter().filter(|h| h.demo_respecting).count();
        if (2..=BOUND_MAX_CANDIDATES).contains(&n) {
            return p;
        }
    }
}

/// Greedy cumulative mass after `i` iterations against the best `i`-union,
/// for `i = 1..=max_i`. A run that stops early keeps its last coverage.
pub fn greedy_bound_rows(p: &crate::planted::Planted, max_i: usize) -> Result<Vec<BoundRow>, String> {
    use mlci_core::inference::{brute_force_best_combination, greedy_coverage};
    use mlci_core::mdp::ConstraintKind;
    let mdp = &p.instance.mdp;
    let config = InferenceConfig { threshold: 0.0, max_iters: Some(max_i), ..InferenceConfig::default() };
    let result = greedy_iterative_inference(mdp, &p.demos, &config).map_err(|e| e.to_string())?;
    let coverage = greedy_coverage(mdp, &result).map_err(|e| e.to_string())?;
    (1..=max_i)
        .map(|i| {
            let greedy = coverage.get(i.min(coverage.len()).wrapping_sub(1)).copied().unwrap_or(0.0);
            let (_, optimal) =
                brute_force_best_combination(mdp, &p.demos, i, &ConstraintKind::ALL).map_err(|e| e.to_string())?;
            Ok(BoundRow { i, greedy, optimal })
        })
        .collect()
}

/// Three states, two actions; every action of states 0 and 1 risks a
/// transition into state 2, which the returned constraint empties.
pub fn stochastic_toy() -> (Mdp, ConstraintSet) {
    use mlci_core::mdp::{MdpBuilder, MinimalConstraint, Successor};
    let mdp = MdpBuilder::new(3, 2, 2)
        .action(0, 0, vec![Successor::new(0, 0.5), Successor::new(1, 0.3), Successor::new(2, 0.2)], &[1.0, 0.0])
        .action(0, 1, vec![Successor::new(1, 0.6), Successor::new(2, 0.4)], &[0.0, 1.0])
        .action(1, 0, vec![Successor::new(0, 0.7), Successor::new(2, 0.3)], &[0.5, 0.0])
        .action(1, 1, vec![Successor::new(1, 0.9), Successor::new(2, 0.1)], &[0.0, 0.5])
        .edge(2, 0, 2, &[0.0, 0.0])
        .action(2, 1, vec![Successor::new(0, 0.5), Successor::new(1, 0.5)], &[1.0, 1.0])
        .start(0)
        .reward_weights(vec![-0.5, -0.2])
        .horizon(4)
        .build()
        .expect("valid toy");
    let c = ConstraintSet::from_minimal([MinimalConstraint::state(2)]).closed(&mdp);
    (mdp, c)
}

/// Largest deviation of an observed transition row from one, and of `π^C`
/// from the enumerated action frequencies among pairs whose transition
/// avoids empty states.
///
/// The agent's policy is the MaxEnt policy of `M^C`; its rollouts follow
/// the original dynamics and are cut at the first empty state.
pub fn observation_errors(mdp: &Mdp, c: &ConstraintSet) -> Result<(f64, f64), String> {
    use mlci_core::mdp::apply_constraints;
    let observed = stochastic_observation_model(mdp, c).map_err(|e| e.to_string())?;
    let omdp = &observed.mdp;
    let empty: Vec<bool> = (0..mdp.n_states()).map(|s| omdp.is_empty_state(s)).collect();

    let mut row_err: f64 = 0.0;
    for (s, a) in omdp.available_pairs() {
        let succ = omdp.successors(s, a);
        if succ.iter().any(|x| empty[x.state]) {
            return Err(format!("observed row ({s}, {a}) still reaches an empty state"));
        }
        row_err = row_err.max((succ.iter().map(|x| x.prob).sum::<f64>() - 1.0).abs());
    }

    let agent = apply_constraints(mdp, c).map_err(|e| e.to_string())?;
    let (pol, _) = backward_pass(&agent).map_err(|e| e.to_string())?;
    let (n_s, n_a, horizon) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let mut tally = vec![0.0; horizon * n_s * n_a];
    // (t, s, prefix probability); prefixes never visit an empty state
    let mut stack: Vec<(usize, usize, f64)> =
        pol.initial_dist().iter().enumerate().filter(|(_, &d)| d > 0.0).map(|(s, &d)| (0, s, d)).collect();
    while let Some((t, s, w)) = stack.pop() {
        if t == horizon {
            continue;
        }
        for &a in agent.available_actions(s) {
            let pa = pol.prob(t, s, a);
            for x in mdp.successors(s, a) {
                if empty[x.state] {
                    continue;
                }
                tally[(t * n_s + s) * n_a + a] += w * pa * x.prob;
                stack.push((t + 1, x.state, w * pa * x.prob));
            }
        }
    }
    let pi_c = observed.observe_policy(&pol);
    let mut pol_err: f64 = 0.0;
    for t in 0..horizon {
        for s in 0..n_s {
            let row = &tally[(t * n_s + s) * n_a..(t * n_s + s + 1) * n_a];
            let total: f64 = row.iter().sum();
            if total == 0.0 {
                continue;
            }
            for (a, f) in row.iter().enumerate() {
                pol_err = pol_err.max((f / total - pi_c.prob(t, s, a)).abs());
            }
        }
    }
    Ok((row_err, pol_err))
}

/// On a deterministic instance the observation model equals
/// `apply_constraints` with the closure, and leaves policies unchanged.
pub fn deterministic_observation_matches(seed: u64) -> Result<(), String> {
    use mlci_core::mdp::apply_constraints;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = planted(&mut rng, 0, 1);
    let mdp = &p.instance.mdp;
    let observed = stochastic_observation_model(mdp, &p.truth).map_err(|e| e.to_string())?;
    let applied = apply_constraints(mdp, &p.truth).map_err(|e| e.to_string())?;
    if observed.mdp != applied {
        return Err(format!("seed {seed}: observation model differs from apply_constraints"));
    }
    let (pol, _) = backward_pass(&applied).map_err(|e| e.to_string())?;
    if observed.observe_policy(&pol) != pol {
        return Err(format!("seed {seed}: observed policy differs"));
    }
    Ok(())
}
