//! Brute-force oracles and random small instances.
//!
//! Nothing here calls the solver or the accrual pass: trajectories are
//! enumerated depth-first from the MDP's raw tables and weighted directly.

pub mod checks;
pub mod planted;

use mlci_core::maxent::TimeVaryingPolicy;
use mlci_core::mdp::{Mdp, MdpBuilder, Successor, Trajectory};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Largest trajectory count a generated instance may have.
pub const MAX_TRAJECTORIES: u128 = 2000;

/// A feasible trajectory with `ln D_0(s_0) + βR(ξ) + Σ ln P(s_{t+1} | s_t, a_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Enumerated {
    pub trajectory: Trajectory,
    pub log_weight: f64,
    /// `βR(ξ)` alone.
    pub scaled_reward: f64,
}

fn pair_reward(mdp: &Mdp, s: usize, a: usize) -> f64 {
    // recomputed from the feature table where possible
    match mdp.reward_spec() {
        mlci_core::mdp::Reward::Linear(w) => mdp.feature(s, a).iter().zip(w).map(|(f, w)| f * w).sum(),
        mlci_core::mdp::Reward::Table(t) => t[s * mdp.n_actions() + a],
    }
}

/// Every feasible length-`T` trajectory, in depth-first order.
pub fn enumerate(mdp: &Mdp) -> Vec<Enumerated> {
    let mut out = Vec::new();
    for s0 in 0..mdp.n_states() {
        let d0 = mdp.initial_dist()[s0];
        if d0 > 0.0 {
            let mut states = vec![s0];
            let mut actions = Vec::new();
            walk(mdp, &mut states, &mut actions, d0.ln(), 0.0, 1.0, &mut out);
        }
    }
    out
}

fn walk(
    mdp: &Mdp,
    states: &mut Vec<usize>,
    actions: &mut Vec<usize>,
    log_dyn: f64,
    reward: f64,
    scale: f64,
    out: &mut Vec<Enumerated>,
) {
    let s = *states.last().expect("non-empty");
    let available = mdp.available_actions(s);
    if available.is_empty() {
        return;
    }
    if actions.len() == mdp.horizon() {
        let scaled = mdp.rationality() * reward;
        out.push(Enumerated {
            trajectory: Trajectory::new(states.clone(), actions.clone()),
            log_weight: log_dyn + scaled,
            scaled_reward: scaled,
        });
        return;
    }
    for &a in available {
        let r = reward + scale * pair_reward(mdp, s, a);
        for succ in mdp.successors(s, a) {
            if succ.prob <= 0.0 {
                continue;
            }
            states.push(succ.state);
            actions.push(a);
            walk(mdp, states, actions, log_dyn + succ.prob.ln(), r, scale * mdp.discount(), out);
            states.pop();
            actions.pop();
        }
    }
}

/// Every full-length rollout of `(π, P)` from the policy's initial marginal
/// with its probability `D_0'(s_0) Π π(a_t|s_t,t) P(s_{t+1}|s_t,a_t)`.
pub fn enumerate_rollouts(mdp: &Mdp, pol: &TimeVaryingPolicy) -> Vec<(Trajectory, f64)> {
    fn go(
        mdp: &Mdp,
        pol: &TimeVaryingPolicy,
        states: &mut Vec<usize>,
        actions: &mut Vec<usize>,
        p: f64,
        out: &mut Vec<(Trajectory, f64)>,
    ) {
        let t = actions.len();
        if t == mdp.horizon() {
            out.push((Trajectory::new(states.clone(), actions.clone()), p));
            return;
        }
        let s = *states.last().expect("non-empty");
        for &a in mdp.available_actions(s) {
            let pa = pol.prob(t, s, a);
            if pa == 0.0 {
                continue;
            }
            for succ in mdp.successors(s, a) {
                states.push(succ.state);
                actions.push(a);
                go(mdp, pol, states, actions, p * pa * succ.prob, out);
                states.pop();
                actions.pop();
            }
        }
    }
    let mut out = Vec::new();
    for (s0, &d) in pol.initial_dist().iter().enumerate() {
        if d > 0.0 {
            go(mdp, pol, &mut vec![s0], &mut Vec::new(), d, &mut out);
        }
    }
    out
}

/// Number of feasible trajectories, by counting paths backwards in time.
pub fn count_trajectories(mdp: &Mdp) -> u128 {
    let n = mdp.n_states();
    let mut count: Vec<u128> = (0..n).map(|s| u128::from(!mdp.available_actions(s).is_empty())).collect();
    for _ in 0..mdp.horizon() {
        count = (0..n)
            .map(|s| {
                mdp.available_actions(s)
                    .iter()
                    .flat_map(|&a| mdp.successors(s, a))
                    .filter(|x| x.prob > 0.0)
                    .map(|x| count[x.state])
                    .fold(0u128, |acc, c| acc.saturating_add(c))
            })
            .collect();
    }
    (0..n).filter(|&s| mdp.initial_dist()[s] > 0.0).map(|s| count[s]).fold(0, |acc, c| acc.saturating_add(c))
}

/// `log Σ_ξ exp(log_weight)`, shifted by the maximum for stability.
pub fn log_partition(items: &[Enumerated]) -> f64 {
    let m = items.iter().map(|e| e.log_weight).fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + items.iter().map(|e| (e.log_weight - m).exp()).sum::<f64>().ln()
}

/// Model probability of each enumerated trajectory.
pub fn probabilities(items: &[Enumerated]) -> Vec<f64> {
    let log_z = log_partition(items);
    items.iter().map(|e| (e.log_weight - log_z).exp()).collect()
}

/// Probability mass of trajectories containing a pair with `pred(s, a)`.
pub fn accrual_mass(items: &[Enumerated], pred: impl Fn(usize, usize) -> bool) -> f64 {
    let probs = probabilities(items);
    items
        .iter()
        .zip(&probs)
        .filter(|(e, _)| e.trajectory.states.iter().zip(&e.trajectory.actions).any(|(&s, &a)| pred(s, a)))
        .map(|(_, p)| p)
        .sum()
}

/// Shape of a generated instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// King-move grid with random action removals.
    Grid,
    /// Arbitrary small MDP with random stochastic successors.
    Random,
}

/// A random instance with at most [`MAX_TRAJECTORIES`] trajectories.
#[derive(Debug, Clone)]
pub struct Instance {
    pub mdp: Mdp,
    pub shape: Shape,
    pub width: usize,
    pub height: usize,
}

const KING: [(i64, i64); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

fn random_features(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| if rng.gen_bool(0.4) { 0.0 } else { (rng.gen_range(0.1..2.0f64) * 4.0).round() / 4.0 }).collect()
}

fn finish(rng: &mut ChaCha8Rng, b: MdpBuilder, n_states: usize, k: usize, max_horizon: usize) -> Option<Mdp> {
    let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.5..0.5)).collect();
    let mut initial = vec![0.0; n_states];
    initial[rng.gen_range(0..n_states)] += 0.7;
    initial[rng.gen_range(0..n_states)] += 0.3;
    if rng.gen_bool(0.5) {
        initial = vec![0.0; n_states];
        initial[rng.gen_range(0..n_states)] = 1.0;
    }
    let discount = if rng.gen_bool(0.3) { 0.9 } else { 1.0 };
    let rationality = *[0.5, 1.0, 1.0, 2.0].choose(rng).expect("non-empty");
    let base = b.initial(initial).reward_weights(weights).discount(discount).rationality(rationality);
    let mut horizon = rng.gen_range(1..=max_horizon);
    while horizon >= 1 {
        let mdp = base.clone().horizon(horizon).build().ok()?;
        let n = count_trajectories(&mdp);
        if (1..=MAX_TRAJECTORIES).contains(&n) {
            return Some(mdp);
        }
        horizon -= 1;
    }
    None
}

/// Grid of at most 4×4 cells with up to eight king moves per cell and
/// random action removals; deterministic.
pub fn random_grid(rng: &mut ChaCha8Rng) -> Instance {
    loop {
        let (w, h) = (rng.gen_range(1..=4), rng.gen_range(2..=4));
        let k = rng.gen_range(1..=3);
        let n = w * h;
        let mut b = MdpBuilder::new(n, 8, k);
        for s in 0..n {
            let (x, y) = ((s % w) as i64, (s / w) as i64);
            for (a, (dx, dy)) in KING.iter().enumerate() {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 || rng.gen_bool(0.3) {
                    continue;
                }
                b = b.edge(s, a, (ny as usize) * w + nx as usize, &random_features(rng, k));
            }
        }
        if let Some(mdp) = finish(rng, b, n, k, 6) {
            return Instance { mdp, shape: Shape::Grid, width: w, height: h };
        }
    }
}

/// Up to six states and three actions with one to three successors each.
/// Every state keeps at least one action, so no rollout mass is lost to
/// dead ends.
pub fn random_mdp(rng: &mut ChaCha8Rng) -> Instance {
    loop {
        let n = rng.gen_range(2..=6);
        let n_a = rng.gen_range(1..=3);
        let k = rng.gen_range(1..=3);
        let mut b = MdpBuilder::new(n, n_a, k);
        for s in 0..n {
            let kept = rng.gen_range(0..n_a);
            for a in 0..n_a {
                if a != kept && rng.gen_bool(0.25) {
                    continue;
                }
                let m = rng.gen_range(1..=3usize.min(n));
                let mut targets: Vec<usize> = (0..n).collect();
                targets.shuffle(rng);
                targets.truncate(m);
                targets.sort_unstable();
                let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
                let total: f64 = raw.iter().sum();
                let succ = targets.iter().zip(&raw).map(|(&t, p)| Successor::new(t, p / total)).collect();
                b = b.action(s, a, succ, &random_features(rng, k));
            }
        }
        if let Some(mdp) = finish(rng, b, n, k, 6) {
            return Instance { mdp, shape: Shape::Random, width: n, height: 1 };
        }
    }
}

/// Alternates grids and stochastic MDPs.
pub fn random_instance(rng: &mut ChaCha8Rng, i: usize) -> Instance {
    if i.is_multiple_of(2) {
        random_grid(rng)
    } else {
        random_mdp(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn chain_enumeration() {
        let mdp = MdpBuilder::new(2, 2, 1)
            .edge(0, 0, 0, &[1.0])
            .edge(0, 1, 1, &[0.0])
            .edge(1, 0, 1, &[0.0])
            .start(0)
            .reward_weights(vec![-1.0])
            .horizon(2)
            .build()
            .unwrap();
        let items = enumerate(&mdp);
        assert_eq!(items.len() as u128, count_trajectories(&mdp));
        // 00 -> rewards -2, 01 -> -1, 1x -> 0
        assert_eq!(items.len(), 3);
        let z: f64 = [-2.0f64, -1.0, 0.0].iter().map(|r| r.exp()).sum();
        assert!((log_partition(&items) - z.ln()).abs() < 1e-15);
    }

    #[test]
    fn generated_instances_are_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..40 {
            let inst = random_instance(&mut rng, i);
            let n = count_trajectories(&inst.mdp);
            assert!((1..=MAX_TRAJECTORIES).contains(&n));
            assert_eq!(enumerate(&inst.mdp).len() as u128, n);
        }
    }
}
