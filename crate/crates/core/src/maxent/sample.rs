use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{DemoSet, SolverError, TimeVaryingPolicy};
use crate::mdp::{Mdp, Trajectory};

/// Draws `n` trajectories from `(π, P)`.
///
/// Trajectory `i` uses its own ChaCha stream `(seed, i)`, so the output is a
/// pure function of the seed regardless of how the work is scheduled.
pub fn sample_trajectories(mdp: &Mdp, pol: &TimeVaryingPolicy, n: usize, seed: u64) -> Result<DemoSet, SolverError> {
    if pol.horizon() != mdp.horizon() {
        return Err(SolverError::HorizonMismatch { policy: pol.horizon(), mdp: mdp.horizon() });
    }
    let demos = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            sample_one(mdp, pol, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;
    DemoSet::new(demos)
}

fn sample_one(mdp: &Mdp, pol: &TimeVaryingPolicy, rng: &mut ChaCha8Rng) -> Result<Trajectory, SolverError> {
    let horizon = mdp.horizon();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    let start = WeightedIndex::new(pol.initial_dist()).map_err(|_| SolverError::NoFeasibleTrajectory)?.sample(rng);
    states.push(start);
    let mut s = start;
    for t in 0..horizon {
        let available = mdp.available_actions(s);
        let weights: Vec<f64> = available.iter().map(|&a| pol.prob(t, s, a)).collect();
        let pick = WeightedIndex::new(&weights).map_err(|_| SolverError::DeadEnd { t, state: s })?;
        let a = available[pick.sample(rng)];
        let succ = mdp.successors(s, a);
        let next = if succ.len() == 1 {
            succ[0].state
        } else {
            let dist =
                WeightedIndex::new(succ.iter().map(|x| x.prob)).map_err(|_| SolverError::DeadEnd { t, state: s })?;
            succ[dist.sample(rng)].state
        };
        actions.push(a);
        states.push(next);
        s = next;
    }
    Ok(Trajectory::new(states, actions))
}
