use std::collections::BTreeMap;

use super::{PartitionValue, SolverError};
use crate::mdp::{trajectory_reward, validate_trajectory, Feasibility, Mdp, Trajectory};

/// `N ≥ 1` demonstrations and their empirical distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoSet {
    demos: Vec<Trajectory>,
    /// Distinct trajectories with their counts, in trajectory order.
    distinct: Vec<(Trajectory, usize)>,
}

impl DemoSet {
    pub fn new(demos: Vec<Trajectory>) -> Result<Self, SolverError> {
        if demos.is_empty() {
            return Err(SolverError::EmptyDemoSet);
        }
        let mut counts: BTreeMap<&Trajectory, usize> = BTreeMap::new();
        for d in &demos {
            *counts.entry(d).or_default() += 1;
        }
        let distinct = counts.into_iter().map(|(t, c)| (t.clone(), c)).collect();
        Ok(Self { demos, distinct })
    }

    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }

    pub fn demos(&self) -> &[Trajectory] {
        &self.demos
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Trajectory> {
        self.demos.iter()
    }

    /// Distinct trajectories with counts.
    pub fn distinct(&self) -> &[(Trajectory, usize)] {
        &self.distinct
    }

    /// `(ξ, P_D(ξ))` over the empirical support.
    pub fn empirical(&self) -> impl Iterator<Item = (&Trajectory, f64)> + '_ {
        let n = self.demos.len() as f64;
        self.distinct.iter().map(move |(t, c)| (t, *c as f64 / n))
    }

    /// Index and violation of the first demo infeasible on `mdp`.
    pub fn first_infeasible(&self, mdp: &Mdp) -> Option<(usize, crate::mdp::Violation)> {
        self.demos.iter().enumerate().find_map(|(i, d)| match validate_trajectory(mdp, d) {
            Feasibility::Feasible => None,
            Feasibility::Infeasible(v) => Some((i, v)),
        })
    }

    pub fn all_feasible(&self, mdp: &Mdp) -> bool {
        self.distinct.iter().all(|(d, _)| validate_trajectory(mdp, d).is_feasible())
    }
}

impl<'a> IntoIterator for &'a DemoSet {
    type Item = &'a Trajectory;
    type IntoIter = std::slice::Iter<'a, Trajectory>;

    fn into_iter(self) -> Self::IntoIter {
        self.demos.iter()
    }
}

fn unchecked_log_prob(mdp: &Mdp, z: &PartitionValue, xi: &Trajectory) -> f64 {
    let reward = trajectory_reward(mdp, xi).expect("validated trajectory");
    mdp.rationality() * reward + mdp.initial_dist()[xi.states[0]].ln() - z.log_z
}

/// `log P(ξ) = βR(ξ) + log D_0(s_0) − log Z`.
///
/// Transition probabilities are not part of the trajectory weight. An
/// infeasible trajectory yields [`SolverError::InfeasibleTrajectory`]; its
/// probability is zero, so callers wanting a sentinel use `−∞`.
pub fn trajectory_log_prob(mdp: &Mdp, z: &PartitionValue, xi: &Trajectory) -> Result<f64, SolverError> {
    match validate_trajectory(mdp, xi) {
        Feasibility::Feasible => Ok(unchecked_log_prob(mdp, z, xi)),
        Feasibility::Infeasible(v) => Err(SolverError::InfeasibleTrajectory(v)),
    }
}

/// `Σ_{ξ∈D} log P(ξ)` under independence.
pub fn demo_set_log_prob(mdp: &Mdp, z: &PartitionValue, demos: &DemoSet) -> Result<f64, SolverError> {
    if let Some((index, violation)) = demos.first_infeasible(mdp) {
        return Err(SolverError::InfeasibleDemo { index, violation });
    }
    Ok(demos.distinct().iter().map(|(xi, c)| *c as f64 * unchecked_log_prob(mdp, z, xi)).sum())
}

/// `D_KL(P_D ‖ P_M)` summed over the demonstrated trajectories only.
pub fn kl_empirical_model(demos: &DemoSet, mdp: &Mdp, z: &PartitionValue) -> Result<f64, SolverError> {
    if let Some((index, violation)) = demos.first_infeasible(mdp) {
        return Err(SolverError::InfeasibleDemo { index, violation });
    }
    Ok(demos.empirical().map(|(xi, p)| p * (p.ln() - unchecked_log_prob(mdp, z, xi))).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maxent::backward_pass;
    use crate::mdp::MdpBuilder;

    /// Three parallel one-step routes from state 0.
    fn fan() -> Mdp {
        MdpBuilder::new(4, 3, 1)
            .edge(0, 0, 1, &[0.0])
            .edge(0, 1, 2, &[0.0])
            .edge(0, 2, 3, &[0.0])
            .edge(1, 0, 1, &[0.0])
            .edge(2, 0, 2, &[0.0])
            .edge(3, 0, 3, &[0.0])
            .start(0)
            .horizon(1)
            .build()
            .unwrap()
    }

    #[test]
    fn uniform_model_kl_is_log_m() {
        let mdp = fan();
        let (_, z) = backward_pass(&mdp).unwrap();
        let xi = Trajectory::new(vec![0, 2], vec![1]);
        let lp = trajectory_log_prob(&mdp, &z, &xi).unwrap();
        assert!((lp + 3f64.ln()).abs() < 1e-15);
        let demos = DemoSet::new(vec![xi.clone(); 4]).unwrap();
        let kl = kl_empirical_model(&demos, &mdp, &z).unwrap();
        assert!((kl - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn duplicate_demo_doubles() {
        let mdp = fan();
        let (_, z) = backward_pass(&mdp).unwrap();
        let xi = Trajectory::new(vec![0, 1], vec![0]);
        let one = demo_set_log_prob(&mdp, &z, &DemoSet::new(vec![xi.clone()]).unwrap()).unwrap();
        assert_eq!(one, trajectory_log_prob(&mdp, &z, &xi).unwrap());
        let two = demo_set_log_prob(&mdp, &z, &DemoSet::new(vec![xi.clone(), xi]).unwrap()).unwrap();
        assert_eq!(two, 2.0 * one);
    }

    #[test]
    fn infeasible_inputs() {
        let mdp = fan();
        let (_, z) = backward_pass(&mdp).unwrap();
        let bad = Trajectory::new(vec![0, 3], vec![0]);
        let err = trajectory_log_prob(&mdp, &z, &bad).unwrap_err();
        assert!(matches!(err, SolverError::InfeasibleTrajectory(_)));
        let demos = DemoSet::new(vec![Trajectory::new(vec![0, 1], vec![0]), bad]).unwrap();
        assert!(matches!(demo_set_log_prob(&mdp, &z, &demos), Err(SolverError::InfeasibleDemo { index: 1, .. })));
        assert_eq!(DemoSet::new(vec![]).unwrap_err(), SolverError::EmptyDemoSet);
    }
}
