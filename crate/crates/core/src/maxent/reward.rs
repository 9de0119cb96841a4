use super::{backward_pass, demo_set_log_prob, DemoSet, SolverError};
use crate::accrual::expected_feature_counts;
use crate::mdp::Mdp;

/// Consecutive likelihood decreases treated as divergence.
const DIVERGENCE_STREAK: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct RewardFit {
    pub weights: Vec<f64>,
    /// Mean demonstration log-likelihood before each step.
    pub log_likelihood: Vec<f64>,
    /// Euclidean norm of the gradient before each step.
    pub gradient_norm: Vec<f64>,
}

/// Mean discounted feature counts of the demonstrations.
pub fn empirical_feature_counts(mdp: &Mdp, demos: &DemoSet) -> Vec<f64> {
    let mut counts = vec![0.0; mdp.n_features()];
    for (xi, c) in demos.distinct() {
        let mut scale = *c as f64 / demos.len() as f64;
        for (s, a) in xi.pairs() {
            for (acc, f) in counts.iter_mut().zip(mdp.feature(s, a)) {
                *acc += scale * f;
            }
            scale *= mdp.discount();
        }
    }
    counts
}

/// MaxEnt IRL by plain gradient ascent from `w = 0` with a fixed step.
///
/// The gradient of the mean log-likelihood is `β (f̄_D − E_w[f])`, the gap
/// between empirical and model-expected discounted feature counts. The
/// reward of `mdp_skeleton` is ignored.
pub fn learn_reward_weights(
    mdp_skeleton: &Mdp,
    demos: &DemoSet,
    step_size: f64,
    iterations: usize,
) -> Result<RewardFit, SolverError> {
    let k = mdp_skeleton.n_features();
    let empirical = empirical_feature_counts(mdp_skeleton, demos);
    let beta = mdp_skeleton.rationality();
    let mut fit = RewardFit {
        weights: vec![0.0; k],
        log_likelihood: Vec::with_capacity(iterations),
        gradient_norm: Vec::with_capacity(iterations),
    };
    let mut streak = 0;
    for iteration in 0..iterations {
        let mdp = mdp_skeleton.with_reward_weights(fit.weights.clone()).expect("weight count matches the skeleton");
        let (pol, z) = backward_pass(&mdp)?;
        let ll = demo_set_log_prob(&mdp, &z, demos)? / demos.len() as f64;
        if let Some(&prev) = fit.log_likelihood.last() {
            streak = if ll < prev { streak + 1 } else { 0 };
        }
        fit.log_likelihood.push(ll);
        if streak >= DIVERGENCE_STREAK {
            return Err(SolverError::Divergence { iteration, streak, fit: Box::new(fit) });
        }
        let expected = expected_feature_counts(&mdp, &pol).expect("policy from the same MDP");
        let grad: Vec<f64> = empirical.iter().zip(&expected).map(|(e, m)| beta * (e - m)).collect();
        fit.gradient_norm.push(grad.iter().map(|g| g * g).sum::<f64>().sqrt());
        for (w, g) in fit.weights.iter_mut().zip(&grad) {
            *w += step_size * g;
        }
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{MdpBuilder, Trajectory};

    #[test]
    fn zero_iterations_returns_zeros() {
        let mdp = MdpBuilder::new(1, 1, 2).edge(0, 0, 0, &[1.0, 0.5]).start(0).horizon(2).build().unwrap();
        let demos = DemoSet::new(vec![Trajectory::new(vec![0, 0, 0], vec![0, 0])]).unwrap();
        let fit = learn_reward_weights(&mdp, &demos, 0.1, 0).unwrap();
        assert_eq!(fit.weights, vec![0.0, 0.0]);
        assert!(fit.log_likelihood.is_empty());
    }

    #[test]
    fn descent_diverges_ascent_converges() {
        // two one-step choices, demos prefer the featured one 3:1
        let mdp = MdpBuilder::new(3, 2, 1)
            .edge(0, 0, 1, &[1.0])
            .edge(0, 1, 2, &[0.0])
            .edge(1, 0, 1, &[0.0])
            .edge(2, 0, 2, &[0.0])
            .start(0)
            .horizon(1)
            .build()
            .unwrap();
        let demos = DemoSet::new(vec![
            Trajectory::new(vec![0, 1], vec![0]),
            Trajectory::new(vec![0, 1], vec![0]),
            Trajectory::new(vec![0, 1], vec![0]),
            Trajectory::new(vec![0, 2], vec![1]),
        ])
        .unwrap();
        // a negative step descends the likelihood every iteration
        let err = learn_reward_weights(&mdp, &demos, -1.0, 100).unwrap_err();
        assert!(matches!(err, SolverError::Divergence { .. }));
        // a small step converges to logit(3/4)
        let fit = learn_reward_weights(&mdp, &demos, 1.0, 200).unwrap();
        assert!((fit.weights[0] - 3f64.ln()).abs() < 1e-6);
    }
}
