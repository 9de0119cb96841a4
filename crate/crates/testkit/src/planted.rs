//! Random instances paired with demonstrations from a planted constraint set.

use mlci_core::maxent::{backward_pass, sample_trajectories, DemoSet};
use mlci_core::mdp::{stochastic_observation_model, AugmentedFeatureMap, ConstraintSet, MinimalConstraint};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::{random_instance, Instance};

#[derive(Debug, Clone)]
pub struct Planted {
    pub instance: Instance,
    /// Closed planted constraints; demonstrations never touch them.
    pub truth: ConstraintSet,
    pub demos: DemoSet,
}

/// Plants one or two random minimal constraints in [`random_instance`] and
/// samples `n_demos` demonstrations from the resulting observation model.
pub fn planted(rng: &mut ChaCha8Rng, i: usize, n_demos: usize) -> Planted {
    loop {
        let instance = random_instance(rng, i);
        let mdp = &instance.mdp;
        let all: Vec<MinimalConstraint> = AugmentedFeatureMap::new(mdp).constraints().collect();
        let k = rng.gen_range(1..=2);
        let truth = ConstraintSet::from_minimal(all.choose_multiple(rng, k).copied()).closed(mdp);
        let Ok(observed) = stochastic_observation_model(mdp, &truth) else { continue };
        let Ok((pol, _)) = backward_pass(&observed.mdp) else { continue };
        let seed = rng.gen();
        if let Ok(demos) = sample_trajectories(&observed.mdp, &pol, n_demos, seed) {
            return Planted { instance, truth, demos };
        }
    }
}
