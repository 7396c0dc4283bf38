//! Deterministic mock models used by unit, integration and acceptance
//! tests. Mocks implement [`Inference`](crate::model::Inference) so the
//! planner and evaluation code run against hand-controlled dynamics.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::model::{Inference, ModelOutput};
use crate::Result;

/// Finite-horizon deterministic model. The latent state is the action path
/// taken so far; each transition up to `horizon` yields a reward drawn
/// deterministically from a seeded hash, everything deeper is zero. Values
/// are zero and priors uniform, so the optimal plan is decided purely by
/// the reward table.
#[derive(Debug, Clone)]
pub struct RewardTableMock {
    pub action_count: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl RewardTableMock {
    pub fn new(action_count: usize, horizon: usize, seed: u64) -> Self {
        RewardTableMock {
            action_count,
            horizon,
            seed,
        }
    }

    fn path_of(latent: &[f64]) -> Vec<usize> {
        latent.iter().map(|v| *v as usize).collect()
    }

    /// Reward in [0, 1) for reaching `path`, stable across calls.
    pub fn reward_for(&self, path: &[usize]) -> f64 {
        if path.len() > self.horizon {
            return 0.0;
        }
        let mut hasher = DefaultHasher::new();
        self.seed.hash(&mut hasher);
        path.hash(&mut hasher);
        (hasher.finish() >> 11) as f64 / (1u64 << 53) as f64
    }
}

impl Inference for RewardTableMock {
    fn action_count(&self) -> usize {
        self.action_count
    }

    fn initial_inference(&self, _observation: &[f64]) -> Result<ModelOutput> {
        Ok(ModelOutput {
            latent: Vec::new(),
            reward: 0.0,
            value: 0.0,
            policy_logits: vec![0.0; self.action_count],
        })
    }

    fn recurrent_inference(&self, latent: &[f64], action: usize) -> Result<ModelOutput> {
        let mut path = Self::path_of(latent);
        path.push(action);
        let reward = self.reward_for(&path);
        Ok(ModelOutput {
            latent: path.iter().map(|a| *a as f64).collect(),
            reward,
            value: 0.0,
            policy_logits: vec![0.0; self.action_count],
        })
    }
}

/// Model with uniform priors, zero rewards and zero values everywhere; the
/// search policy it induces is indistinguishable from a uniform-random
/// policy.
#[derive(Debug, Clone)]
pub struct UniformMock {
    pub action_count: usize,
}

impl Inference for UniformMock {
    fn action_count(&self) -> usize {
        self.action_count
    }

    fn initial_inference(&self, _observation: &[f64]) -> Result<ModelOutput> {
        Ok(ModelOutput {
            latent: Vec::new(),
            reward: 0.0,
            value: 0.0,
            policy_logits: vec![0.0; self.action_count],
        })
    }

    fn recurrent_inference(&self, _latent: &[f64], _action: usize) -> Result<ModelOutput> {
        self.initial_inference(&[])
    }
}

/// Pole-balancing expert: puts all prior mass on the action a simple
/// angle-plus-angular-velocity controller would take. Rewards and values
/// are zero, so the search has nothing to override the prior with and the
/// greedy action is always the controller's.
#[derive(Debug, Clone)]
pub struct CartPoleExpertMock;

impl CartPoleExpertMock {
    pub fn controller_action(observation: &[f64]) -> usize {
        let angle = observation[2];
        let angular_velocity = observation[3];
        if angle + angular_velocity > 0.0 {
            1
        } else {
            0
        }
    }
}

impl Inference for CartPoleExpertMock {
    fn action_count(&self) -> usize {
        2
    }

    fn initial_inference(&self, observation: &[f64]) -> Result<ModelOutput> {
        let action = Self::controller_action(observation);
        let mut logits = vec![-50.0; 2];
        logits[action] = 50.0;
        Ok(ModelOutput {
            latent: observation.to_vec(),
            reward: 0.0,
            value: 0.0,
            policy_logits: logits,
        })
    }

    fn recurrent_inference(&self, latent: &[f64], _action: usize) -> Result<ModelOutput> {
        // The mock cannot simulate; it keeps the latent frozen and keeps
        // recommending the controller action for it.
        let action = Self::controller_action(latent);
        let mut logits = vec![-50.0; 2];
        logits[action] = 50.0;
        Ok(ModelOutput {
            latent: latent.to_vec(),
            reward: 0.0,
            value: 0.0,
            policy_logits: logits,
        })
    }
}
