//! The function quartet: representation `h`, dynamics `g`, prediction `f`
//! and the reconstruction decoder `h^-1`, plus the two inference entry
//! points consumed by the planner.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{Activation, Mlp, ParamStore};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub observation_dim: usize,
    pub latent_dim: usize,
    pub action_count: usize,
    pub hidden_sizes: Vec<usize>,
}

impl ModelConfig {
    pub fn new(observation_dim: usize, latent_dim: usize, action_count: usize) -> Self {
        ModelConfig {
            observation_dim,
            latent_dim,
            action_count,
            hidden_sizes: vec![64, 64],
        }
    }

    pub fn with_hidden(mut self, hidden: Vec<usize>) -> Self {
        self.hidden_sizes = hidden;
        self
    }

    fn layer_sizes(&self, input: usize, output: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden_sizes.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(&self.hidden_sizes);
        sizes.push(output);
        sizes
    }
}

/// Joint output of one inference call: next latent, reward and the
/// prediction head's value and pre-softmax policy.
#[derive(Debug, Clone)]
pub struct ModelOutput {
    pub latent: Vec<f64>,
    pub reward: f64,
    pub value: f64,
    pub policy_logits: Vec<f64>,
}

/// Minimal surface the planner needs from a model; implemented by the real
/// network model and by deterministic mocks in tests.
pub trait Inference {
    fn action_count(&self) -> usize;

    /// Embeds an observation and predicts value/policy for it. The reward is
    /// fixed at zero because no transition has happened yet.
    fn initial_inference(&self, observation: &[f64]) -> Result<ModelOutput>;

    /// Advances a latent state by one action, predicting the transition
    /// reward and value/policy for the successor state.
    fn recurrent_inference(&self, latent: &[f64], action: usize) -> Result<ModelOutput>;
}

#[derive(Debug, Clone)]
pub struct MuZeroModel {
    pub config: ModelConfig,
    pub params: ParamStore,
    /// observation -> latent
    pub repr: Mlp,
    /// latent ++ one-hot action -> latent ++ reward
    pub dynamics: Mlp,
    /// latent -> policy logits ++ value
    pub prediction: Mlp,
    /// latent -> observation estimate
    pub reconstruction: Mlp,
}

impl MuZeroModel {
    /// Allocates all four networks and draws weights from the seeded
    /// initializer. The same seed produces bit-identical parameters.
    pub fn new(config: ModelConfig, seed: u64) -> Self {
        let mut params = ParamStore::new();
        let d = config.latent_dim;
        let a = config.action_count;
        let o = config.observation_dim;
        let repr = Mlp::new(&mut params, "repr", &config.layer_sizes(o, d), Activation::Tanh);
        let dynamics = Mlp::new(
            &mut params,
            "dynamics",
            &config.layer_sizes(d + a, d + 1),
            Activation::Tanh,
        );
        let prediction = Mlp::new(
            &mut params,
            "prediction",
            &config.layer_sizes(d, a + 1),
            Activation::Tanh,
        );
        let reconstruction = Mlp::new(
            &mut params,
            "reconstruction",
            &config.layer_sizes(d, o),
            Activation::Tanh,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        repr.init_uniform(&mut params, &mut rng);
        dynamics.init_uniform(&mut params, &mut rng);
        prediction.init_uniform(&mut params, &mut rng);
        reconstruction.init_uniform(&mut params, &mut rng);
        MuZeroModel {
            config,
            params,
            repr,
            dynamics,
            prediction,
            reconstruction,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Splits a prediction-head output into (policy logits, value).
    pub fn split_prediction(&self, out: &[f64]) -> (Vec<f64>, f64) {
        let a = self.config.action_count;
        (out[..a].to_vec(), out[a])
    }

    /// Splits a dynamics output into (next latent, reward).
    pub fn split_dynamics(&self, out: &[f64]) -> (Vec<f64>, f64) {
        let d = self.config.latent_dim;
        (out[..d].to_vec(), out[d])
    }

    /// Concatenates a latent with a one-hot action for the dynamics input.
    pub fn dynamics_input(&self, latent: &[f64], action: usize) -> Vec<f64> {
        let mut input = Vec::with_capacity(latent.len() + self.config.action_count);
        input.extend_from_slice(latent);
        let mut one_hot = vec![0.0; self.config.action_count];
        one_hot[action] = 1.0;
        input.extend_from_slice(&one_hot);
        input
    }

    /// Decodes a latent state back to an observation estimate.
    pub fn reconstruct(&self, latent: &[f64]) -> Result<Vec<f64>> {
        self.check_latent(latent)?;
        let (obs, _) = self.reconstruction.forward(&self.params, latent)?;
        Ok(obs)
    }

    fn check_latent(&self, latent: &[f64]) -> Result<()> {
        if latent.len() != self.config.latent_dim {
            return Err(Error::Dimension {
                what: "latent state",
                expected: self.config.latent_dim,
                got: latent.len(),
            });
        }
        Ok(())
    }
}

impl Inference for MuZeroModel {
    fn action_count(&self) -> usize {
        self.config.action_count
    }

    fn initial_inference(&self, observation: &[f64]) -> Result<ModelOutput> {
        let (latent, _) = self.repr.forward(&self.params, observation)?;
        let (pred, _) = self.prediction.forward(&self.params, &latent)?;
        let (policy_logits, value) = self.split_prediction(&pred);
        Ok(ModelOutput {
            latent,
            reward: 0.0,
            value,
            policy_logits,
        })
    }

    fn recurrent_inference(&self, latent: &[f64], action: usize) -> Result<ModelOutput> {
        self.check_latent(latent)?;
        if action >= self.config.action_count {
            return Err(Error::InvalidArgument(format!(
                "action {action} out of range (action count {})",
                self.config.action_count
            )));
        }
        let input = self.dynamics_input(latent, action);
        let (dyn_out, _) = self.dynamics.forward(&self.params, &input)?;
        let (next_latent, reward) = self.split_dynamics(&dyn_out);
        let (pred, _) = self.prediction.forward(&self.params, &next_latent)?;
        let (policy_logits, value) = self.split_prediction(&pred);
        Ok(ModelOutput {
            latent: next_latent,
            reward,
            value,
            policy_logits,
        })
    }
}
