//! Episode storage, prioritized sampling and construction of the K-step
//! unroll targets consumed by the trainer.

use std::collections::VecDeque;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// One finished episode: observations `o_0..o_T`, actions `a_1..a_T`,
/// rewards `u_1..u_T`, and the per-position search policies and values.
#[derive(Debug, Clone, PartialEq)]
pub struct GameHistory {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub policies: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

impl GameHistory {
    /// Number of environment steps T.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.actions.len();
        if t == 0 {
            return Err(Error::InvalidArgument("empty game".into()));
        }
        if self.rewards.len() != t
            || self.observations.len() != t + 1
            || self.policies.len() != t
            || self.values.len() != t
        {
            return Err(Error::InvalidArgument(format!(
                "inconsistent game: {} observations, {} actions, {} rewards, {} policies, {} values",
                self.observations.len(),
                t,
                self.rewards.len(),
                self.policies.len(),
                self.values.len()
            )));
        }
        for pi in &self.policies {
            let sum: f64 = pi.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidArgument(format!(
                    "search policy sums to {sum}, expected 1"
                )));
            }
        }
        Ok(())
    }
}

/// n-step bootstrapped return target `z_t`: the discounted sum of up to `n`
/// real rewards after position `t`, plus a discounted stored search value
/// when the bootstrap position is still inside the episode.
pub fn compute_z(game: &GameHistory, t: usize, n: usize, discount: f64) -> f64 {
    assert!(t < game.observations.len(), "position out of range");
    let steps = game.len();
    let mut z = 0.0;
    let mut scale = 1.0;
    for i in 1..=n {
        let idx = t + i;
        if idx > steps {
            break;
        }
        z += scale * game.rewards[idx - 1];
        scale *= discount;
    }
    if t + n < steps {
        z += discount.powi(n as i32) * game.values[t + n];
    }
    z
}

/// Targets for one unroll step k.
#[derive(Debug, Clone)]
pub struct StepTarget {
    pub reward: f64,
    pub value: f64,
    pub policy: Vec<f64>,
    pub observation: Vec<f64>,
    pub reward_valid: bool,
    pub value_valid: bool,
    pub policy_valid: bool,
    pub obs_valid: bool,
}

impl StepTarget {
    /// An absorbing step lies past the episode end; it contributes no loss.
    pub fn absorbing(&self) -> bool {
        !self.policy_valid
    }
}

/// One training sample: the root observation, the K actions to unroll with,
/// and K+1 per-step targets.
#[derive(Debug, Clone)]
pub struct TrainingTarget {
    pub observation: Vec<f64>,
    pub actions: Vec<usize>,
    pub steps: Vec<StepTarget>,
}

/// Identifies a sampled position for later priority updates; stable under
/// eviction because games carry a monotonically increasing id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleIndex {
    pub game_id: u64,
    pub position: usize,
}

#[derive(Debug, Clone)]
pub struct ReplayConfig {
    pub capacity: usize,
    pub priority_exponent: f64,
    pub td_steps: usize,
    pub unroll_steps: usize,
    pub discount: f64,
}

#[derive(Debug, Clone)]
pub struct StoredGame {
    pub id: u64,
    pub game: GameHistory,
    pub priorities: Vec<f64>,
}

/// Bounded queue of games with per-position priorities; eviction is
/// oldest-first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    pub config: ReplayConfig,
    games: VecDeque<StoredGame>,
    next_id: u64,
    total_steps: u64,
    pub rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(config: ReplayConfig, rng: ChaCha8Rng) -> Self {
        ReplayBuffer {
            config,
            games: VecDeque::new(),
            next_id: 0,
            total_steps: 0,
            rng,
        }
    }

    pub fn len(&self) -> usize {
        self.games.len()
    }

    pub fn is_empty(&self) -> bool {
        self.games.is_empty()
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn games(&self) -> impl Iterator<Item = &StoredGame> {
        self.games.iter()
    }

    /// Restores buffer contents from a checkpoint.
    pub fn restore(&mut self, games: Vec<StoredGame>, next_id: u64, total_steps: u64) {
        self.games = games.into();
        self.next_id = next_id;
        self.total_steps = total_steps;
    }

    /// Appends a game, setting initial position priorities to the absolute
    /// error between the stored search value and the n-step return target.
    pub fn store_game(&mut self, game: GameHistory) -> Result<()> {
        game.validate()?;
        let priorities: Vec<f64> = (0..game.len())
            .map(|t| {
                (game.values[t] - compute_z(&game, t, self.config.td_steps, self.config.discount))
                    .abs()
            })
            .collect();
        self.total_steps += game.len() as u64;
        self.games.push_back(StoredGame {
            id: self.next_id,
            game,
            priorities,
        });
        self.next_id += 1;
        while self.games.len() > self.config.capacity {
            self.games.pop_front();
        }
        Ok(())
    }

    /// Draws `batch_size` positions with probability proportional to
    /// priority^exponent and builds their unroll targets.
    pub fn sample_batch(
        &mut self,
        batch_size: usize,
    ) -> Result<(Vec<TrainingTarget>, Vec<SampleIndex>)> {
        if self.games.is_empty() {
            return Err(Error::InvalidState("sample_batch on empty buffer".into()));
        }
        let mut weights = Vec::new();
        let mut positions = Vec::new();
        for (gi, stored) in self.games.iter().enumerate() {
            for (pos, &p) in stored.priorities.iter().enumerate() {
                weights.push(p.powf(self.config.priority_exponent));
                positions.push((gi, pos));
            }
        }
        let total: f64 = weights.iter().sum();
        let mut targets = Vec::with_capacity(batch_size);
        let mut indices = Vec::with_capacity(batch_size);
        if total > 0.0 {
            let dist = WeightedIndex::new(&weights)
                .map_err(|e| Error::InvalidState(format!("priority weights: {e}")))?;
            for _ in 0..batch_size {
                let (gi, pos) = positions[dist.sample(&mut self.rng)];
                indices.push(SampleIndex {
                    game_id: self.games[gi].id,
                    position: pos,
                });
                targets.push(self.make_target(gi, pos));
            }
        } else {
            // all priorities zero: fall back to uniform
            for _ in 0..batch_size {
                let (gi, pos) = positions[self.rng.gen_range(0..positions.len())];
                indices.push(SampleIndex {
                    game_id: self.games[gi].id,
                    position: pos,
                });
                targets.push(self.make_target(gi, pos));
            }
        }
        Ok((targets, indices))
    }

    /// Replaces priorities at previously sampled positions with the latest
    /// absolute value errors. Indices whose game was evicted are ignored.
    pub fn update_priorities(&mut self, indices: &[SampleIndex], value_errors: &[f64]) {
        assert_eq!(indices.len(), value_errors.len());
        for (idx, err) in indices.iter().zip(value_errors.iter()) {
            if let Some(stored) = self.games.iter_mut().find(|g| g.id == idx.game_id) {
                stored.priorities[idx.position] = err.abs();
            }
        }
    }

    fn make_target(&mut self, game_index: usize, t: usize) -> TrainingTarget {
        let cfg = &self.config;
        let (k_max, n, discount) = (cfg.unroll_steps, cfg.td_steps, cfg.discount);
        let game = &self.games[game_index].game;
        let steps_total = game.len();
        let action_count = game.policies[0].len();
        let obs_dim = game.observations[0].len();
        let uniform = vec![1.0 / action_count as f64; action_count];

        let mut step_targets = Vec::with_capacity(k_max + 1);
        for k in 0..=k_max {
            let idx = t + k;
            let policy_valid = idx < steps_total;
            let value_valid = idx < steps_total;
            let obs_valid = idx <= steps_total;
            let reward_valid = k >= 1 && idx <= steps_total;
            step_targets.push(StepTarget {
                reward: if reward_valid { game.rewards[idx - 1] } else { 0.0 },
                value: if value_valid {
                    compute_z(game, idx, n, discount)
                } else {
                    0.0
                },
                policy: if policy_valid {
                    game.policies[idx].clone()
                } else {
                    uniform.clone()
                },
                observation: if obs_valid {
                    game.observations[idx].clone()
                } else {
                    vec![0.0; obs_dim]
                },
                reward_valid,
                value_valid,
                policy_valid,
                obs_valid,
            });
        }

        let observation = game.observations[t].clone();
        let mut actions = Vec::with_capacity(k_max);
        for k in 1..=k_max {
            let idx = t + k;
            if idx <= steps_total {
                actions.push(game.actions[idx - 1]);
            } else {
                actions.push(self.rng.gen_range(0..action_count));
            }
        }
        TrainingTarget {
            observation,
            actions,
            steps: step_targets,
        }
    }
}
