//! Loss assembly over the K-step unroll, the training step, self-play data
//! generation, schedules and the self-supervised pretraining mode.
//!
//! The unrolled loss couples five terms: reward, value and policy losses on
//! the dynamics/prediction heads, an observation-reconstruction loss through
//! the decoder, and a latent-consistency loss whose target branch (the
//! representation of the real future observation) is held constant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::envs::Environment;
use crate::model::{Inference, MuZeroModel};
use crate::nn::{adam_step, cross_entropy, mse, softmax, AdamState, CROSS_ENTROPY_EPS};
use crate::planner::{root_policy, run_mcts, MctsConfig};
use crate::replay::{GameHistory, ReplayBuffer, ReplayConfig, TrainingTarget};
use crate::{Error, Result};

/// Weights for the five loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub reward: f64,
    pub value: f64,
    pub policy: f64,
    pub reconstruction: f64,
    pub consistency: f64,
}

impl LossWeights {
    /// Plain MuZero: auxiliary weights zero.
    pub fn baseline(value_weight: f64) -> Self {
        LossWeights {
            reward: 1.0,
            value: value_weight,
            policy: 1.0,
            reconstruction: 0.0,
            consistency: 0.0,
        }
    }

    /// Self-supervised pretraining: only the auxiliary terms are active.
    pub fn pretraining() -> Self {
        LossWeights {
            reward: 0.0,
            value: 0.0,
            policy: 0.0,
            reconstruction: 1.0,
            consistency: 1.0,
        }
    }
}

/// Per-term loss values summed over the unroll, plus the weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub reward: f64,
    pub value: f64,
    pub policy: f64,
    pub reconstruction: f64,
    pub consistency: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn add(&mut self, other: &LossBreakdown) {
        self.reward += other.reward;
        self.value += other.value;
        self.policy += other.policy;
        self.reconstruction += other.reconstruction;
        self.consistency += other.consistency;
        self.total += other.total;
    }

    pub fn scale(&mut self, factor: f64) {
        self.reward *= factor;
        self.value *= factor;
        self.policy *= factor;
        self.reconstruction *= factor;
        self.consistency *= factor;
        self.total *= factor;
    }
}

/// Loss of one sample plus the k = 0 value prediction used to refresh
/// replay priorities.
#[derive(Debug, Clone)]
pub struct SampleLoss {
    pub breakdown: LossBreakdown,
    pub root_value: f64,
}

/// Stop-gradient consistency targets: the representation of each real
/// future observation along the unroll. `None` for k = 0 and for steps
/// without a stored observation.
pub fn consistency_targets(
    model: &MuZeroModel,
    target: &TrainingTarget,
) -> Result<Vec<Option<Vec<f64>>>> {
    let mut out = Vec::with_capacity(target.steps.len());
    for (k, step) in target.steps.iter().enumerate() {
        if k >= 1 && step.obs_valid {
            let (latent, _) = model.repr.forward(&model.params, &step.observation)?;
            out.push(Some(latent));
        } else {
            out.push(None);
        }
    }
    Ok(out)
}

/// Forward-only evaluation of the full unrolled loss. When `frozen` is
/// given it is used as the consistency target branch instead of
/// re-encoding the observations; finite-difference oracles use this to
/// probe the loss with the target branch held constant.
pub fn loss_forward(
    model: &MuZeroModel,
    target: &TrainingTarget,
    weights: &LossWeights,
    aux: bool,
    frozen: Option<&[Option<Vec<f64>>]>,
) -> Result<LossBreakdown> {
    let pass = unroll_forward(model, target, aux, frozen)?;
    Ok(loss_values(model, target, weights, aux, &pass))
}

/// Full training-path loss: forward, per-term values, and reverse-mode
/// gradient accumulation into the parameter store scaled by `scale`
/// (1 / batch size). The consistency target branch never receives
/// gradients. With `aux` false the reconstruction and consistency paths
/// are not constructed at all.
pub fn compute_losses(
    model: &mut MuZeroModel,
    target: &TrainingTarget,
    weights: &LossWeights,
    scale: f64,
    aux: bool,
) -> Result<SampleLoss> {
    let pass = unroll_forward(model, target, aux, None)?;
    let breakdown = loss_values(model, target, weights, aux, &pass);
    backward(model, target, weights, scale, aux, &pass);
    Ok(SampleLoss {
        breakdown,
        root_value: pass.values[0],
    })
}

/// All intermediate results of one unrolled forward pass.
struct ForwardPass {
    latents: Vec<Vec<f64>>,
    rewards: Vec<f64>,
    values: Vec<f64>,
    logits: Vec<Vec<f64>>,
    repr_tape: crate::nn::Tape,
    dynamics_tapes: Vec<crate::nn::Tape>,
    prediction_tapes: Vec<crate::nn::Tape>,
    reconstructions: Vec<Option<Vec<f64>>>,
    reconstruction_tapes: Vec<Option<crate::nn::Tape>>,
    consistency: Vec<Option<Vec<f64>>>,
}

fn unroll_forward(
    model: &MuZeroModel,
    target: &TrainingTarget,
    aux: bool,
    frozen: Option<&[Option<Vec<f64>>]>,
) -> Result<ForwardPass> {
    let k_max = target.steps.len() - 1;
    if target.actions.len() != k_max {
        return Err(Error::InvalidArgument(format!(
            "target has {} steps but {} unroll actions",
            target.steps.len(),
            target.actions.len()
        )));
    }
    let (s0, repr_tape) = model.repr.forward(&model.params, &target.observation)?;
    let mut latents = vec![s0];
    let mut rewards = Vec::with_capacity(k_max);
    let mut dynamics_tapes = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let input = model.dynamics_input(&latents[k - 1], target.actions[k - 1]);
        let (out, tape) = model.dynamics.forward(&model.params, &input)?;
        let (latent, reward) = model.split_dynamics(&out);
        latents.push(latent);
        rewards.push(reward);
        dynamics_tapes.push(tape);
    }
    let mut values = Vec::with_capacity(k_max + 1);
    let mut logits = Vec::with_capacity(k_max + 1);
    let mut prediction_tapes = Vec::with_capacity(k_max + 1);
    for latent in &latents {
        let (out, tape) = model.prediction.forward(&model.params, latent)?;
        let (l, v) = model.split_prediction(&out);
        logits.push(l);
        values.push(v);
        prediction_tapes.push(tape);
    }
    let mut reconstructions = vec![None; k_max + 1];
    let mut reconstruction_tapes = vec![None; k_max + 1];
    let mut consistency = vec![None; k_max + 1];
    if aux {
        for (k, step) in target.steps.iter().enumerate() {
            if step.obs_valid {
                let (obs_hat, tape) = model.reconstruction.forward(&model.params, &latents[k])?;
                reconstructions[k] = Some(obs_hat);
                reconstruction_tapes[k] = Some(tape);
            }
        }
        match frozen {
            Some(targets) => consistency = targets.to_vec(),
            None => consistency = consistency_targets(model, target)?,
        }
    }
    Ok(ForwardPass {
        latents,
        rewards,
        values,
        logits,
        repr_tape,
        dynamics_tapes,
        prediction_tapes,
        reconstructions,
        reconstruction_tapes,
        consistency,
    })
}

fn loss_values(
    _model: &MuZeroModel,
    target: &TrainingTarget,
    weights: &LossWeights,
    aux: bool,
    pass: &ForwardPass,
) -> LossBreakdown {
    let mut lb = LossBreakdown::default();
    for (k, step) in target.steps.iter().enumerate() {
        if step.reward_valid {
            let diff = pass.rewards[k - 1] - step.reward;
            lb.reward += diff * diff;
        }
        if step.value_valid {
            let diff = pass.values[k] - step.value;
            lb.value += diff * diff;
        }
        if step.policy_valid {
            let p = softmax(&pass.logits[k], 1.0).expect("policy logits nonempty");
            lb.policy += cross_entropy(&step.policy, &p);
        }
        if aux && step.obs_valid {
            if let Some(obs_hat) = &pass.reconstructions[k] {
                lb.reconstruction += mse(&step.observation, obs_hat);
            }
            if k >= 1 {
                if let Some(c_target) = &pass.consistency[k] {
                    lb.consistency += mse(c_target, &pass.latents[k]);
                }
            }
        }
    }
    lb.total = weights.reward * lb.reward
        + weights.value * lb.value
        + weights.policy * lb.policy
        + weights.reconstruction * lb.reconstruction
        + weights.consistency * lb.consistency;
    lb
}

fn backward(
    model: &mut MuZeroModel,
    target: &TrainingTarget,
    weights: &LossWeights,
    scale: f64,
    aux: bool,
    pass: &ForwardPass,
) {
    let k_max = target.steps.len() - 1;
    let d = model.config.latent_dim;
    let a_n = model.config.action_count;
    let mut d_latent = vec![vec![0.0; d]; k_max + 1];

    for (k, step) in target.steps.iter().enumerate() {
        // prediction head
        let mut head_grad = vec![0.0; a_n + 1];
        let mut head_active = false;
        if step.policy_valid && weights.policy != 0.0 {
            let p = softmax(&pass.logits[k], 1.0).expect("policy logits nonempty");
            // exact gradient of -sum t ln(p + eps) w.r.t. the logits
            let s: f64 = step
                .policy
                .iter()
                .zip(p.iter())
                .map(|(t, pi)| t * pi / (pi + CROSS_ENTROPY_EPS))
                .sum();
            for j in 0..a_n {
                let g = p[j] * s - step.policy[j] * p[j] / (p[j] + CROSS_ENTROPY_EPS);
                head_grad[j] = weights.policy * scale * g;
            }
            head_active = true;
        }
        if step.value_valid && weights.value != 0.0 {
            head_grad[a_n] = weights.value * scale * 2.0 * (pass.values[k] - step.value);
            head_active = true;
        }
        if head_active {
            let input_grad =
                model
                    .prediction
                    .backward(&mut model.params, &pass.prediction_tapes[k], &head_grad);
            accumulate(&mut d_latent[k], &input_grad);
        }
        // reconstruction decoder
        if aux && weights.reconstruction != 0.0 {
            if let (Some(obs_hat), Some(tape)) =
                (&pass.reconstructions[k], &pass.reconstruction_tapes[k])
            {
                let n = obs_hat.len() as f64;
                let obs_grad: Vec<f64> = obs_hat
                    .iter()
                    .zip(step.observation.iter())
                    .map(|(o_hat, o)| weights.reconstruction * scale * 2.0 * (o_hat - o) / n)
                    .collect();
                let input_grad =
                    model
                        .reconstruction
                        .backward(&mut model.params, tape, &obs_grad);
                accumulate(&mut d_latent[k], &input_grad);
            }
        }
        // consistency: gradient flows only through the unrolled latent
        if aux && weights.consistency != 0.0 && k >= 1 {
            if let Some(c_target) = &pass.consistency[k] {
                for i in 0..d {
                    d_latent[k][i] += weights.consistency
                        * scale
                        * 2.0
                        * (pass.latents[k][i] - c_target[i])
                        / d as f64;
                }
            }
        }
    }

    // chain back through the dynamics function to reach the representation
    for k in (1..=k_max).rev() {
        let step = &target.steps[k];
        let mut out_grad = d_latent[k].clone();
        let reward_grad = if step.reward_valid && weights.reward != 0.0 {
            weights.reward * scale * 2.0 * (pass.rewards[k - 1] - step.reward)
        } else {
            0.0
        };
        out_grad.push(reward_grad);
        if out_grad.iter().all(|g| *g == 0.0) {
            continue;
        }
        let input_grad =
            model
                .dynamics
                .backward(&mut model.params, &pass.dynamics_tapes[k - 1], &out_grad);
        accumulate(&mut d_latent[k - 1], &input_grad[..d]);
    }
    if d_latent[0].iter().any(|g| *g != 0.0) {
        model
            .repr
            .backward(&mut model.params, &pass.repr_tape, &d_latent[0]);
    }
}

fn accumulate(acc: &mut [f64], grad: &[f64]) {
    for (a, g) in acc.iter_mut().zip(grad.iter()) {
        *a += g;
    }
}

/// Learning-rate and temperature schedules as functions of the training
/// step.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedules {
    pub lr_init: f64,
    pub lr_decay_rate: f64,
    pub lr_decay_steps: f64,
    pub temperature_thresholds: Vec<u64>,
    pub temperature_values: Vec<f64>,
}

impl Schedules {
    pub fn lr(&self, t: u64) -> f64 {
        self.lr_init
            * self.lr_decay_rate.powf(t as f64 / self.lr_decay_steps)
    }

    pub fn temperature(&self, t: u64) -> f64 {
        for (i, &threshold) in self.temperature_thresholds.iter().enumerate() {
            if t < threshold {
                return self.temperature_values[i];
            }
        }
        *self.temperature_values.last().expect("nonempty temperatures")
    }
}

/// One optimizer step: sample a prioritized batch, average the unrolled
/// losses over it, apply Adam at the scheduled rate and refresh replay
/// priorities with the new value errors.
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    model: &mut MuZeroModel,
    opt: &mut AdamState,
    buffer: &mut ReplayBuffer,
    weights: &LossWeights,
    schedules: &Schedules,
    l2_weight: f64,
    batch_size: usize,
    t: u64,
    aux: bool,
) -> Result<LossBreakdown> {
    let (targets, indices) = buffer.sample_batch(batch_size)?;
    let scale = 1.0 / targets.len() as f64;
    let mut sum = LossBreakdown::default();
    let mut errors = Vec::with_capacity(targets.len());
    for target in &targets {
        let sample = compute_losses(model, target, weights, scale, aux)?;
        sum.add(&sample.breakdown);
        errors.push((sample.root_value - target.steps[0].value).abs());
    }
    sum.scale(scale);
    adam_step(&mut model.params, opt, schedules.lr(t), l2_weight);
    buffer.update_priorities(&indices, &errors);
    Ok(sum)
}

/// Plays one episode with search-guided actions sampled from the
/// visit-count policy at the given temperature, with root noise. Stores
/// the T=1 visit distribution and the search value as training targets.
pub fn self_play_episode<M: Inference>(
    model: &M,
    env: &mut dyn Environment,
    mcts: &MctsConfig,
    temperature: f64,
    episode_seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<GameHistory> {
    let mut observations = vec![env.reset(episode_seed)];
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    let mut policies = Vec::new();
    let mut values = Vec::new();
    loop {
        let obs = observations.last().unwrap().clone();
        let search = run_mcts(model, &obs, mcts, true, rng)?;
        let act_policy = root_policy(&search.visit_counts, temperature);
        let action = sample_index(&act_policy, rng);
        let result = env.step(action)?;
        observations.push(result.observation);
        actions.push(action);
        rewards.push(result.reward);
        policies.push(search.policy);
        values.push(search.value);
        if result.terminal {
            break;
        }
    }
    Ok(GameHistory {
        observations,
        actions,
        rewards,
        policies,
        values,
    })
}

/// Plays one episode with uniform-random actions; used to fill the buffer
/// for self-supervised pretraining where no reward signal is needed.
pub fn random_play_episode(
    env: &mut dyn Environment,
    episode_seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<GameHistory> {
    let spec = env.spec();
    let uniform = vec![1.0 / spec.action_count as f64; spec.action_count];
    let mut observations = vec![env.reset(episode_seed)];
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    let mut policies = Vec::new();
    let mut values = Vec::new();
    loop {
        let action = rng.gen_range(0..spec.action_count);
        let result = env.step(action)?;
        observations.push(result.observation);
        actions.push(action);
        rewards.push(result.reward);
        policies.push(uniform.clone());
        values.push(0.0);
        if result.terminal {
            break;
        }
    }
    Ok(GameHistory {
        observations,
        actions,
        rewards,
        policies,
        values,
    })
}

fn sample_index(probabilities: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let draw: f64 = rng.gen();
    let mut cumulative = 0.0;
    for (i, p) in probabilities.iter().enumerate() {
        cumulative += p;
        if draw < cumulative {
            return i;
        }
    }
    probabilities.len() - 1
}

/// Greedy evaluation: argmax-visit actions, no root noise, never touching
/// the replay buffer. Returns mean and population standard deviation of
/// the total episode rewards.
pub fn evaluate<M: Inference>(
    model: &M,
    env: &mut dyn Environment,
    episodes: usize,
    mcts: &MctsConfig,
    seed: u64,
) -> Result<(f64, f64)> {
    assert!(episodes >= 1, "need at least one evaluation episode");
    let mut totals = Vec::with_capacity(episodes);
    // rng is unused without noise but required by the search signature
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for ep in 0..episodes {
        let mut obs = env.reset(seed.wrapping_add(ep as u64));
        let mut total = 0.0;
        loop {
            let search = run_mcts(model, &obs, mcts, false, &mut rng)?;
            let result = env.step(search.action)?;
            total += result.reward;
            obs = result.observation;
            if result.terminal {
                break;
            }
        }
        totals.push(total);
    }
    let mean = totals.iter().sum::<f64>() / totals.len() as f64;
    let var = totals.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / totals.len() as f64;
    Ok((mean, var.sqrt()))
}

/// Per-step training record handed to observers.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: u64,
    pub breakdown: LossBreakdown,
    pub lr: f64,
}

/// Per-evaluation record handed to observers.
#[derive(Debug, Clone, Copy)]
pub struct EvalRecord {
    pub step: u64,
    pub mean: f64,
    pub std: f64,
}

/// Serial actor/learner: one process alternates between self-play episodes
/// and batches of training steps, so runs are deterministic and resumable.
pub struct Trainer {
    pub config: RunConfig,
    pub model: MuZeroModel,
    pub opt: AdamState,
    pub buffer: ReplayBuffer,
    pub step: u64,
    pub rng: ChaCha8Rng,
    /// Build the auxiliary forward paths even when their weights are zero.
    /// Zero-weight terms never contribute gradients, so this must not
    /// change training; comparison harnesses rely on that.
    pub force_aux: bool,
}

impl Trainer {
    pub fn new(config: RunConfig) -> Trainer {
        let env_spec = config.env.build().spec();
        let model_config = crate::model::ModelConfig {
            observation_dim: env_spec.observation_dim,
            latent_dim: config.state_dim,
            action_count: env_spec.action_count,
            hidden_sizes: config.hidden_sizes.clone(),
        };
        let model = MuZeroModel::new(model_config, config.seed);
        let opt = AdamState::new(model.param_count());
        let buffer = ReplayBuffer::new(
            ReplayConfig {
                capacity: config.buffer_size,
                priority_exponent: config.priority_exponent,
                td_steps: config.td_steps,
                unroll_steps: config.unroll_steps,
                discount: config.discount,
            },
            ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5EED_0001)),
        );
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Trainer {
            config,
            model,
            opt,
            buffer,
            step: 0,
            rng,
            force_aux: false,
        }
    }

    pub fn schedules(&self) -> Schedules {
        Schedules {
            lr_init: self.config.lr_init,
            lr_decay_rate: self.config.lr_decay_rate,
            lr_decay_steps: self.config.lr_decay_steps,
            temperature_thresholds: self.config.temperature_thresholds.clone(),
            temperature_values: self.config.temperature_values.clone(),
        }
    }

    pub fn mcts_config(&self) -> MctsConfig {
        MctsConfig {
            num_simulations: self.config.simulations,
            discount: self.config.discount,
            c1: self.config.puct_c1,
            c2: self.config.puct_c2,
            dirichlet_alpha: self.config.dirichlet_alpha,
            exploration_fraction: self.config.exploration_fraction,
        }
    }

    /// Loss weights from the configured auxiliary term weights.
    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            reward: 1.0,
            value: self.config.value_loss_weight,
            policy: 1.0,
            reconstruction: self.config.reconstruction_weight,
            consistency: self.config.consistency_weight,
        }
    }

    fn aux_active(&self, weights: &LossWeights) -> bool {
        self.force_aux || weights.reconstruction != 0.0 || weights.consistency != 0.0
    }

    /// Whether the trainer is still inside the pretraining phase.
    pub fn in_pretraining(&self) -> bool {
        self.step < self.config.pretrain_steps
    }

    /// Step counter used by the schedules: pretraining has its own clock
    /// and the main phase restarts at zero.
    pub fn schedule_step(&self) -> u64 {
        self.step.saturating_sub(self.config.pretrain_steps)
    }

    fn play_episode(&mut self, random_policy: bool) -> Result<()> {
        let episode_seed: u64 = self.rng.gen();
        let mut env = self.config.env.build();
        let game = if random_policy {
            random_play_episode(env.as_mut(), episode_seed, &mut self.rng)?
        } else {
            let temperature = self.schedules().temperature(self.schedule_step());
            self_play_episode(
                &self.model,
                env.as_mut(),
                &self.mcts_config(),
                temperature,
                episode_seed,
                &mut self.rng,
            )?
        };
        self.buffer.store_game(game)
    }

    /// One scheduled unit of the serial loop: play an episode when due,
    /// then run one training step. Returns the step record.
    pub fn advance(&mut self) -> Result<StepRecord> {
        let pretraining = self.in_pretraining();
        let due = self.step % self.config.train_steps_per_episode == 0;
        if due || self.buffer.is_empty() {
            self.play_episode(pretraining)?;
        }
        let weights = if pretraining {
            LossWeights::pretraining()
        } else {
            self.loss_weights()
        };
        let schedules = self.schedules();
        let schedule_step = if pretraining {
            self.step
        } else {
            self.schedule_step()
        };
        let aux = self.aux_active(&weights);
        let breakdown = train_step(
            &mut self.model,
            &mut self.opt,
            &mut self.buffer,
            &weights,
            &schedules,
            self.config.l2_weight,
            self.config.batch_size,
            schedule_step,
            aux,
        )?;
        let lr = schedules.lr(schedule_step);
        self.step += 1;
        Ok(StepRecord {
            step: self.step,
            breakdown,
            lr,
        })
    }

    /// Greedy evaluation snapshot at the current parameters.
    pub fn evaluate_now(&self, episodes: usize) -> Result<EvalRecord> {
        let mut env = self.config.env.build();
        let seed = self.config.seed.wrapping_mul(0x9E37_79B9).wrapping_add(self.step);
        let (mean, std) = evaluate(
            &self.model,
            env.as_mut(),
            episodes,
            &self.mcts_config(),
            seed,
        )?;
        Ok(EvalRecord {
            step: self.step,
            mean,
            std,
        })
    }

    /// Total steps including the pretraining phase.
    pub fn total_steps(&self) -> u64 {
        self.config.pretrain_steps + self.config.training_steps
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::model::ModelConfig;
    use crate::nn::Activation;
    use crate::replay::{StepTarget, TrainingTarget};

    fn tiny_model(seed: u64) -> MuZeroModel {
        MuZeroModel::new(ModelConfig::new(4, 8, 2).with_hidden(vec![8]), seed)
    }

    fn simple_target(k: usize) -> TrainingTarget {
        let steps = (0..=k)
            .map(|i| StepTarget {
                reward: 0.5,
                value: 1.0,
                policy: vec![0.6, 0.4],
                observation: vec![0.1 * i as f64, -0.1, 0.2, 0.0],
                reward_valid: i >= 1,
                value_valid: true,
                policy_valid: true,
                obs_valid: true,
            })
            .collect();
        TrainingTarget {
            observation: vec![0.0, -0.1, 0.2, 0.0],
            actions: (0..k).map(|i| i % 2).collect(),
            steps,
        }
    }

    #[test]
    fn zero_aux_weights_total_equals_baseline_terms() {
        let mut model = tiny_model(1);
        let target = simple_target(3);
        let weights = LossWeights::baseline(1.0);
        let sample = compute_losses(&mut model, &target, &weights, 1.0, true).unwrap();
        let lb = sample.breakdown;
        assert!(lb.reconstruction > 0.0); // computed, but unweighted
        assert_eq!(lb.total, lb.reward + lb.value + lb.policy);
    }

    #[test]
    fn identity_model_has_zero_consistency_loss() {
        // 1-dim observation/latent, no hidden layers, all nets linear.
        // repr = identity, dynamics latent output = identity on the latent:
        // with constant observations the unrolled latent always equals the
        // re-encoded observation.
        let mut model = MuZeroModel::new(
            ModelConfig {
                observation_dim: 1,
                latent_dim: 1,
                action_count: 2,
                hidden_sizes: vec![],
            },
            0,
        );
        for v in model.params.values_mut().iter_mut() {
            *v = 0.0;
        }
        // repr: w = 1 (slice "repr.w0" is first)
        let layout: Vec<_> = model
            .params
            .layout()
            .iter()
            .map(|s| (s.name.clone(), s.offset))
            .collect();
        for (name, offset) in &layout {
            if name == "repr.w0" {
                model.params.values_mut()[*offset] = 1.0;
            }
            if name == "dynamics.w0" {
                // dynamics maps [latent, onehot(2)] -> [latent, reward];
                // latent row = [1, 0, 0]
                model.params.values_mut()[*offset] = 1.0;
            }
        }
        let steps = (0..=2)
            .map(|i| StepTarget {
                reward: 0.0,
                value: 0.0,
                policy: vec![0.5, 0.5],
                observation: vec![0.7],
                reward_valid: i >= 1,
                value_valid: true,
                policy_valid: true,
                obs_valid: true,
            })
            .collect();
        let target = TrainingTarget {
            observation: vec![0.7],
            actions: vec![0, 1],
            steps,
        };
        let weights = LossWeights {
            reward: 1.0,
            value: 1.0,
            policy: 1.0,
            reconstruction: 1.0,
            consistency: 1.0,
        };
        let sample = compute_losses(&mut model, &target, &weights, 1.0, true).unwrap();
        assert_eq!(sample.breakdown.consistency, 0.0);
    }

    #[test]
    fn consistency_gradient_matches_frozen_target_finite_differences() {
        let mut model = tiny_model(3);
        let target = simple_target(3);
        let weights = LossWeights {
            reward: 0.0,
            value: 0.0,
            policy: 0.0,
            reconstruction: 0.0,
            consistency: 1.0,
        };
        let frozen = consistency_targets(&model, &target).unwrap();
        compute_losses(&mut model, &target, &weights, 1.0, true).unwrap();
        let analytic = model.params.grads().to_vec();
        model.params.zero_grads();
        let h = 1e-6;
        let mut checked = 0;
        for i in (0..model.params.len()).step_by(13) {
            let orig = model.params.values()[i];
            model.params.values_mut()[i] = orig + h;
            let up = loss_forward(&model, &target, &weights, true, Some(&frozen))
                .unwrap()
                .total;
            model.params.values_mut()[i] = orig - h;
            let dn = loss_forward(&model, &target, &weights, true, Some(&frozen))
                .unwrap()
                .total;
            model.params.values_mut()[i] = orig;
            let fd = (up - dn) / (2.0 * h);
            let denom = analytic[i].abs().max(fd.abs()).max(1e-8);
            assert!(
                (analytic[i] - fd).abs() / denom < 1e-4,
                "param {i}: {} vs {fd}",
                analytic[i]
            );
            checked += 1;
        }
        assert!(checked > 20);
    }

    #[test]
    fn reconstruction_gradient_reaches_representation_params() {
        let mut model = tiny_model(4);
        let target = simple_target(3);
        let weights = LossWeights {
            reward: 0.0,
            value: 0.0,
            policy: 0.0,
            reconstruction: 1.0,
            consistency: 0.0,
        };
        compute_losses(&mut model, &target, &weights, 1.0, true).unwrap();
        assert!(model.params.grad_norm_of("repr") > 0.0);
        assert!(model.params.grad_norm_of("dynamics") > 0.0);
    }

    #[test]
    fn pretraining_weights_leave_head_gradients_zero() {
        let mut model = tiny_model(5);
        let target = simple_target(3);
        compute_losses(&mut model, &target, &LossWeights::pretraining(), 1.0, true).unwrap();
        // the whole prediction net is untouched
        assert_eq!(model.params.grad_norm_of("prediction"), 0.0);
        // the dynamics reward row (last row of the output layer) is untouched
        let last_w = model
            .params
            .layout()
            .iter()
            .find(|s| s.name == "dynamics.w1")
            .unwrap()
            .clone();
        let d = model.config.latent_dim;
        let cols = last_w.len / (d + 1);
        let reward_row = &model.params.grads()[last_w.offset + d * cols..last_w.offset + last_w.len];
        assert!(reward_row.iter().all(|g| *g == 0.0));
        // but the trunk is trained
        assert!(model.params.grad_norm_of("repr") > 0.0);
    }

    #[test]
    fn masked_steps_contribute_nothing() {
        let mut model = tiny_model(6);
        let mut target = simple_target(4);
        // make steps 3 and 4 absorbing
        for k in 3..=4 {
            target.steps[k].reward_valid = false;
            target.steps[k].value_valid = false;
            target.steps[k].policy_valid = false;
            target.steps[k].obs_valid = false;
            target.steps[k].reward = 0.0;
            target.steps[k].value = 0.0;
        }
        let weights = LossWeights {
            reward: 1.0,
            value: 1.0,
            policy: 1.0,
            reconstruction: 1.0,
            consistency: 1.0,
        };
        let full = compute_losses(&mut model, &target, &weights, 1.0, true)
            .unwrap()
            .breakdown;
        // identical prefix target without the absorbing tail
        let mut prefix = simple_target(2);
        prefix.observation = target.observation.clone();
        prefix.actions = target.actions[..2].to_vec();
        prefix.steps = target.steps[..3].to_vec();
        let mut model2 = tiny_model(6);
        let pre = compute_losses(&mut model2, &prefix, &weights, 1.0, true)
            .unwrap()
            .breakdown;
        assert!((full.total - pre.total).abs() < 1e-12);
        assert_eq!(full.reward, pre.reward);
        assert_eq!(full.consistency, pre.consistency);
    }

    #[test]
    fn lr_schedule_hand_values() {
        let s = Schedules {
            lr_init: 0.02,
            lr_decay_rate: 0.9,
            lr_decay_steps: 1000.0,
            temperature_thresholds: vec![5000, 7500],
            temperature_values: vec![1.0, 0.5, 0.25],
        };
        assert!((s.lr(0) - 0.02).abs() < 1e-15);
        assert!((s.lr(1000) - 0.018).abs() < 1e-12);
        assert_eq!(s.temperature(4000), 1.0);
        assert_eq!(s.temperature(6000), 0.5);
        assert_eq!(s.temperature(8000), 0.25);
    }

    #[test]
    fn training_identity_reconstruction_improves_monotonically_in_trend() {
        // supervised h-1(h(o)) on a fixed batch: error after 100 steps is
        // well below the starting error, and the curve is non-increasing
        // across 10-step windows
        let mut model = MuZeroModel::new(ModelConfig::new(4, 8, 2).with_hidden(vec![16]), 7);
        let mut opt = AdamState::new(model.param_count());
        let observations: Vec<Vec<f64>> = (0..8)
            .map(|i| vec![0.1 * i as f64, -0.05 * i as f64, 0.02 * i as f64, 0.3])
            .collect();
        let mut history = Vec::new();
        for _ in 0..100 {
            let mut err = 0.0;
            for obs in &observations {
                let (latent, tape_h) = model.repr.forward(&model.params, obs).unwrap();
                let (obs_hat, tape_r) =
                    model.reconstruction.forward(&model.params, &latent).unwrap();
                err += crate::nn::mse(obs, &obs_hat);
                let n = obs.len() as f64;
                let grad: Vec<f64> = obs_hat
                    .iter()
                    .zip(obs.iter())
                    .map(|(a, b)| 2.0 * (a - b) / n / observations.len() as f64)
                    .collect();
                let d_latent = model
                    .reconstruction
                    .backward(&mut model.params, &tape_r, &grad);
                model.repr.backward(&mut model.params, &tape_h, &d_latent);
            }
            history.push(err / observations.len() as f64);
            adam_step(&mut model.params, &mut opt, 0.01, 0.0);
        }
        assert!(history[99] < history[0] * 0.5, "no learning: {history:?}");
        for w in history.windows(10).step_by(10) {
            assert!(w[9] <= w[0] * 1.05);
        }
    }

    #[test]
    fn batch_loss_is_mean_of_sample_losses() {
        let config = RunConfig::cartpole_preset();
        let mut trainer = Trainer::new(config);
        trainer.play_episode(true).unwrap();
        let (targets, _) = trainer.buffer.sample_batch(16).unwrap();
        let weights = trainer.loss_weights();
        let mut batch_model = trainer.model.clone();
        let mut sum = 0.0;
        for t in &targets {
            let s = compute_losses(&mut batch_model, t, &weights, 1.0 / 16.0, true).unwrap();
            sum += s.breakdown.total;
        }
        let mean_direct = sum / 16.0;
        // recompute each total independently and average
        let mut mean_independent = 0.0;
        for t in &targets {
            mean_independent += loss_forward(&trainer.model, t, &weights, true, None)
                .unwrap()
                .total;
        }
        mean_independent /= 16.0;
        assert!((mean_direct - mean_independent).abs() < 1e-12);
    }

    #[test]
    fn frozen_single_sample_training_mostly_decreases_loss() {
        // optimizer-as-oracle sanity; >= 90% of inits improve over 50 steps
        let mut wins = 0;
        for seed in 0..20 {
            let mut model = tiny_model(100 + seed);
            let mut opt = AdamState::new(model.param_count());
            let target = simple_target(3);
            let weights = LossWeights::baseline(1.0);
            let first = loss_forward(&model, &target, &weights, false, None)
                .unwrap()
                .total;
            for _ in 0..50 {
                compute_losses(&mut model, &target, &weights, 1.0, false).unwrap();
                adam_step(&mut model.params, &mut opt, 0.01, 0.0);
            }
            let last = loss_forward(&model, &target, &weights, false, None)
                .unwrap()
                .total;
            if last <= first {
                wins += 1;
            }
        }
        assert!(wins >= 18, "only {wins}/20 runs improved");
    }

    #[test]
    fn self_play_episode_produces_valid_game() {
        let config = RunConfig::cartpole_preset();
        let trainer = Trainer::new(config);
        let mut env = trainer.config.env.build();
        let mcts = MctsConfig::new(8, 0.997);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let game =
            self_play_episode(&trainer.model, env.as_mut(), &mcts, 1.0, 3, &mut rng).unwrap();
        game.validate().unwrap();
        assert_eq!(game.observations.len(), game.actions.len() + 1);
    }

    #[test]
    fn evaluation_is_deterministic_and_pure() {
        let mut config = RunConfig::cartpole_preset();
        config.simulations = 4;
        let trainer = Trainer::new(config);
        let games_before = trainer.buffer.len();
        let a = trainer.evaluate_now(2).unwrap();
        let b = trainer.evaluate_now(2).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.std, b.std);
        assert_eq!(trainer.buffer.len(), games_before);
    }

    #[test]
    fn expert_mock_reaches_max_reward() {
        let mut env = crate::envs::CartPole::new();
        let mcts = MctsConfig::new(4, 0.997);
        let (mean, std) =
            evaluate(&crate::testing::CartPoleExpertMock, &mut env, 3, &mcts, 10).unwrap();
        assert_eq!(mean, 500.0);
        assert_eq!(std, 0.0);
    }

    #[test]
    fn single_episode_evaluation_has_zero_std() {
        let mut env = crate::envs::CartPole::new();
        let mcts = MctsConfig::new(2, 0.997);
        let model = tiny_model(0);
        let (_, std) = evaluate(&model, &mut env, 1, &mcts, 0).unwrap();
        assert_eq!(std, 0.0);
    }

    #[test]
    fn self_play_actions_under_uniform_model_pass_chi_square() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let model = crate::testing::UniformMock { action_count: 2 };
        let mut env = crate::envs::CartPole::new();
        let mcts = MctsConfig::new(10, 0.997);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut counts = [0u64; 2];
        for episode in 0..40 {
            let game =
                self_play_episode(&model, &mut env, &mcts, 1.0, episode, &mut rng).unwrap();
            for a in &game.actions {
                counts[*a] += 1;
            }
        }
        let total = (counts[0] + counts[1]) as f64;
        assert!(total > 200.0, "too few actions sampled: {total}");
        let expected = total / 2.0;
        let statistic: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        let critical = ChiSquared::new(1.0).unwrap().inverse_cdf(0.99);
        assert!(
            statistic < critical,
            "chi-square {statistic} over critical {critical} ({counts:?})"
        );
    }

    #[test]
    fn self_play_episode_lengths_match_pure_random_policy() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        // search guided by an uninformative model is indistinguishable
        // from acting uniformly at random; compare episode-length
        // distributions with a two-sample chi-square test
        let model = crate::testing::UniformMock { action_count: 2 };
        let mcts = MctsConfig::new(10, 0.997);
        let mut env = crate::envs::CartPole::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let episodes = 80u64;
        let searched: Vec<usize> = (0..episodes)
            .map(|ep| {
                self_play_episode(&model, &mut env, &mcts, 1.0, ep, &mut rng)
                    .unwrap()
                    .len()
            })
            .collect();
        let mut rng2 = ChaCha8Rng::seed_from_u64(99);
        let random: Vec<usize> = (0..episodes)
            .map(|ep| {
                random_play_episode(&mut env, 10_000 + ep, &mut rng2)
                    .unwrap()
                    .len()
            })
            .collect();
        // bin lengths; CartPole random-policy episodes are short
        let edges = [13usize, 20, 30];
        let bin = |len: usize| edges.iter().filter(|e| len >= **e).count();
        let bins = edges.len() + 1;
        let mut a = vec![0.0; bins];
        let mut b = vec![0.0; bins];
        for l in &searched {
            a[bin(*l)] += 1.0;
        }
        for l in &random {
            b[bin(*l)] += 1.0;
        }
        let n = episodes as f64;
        let mut statistic = 0.0;
        for i in 0..bins {
            let pooled = (a[i] + b[i]) / (2.0 * n);
            if pooled == 0.0 {
                continue;
            }
            let expected = pooled * n;
            statistic += (a[i] - expected) * (a[i] - expected) / expected;
            statistic += (b[i] - expected) * (b[i] - expected) / expected;
        }
        let critical = ChiSquared::new((bins - 1) as f64).unwrap().inverse_cdf(0.99);
        assert!(
            statistic < critical,
            "chi-square {statistic} over critical {critical}: {a:?} vs {b:?}"
        );
    }

    #[test]
    fn pretraining_reduces_heldout_reconstruction_loss() {
        let mut config = RunConfig::cartpole_preset();
        config.pretrain_steps = 60;
        config.simulations = 4;
        config.batch_size = 32;
        config.td_steps = 10;
        config.unroll_steps = 4;
        config.hidden_sizes = vec![32];
        let mut trainer = Trainer::new(config);
        // held-out batch from an independent random-action episode
        let mut env = trainer.config.env.build();
        let mut rng = ChaCha8Rng::seed_from_u64(777);
        let game = random_play_episode(env.as_mut(), 777, &mut rng).unwrap();
        let mut held_out = crate::replay::ReplayBuffer::new(
            trainer.buffer.config.clone(),
            ChaCha8Rng::seed_from_u64(1),
        );
        held_out.store_game(game).unwrap();
        let (targets, _) = held_out.sample_batch(16).unwrap();
        let recon_loss = |model: &MuZeroModel| {
            targets
                .iter()
                .map(|t| {
                    loss_forward(model, t, &LossWeights::pretraining(), true, None)
                        .unwrap()
                        .reconstruction
                })
                .sum::<f64>()
        };
        let before = recon_loss(&trainer.model);
        for _ in 0..60 {
            assert!(trainer.in_pretraining());
            trainer.advance().unwrap();
        }
        let after = recon_loss(&trainer.model);
        assert!(
            after < before,
            "held-out reconstruction loss did not improve: {before} -> {after}"
        );
    }

    #[test]
    fn training_continues_past_pretraining_without_reinitialization() {
        let mut config = RunConfig::cartpole_preset();
        config.pretrain_steps = 2;
        config.simulations = 4;
        config.batch_size = 8;
        config.td_steps = 10;
        config.unroll_steps = 3;
        config.hidden_sizes = vec![16];
        let mut trainer = Trainer::new(config);
        trainer.advance().unwrap();
        trainer.advance().unwrap();
        let params_at_boundary = trainer.model.params.values().to_vec();
        assert!(!trainer.in_pretraining());
        let record = trainer.advance().unwrap();
        // main phase: the baseline terms are live again
        assert!(record.breakdown.policy > 0.0);
        assert!(record.breakdown.value > 0.0);
        // and the pretrained parameters were carried over, then updated
        assert_ne!(trainer.model.params.values(), &params_at_boundary[..]);
    }

    #[test]
    fn hidden_activation_is_tanh() {
        // guards the configured default architecture
        let model = MuZeroModel::new(ModelConfig::new(4, 8, 2), 0);
        assert_eq!(model.config.hidden_sizes, vec![64, 64]);
        let _ = Activation::Tanh;
    }
}
