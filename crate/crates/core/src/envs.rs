//! Deterministic, seedable environments behind one interface: a pole
//! balancing task with the widely published cart-pole constants, and a 1-D
//! lander that keeps the sparse +-100 terminal reward structure of the
//! 2-D original at a fraction of the cost.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub type Observation = Vec<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvSpec {
    pub observation_dim: usize,
    pub action_count: usize,
    pub max_episode_steps: usize,
}

pub trait Environment {
    fn spec(&self) -> EnvSpec;
    fn reset(&mut self, seed: u64) -> Observation;
    fn step(&mut self, action: usize) -> Result<StepResult>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    CartPole,
    LanderLite,
}

impl EnvKind {
    pub fn build(self) -> Box<dyn Environment> {
        match self {
            EnvKind::CartPole => Box::new(CartPole::new()),
            EnvKind::LanderLite => Box::new(LanderLite::new()),
        }
    }
}

/// Classic cart-pole: state (x, x_dot, angle, angle_dot), +-10 N force,
/// explicit Euler at dt = 0.02, +1 reward per step, terminal on |x| > 2.4,
/// |angle| > 12 degrees or 500 steps.
#[derive(Debug, Clone)]
pub struct CartPole {
    state: [f64; 4],
    steps: usize,
    terminal: bool,
}

const GRAVITY: f64 = 9.8;
const CART_MASS: f64 = 1.0;
const POLE_MASS: f64 = 0.1;
const TOTAL_MASS: f64 = CART_MASS + POLE_MASS;
const POLE_HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = POLE_MASS * POLE_HALF_LENGTH;
const FORCE_MAG: f64 = 10.0;
const TAU: f64 = 0.02;
const X_THRESHOLD: f64 = 2.4;
const ANGLE_THRESHOLD: f64 = 12.0 * std::f64::consts::PI / 180.0;
const CARTPOLE_MAX_STEPS: usize = 500;

impl CartPole {
    pub fn new() -> Self {
        CartPole {
            state: [0.0; 4],
            steps: 0,
            terminal: true,
        }
    }

    /// Sets the physical state directly; used by tests that need exact
    /// starting points.
    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
        self.terminal = false;
        self.steps = 0;
    }

    pub fn state(&self) -> [f64; 4] {
        self.state
    }
}

impl Default for CartPole {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for CartPole {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            observation_dim: 4,
            action_count: 2,
            max_episode_steps: CARTPOLE_MAX_STEPS,
        }
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in self.state.iter_mut() {
            *v = rng.gen_range(-0.05..0.05);
        }
        self.steps = 0;
        self.terminal = false;
        self.state.to_vec()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.terminal {
            return Err(Error::InvalidState("step on terminal cart-pole".into()));
        }
        if action > 1 {
            return Err(Error::InvalidArgument(format!("invalid action {action}")));
        }
        let [x, x_dot, theta, theta_dot] = self.state;
        let force = if action == 1 { FORCE_MAG } else { -FORCE_MAG };
        let cos = theta.cos();
        let sin = theta.sin();
        let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
        let theta_acc = (GRAVITY * sin - cos * temp)
            / (POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;
        // position updated with the old velocity, then velocity with the
        // acceleration
        self.state = [
            x + TAU * x_dot,
            x_dot + TAU * x_acc,
            theta + TAU * theta_dot,
            theta_dot + TAU * theta_acc,
        ];
        self.steps += 1;
        let out_of_bounds =
            self.state[0].abs() > X_THRESHOLD || self.state[2].abs() > ANGLE_THRESHOLD;
        self.terminal = out_of_bounds || self.steps >= CARTPOLE_MAX_STEPS;
        Ok(StepResult {
            observation: self.state.to_vec(),
            reward: 1.0,
            terminal: self.terminal,
        })
    }
}

/// 1-D lander: observation (altitude, vertical velocity, fuel) padded to a
/// fixed width. Coast or thrust against gravity; touching down with
/// |velocity| <= 1 pays +100, crashing pays -100, thrusting costs -0.1 per
/// step and burns one unit of fuel.
#[derive(Debug, Clone)]
pub struct LanderLite {
    altitude: f64,
    velocity: f64,
    fuel: f64,
    steps: usize,
    terminal: bool,
}

const LANDER_GRAVITY: f64 = 1.0;
const LANDER_THRUST: f64 = 2.0;
const LANDER_DT: f64 = 0.1;
const LANDER_START_ALTITUDE: f64 = 10.0;
const LANDER_FUEL_BUDGET: f64 = 100.0;
const LANDER_THRUST_PENALTY: f64 = -0.1;
const LANDER_MAX_STEPS: usize = 1000;
const LANDER_SAFE_SPEED: f64 = 1.0;
const LANDER_OBS_DIM: usize = 4;

impl LanderLite {
    pub fn new() -> Self {
        LanderLite {
            altitude: LANDER_START_ALTITUDE,
            velocity: 0.0,
            fuel: LANDER_FUEL_BUDGET,
            steps: 0,
            terminal: true,
        }
    }

    pub fn fuel_budget() -> f64 {
        LANDER_FUEL_BUDGET
    }

    fn observation(&self) -> Observation {
        let mut obs = vec![self.altitude, self.velocity, self.fuel];
        obs.resize(LANDER_OBS_DIM, 0.0);
        obs
    }
}

impl Default for LanderLite {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for LanderLite {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            observation_dim: LANDER_OBS_DIM,
            action_count: 2,
            max_episode_steps: LANDER_MAX_STEPS,
        }
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.altitude = LANDER_START_ALTITUDE;
        self.velocity = rng.gen_range(-0.05..0.05);
        self.fuel = LANDER_FUEL_BUDGET;
        self.steps = 0;
        self.terminal = false;
        self.observation()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.terminal {
            return Err(Error::InvalidState("step on terminal lander".into()));
        }
        if action > 1 {
            return Err(Error::InvalidArgument(format!("invalid action {action}")));
        }
        let thrusting = action == 1 && self.fuel > 0.0;
        let accel = if thrusting {
            LANDER_THRUST - LANDER_GRAVITY
        } else {
            -LANDER_GRAVITY
        };
        self.velocity += accel * LANDER_DT;
        self.altitude += self.velocity * LANDER_DT;
        let mut reward = 0.0;
        if thrusting {
            self.fuel -= 1.0;
            reward += LANDER_THRUST_PENALTY;
        }
        self.steps += 1;
        if self.altitude <= 0.0 {
            self.terminal = true;
            reward += if self.velocity.abs() <= LANDER_SAFE_SPEED {
                100.0
            } else {
                -100.0
            };
        } else if self.steps >= LANDER_MAX_STEPS {
            self.terminal = true;
        }
        Ok(StepResult {
            observation: self.observation(),
            reward,
            terminal: self.terminal,
        })
    }
}
