//! Run configuration: `key = value` text format, exhaustive validation,
//! and the two bundled presets.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::envs::EnvKind;
use crate::{Error, Result};

/// Everything a run needs. Parsed from `key = value` lines; `#` starts a
/// comment, unknown keys are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: EnvKind,
    pub seed: u64,
    pub training_steps: u64,
    pub pretrain_steps: u64,
    pub discount: f64,
    pub td_steps: usize,
    pub unroll_steps: usize,
    pub state_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub lr_init: f64,
    pub lr_decay_rate: f64,
    pub lr_decay_steps: f64,
    pub value_loss_weight: f64,
    pub reconstruction_weight: f64,
    pub consistency_weight: f64,
    pub l2_weight: f64,
    pub buffer_size: usize,
    pub priority_exponent: f64,
    pub batch_size: usize,
    pub simulations: usize,
    pub dirichlet_alpha: f64,
    pub exploration_fraction: f64,
    pub puct_c1: f64,
    pub puct_c2: f64,
    pub temperature_thresholds: Vec<u64>,
    pub temperature_values: Vec<f64>,
    pub train_steps_per_episode: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub checkpoint_interval: u64,
}

pub const CARTPOLE_PRESET: &str = include_str!("../configs/cartpole.cfg");
pub const LANDERLITE_PRESET: &str = include_str!("../configs/landerlite.cfg");

impl RunConfig {
    pub fn cartpole_preset() -> RunConfig {
        RunConfig::parse(CARTPOLE_PRESET).expect("bundled cartpole preset is valid")
    }

    pub fn landerlite_preset() -> RunConfig {
        RunConfig::parse(LANDERLITE_PRESET).expect("bundled landerlite preset is valid")
    }

    /// Parses the text format. Every key must be present exactly once.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut seen: BTreeSet<String> = BTreeSet::new();
        let mut env = None;
        let mut seed = None;
        let mut training_steps = None;
        let mut pretrain_steps = None;
        let mut discount = None;
        let mut td_steps = None;
        let mut unroll_steps = None;
        let mut state_dim = None;
        let mut hidden_sizes = None;
        let mut lr_init = None;
        let mut lr_decay_rate = None;
        let mut lr_decay_steps = None;
        let mut value_loss_weight = None;
        let mut reconstruction_weight = None;
        let mut consistency_weight = None;
        let mut l2_weight = None;
        let mut buffer_size = None;
        let mut priority_exponent = None;
        let mut batch_size = None;
        let mut simulations = None;
        let mut dirichlet_alpha = None;
        let mut exploration_fraction = None;
        let mut puct_c1 = None;
        let mut puct_c2 = None;
        let mut temperature_thresholds = None;
        let mut temperature_values = None;
        let mut train_steps_per_episode = None;
        let mut eval_interval = None;
        let mut eval_episodes = None;
        let mut checkpoint_interval = None;

        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", line_no + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("duplicate key '{key}'")));
            }
            match key {
                "env" => {
                    env = Some(match value {
                        "cartpole" => EnvKind::CartPole,
                        "landerlite" => EnvKind::LanderLite,
                        other => {
                            return Err(Error::Config(format!(
                                "field 'env': unknown environment '{other}'"
                            )))
                        }
                    })
                }
                "seed" => seed = Some(parse_u64(key, value)?),
                "training_steps" => training_steps = Some(parse_u64(key, value)?),
                "pretrain_steps" => pretrain_steps = Some(parse_u64(key, value)?),
                "discount" => discount = Some(parse_f64(key, value)?),
                "td_steps" => td_steps = Some(parse_usize(key, value)?),
                "unroll_steps" => unroll_steps = Some(parse_usize(key, value)?),
                "state_dim" => state_dim = Some(parse_usize(key, value)?),
                "hidden_sizes" => hidden_sizes = Some(parse_usize_list(key, value)?),
                "lr_init" => lr_init = Some(parse_f64(key, value)?),
                "lr_decay_rate" => lr_decay_rate = Some(parse_f64(key, value)?),
                "lr_decay_steps" => lr_decay_steps = Some(parse_f64(key, value)?),
                "value_loss_weight" => value_loss_weight = Some(parse_f64(key, value)?),
                "reconstruction_weight" => reconstruction_weight = Some(parse_f64(key, value)?),
                "consistency_weight" => consistency_weight = Some(parse_f64(key, value)?),
                "l2_weight" => l2_weight = Some(parse_f64(key, value)?),
                "buffer_size" => buffer_size = Some(parse_usize(key, value)?),
                "priority_exponent" => priority_exponent = Some(parse_f64(key, value)?),
                "batch_size" => batch_size = Some(parse_usize(key, value)?),
                "simulations" => simulations = Some(parse_usize(key, value)?),
                "dirichlet_alpha" => dirichlet_alpha = Some(parse_f64(key, value)?),
                "exploration_fraction" => exploration_fraction = Some(parse_f64(key, value)?),
                "puct_c1" => puct_c1 = Some(parse_f64(key, value)?),
                "puct_c2" => puct_c2 = Some(parse_f64(key, value)?),
                "temperature_thresholds" => {
                    temperature_thresholds = Some(parse_u64_list(key, value)?)
                }
                "temperature_values" => temperature_values = Some(parse_f64_list(key, value)?),
                "train_steps_per_episode" => {
                    train_steps_per_episode = Some(parse_u64(key, value)?)
                }
                "eval_interval" => eval_interval = Some(parse_u64(key, value)?),
                "eval_episodes" => eval_episodes = Some(parse_usize(key, value)?),
                "checkpoint_interval" => checkpoint_interval = Some(parse_u64(key, value)?),
                other => return Err(Error::Config(format!("unknown key '{other}'"))),
            }
        }

        let config = RunConfig {
            env: require(env, "env")?,
            seed: require(seed, "seed")?,
            training_steps: require(training_steps, "training_steps")?,
            pretrain_steps: require(pretrain_steps, "pretrain_steps")?,
            discount: require(discount, "discount")?,
            td_steps: require(td_steps, "td_steps")?,
            unroll_steps: require(unroll_steps, "unroll_steps")?,
            state_dim: require(state_dim, "state_dim")?,
            hidden_sizes: require(hidden_sizes, "hidden_sizes")?,
            lr_init: require(lr_init, "lr_init")?,
            lr_decay_rate: require(lr_decay_rate, "lr_decay_rate")?,
            lr_decay_steps: require(lr_decay_steps, "lr_decay_steps")?,
            value_loss_weight: require(value_loss_weight, "value_loss_weight")?,
            reconstruction_weight: require(reconstruction_weight, "reconstruction_weight")?,
            consistency_weight: require(consistency_weight, "consistency_weight")?,
            l2_weight: require(l2_weight, "l2_weight")?,
            buffer_size: require(buffer_size, "buffer_size")?,
            priority_exponent: require(priority_exponent, "priority_exponent")?,
            batch_size: require(batch_size, "batch_size")?,
            simulations: require(simulations, "simulations")?,
            dirichlet_alpha: require(dirichlet_alpha, "dirichlet_alpha")?,
            exploration_fraction: require(exploration_fraction, "exploration_fraction")?,
            puct_c1: require(puct_c1, "puct_c1")?,
            puct_c2: require(puct_c2, "puct_c2")?,
            temperature_thresholds: require(temperature_thresholds, "temperature_thresholds")?,
            temperature_values: require(temperature_values, "temperature_values")?,
            train_steps_per_episode: require(train_steps_per_episode, "train_steps_per_episode")?,
            eval_interval: require(eval_interval, "eval_interval")?,
            eval_episodes: require(eval_episodes, "eval_episodes")?,
            checkpoint_interval: require(checkpoint_interval, "checkpoint_interval")?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        fn bad(field: &str, why: &str) -> Error {
            Error::Config(format!("field '{field}': {why}"))
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(bad("discount", "must be in (0, 1]"));
        }
        if self.td_steps == 0 {
            return Err(bad("td_steps", "must be at least 1"));
        }
        if self.unroll_steps == 0 {
            return Err(bad("unroll_steps", "must be at least 1"));
        }
        if self.state_dim == 0 {
            return Err(bad("state_dim", "must be at least 1"));
        }
        if !(self.lr_init > 0.0) {
            return Err(bad("lr_init", "must be positive"));
        }
        if !(self.lr_decay_rate > 0.0 && self.lr_decay_rate <= 1.0) {
            return Err(bad("lr_decay_rate", "must be in (0, 1]"));
        }
        if !(self.lr_decay_steps > 0.0) {
            return Err(bad("lr_decay_steps", "must be positive"));
        }
        for (field, w) in [
            ("value_loss_weight", self.value_loss_weight),
            ("reconstruction_weight", self.reconstruction_weight),
            ("consistency_weight", self.consistency_weight),
            ("l2_weight", self.l2_weight),
            ("priority_exponent", self.priority_exponent),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(bad(field, "must be finite and non-negative"));
            }
        }
        if self.buffer_size == 0 {
            return Err(bad("buffer_size", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(bad("batch_size", "must be at least 1"));
        }
        if self.simulations == 0 {
            return Err(bad("simulations", "must be at least 1"));
        }
        if !(self.dirichlet_alpha > 0.0) {
            return Err(bad("dirichlet_alpha", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.exploration_fraction) {
            return Err(bad("exploration_fraction", "must be in [0, 1]"));
        }
        if !(self.puct_c1 > 0.0) {
            return Err(bad("puct_c1", "must be positive"));
        }
        if !(self.puct_c2 > 0.0) {
            return Err(bad("puct_c2", "must be positive"));
        }
        if self.temperature_values.len() != self.temperature_thresholds.len() + 1 {
            return Err(bad(
                "temperature_values",
                "must have exactly one more entry than temperature_thresholds",
            ));
        }
        if self.temperature_thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad(
                "temperature_thresholds",
                "must be strictly increasing",
            ));
        }
        if self.temperature_values.iter().any(|t| !(*t > 0.0)) {
            return Err(bad("temperature_values", "must all be positive"));
        }
        if self.train_steps_per_episode == 0 {
            return Err(bad("train_steps_per_episode", "must be at least 1"));
        }
        if self.eval_interval == 0 {
            return Err(bad("eval_interval", "must be at least 1"));
        }
        if self.eval_episodes == 0 {
            return Err(bad("eval_episodes", "must be at least 1"));
        }
        if self.checkpoint_interval == 0 {
            return Err(bad("checkpoint_interval", "must be at least 1"));
        }
        Ok(())
    }

    /// Canonical text form; `parse(to_text(c)) == c`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let env = match self.env {
            EnvKind::CartPole => "cartpole",
            EnvKind::LanderLite => "landerlite",
        };
        let _ = writeln!(out, "env = {env}");
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "training_steps = {}", self.training_steps);
        let _ = writeln!(out, "pretrain_steps = {}", self.pretrain_steps);
        let _ = writeln!(out, "discount = {}", self.discount);
        let _ = writeln!(out, "td_steps = {}", self.td_steps);
        let _ = writeln!(out, "unroll_steps = {}", self.unroll_steps);
        let _ = writeln!(out, "state_dim = {}", self.state_dim);
        let _ = writeln!(out, "hidden_sizes = {}", join(&self.hidden_sizes));
        let _ = writeln!(out, "lr_init = {}", self.lr_init);
        let _ = writeln!(out, "lr_decay_rate = {}", self.lr_decay_rate);
        let _ = writeln!(out, "lr_decay_steps = {}", self.lr_decay_steps);
        let _ = writeln!(out, "value_loss_weight = {}", self.value_loss_weight);
        let _ = writeln!(out, "reconstruction_weight = {}", self.reconstruction_weight);
        let _ = writeln!(out, "consistency_weight = {}", self.consistency_weight);
        let _ = writeln!(out, "l2_weight = {}", self.l2_weight);
        let _ = writeln!(out, "buffer_size = {}", self.buffer_size);
        let _ = writeln!(out, "priority_exponent = {}", self.priority_exponent);
        let _ = writeln!(out, "batch_size = {}", self.batch_size);
        let _ = writeln!(out, "simulations = {}", self.simulations);
        let _ = writeln!(out, "dirichlet_alpha = {}", self.dirichlet_alpha);
        let _ = writeln!(out, "exploration_fraction = {}", self.exploration_fraction);
        let _ = writeln!(out, "puct_c1 = {}", self.puct_c1);
        let _ = writeln!(out, "puct_c2 = {}", self.puct_c2);
        let _ = writeln!(
            out,
            "temperature_thresholds = {}",
            join(&self.temperature_thresholds)
        );
        let _ = writeln!(out, "temperature_values = {}", join(&self.temperature_values));
        let _ = writeln!(
            out,
            "train_steps_per_episode = {}",
            self.train_steps_per_episode
        );
        let _ = writeln!(out, "eval_interval = {}", self.eval_interval);
        let _ = writeln!(out, "eval_episodes = {}", self.eval_episodes);
        let _ = writeln!(out, "checkpoint_interval = {}", self.checkpoint_interval);
        out
    }
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn require<T>(value: Option<T>, key: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("missing key '{key}'")))
}

fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("field '{key}': '{value}' is not a valid integer")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("field '{key}': '{value}' is not a valid integer")))
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("field '{key}': '{value}' is not a valid number")))
}

fn parse_usize_list(key: &str, value: &str) -> Result<Vec<usize>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_usize(key, v.trim())).collect()
}

fn parse_u64_list(key: &str, value: &str) -> Result<Vec<u64>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_u64(key, v.trim())).collect()
}

fn parse_f64_list(key: &str, value: &str) -> Result<Vec<f64>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_f64(key, v.trim())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cartpole_preset_matches_published_hyperparameters() {
        let c = RunConfig::cartpole_preset();
        assert_eq!(c.env, EnvKind::CartPole);
        assert_eq!(c.discount, 0.997);
        assert_eq!(c.td_steps, 50);
        assert_eq!(c.unroll_steps, 10);
        assert_eq!(c.state_dim, 8);
        assert_eq!(c.lr_init, 0.02);
        assert_eq!(c.lr_decay_rate, 0.9);
        assert_eq!(c.lr_decay_steps, 1000.0);
        assert_eq!(c.l2_weight, 1e-4);
        assert_eq!(c.buffer_size, 500);
        assert_eq!(c.priority_exponent, 0.5);
        assert_eq!(c.batch_size, 128);
        assert_eq!(c.simulations, 50);
        assert_eq!(c.dirichlet_alpha, 0.25);
        assert_eq!(c.exploration_fraction, 0.25);
        assert_eq!(c.puct_c1, 1.25);
        assert_eq!(c.puct_c2, 19652.0);
        assert_eq!(c.temperature_thresholds, vec![5000, 7500]);
        assert_eq!(c.temperature_values, vec![1.0, 0.5, 0.25]);
        assert_eq!(c.reconstruction_weight, 1.0);
        assert_eq!(c.consistency_weight, 1.0);
        assert_eq!(c.value_loss_weight, 1.0);
    }

    #[test]
    fn landerlite_preset_parses() {
        let c = RunConfig::landerlite_preset();
        assert_eq!(c.env, EnvKind::LanderLite);
        assert_eq!(c.discount, 0.997);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = format!("{}\nmystery_knob = 3\n", CARTPOLE_PRESET);
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("mystery_knob"));
    }

    #[test]
    fn missing_key_is_rejected_by_name() {
        let text: String = CARTPOLE_PRESET
            .lines()
            .filter(|l| !l.trim_start().starts_with("discount"))
            .collect::<Vec<_>>()
            .join("\n");
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("discount"), "{err}");
    }

    #[test]
    fn invalid_values_name_the_field() {
        let text = CARTPOLE_PRESET.replace("discount = 0.997", "discount = 1.5");
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("discount"), "{err}");

        let text = CARTPOLE_PRESET.replace("batch_size = 128", "batch_size = 0");
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("batch_size"), "{err}");

        let text =
            CARTPOLE_PRESET.replace("exploration_fraction = 0.25", "exploration_fraction = 1.25");
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("exploration_fraction"), "{err}");
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let text = format!("{}\nseed = 4\n", CARTPOLE_PRESET);
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn text_roundtrip_is_identity() {
        let c = RunConfig::cartpole_preset();
        let back = RunConfig::parse(&c.to_text()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = format!("# leading comment\n\n{}", CARTPOLE_PRESET);
        RunConfig::parse(&text).unwrap();
    }

    #[test]
    fn mismatched_temperature_lists_are_rejected() {
        let text = CARTPOLE_PRESET.replace(
            "temperature_values = 1.0,0.5,0.25",
            "temperature_values = 1.0,0.5",
        );
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("temperature_values"), "{err}");
    }
}
