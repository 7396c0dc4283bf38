//! MuZero on small control tasks, extended with two auxiliary training
//! signals: an observation-reconstruction loss through a learned decoder and
//! a latent-consistency loss with a stop-gradient target. Everything is built
//! on a minimal dense-network substrate with manual reverse-mode gradients,
//! so training runs are deterministic and checkpoints are bit-exact.

pub mod checkpoint;
pub mod config;
pub mod envs;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod planner;
pub mod plot;
pub mod replay;
pub mod testing;
pub mod trainer;

use std::io;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
