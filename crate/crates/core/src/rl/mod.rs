//! Diversity-regularised PPO.

mod config;
mod gae;
mod jsd;
mod ppo;
mod rollout;

pub use config::{ConfigError, DiversityKind, PpoConfig};
pub use gae::compute_gae;
pub use jsd::{population_entropy, population_jsd};
pub use ppo::{clipped_surrogate, normalize, ppo_update, AdamState, Learner, UpdateStats};
pub use rollout::{augment_rewards, collect_rollout, episodes_per_iteration, PairRollout, RolloutBatch, Seat};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RlError {
    #[error("population is empty")]
    EmptyPopulation,
    #[error("distribution has {found} actions, expected {expected}")]
    SupportMismatch { expected: usize, found: usize },
    #[error("array lengths differ: rewards {rewards}, values {values}, dones {dones}")]
    LengthMismatch { rewards: usize, values: usize, dones: usize },
    #[error("rollout batch has columns of different lengths")]
    RaggedBatch,
    #[error("rollout batch contains a non-finite reward")]
    NonFiniteReward,
    #[error("rollout batch is empty")]
    EmptyBatch,
    #[error("non-finite loss in minibatch {minibatch}")]
    NonFiniteLoss { minibatch: usize },
    #[error("population does not contain the updating policy")]
    NotInPopulation,
}
