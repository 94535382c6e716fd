use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid setting `{field}`: {reason}")]
pub struct ConfigError {
    pub field: &'static str,
    pub reason: String,
}

/// Per-step population bonus added to the environment reward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiversityKind {
    /// Jensen-Shannon divergence of the policy's own population.
    Jsd,
    /// Shannon entropy of the population's mean policy.
    PopulationEntropy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub minibatch_size: usize,
    pub num_minibatches: usize,
    pub iteration_timesteps: usize,
    pub parallel_envs: usize,
    /// Weight of the diversity bonus; zero disables it.
    pub alpha: f64,
    pub diversity: DiversityKind,
    /// Timesteps over which shaped rewards anneal linearly to zero.
    pub shaping_horizon: f64,
    /// Per-policy entropy bonus. Off by default.
    pub entropy_coef: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            learning_rate: 8e-4,
            gamma: 0.99,
            gae_lambda: 0.98,
            clip: 0.05,
            value_coef: 0.5,
            max_grad_norm: 0.1,
            minibatch_size: 2000,
            num_minibatches: 10,
            iteration_timesteps: 40_000,
            parallel_envs: 50,
            alpha: 0.01,
            diversity: DiversityKind::Jsd,
            shaping_horizon: 5e6,
            entropy_coef: 0.0,
        }
    }
}

impl PpoConfig {
    /// Diversity weight used on the forced-coordination layout.
    pub const FC_ALPHA: f64 = 0.04;

    /// Shrinks the per-iteration budget and the shaping horizon by `scale`.
    pub fn scaled(&self, scale: f64) -> PpoConfig {
        PpoConfig {
            iteration_timesteps: ((self.iteration_timesteps as f64 * scale).round() as usize).max(1),
            shaping_horizon: self.shaping_horizon * scale,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |field: &'static str, reason: &str| {
            Err(ConfigError { field, reason: reason.to_string() })
        };
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return err("learning_rate", "must be a nonnegative finite number");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return err("gamma", "must lie in (0, 1]");
        }
        if !(self.gae_lambda > 0.0 && self.gae_lambda <= 1.0) {
            return err("gae_lambda", "must lie in (0, 1]");
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return err("clip", "must lie in (0, 1)");
        }
        if !(self.value_coef > 0.0 && self.value_coef.is_finite()) {
            return err("value_coef", "must be positive");
        }
        if !(self.max_grad_norm > 0.0 && self.max_grad_norm.is_finite()) {
            return err("max_grad_norm", "must be positive");
        }
        if self.minibatch_size == 0 {
            return err("minibatch_size", "must be positive");
        }
        if self.num_minibatches == 0 {
            return err("num_minibatches", "must be positive");
        }
        if self.iteration_timesteps == 0 {
            return err("iteration_timesteps", "must be positive");
        }
        if self.parallel_envs == 0 {
            return err("parallel_envs", "must be positive");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return err("alpha", "must be a nonnegative finite number");
        }
        if !(self.shaping_horizon > 0.0) {
            return err("shaping_horizon", "must be positive");
        }
        if !(self.entropy_coef >= 0.0 && self.entropy_coef.is_finite()) {
            return err("entropy_coef", "must be a nonnegative finite number");
        }
        Ok(())
    }

    /// Linear annealing coefficient for shaped rewards after `steps` of training.
    pub fn shaping_coef(&self, steps: u64) -> f64 {
        (1.0 - steps as f64 / self.shaping_horizon).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        assert!(PpoConfig::default().validate().is_ok());
    }

    #[test]
    fn scaling_shrinks_budget() {
        let c = PpoConfig::default().scaled(0.01);
        assert_eq!(c.iteration_timesteps, 400);
        assert_eq!(c.shaping_horizon, 5e4);
    }

    #[test]
    fn clip_out_of_range_rejected() {
        let c = PpoConfig { clip: 1.5, ..PpoConfig::default() };
        assert_eq!(c.validate().unwrap_err().field, "clip");
    }

    #[test]
    fn shaping_anneals_to_zero() {
        let c = PpoConfig { shaping_horizon: 100.0, ..PpoConfig::default() };
        assert_eq!(c.shaping_coef(0), 1.0);
        assert_eq!(c.shaping_coef(50), 0.5);
        assert_eq!(c.shaping_coef(500), 0.0);
    }
}
