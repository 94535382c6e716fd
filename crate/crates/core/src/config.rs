//! Run configuration files.

use crate::archive::Threshold;
use crate::bench::{method_config, Method};
use crate::coevo::{CoevoConfig, Pairing};
use crate::deploy::ActMode;
use crate::env::{Archetype, Layout, LayoutError, RewardConfig, Role};
use crate::rl::PpoConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

const CUSTOM_LAYOUT: &str = "custom";

#[derive(Debug, Error)]
pub enum RunConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("invalid setting `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: &str, reason: impl Into<String>) -> RunConfigError {
    RunConfigError::Invalid { field: field.to_string(), reason: reason.into() }
}

/// Population settings; the seed, role and PPO block are filled in per run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoevoSection {
    pub n_p: usize,
    pub n_q: usize,
    pub generations: usize,
    pub updates_per_generation: usize,
    pub archive_capacity: usize,
    pub pairing: Pairing,
    pub threshold: Threshold,
    pub eval_episodes: usize,
    pub hidden: Vec<usize>,
}

impl Default for CoevoSection {
    fn default() -> Self {
        let c = CoevoConfig::default();
        Self {
            n_p: c.n_p,
            n_q: c.n_q,
            generations: c.generations,
            updates_per_generation: c.updates_per_generation,
            archive_capacity: c.archive_capacity,
            pairing: c.pairing,
            threshold: c.threshold,
            eval_episodes: c.eval_episodes,
            hidden: c.hidden,
        }
    }
}

/// Cross-evaluation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub episodes: usize,
    pub mode: ActMode,
    /// Methods compared by `eval`; empty means the run's own method.
    pub methods: Vec<Method>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { episodes: 20, mode: ActMode::Greedy, methods: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Study directory under `out`; the layout's short name when empty.
    pub name: String,
    pub layout: Archetype,
    /// Grid text that replaces the built-in archetype map. The layout is then
    /// named `custom`, while `layout` still sets the diversity weight default.
    pub layout_text: Option<String>,
    pub method: Method,
    /// Multiplies per-iteration timesteps and the shaping horizon.
    pub scale: f64,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub horizon: u32,
    pub cook_time: u32,
    pub rewards: RewardConfig,
    pub coevo: CoevoSection,
    pub ppo: PpoConfig,
    pub eval: EvalSection,
    /// Set when the file gave `ppo.alpha`; otherwise the layout default applies.
    #[serde(skip)]
    pub alpha_explicit: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: String::new(),
            layout: Archetype::CrampedRoom,
            layout_text: None,
            method: Method::Maze,
            scale: 1.0,
            seeds: vec![1000, 2000, 3000, 4000, 5000],
            out: PathBuf::from("runs"),
            horizon: 400,
            cook_time: 20,
            rewards: RewardConfig::default(),
            coevo: CoevoSection::default(),
            ppo: PpoConfig::default(),
            eval: EvalSection::default(),
            alpha_explicit: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| RunConfigError::Parse(e.to_string()))?;
        let alpha_explicit = table
            .get("ppo")
            .and_then(|p| p.as_table())
            .is_some_and(|p| p.contains_key("alpha"));
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| RunConfigError::Parse(e.to_string()))?;
        cfg.alpha_explicit = alpha_explicit;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), RunConfigError> {
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(invalid("scale", "must lie in (0, 1]"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "must not be empty"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(invalid("seeds", "must be distinct"));
        }
        if self.eval.episodes == 0 {
            return Err(invalid("eval.episodes", "must be positive"));
        }
        self.build_layout().map_err(|e| invalid("layout", e.to_string()))?;
        let base = self.coevo_config(self.seeds[0], Role::Agent);
        let as_run = method_config(self.method, &base).unwrap_or_else(|| base.clone());
        for c in [&base, &as_run] {
            c.validate().map_err(|e| invalid(e.field, e.reason))?;
        }
        Ok(())
    }

    /// Methods compared by evaluation.
    pub fn eval_methods(&self) -> Vec<Method> {
        if self.eval.methods.is_empty() {
            vec![self.method]
        } else {
            self.eval.methods.clone()
        }
    }

    pub fn build_layout(&self) -> Result<Layout, LayoutError> {
        match &self.layout_text {
            Some(text) => Layout::parse(CUSTOM_LAYOUT, text, self.cook_time, self.horizon),
            None => Layout::archetype(self.layout, self.cook_time, self.horizon),
        }
    }

    /// Diversity weight: the file's value, else 0.04 on forced coordination
    /// and 0.01 elsewhere.
    pub fn alpha(&self) -> f64 {
        if self.alpha_explicit {
            self.ppo.alpha
        } else if self.layout == Archetype::ForcedCoordination {
            PpoConfig::FC_ALPHA
        } else {
            PpoConfig::default().alpha
        }
    }

    /// Full coevolution settings for one seed, with the budget scaled.
    pub fn coevo_config(&self, seed: u64, focal_role: Role) -> CoevoConfig {
        let c = &self.coevo;
        let mut ppo = self.ppo.scaled(self.scale);
        ppo.alpha = self.alpha();
        CoevoConfig {
            n_p: c.n_p,
            n_q: c.n_q,
            generations: c.generations,
            updates_per_generation: c.updates_per_generation,
            archive_capacity: c.archive_capacity,
            pairing: c.pairing,
            use_archive: true,
            threshold: c.threshold,
            eval_episodes: c.eval_episodes,
            hidden: c.hidden.clone(),
            focal_role,
            seed,
            ppo,
        }
    }

    pub fn run_name(&self) -> String {
        if !self.name.is_empty() {
            self.name.clone()
        } else if self.layout_text.is_some() {
            CUSTOM_LAYOUT.to_string()
        } else {
            self.layout.short_name().to_string()
        }
    }
}

/// Reads and validates a config file. Unset fields take their defaults and
/// unknown keys are rejected.
pub fn load_config(path: &Path) -> Result<RunConfig, RunConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| RunConfigError::Read { path: path.display().to_string(), source })?;
    RunConfig::from_toml(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c.ppo.learning_rate, 8e-4);
        assert_eq!(c.ppo.clip, 0.05);
        assert_eq!(c.ppo.gamma, 0.99);
        assert_eq!(c.ppo.gae_lambda, 0.98);
        assert_eq!(c.horizon, 400);
        assert_eq!(c.coevo.archive_capacity, 20);
        assert_eq!(c.seeds, vec![1000, 2000, 3000, 4000, 5000]);
    }

    #[test]
    fn bad_clip_rejected() {
        let e = RunConfig::from_toml("[ppo]\nclip = 1.5\n").unwrap_err();
        assert!(e.to_string().contains("clip"), "{e}");
    }

    #[test]
    fn unknown_key_rejected() {
        let e = RunConfig::from_toml("[ppo]\nclipp = 0.1\n").unwrap_err();
        assert!(e.to_string().contains("clipp"), "{e}");
        assert!(RunConfig::from_toml("colour = 1\n").is_err());
    }

    #[test]
    fn scale_shrinks_budget() {
        let c = RunConfig::from_toml("scale = 0.01\n").unwrap();
        let cc = c.coevo_config(1000, Role::Agent);
        assert_eq!(cc.ppo.iteration_timesteps, 400);
        assert!((cc.ppo.shaping_horizon - 5e4).abs() < 1e-6);
        assert!(RunConfig::from_toml("scale = 0.0\n").is_err());
        assert!(RunConfig::from_toml("scale = 1.5\n").is_err());
    }

    #[test]
    fn seeds_must_be_distinct() {
        assert!(RunConfig::from_toml("seeds = [1, 1]\n").is_err());
        assert!(RunConfig::from_toml("seeds = []\n").is_err());
    }

    #[test]
    fn alpha_follows_layout_unless_set() {
        let fc = RunConfig::from_toml("layout = \"fc\"\n").unwrap();
        assert_eq!(fc.alpha(), 0.04);
        let cr = RunConfig::from_toml("layout = \"cr\"\n").unwrap();
        assert_eq!(cr.alpha(), 0.01);
        let set = RunConfig::from_toml("layout = \"fc\"\n[ppo]\nalpha = 0.2\n").unwrap();
        assert_eq!(set.alpha(), 0.2);
    }

    #[test]
    fn snapshot_round_trips() {
        let c = RunConfig::from_toml("layout = \"aa\"\nmethod = \"v-maze\"\n[coevo]\nn_p = 3\nn_q = 3\n").unwrap();
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back.coevo, c.coevo);
        assert_eq!(back.layout, c.layout);
        assert_eq!(back.method, c.method);
    }
}
