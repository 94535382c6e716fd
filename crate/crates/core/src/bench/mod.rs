//! Baselines, partner suites and cross-evaluation.

mod eval;
mod scripted;

pub use eval::{average_ranks, cross_evaluate, format_cell, fractional_ranks, EvalCell, EvalMatrix, EvalRecord, PartnerSuite, SuiteMember};
pub use scripted::{scripted_partner_action, Scripted};

use crate::archive::Archive;
use crate::coevo::{self, CoevoConfig, CoevoError, GenerationMetrics, Pairing, RunState};
use crate::env::{Layout, RewardConfig, Role};
use crate::par::{derive_seed, Parallelism};
use crate::policy::PolicyParams;
use crate::rl::{collect_rollout, ppo_update, DiversityKind, Learner, Seat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Sp,
    Pp,
    Fcp,
    MepLite,
    VMaze,
    VMazeP,
    VMazeD,
    VMazePd,
    Maze,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Sp,
        Method::Pp,
        Method::Fcp,
        Method::MepLite,
        Method::VMaze,
        Method::VMazeP,
        Method::VMazeD,
        Method::VMazePd,
        Method::Maze,
    ];

    /// Components added one at a time, from V-MAZE to MAZE.
    pub const LADDER: [Method; 5] = [Method::VMaze, Method::VMazeP, Method::VMazeD, Method::VMazePd, Method::Maze];

    /// Methods of the heterogeneity comparison.
    pub const RQ1: [Method; 3] = [Method::Sp, Method::Pp, Method::VMaze];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sp => "sp",
            Method::Pp => "pp",
            Method::Fcp => "fcp",
            Method::MepLite => "mep-lite",
            Method::VMaze => "v-maze",
            Method::VMazeP => "v-maze+p",
            Method::VMazeD => "v-maze+d",
            Method::VMazePd => "v-maze+pd",
            Method::Maze => "maze",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown method `{0}`")]
pub struct UnknownMethod(pub String);

impl FromStr for Method {
    type Err = UnknownMethod;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| UnknownMethod(s.to_string()))
    }
}

impl TryFrom<String> for Method {
    type Error = UnknownMethod;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.name().to_string()
    }
}

/// Seeds of the self-play runs that build the FCP partner pool.
pub const FCP_POOL_SEEDS: [u64; 5] = [1000, 2000, 3000, 4000, 5000];

/// Coevolution settings a population method runs with, derived from `base`.
/// Returns `None` for the two-stage methods (FCP, MEP-lite).
pub fn method_config(method: Method, base: &CoevoConfig) -> Option<CoevoConfig> {
    let plain = |pairing: Pairing, diverse: bool, archive: bool| {
        let mut c = base.clone();
        c.pairing = pairing;
        c.use_archive = archive;
        if !diverse {
            c.ppo.alpha = 0.0;
        }
        c.ppo.diversity = DiversityKind::Jsd;
        if pairing == Pairing::Fixed {
            c.n_q = c.n_p;
        }
        c
    };
    Some(match method {
        Method::Sp => CoevoConfig { n_p: 1, n_q: 1, ..plain(Pairing::Fixed, false, false) },
        Method::Pp => {
            let c = plain(Pairing::Permutation, false, false);
            CoevoConfig { n_q: c.n_q.max(c.n_p), ..c }
        }
        Method::VMaze => plain(Pairing::Fixed, false, false),
        Method::VMazeP => plain(Pairing::Random, false, false),
        Method::VMazeD => plain(Pairing::Fixed, true, false),
        Method::VMazePd => plain(Pairing::Random, true, false),
        Method::Maze => plain(base.pairing, true, true),
        Method::Fcp | Method::MepLite => return None,
    })
}

/// A trained method ready for deployment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trained {
    pub method: Method,
    pub seed: u64,
    /// Deployed by plurality vote; a single policy for SP, FCP and MEP-lite.
    pub agents: Vec<PolicyParams>,
    /// Final counterpart population.
    pub partners: Vec<PolicyParams>,
    pub archive: Option<Archive>,
    /// Training curve of the deployed population.
    pub metrics: Vec<GenerationMetrics>,
}

/// Trains `method` with `base` as the shared budget and seed. MAZE keeps
/// `base.pairing`; every other method sets its own.
pub fn run_baseline(
    method: Method,
    base: &CoevoConfig,
    layout: &Layout,
    rewards: &RewardConfig,
    par: Parallelism,
) -> Result<Trained, CoevoError> {
    let from_state = |s: RunState| Trained {
        method,
        seed: base.seed,
        agents: s.agent_policies(),
        partners: s.partner_policies(),
        archive: s.archive,
        metrics: s.metrics,
    };
    if let Some(cfg) = method_config(method, base) {
        let state = coevo::train_maze(cfg, layout.clone(), rewards.clone(), par)?;
        return Ok(from_state(state));
    }
    let pool = match method {
        Method::Fcp => fcp_pool(base, layout, rewards, par)?,
        Method::MepLite => {
            let mut cfg = method_config(Method::VMaze, base).expect("population method");
            cfg.ppo.alpha = base.ppo.alpha;
            cfg.ppo.diversity = DiversityKind::PopulationEntropy;
            cfg.n_p = base.n_q;
            cfg.n_q = base.n_q;
            coevo::train_maze(cfg, layout.clone(), rewards.clone(), par)?.partner_policies()
        }
        _ => unreachable!("population methods handled above"),
    };
    let (agent, metrics) = train_best_response(&pool, base, layout, rewards)?;
    Ok(Trained {
        method,
        seed: base.seed,
        agents: vec![agent.policy],
        partners: pool,
        archive: None,
        metrics,
    })
}

/// First, middle and last partner checkpoints of five self-play runs.
fn fcp_pool(
    base: &CoevoConfig,
    layout: &Layout,
    rewards: &RewardConfig,
    par: Parallelism,
) -> Result<Vec<PolicyParams>, CoevoError> {
    let mut pool = Vec::with_capacity(3 * FCP_POOL_SEEDS.len());
    for seed in FCP_POOL_SEEDS {
        let cfg = CoevoConfig { seed, ..method_config(Method::Sp, base).expect("population method") };
        let mut state = RunState::new(cfg, layout.clone(), rewards.clone(), par)?;
        pool.push(state.partners[0].policy.clone());
        let middle = state.config.generations / 2;
        while state.generation < middle {
            coevo::run_generation(&mut state, par)?;
        }
        pool.push(state.partners[0].policy.clone());
        coevo::continue_run(&mut state, par, &mut |_| Ok(()))?;
        pool.push(state.partners[0].policy.clone());
    }
    Ok(pool)
}

const STREAM_BR: u64 = 11;

/// Trains one fresh policy in `base.focal_role` against partners drawn
/// uniformly from `pool` for every update; the pool stays frozen.
pub fn train_best_response(
    pool: &[PolicyParams],
    base: &CoevoConfig,
    layout: &Layout,
    rewards: &RewardConfig,
) -> Result<(Learner, Vec<GenerationMetrics>), CoevoError> {
    base.validate()?;
    if pool.is_empty() {
        return Err(CoevoError::Deploy(crate::deploy::DeployError::NoPartners));
    }
    let focal = base.focal_role;
    let arch = base.architecture(layout);
    let mut learner = coevo::init_population(&arch, focal, 1, base.seed, STREAM_BR, 0)?.remove(0);
    let layout = Arc::new(layout.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base.seed, &[STREAM_BR]));
    let mut metrics = Vec::with_capacity(base.generations);
    for gen in 0..base.generations {
        let mut last = 0.0;
        for _ in 0..base.updates_per_generation {
            let partner = &pool[rng.gen_range(0..pool.len())];
            let seats = match focal {
                Role::Agent => [Seat::Learned(&learner.policy), Seat::Learned(partner)],
                Role::Partner => [Seat::Learned(partner), Seat::Learned(&learner.policy)],
            };
            let mut ro = collect_rollout(seats, &layout, rewards, &base.ppo, &mut rng);
            let batch = ro.take(focal).expect("learned seat");
            ppo_update(&mut learner, &batch, &base.ppo, &mut rng)
                .map_err(|source| CoevoError::Training { generation: gen, pair: 0, source })?;
            learner.policy.train_steps += batch.len() as u64;
            last = ro.mean_sparse();
        }
        metrics.push(GenerationMetrics {
            generation: gen + 1,
            mean_reward: last,
            env_steps: learner.policy.train_steps,
            ..GenerationMetrics::default()
        });
    }
    Ok((learner, metrics))
}
