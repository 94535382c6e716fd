//! Cooperative coevolution of an agent population and a partner population.

use crate::archive::{self, Archive, ArchiveError, InsertOutcome, Threshold};
use crate::deploy::{self, ActMode, DeployError};
use crate::env::{self, Layout, RewardConfig, Role, NUM_ACTIONS};
use crate::par::{self, derive_seed, Parallelism};
use crate::policy::{init_policy, Architecture, InitScheme, PolicyError, PolicyParams};
use crate::rl::{augment_rewards, collect_rollout, ppo_update, ConfigError, Learner, PpoConfig, RlError, Seat};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoevoError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("best and worst pairing need an evaluation matrix")]
    MissingEvalMatrix,
    #[error("evaluation matrix is {rows}x{cols}, expected {n_p}x{n_q}")]
    EvalMatrixShape { rows: usize, cols: usize, n_p: usize, n_q: usize },
    #[error("fixed pairing needs equal population sizes, got {n_p} and {n_q}")]
    FixedSizeMismatch { n_p: usize, n_q: usize },
    #[error("permutation pairing needs at least as many partners as agents, got {n_p} and {n_q}")]
    PermutationTooFewPartners { n_p: usize, n_q: usize },
    #[error("training failed in generation {generation}, pair {pair}: {source}")]
    Training { generation: usize, pair: usize, source: RlError },
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Deploy(#[from] DeployError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("{0}")]
    Observer(String),
}

/// How each agent picks its partner at the start of a generation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Agent i always trains with partner i.
    Fixed,
    /// Independent uniform draws, with replacement.
    #[default]
    Random,
    /// Uniform draws without replacement.
    Permutation,
    /// The partner with the highest greedy reward for this agent.
    Best,
    /// The partner with the lowest greedy reward for this agent.
    Worst,
}

impl Pairing {
    pub fn needs_eval(self) -> bool {
        matches!(self, Pairing::Best | Pairing::Worst)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoevoConfig {
    pub n_p: usize,
    pub n_q: usize,
    pub generations: usize,
    pub updates_per_generation: usize,
    pub archive_capacity: usize,
    pub pairing: Pairing,
    /// Partner populations come from the archive; otherwise each partner
    /// slot keeps its own lineage.
    pub use_archive: bool,
    pub threshold: Threshold,
    pub eval_episodes: usize,
    pub hidden: Vec<usize>,
    /// Seat occupied by the population this run deploys.
    pub focal_role: Role,
    pub seed: u64,
    pub ppo: PpoConfig,
}

impl Default for CoevoConfig {
    fn default() -> Self {
        Self {
            n_p: 5,
            n_q: 5,
            generations: 35,
            updates_per_generation: 5,
            archive_capacity: 20,
            pairing: Pairing::Random,
            use_archive: true,
            threshold: Threshold::default(),
            eval_episodes: 5,
            hidden: vec![64, 64, 64],
            focal_role: Role::Agent,
            seed: 1000,
            ppo: PpoConfig::default(),
        }
    }
}

impl CoevoConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |field: &'static str, reason: &str| Err(ConfigError { field, reason: reason.to_string() });
        self.ppo.validate()?;
        if self.n_p == 0 {
            return err("n_p", "must be positive");
        }
        if self.n_q == 0 {
            return err("n_q", "must be positive");
        }
        if self.updates_per_generation == 0 {
            return err("updates_per_generation", "must be positive");
        }
        if self.archive_capacity == 0 {
            return err("archive_capacity", "must be positive");
        }
        if self.use_archive && self.archive_capacity < self.n_q {
            return err("archive_capacity", "must be at least n_q");
        }
        if self.eval_episodes == 0 {
            return err("eval_episodes", "must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return err("hidden", "needs at least one nonzero layer width");
        }
        match self.threshold {
            Threshold::Relative(c) | Threshold::Absolute(c) if !(c >= 0.0 && c.is_finite()) => {
                return err("threshold", "must be a nonnegative finite number");
            }
            _ => {}
        }
        if self.pairing == Pairing::Fixed && self.n_p != self.n_q {
            return err("pairing", "fixed pairing needs n_p = n_q");
        }
        if self.pairing == Pairing::Permutation && self.n_q < self.n_p {
            return err("pairing", "permutation pairing needs n_q >= n_p");
        }
        Ok(())
    }

    pub fn architecture(&self, layout: &Layout) -> Architecture {
        Architecture {
            input: env::ObservationGrid::len_for(layout.height(), layout.width()),
            hidden: self.hidden.clone(),
            actions: NUM_ACTIONS,
        }
    }
}

/// One partner index per agent, in agent order.
pub fn pair_populations<R: Rng + ?Sized>(
    n_p: usize,
    n_q: usize,
    strategy: Pairing,
    rng: &mut R,
    eval_matrix: Option<&[Vec<f64>]>,
) -> Result<Vec<(usize, usize)>, CoevoError> {
    let pick = |row: &[f64], better: fn(f64, f64) -> bool| {
        let mut best = 0;
        for (j, v) in row.iter().enumerate() {
            if better(*v, row[best]) {
                best = j;
            }
        }
        best
    };
    match strategy {
        Pairing::Fixed => {
            if n_p != n_q {
                return Err(CoevoError::FixedSizeMismatch { n_p, n_q });
            }
            Ok((0..n_p).map(|i| (i, i)).collect())
        }
        Pairing::Random => Ok((0..n_p).map(|i| (i, rng.gen_range(0..n_q))).collect()),
        Pairing::Permutation => {
            if n_q < n_p {
                return Err(CoevoError::PermutationTooFewPartners { n_p, n_q });
            }
            let mut idx: Vec<usize> = (0..n_q).collect();
            idx.shuffle(rng);
            Ok(idx.into_iter().take(n_p).enumerate().collect())
        }
        Pairing::Best | Pairing::Worst => {
            let m = eval_matrix.ok_or(CoevoError::MissingEvalMatrix)?;
            if m.len() != n_p || m.iter().any(|r| r.len() != n_q) {
                let cols = m.first().map_or(0, |r| r.len());
                return Err(CoevoError::EvalMatrixShape { rows: m.len(), cols, n_p, n_q });
            }
            let better: fn(f64, f64) -> bool = if strategy == Pairing::Best { |a, b| a > b } else { |a, b| a < b };
            Ok(m.iter().enumerate().map(|(i, row)| (i, pick(row, better))).collect())
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationMetrics {
    pub generation: usize,
    /// Mean sparse episode return over all pairs in the last update iteration.
    pub mean_reward: f64,
    /// Mean unweighted diversity bonus of the agent population.
    pub agent_diversity: f64,
    pub partner_diversity: f64,
    pub archive_size: usize,
    pub added: usize,
    pub replaced: usize,
    pub rejected: usize,
    /// Environment steps each agent has trained on so far.
    pub env_steps: u64,
}

/// Everything needed to continue a run bit-exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub config: CoevoConfig,
    pub layout: Layout,
    pub rewards: RewardConfig,
    pub generation: usize,
    pub agents: Vec<Learner>,
    pub partners: Vec<Learner>,
    pub archive: Option<Archive>,
    pub rng: ChaCha8Rng,
    pub next_lineage: u64,
    pub metrics: Vec<GenerationMetrics>,
}

const STREAM_INIT_AGENT: u64 = 1;
const STREAM_INIT_PARTNER: u64 = 2;
const STREAM_RUN: u64 = 3;
const STREAM_PAIR: u64 = 4;
const STREAM_EVAL: u64 = 5;

/// Fresh learners for one seat, seeded from `(seed, stream, index)`.
pub fn init_population(
    arch: &Architecture,
    role: Role,
    n: usize,
    seed: u64,
    stream: u64,
    first_lineage: u64,
) -> Result<Vec<Learner>, PolicyError> {
    (0..n)
        .map(|i| {
            let mut p = init_policy(arch, role, derive_seed(seed, &[stream, i as u64]), InitScheme::Scaled)?;
            p.lineage = first_lineage + i as u64;
            Ok(Learner::new(p))
        })
        .collect()
}

fn policies(ls: &[Learner]) -> Vec<PolicyParams> {
    ls.iter().map(|l| l.policy.clone()).collect()
}

/// Greedy mean reward of focal member i with counterpart j, as `[i][j]`,
/// seating each side in its own role.
#[allow(clippy::too_many_arguments)]
pub fn focal_matrix(
    focal_role: Role,
    focal: &[PolicyParams],
    others: &[PolicyParams],
    layout: &Arc<Layout>,
    rewards: &RewardConfig,
    episodes: usize,
    seed: u64,
    par: Parallelism,
) -> Result<Vec<Vec<f64>>, DeployError> {
    match focal_role {
        Role::Agent => deploy::eval_matrix(focal, others, layout, rewards, episodes, ActMode::Greedy, seed, par),
        Role::Partner => {
            let m = deploy::eval_matrix(others, focal, layout, rewards, episodes, ActMode::Greedy, seed, par)?;
            Ok((0..focal.len()).map(|i| m.iter().map(|r| r[i]).collect()).collect())
        }
    }
}

/// Behavior vectors of `partners` against the focal population.
fn behaviors(
    state: &RunState,
    layout: &Arc<Layout>,
    focal: &[PolicyParams],
    partners: &[PolicyParams],
    par: Parallelism,
) -> Result<Vec<Vec<f64>>, CoevoError> {
    let cfg = &state.config;
    Ok(match cfg.focal_role {
        Role::Agent => archive::behavior_matrix(partners, focal, layout, &state.rewards, cfg.eval_episodes, par)?,
        Role::Partner => {
            let m = focal_matrix(Role::Partner, focal, partners, layout, &state.rewards, cfg.eval_episodes, 0, par)?;
            (0..partners.len()).map(|j| m.iter().map(|r| r[j]).collect()).collect()
        }
    })
}

impl RunState {
    /// Initial populations, with the archive seeded by the partner population.
    pub fn new(config: CoevoConfig, layout: Layout, rewards: RewardConfig, par: Parallelism) -> Result<Self, CoevoError> {
        config.validate()?;
        let arch = config.architecture(&layout);
        let focal = config.focal_role;
        let agents = init_population(&arch, focal, config.n_p, config.seed, STREAM_INIT_AGENT, 0)?;
        let partners =
            init_population(&arch, focal.other(), config.n_q, config.seed, STREAM_INIT_PARTNER, config.n_p as u64)?;
        let mut state = Self {
            rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[STREAM_RUN])),
            next_lineage: (config.n_p + config.n_q) as u64,
            config,
            layout,
            rewards,
            generation: 0,
            agents,
            partners,
            archive: None,
            metrics: Vec::new(),
        };
        if state.config.use_archive {
            let layout = Arc::new(state.layout.clone());
            let b = behaviors(&state, &layout, &policies(&state.agents), &policies(&state.partners), par)?;
            let mut a = Archive::new(state.config.archive_capacity, state.config.threshold)?;
            for (p, b) in state.partners.iter().zip(b) {
                a.seed_entry(p.clone(), b)?;
            }
            state.archive = Some(a);
        }
        Ok(state)
    }

    pub fn is_finished(&self) -> bool {
        self.generation >= self.config.generations
    }

    pub fn agent_policies(&self) -> Vec<PolicyParams> {
        policies(&self.agents)
    }

    pub fn partner_policies(&self) -> Vec<PolicyParams> {
        policies(&self.partners)
    }
}

struct PairResult {
    mean_sparse: f64,
    agent_bonus: f64,
    partner_bonus: f64,
}

/// One generation: pair, train every pair for the configured number of
/// updates, then form the next populations. On error `state` is unchanged.
pub fn run_generation(state: &mut RunState, par: Parallelism) -> Result<GenerationMetrics, CoevoError> {
    let cfg = state.config.clone();
    let layout = Arc::new(state.layout.clone());
    let mut rng = state.rng.clone();
    let gen = state.generation;
    let focal = cfg.focal_role;

    let matrix = if cfg.pairing.needs_eval() {
        Some(focal_matrix(
            focal,
            &state.agent_policies(),
            &state.partner_policies(),
            &layout,
            &state.rewards,
            cfg.eval_episodes,
            derive_seed(cfg.seed, &[STREAM_EVAL, gen as u64]),
            par,
        )?)
    } else {
        None
    };
    let pairs = pair_populations(cfg.n_p, cfg.n_q, cfg.pairing, &mut rng, matrix.as_deref())?;

    let mut next_lineage = state.next_lineage;
    let mut used = vec![false; cfg.n_q];
    let mut work: Vec<(Learner, Learner)> = pairs
        .iter()
        .map(|&(i, j)| {
            let mut copy = state.partners[j].clone();
            if used[j] {
                copy.policy.lineage = next_lineage;
                next_lineage += 1;
            }
            used[j] = true;
            (state.agents[i].clone(), copy)
        })
        .collect();

    let mut last = Vec::new();
    for iter in 0..cfg.updates_per_generation {
        let agent_snap: Vec<PolicyParams> = work.iter().map(|w| w.0.policy.clone()).collect();
        let partner_snap: Vec<PolicyParams> = work.iter().map(|w| w.1.policy.clone()).collect();
        let agent_refs: Vec<&PolicyParams> = agent_snap.iter().collect();
        let partner_refs: Vec<&PolicyParams> = partner_snap.iter().collect();
        let results = par::map_mut(par, &mut work, |k, (agent, partner)| -> Result<PairResult, RlError> {
            let mut prng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[STREAM_PAIR, gen as u64, iter as u64, k as u64]));
            let seats = match focal {
                Role::Agent => [Seat::Learned(&agent.policy), Seat::Learned(&partner.policy)],
                Role::Partner => [Seat::Learned(&partner.policy), Seat::Learned(&agent.policy)],
            };
            let mut ro = collect_rollout(seats, &layout, &state.rewards, &cfg.ppo, &mut prng);
            let mut ab = ro.take(focal).expect("learned seat");
            let mut pb = ro.take(focal.other()).expect("learned seat");
            let alpha = cfg.ppo.alpha;
            let agent_bonus = augment_rewards(&mut ab, &agent.policy, &agent_refs, alpha, cfg.ppo.diversity)?;
            let partner_bonus = augment_rewards(&mut pb, &partner.policy, &partner_refs, alpha, cfg.ppo.diversity)?;
            ppo_update(agent, &ab, &cfg.ppo, &mut prng)?;
            ppo_update(partner, &pb, &cfg.ppo, &mut prng)?;
            agent.policy.train_steps += ab.len() as u64;
            partner.policy.train_steps += pb.len() as u64;
            Ok(PairResult { mean_sparse: ro.mean_sparse(), agent_bonus, partner_bonus })
        });
        last = results
            .into_iter()
            .enumerate()
            .map(|(pair, r)| r.map_err(|source| CoevoError::Training { generation: gen, pair, source }))
            .collect::<Result<Vec<_>, _>>()?;
    }

    let mut agents = state.agents.clone();
    for (&(i, _), (a, _)) in pairs.iter().zip(&work) {
        agents[i] = a.clone();
    }
    let agent_pols = policies(&agents);
    let mut counts = [0usize; 3];
    let (partners, archive) = match &state.archive {
        Some(old) => {
            let mut a = old.clone();
            let refreshed = behaviors(state, &layout, &agent_pols, &a.partners(), par)?;
            a.set_behaviors(refreshed)?;
            let updated: Vec<PolicyParams> = work.iter().map(|w| w.1.policy.clone()).collect();
            let new_b = behaviors(state, &layout, &agent_pols, &updated, par)?;
            for ((_, p), b) in work.into_iter().zip(new_b) {
                let k = match a.insert(p, b, &mut rng)? {
                    InsertOutcome::Added => 0,
                    InsertOutcome::ReplacedOld => 1,
                    InsertOutcome::RejectedKeptOld => 2,
                };
                counts[k] += 1;
            }
            let (q, _) = archive::select_partner_population(&a, cfg.n_q, &mut rng)?;
            (q, Some(a))
        }
        None => {
            let mut q = state.partners.clone();
            let mut done = vec![false; cfg.n_q];
            for (&(_, j), (_, p)) in pairs.iter().zip(work) {
                if !done[j] {
                    let lineage = q[j].policy.lineage;
                    q[j] = p;
                    q[j].policy.lineage = lineage;
                    done[j] = true;
                }
            }
            (q, None)
        }
    };

    let mean = |f: fn(&PairResult) -> f64| last.iter().map(f).sum::<f64>() / last.len() as f64;
    let metrics = GenerationMetrics {
        generation: gen + 1,
        mean_reward: mean(|r| r.mean_sparse),
        agent_diversity: mean(|r| r.agent_bonus),
        partner_diversity: mean(|r| r.partner_bonus),
        archive_size: archive.as_ref().map_or(0, |a| a.len()),
        added: counts[0],
        replaced: counts[1],
        rejected: counts[2],
        env_steps: agents.iter().map(|a| a.policy.train_steps).max().unwrap_or(0),
    };

    state.agents = agents;
    state.partners = partners;
    state.archive = archive;
    state.rng = rng;
    state.next_lineage = next_lineage;
    state.generation = gen + 1;
    state.metrics.push(metrics.clone());
    Ok(metrics)
}

/// Runs generations until the configured count, calling `observer` after
/// each one (checkpointing hooks in here).
pub fn continue_run(
    state: &mut RunState,
    par: Parallelism,
    observer: &mut dyn FnMut(&RunState) -> Result<(), CoevoError>,
) -> Result<(), CoevoError> {
    while !state.is_finished() {
        run_generation(state, par)?;
        observer(state)?;
    }
    Ok(())
}

/// Initializes and runs a full coevolution.
pub fn train_maze(
    config: CoevoConfig,
    layout: Layout,
    rewards: RewardConfig,
    par: Parallelism,
) -> Result<RunState, CoevoError> {
    let mut state = RunState::new(config, layout, rewards, par)?;
    continue_run(&mut state, par, &mut |_| Ok(()))?;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..3 {
            assert_eq!(
                pair_populations(3, 3, Pairing::Fixed, &mut rng, None).unwrap(),
                vec![(0, 0), (1, 1), (2, 2)]
            );
        }
        assert_eq!(
            pair_populations(2, 3, Pairing::Fixed, &mut rng, None),
            Err(CoevoError::FixedSizeMismatch { n_p: 2, n_q: 3 })
        );
    }

    #[test]
    fn best_and_worst_follow_rows() {
        let m = vec![vec![5.0, 1.0], vec![2.0, 6.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(pair_populations(2, 2, Pairing::Best, &mut rng, Some(&m)).unwrap(), vec![(0, 0), (1, 1)]);
        assert_eq!(pair_populations(2, 2, Pairing::Worst, &mut rng, Some(&m)).unwrap(), vec![(0, 1), (1, 0)]);
        assert_eq!(pair_populations(2, 2, Pairing::Best, &mut rng, None), Err(CoevoError::MissingEvalMatrix));
        let tie = vec![vec![3.0, 3.0]];
        assert_eq!(pair_populations(1, 2, Pairing::Best, &mut rng, Some(&tie)).unwrap(), vec![(0, 0)]);
        assert_eq!(pair_populations(1, 2, Pairing::Worst, &mut rng, Some(&tie)).unwrap(), vec![(0, 0)]);
    }

    #[test]
    fn random_pairing_is_reproducible() {
        let draw = || pair_populations(5, 5, Pairing::Random, &mut ChaCha8Rng::seed_from_u64(9), None).unwrap();
        assert_eq!(draw(), draw());
    }

    #[test]
    fn permutation_has_distinct_partners() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let p = pair_populations(4, 5, Pairing::Permutation, &mut rng, None).unwrap();
            let mut js: Vec<usize> = p.iter().map(|x| x.1).collect();
            js.sort();
            js.dedup();
            assert_eq!(js.len(), 4);
        }
    }

    #[test]
    fn random_pairing_is_uniform() {
        // Chi-square goodness of fit, 4 degrees of freedom; 13.277 is the
        // 0.99 quantile.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let trials = 500;
        let mut counts = [0usize; 5];
        for _ in 0..trials {
            let p = pair_populations(5, 5, Pairing::Random, &mut rng, None).unwrap();
            counts[p[0].1] += 1;
        }
        let expected = trials as f64 / 5.0;
        let chi2: f64 = counts.iter().map(|c| (*c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 13.277, "chi2 {chi2} counts {counts:?}");
    }

    #[test]
    fn config_validation() {
        let ok = CoevoConfig::default();
        ok.validate().unwrap();
        let bad = CoevoConfig { archive_capacity: 3, ..CoevoConfig::default() };
        assert_eq!(bad.validate().unwrap_err().field, "archive_capacity");
        let bad = CoevoConfig { pairing: Pairing::Fixed, n_q: 4, ..CoevoConfig::default() };
        assert_eq!(bad.validate().unwrap_err().field, "pairing");
    }
}
