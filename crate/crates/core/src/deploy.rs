//! Pairwise evaluation, ensemble voting and best-response-offline selection.

use crate::env::{self, Action, GameState, Layout, RewardConfig, Role, NUM_ACTIONS};
use crate::par::{self, derive_seed, Parallelism};
use crate::policy::{sample_action, ActionDistribution, PolicyError, PolicyParams};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeployError {
    #[error("population is empty")]
    EmptyPopulation,
    #[error("no partners to evaluate against")]
    NoPartners,
    #[error("evaluation needs at least one episode")]
    ZeroEpisodes,
    #[error("{found:?} policy seated as {expected:?}")]
    RoleMismatch { expected: Role, found: Role },
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActMode {
    #[default]
    Greedy,
    Sample,
}

/// Anything that can drive one player slot.
pub trait Controller: Sync {
    fn act(&self, state: &GameState, role: Role, mode: ActMode, rng: &mut dyn RngCore) -> Action;

    /// The role this controller was trained for, if it has one.
    fn trained_role(&self) -> Option<Role> {
        None
    }

    /// True when `act` ignores the rng under `mode`.
    fn deterministic(&self, mode: ActMode) -> bool {
        mode == ActMode::Greedy
    }
}

impl<T: Controller + ?Sized> Controller for &T {
    fn act(&self, state: &GameState, role: Role, mode: ActMode, rng: &mut dyn RngCore) -> Action {
        (**self).act(state, role, mode, rng)
    }

    fn trained_role(&self) -> Option<Role> {
        (**self).trained_role()
    }

    fn deterministic(&self, mode: ActMode) -> bool {
        (**self).deterministic(mode)
    }
}

fn observe(state: &GameState, role: Role) -> Vec<f64> {
    let layout = &state.layout;
    let mut obs = vec![0.0; env::ObservationGrid::len_for(layout.height(), layout.width())];
    env::encode_into(state, role, &mut obs);
    obs
}

fn distribution(policy: &PolicyParams, state: &GameState, role: Role) -> ActionDistribution {
    policy
        .forward(&observe(state, role))
        .expect("observation size checked against the layout")
}

impl Controller for PolicyParams {
    fn act(&self, state: &GameState, role: Role, mode: ActMode, rng: &mut dyn RngCore) -> Action {
        let dist = distribution(self, state, role);
        match mode {
            ActMode::Greedy => dist.argmax(),
            ActMode::Sample => sample_action(&dist, rng).0,
        }
    }

    fn trained_role(&self) -> Option<Role> {
        Some(self.role)
    }
}

/// Never moves.
#[derive(Clone, Copy, Debug, Default)]
pub struct Idle;

impl Controller for Idle {
    fn act(&self, _: &GameState, _: Role, _: ActMode, _: &mut dyn RngCore) -> Action {
        Action::Stay
    }

    fn deterministic(&self, _: ActMode) -> bool {
        true
    }
}

/// Plurality vote of a population's greedy actions.
#[derive(Clone, Debug)]
pub struct Ensemble {
    members: Vec<PolicyParams>,
}

impl Ensemble {
    pub fn new(members: Vec<PolicyParams>) -> Result<Self, DeployError> {
        let first = members.first().ok_or(DeployError::EmptyPopulation)?;
        if let Some(m) = members.iter().find(|m| m.role != first.role) {
            return Err(DeployError::RoleMismatch { expected: first.role, found: m.role });
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[PolicyParams] {
        &self.members
    }
}

impl Controller for Ensemble {
    fn act(&self, state: &GameState, role: Role, _: ActMode, _: &mut dyn RngCore) -> Action {
        let obs = observe(state, role);
        ensemble_action(&self.members, &obs).expect("ensemble is nonempty")
    }

    fn trained_role(&self) -> Option<Role> {
        Some(self.members[0].role)
    }

    fn deterministic(&self, _: ActMode) -> bool {
        true
    }
}

/// Each member votes its argmax; the plurality wins. Ties go to the action
/// with the larger summed probability across members, then the lower index.
pub fn ensemble_action(agents: &[PolicyParams], obs: &[f64]) -> Result<Action, DeployError> {
    let dists = agents
        .iter()
        .map(|a| a.forward(obs))
        .collect::<Result<Vec<_>, _>>()?;
    vote(&dists)
}

/// The voting rule of [`ensemble_action`] on precomputed distributions.
pub fn vote(dists: &[ActionDistribution]) -> Result<Action, DeployError> {
    if dists.is_empty() {
        return Err(DeployError::EmptyPopulation);
    }
    let mut votes = [0usize; NUM_ACTIONS];
    let mut mass = [0.0; NUM_ACTIONS];
    for d in dists {
        votes[d.argmax().index()] += 1;
        for (m, p) in mass.iter_mut().zip(&d.probs) {
            *m += p;
        }
    }
    let mut best = 0;
    for a in 1..NUM_ACTIONS {
        if votes[a] > votes[best] || (votes[a] == votes[best] && mass[a] > mass[best]) {
            best = a;
        }
    }
    Ok(Action::from_index(best).expect("action index"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub mean: f64,
    /// Population standard deviation over episodes.
    pub std: f64,
    pub returns: Vec<f64>,
}

impl EvalResult {
    pub fn from_returns(returns: Vec<f64>) -> Self {
        let n = returns.len().max(1) as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt(), returns }
    }
}

/// Total sparse reward of one full episode.
pub fn play_episode(
    p1: &dyn Controller,
    p2: &dyn Controller,
    layout: &Arc<Layout>,
    rewards: &RewardConfig,
    mode: ActMode,
    rng: &mut dyn RngCore,
) -> f64 {
    let mut state = env::reset(layout);
    let mut total = 0.0;
    while !state.is_done() {
        let a = p1.act(&state, Role::Agent, mode, rng);
        let b = p2.act(&state, Role::Partner, mode, rng);
        let tr = state
            .step_mut(env::JointAction::new(a, b), rewards)
            .expect("loop stops at the horizon");
        total += tr.sparse_reward;
    }
    total
}

/// Plays `episodes` episodes with `p1` as player 1 and `p2` as player 2.
/// When both sides are deterministic under `mode`, one episode is played and
/// its return repeated, since every episode would be identical.
pub fn evaluate_pair(
    p1: &dyn Controller,
    p2: &dyn Controller,
    layout: &Arc<Layout>,
    rewards: &RewardConfig,
    episodes: usize,
    mode: ActMode,
    rng: &mut dyn RngCore,
) -> Result<EvalResult, DeployError> {
    if episodes == 0 {
        return Err(DeployError::ZeroEpisodes);
    }
    for (c, seat) in [(p1, Role::Agent), (p2, Role::Partner)] {
        if let Some(found) = c.trained_role() {
            if found != seat {
                return Err(DeployError::RoleMismatch { expected: seat, found });
            }
        }
    }
    let returns = if p1.deterministic(mode) && p2.deterministic(mode) {
        vec![play_episode(p1, p2, layout, rewards, mode, rng); episodes]
    } else {
        (0..episodes)
            .map(|_| play_episode(p1, p2, layout, rewards, mode, rng))
            .collect()
    };
    Ok(EvalResult::from_returns(returns))
}

/// Mean greedy or sampled reward of every (row, column) pairing. Each cell
/// gets its own random stream, so the result does not depend on `par`.
#[allow(clippy::too_many_arguments)]
pub fn eval_matrix<A: Controller, B: Controller>(
    rows: &[A],
    cols: &[B],
    layout: &Arc<Layout>,
    rewards: &RewardConfig,
    episodes: usize,
    mode: ActMode,
    seed: u64,
    par: Parallelism,
) -> Result<Vec<Vec<f64>>, DeployError> {
    let cells: Vec<(usize, usize)> = (0..rows.len())
        .flat_map(|i| (0..cols.len()).map(move |j| (i, j)))
        .collect();
    let values = par::map(par, &cells, |_, &(i, j)| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[i as u64, j as u64]));
        evaluate_pair(&rows[i], &cols[j], layout, rewards, episodes, mode, &mut rng).map(|r| r.mean)
    });
    let mut out = vec![Vec::with_capacity(cols.len()); rows.len()];
    for ((i, _), v) in cells.into_iter().zip(values) {
        out[i].push(v?);
    }
    Ok(out)
}

/// Row with the highest mean; lowest index on ties.
pub fn best_row(matrix: &[Vec<f64>]) -> Option<usize> {
    let means: Vec<f64> = matrix
        .iter()
        .map(|r| r.iter().sum::<f64>() / r.len().max(1) as f64)
        .collect();
    let mut best = None;
    for (i, m) in means.iter().enumerate() {
        match best {
            Some(b) if means[b] >= *m => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Index of the agent with the highest mean greedy reward across all
/// `partners`.
pub fn select_best_response_offline(
    agents: &[PolicyParams],
    partners: &[PolicyParams],
    layout: &Arc<Layout>,
    rewards: &RewardConfig,
    episodes: usize,
    par: Parallelism,
) -> Result<usize, DeployError> {
    if agents.is_empty() {
        return Err(DeployError::EmptyPopulation);
    }
    if partners.is_empty() {
        return Err(DeployError::NoPartners);
    }
    let m = eval_matrix(agents, partners, layout, rewards, episodes, ActMode::Greedy, 0, par)?;
    Ok(best_row(&m).expect("nonempty"))
}
