use super::{population_entropy, population_jsd, DiversityKind, PpoConfig, RlError};
use crate::env::{self, Action, Layout, RewardConfig, Role};
use crate::policy::{sample_action, PolicyParams};
use ndarray::Array2;
use rand::Rng;
use std::ops::Range;
use std::sync::Arc;

/// Per-step records for one role, stored episode after episode.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutBatch {
    pub role: Role,
    pub obs: Array2<f64>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    /// Sparse reward plus annealed shaped reward.
    pub env_rewards: Vec<f64>,
    /// Weighted diversity bonus; zero until `augment_rewards` runs.
    pub diversity: Vec<f64>,
    pub dones: Vec<bool>,
}

impl RolloutBatch {
    pub fn empty(role: Role, obs_dim: usize) -> Self {
        Self {
            role,
            obs: Array2::zeros((0, obs_dim)),
            actions: Vec::new(),
            log_probs: Vec::new(),
            values: Vec::new(),
            env_rewards: Vec::new(),
            diversity: Vec::new(),
            dones: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn total_rewards(&self) -> Vec<f64> {
        self.env_rewards
            .iter()
            .zip(&self.diversity)
            .map(|(r, d)| r + d)
            .collect()
    }

    /// Index ranges of complete episodes, split after every `done`.
    pub fn episodes(&self) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for (i, d) in self.dones.iter().enumerate() {
            if *d {
                out.push(start..i + 1);
                start = i + 1;
            }
        }
        if start < self.dones.len() {
            out.push(start..self.dones.len());
        }
        out
    }

    pub fn validate(&self) -> Result<(), RlError> {
        let n = self.len();
        let lens = [
            self.obs.nrows(),
            self.log_probs.len(),
            self.values.len(),
            self.env_rewards.len(),
            self.diversity.len(),
            self.dones.len(),
        ];
        if lens.iter().any(|l| *l != n) {
            return Err(RlError::RaggedBatch);
        }
        if self.env_rewards.iter().chain(&self.diversity).any(|r| !r.is_finite()) {
            return Err(RlError::NonFiniteReward);
        }
        Ok(())
    }
}

/// Who controls a player slot during collection.
#[derive(Clone, Copy, Debug)]
pub enum Seat<'a> {
    Learned(&'a PolicyParams),
    /// Always stays put; no batch is recorded.
    Idle,
}

#[derive(Clone, Debug)]
pub struct PairRollout {
    /// Indexed by `Role::index`; `None` for idle seats.
    pub batches: [Option<RolloutBatch>; 2],
    /// Total sparse reward of each episode.
    pub episode_sparse: Vec<f64>,
    /// Unannealed shaped return of each episode, per role.
    pub episode_shaped: [Vec<f64>; 2],
}

impl PairRollout {
    pub fn take(&mut self, role: Role) -> Option<RolloutBatch> {
        self.batches[role.index()].take()
    }

    pub fn mean_sparse(&self) -> f64 {
        mean(&self.episode_sparse)
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Number of full episodes that cover `iteration_timesteps`.
pub fn episodes_per_iteration(cfg: &PpoConfig, horizon: u32) -> usize {
    cfg.iteration_timesteps.div_ceil(horizon as usize).max(1)
}

/// Runs full-horizon episodes with sampled actions, `parallel_envs` at a
/// time in lockstep so each step is one batched forward per policy.
pub fn collect_rollout<R: Rng + ?Sized>(
    seats: [Seat<'_>; 2],
    layout: &Arc<Layout>,
    rewards: &RewardConfig,
    cfg: &PpoConfig,
    rng: &mut R,
) -> PairRollout {
    let dim = env::ObservationGrid::len_for(layout.height(), layout.width());
    let horizon = layout.horizon() as usize;
    let total = episodes_per_iteration(cfg, layout.horizon());
    let shaping = seats.map(|s| match s {
        Seat::Learned(p) => cfg.shaping_coef(p.train_steps),
        Seat::Idle => 0.0,
    });

    let roles = [Role::Agent, Role::Partner];
    let mut out_obs: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut batches: [Option<RolloutBatch>; 2] = roles.map(|r| match seats[r.index()] {
        Seat::Learned(_) => Some(RolloutBatch::empty(r, dim)),
        Seat::Idle => None,
    });
    let mut episode_sparse = Vec::with_capacity(total);
    let mut episode_shaped = [Vec::with_capacity(total), Vec::with_capacity(total)];

    let mut done_eps = 0;
    while done_eps < total {
        let k = cfg.parallel_envs.min(total - done_eps);
        let mut states: Vec<env::GameState> = (0..k).map(|_| env::reset(layout)).collect();
        // Per role, per env: flattened observations and per-step records.
        let mut obs_rec = vec![vec![Vec::with_capacity(horizon * dim); k]; 2];
        let mut act_rec = vec![vec![Vec::with_capacity(horizon); k]; 2];
        let mut lp_rec = vec![vec![Vec::with_capacity(horizon); k]; 2];
        let mut val_rec = vec![vec![Vec::with_capacity(horizon); k]; 2];
        let mut rew_rec = vec![vec![Vec::with_capacity(horizon); k]; 2];
        let mut sparse = vec![0.0; k];
        let mut shaped = vec![[0.0; 2]; k];
        let mut step_obs = Array2::zeros((k, dim));

        for _ in 0..horizon {
            let mut actions = vec![[Action::Stay; 2]; k];
            for role in roles {
                let Seat::Learned(policy) = seats[role.index()] else { continue };
                for (e, s) in states.iter().enumerate() {
                    let row = step_obs.row_mut(e);
                    env::encode_into(s, role, row.into_slice().expect("contiguous row"));
                }
                let fwd = policy.forward_batch(step_obs.view());
                let ri = role.index();
                for e in 0..k {
                    let dist = crate::policy::distribution_row(&fwd, e);
                    let (a, lp) = sample_action(&dist, rng);
                    actions[e][ri] = a;
                    obs_rec[ri][e].extend_from_slice(step_obs.row(e).as_slice().expect("row"));
                    act_rec[ri][e].push(a.index());
                    lp_rec[ri][e].push(lp);
                    val_rec[ri][e].push(dist.value);
                }
            }
            for (e, s) in states.iter_mut().enumerate() {
                let joint = env::JointAction::new(actions[e][0], actions[e][1]);
                let tr = s.step_mut(joint, rewards).expect("episode within horizon");
                sparse[e] += tr.sparse_reward;
                for role in roles {
                    let ri = role.index();
                    let shaped_r = rewards.shaped(&tr.events[ri]);
                    shaped[e][ri] += shaped_r;
                    if matches!(seats[ri], Seat::Learned(_)) {
                        rew_rec[ri][e].push(tr.sparse_reward + shaping[ri] * shaped_r);
                    }
                }
            }
        }

        for e in 0..k {
            episode_sparse.push(sparse[e]);
            for ri in 0..2 {
                episode_shaped[ri].push(shaped[e][ri]);
                if let Some(b) = batches[ri].as_mut() {
                    out_obs[ri].extend_from_slice(&obs_rec[ri][e]);
                    b.actions.extend_from_slice(&act_rec[ri][e]);
                    b.log_probs.extend_from_slice(&lp_rec[ri][e]);
                    b.values.extend_from_slice(&val_rec[ri][e]);
                    b.env_rewards.extend_from_slice(&rew_rec[ri][e]);
                    b.dones.extend((0..horizon).map(|t| t + 1 == horizon));
                }
            }
        }
        done_eps += k;
    }

    for ri in 0..2 {
        if let Some(b) = batches[ri].as_mut() {
            let n = b.actions.len();
            b.obs = Array2::from_shape_vec((n, dim), std::mem::take(&mut out_obs[ri])).expect("obs shape");
            b.diversity = vec![0.0; n];
        }
    }
    PairRollout { batches, episode_sparse, episode_shaped }
}

/// Adds `alpha` times the population bonus at every visited state. The
/// population is the updating policy's own population and must contain it.
/// Returns the mean unweighted bonus over the batch.
pub fn augment_rewards(
    batch: &mut RolloutBatch,
    updating: &PolicyParams,
    population: &[&PolicyParams],
    alpha: f64,
    kind: DiversityKind,
) -> Result<f64, RlError> {
    if !population.iter().any(|p| p.weights == updating.weights) {
        return Err(RlError::NotInPopulation);
    }
    if batch.is_empty() {
        return Ok(0.0);
    }
    let probs: Vec<Array2<f64>> = population
        .iter()
        .map(|p| p.forward_batch(batch.obs.view()).probs)
        .collect();
    let mut total = 0.0;
    let mut dists = vec![[0.0; env::NUM_ACTIONS]; population.len()];
    for row in 0..batch.len() {
        for (d, p) in dists.iter_mut().zip(&probs) {
            for (a, v) in d.iter_mut().enumerate() {
                *v = p[[row, a]];
            }
        }
        let bonus = match kind {
            DiversityKind::Jsd => population_jsd(&dists)?,
            DiversityKind::PopulationEntropy => population_entropy(&dists)?,
        };
        total += bonus;
        batch.diversity[row] = alpha * bonus;
    }
    Ok(total / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Archetype;
    use crate::policy::{init_policy, Architecture, InitScheme};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(horizon: u32) -> (Arc<Layout>, Architecture) {
        let layout = Arc::new(Layout::archetype(Archetype::CrampedRoom, 20, horizon).unwrap());
        let dim = env::ObservationGrid::len_for(layout.height(), layout.width());
        (layout, Architecture { input: dim, hidden: vec![16], actions: env::NUM_ACTIONS })
    }

    #[test]
    fn rollout_shapes_and_boundaries() {
        let (layout, arch) = setup(25);
        let a = init_policy(&arch, Role::Agent, 1, InitScheme::Scaled).unwrap();
        let p = init_policy(&arch, Role::Partner, 2, InitScheme::Scaled).unwrap();
        let cfg = PpoConfig { iteration_timesteps: 60, parallel_envs: 2, ..PpoConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ro = collect_rollout([Seat::Learned(&a), Seat::Learned(&p)], &layout, &RewardConfig::default(), &cfg, &mut rng);
        assert_eq!(ro.episode_sparse.len(), 3);
        for b in ro.batches.iter().flatten() {
            assert_eq!(b.len(), 75);
            b.validate().unwrap();
            assert_eq!(b.episodes(), vec![0..25, 25..50, 50..75]);
        }
    }

    #[test]
    fn rollout_is_reproducible() {
        let (layout, arch) = setup(20);
        let a = init_policy(&arch, Role::Agent, 1, InitScheme::Scaled).unwrap();
        let cfg = PpoConfig { iteration_timesteps: 40, parallel_envs: 1, ..PpoConfig::default() };
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            collect_rollout([Seat::Learned(&a), Seat::Idle], &layout, &RewardConfig::default(), &cfg, &mut rng)
        };
        let (x, y) = (run(), run());
        assert_eq!(x.batches[0], y.batches[0]);
        assert!(x.batches[1].is_none());
    }

    #[test]
    fn zero_alpha_leaves_rewards() {
        let (layout, arch) = setup(10);
        let a = init_policy(&arch, Role::Agent, 1, InitScheme::Scaled).unwrap();
        let b = init_policy(&arch, Role::Agent, 2, InitScheme::Scaled).unwrap();
        let cfg = PpoConfig { iteration_timesteps: 10, ..PpoConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut batch = collect_rollout([Seat::Learned(&a), Seat::Idle], &layout, &RewardConfig::default(), &cfg, &mut rng)
            .take(Role::Agent)
            .unwrap();
        let before = batch.total_rewards();
        augment_rewards(&mut batch, &a, &[&a, &b], 0.0, DiversityKind::Jsd).unwrap();
        assert_eq!(batch.total_rewards(), before);
    }

    #[test]
    fn identical_population_adds_nothing() {
        let (layout, arch) = setup(10);
        let a = init_policy(&arch, Role::Agent, 1, InitScheme::Scaled).unwrap();
        let cfg = PpoConfig { iteration_timesteps: 10, ..PpoConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut batch = collect_rollout([Seat::Learned(&a), Seat::Idle], &layout, &RewardConfig::default(), &cfg, &mut rng)
            .take(Role::Agent)
            .unwrap();
        let copy = a.clone();
        let mean = augment_rewards(&mut batch, &a, &[&a, &copy, &copy], 0.01, DiversityKind::Jsd).unwrap();
        assert_eq!(mean, 0.0);
        assert!(batch.diversity.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn updating_policy_must_be_in_population() {
        let (layout, arch) = setup(10);
        let a = init_policy(&arch, Role::Agent, 1, InitScheme::Scaled).unwrap();
        let b = init_policy(&arch, Role::Agent, 2, InitScheme::Scaled).unwrap();
        let mut batch = RolloutBatch::empty(Role::Agent, arch.input);
        let _ = layout;
        assert_eq!(
            augment_rewards(&mut batch, &a, &[&b], 0.01, DiversityKind::Jsd),
            Err(RlError::NotInPopulation)
        );
    }
}
