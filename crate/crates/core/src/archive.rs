//! Partner archive keyed by behavior vectors: the mean reward each partner
//! earns with every current agent.

use crate::deploy::{self, ActMode, DeployError};
use crate::env::{Layout, RewardConfig};
use crate::par::Parallelism;
use crate::policy::PolicyParams;
use crate::rl::Learner;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArchiveError {
    #[error("behavior has {found} components, archive holds {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("behavior vector contains a non-finite value")]
    NonFinite,
    #[error("need at least {needed} points, have {have}")]
    TooFewPoints { needed: usize, have: usize },
    #[error("cluster count must be positive")]
    ZeroClusters,
    #[error("archive capacity must be positive")]
    ZeroCapacity,
    #[error(transparent)]
    Eval(#[from] DeployError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub id: u64,
    pub partner: Learner,
    pub behavior: Vec<f64>,
    pub inserted_at: u64,
}

/// How the novelty threshold is set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// This fraction of the mean pairwise distance among current entries.
    Relative(f64),
    Absolute(f64),
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::Relative(0.1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsertOutcome {
    Added,
    ReplacedOld,
    RejectedKeptOld,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Archive {
    entries: Vec<ArchiveEntry>,
    capacity: usize,
    threshold: Threshold,
    next_insert: u64,
    next_id: u64,
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

impl Archive {
    pub fn new(capacity: usize, threshold: Threshold) -> Result<Self, ArchiveError> {
        if capacity == 0 {
            return Err(ArchiveError::ZeroCapacity);
        }
        Ok(Self { entries: Vec::new(), capacity, threshold, next_insert: 0, next_id: 0 })
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn partners(&self) -> Vec<PolicyParams> {
        self.entries.iter().map(|e| e.partner.policy.clone()).collect()
    }

    /// Current novelty threshold.
    pub fn threshold_value(&self) -> f64 {
        match self.threshold {
            Threshold::Absolute(c) => c,
            Threshold::Relative(c) => {
                let n = self.entries.len();
                if n < 2 {
                    return 0.0;
                }
                let mut total = 0.0;
                for i in 0..n {
                    for j in i + 1..n {
                        total += distance(&self.entries[i].behavior, &self.entries[j].behavior);
                    }
                }
                c * total / (n * (n - 1) / 2) as f64
            }
        }
    }

    fn check(&self, behavior: &[f64]) -> Result<(), ArchiveError> {
        if let Some(e) = self.entries.first() {
            if e.behavior.len() != behavior.len() {
                return Err(ArchiveError::DimensionMismatch { expected: e.behavior.len(), found: behavior.len() });
            }
        }
        if behavior.iter().any(|x| !x.is_finite()) {
            return Err(ArchiveError::NonFinite);
        }
        Ok(())
    }

    fn push(&mut self, partner: Learner, behavior: Vec<f64>) {
        let entry = ArchiveEntry { id: self.next_id, partner, behavior, inserted_at: self.next_insert };
        self.next_id += 1;
        self.next_insert += 1;
        self.entries.push(entry);
    }

    /// Appends without a novelty test; used to seed the archive.
    pub fn seed_entry(&mut self, partner: Learner, behavior: Vec<f64>) -> Result<(), ArchiveError> {
        self.check(&behavior)?;
        self.push(partner, behavior);
        self.evict_overflow();
        Ok(())
    }

    /// Adds `partner` if its behavior is farther than the threshold from its
    /// nearest entry; otherwise a fair coin decides whether it replaces that
    /// entry. Overflow evicts the oldest entry.
    pub fn insert<R: Rng + ?Sized>(
        &mut self,
        partner: Learner,
        behavior: Vec<f64>,
        rng: &mut R,
    ) -> Result<InsertOutcome, ArchiveError> {
        self.check(&behavior)?;
        let threshold = self.threshold_value();
        let nearest = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (i, distance(&e.behavior, &behavior)))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd <= d => best,
                _ => Some((i, d)),
            });
        let outcome = match nearest {
            Some((i, d)) if d <= threshold => {
                if rng.gen_bool(0.5) {
                    self.entries.remove(i);
                    self.push(partner, behavior);
                    InsertOutcome::ReplacedOld
                } else {
                    InsertOutcome::RejectedKeptOld
                }
            }
            _ => {
                self.push(partner, behavior);
                InsertOutcome::Added
            }
        };
        self.evict_overflow();
        Ok(outcome)
    }

    fn evict_overflow(&mut self) {
        while self.entries.len() > self.capacity {
            let oldest = self
                .entries
                .iter()
                .enumerate()
                .min_by_key(|(_, e)| e.inserted_at)
                .map(|(i, _)| i)
                .expect("nonempty");
            self.entries.remove(oldest);
        }
    }

    /// Replaces every behavior vector, in entry order.
    pub fn set_behaviors(&mut self, behaviors: Vec<Vec<f64>>) -> Result<(), ArchiveError> {
        if behaviors.len() != self.entries.len() {
            return Err(ArchiveError::DimensionMismatch { expected: self.entries.len(), found: behaviors.len() });
        }
        if behaviors.iter().flatten().any(|x| !x.is_finite()) {
            return Err(ArchiveError::NonFinite);
        }
        for (e, b) in self.entries.iter_mut().zip(behaviors) {
            e.behavior = b;
        }
        Ok(())
    }

    /// Recomputes every behavior vector against `agents`.
    pub fn refresh_behaviors(
        &mut self,
        agents: &[PolicyParams],
        layout: &Arc<Layout>,
        rewards: &RewardConfig,
        episodes: usize,
        par: Parallelism,
    ) -> Result<(), ArchiveError> {
        let partners = self.partners();
        let matrix = behavior_matrix(&partners, agents, layout, rewards, episodes, par)?;
        for (e, b) in self.entries.iter_mut().zip(matrix) {
            e.behavior = b;
        }
        Ok(())
    }
}

/// Component i is the mean greedy sparse reward of `agents[i]` with `partner`.
pub fn behavior_vector(
    partner: &PolicyParams,
    agents: &[PolicyParams],
    layout: &Arc<Layout>,
    rewards: &RewardConfig,
    episodes: usize,
) -> Result<Vec<f64>, ArchiveError> {
    let rows = behavior_matrix(std::slice::from_ref(partner), agents, layout, rewards, episodes, Parallelism::Sequential)?;
    Ok(rows.into_iter().next().expect("one partner"))
}

/// Behavior vectors of several partners, one row each.
pub fn behavior_matrix(
    partners: &[PolicyParams],
    agents: &[PolicyParams],
    layout: &Arc<Layout>,
    rewards: &RewardConfig,
    episodes: usize,
    par: Parallelism,
) -> Result<Vec<Vec<f64>>, ArchiveError> {
    let m = deploy::eval_matrix(agents, partners, layout, rewards, episodes, ActMode::Greedy, 0, par)?;
    Ok((0..partners.len()).map(|j| m.iter().map(|row| row[j]).collect()).collect())
}

const KMEANS_TOL: f64 = 1e-9;
pub const KMEANS_ITERS: usize = 50;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest_center(p: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(p, center);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

/// Lloyd's algorithm with farthest-point seeding. The first center is drawn
/// uniformly; each later one is the point farthest from all chosen centers
/// (lowest index on ties, preferring points not yet used). Every returned
/// cluster is nonempty.
pub fn kmeans_cluster<R: Rng + ?Sized>(
    points: &[Vec<f64>],
    k: usize,
    rng: &mut R,
    iters: usize,
) -> Result<Vec<usize>, ArchiveError> {
    if k == 0 {
        return Err(ArchiveError::ZeroClusters);
    }
    if points.len() < k {
        return Err(ArchiveError::TooFewPoints { needed: k, have: points.len() });
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(ArchiveError::DimensionMismatch { expected: dim, found: p.len() });
    }

    let mut chosen = vec![rng.gen_range(0..points.len())];
    while chosen.len() < k {
        let mut best = None;
        let mut best_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            if chosen.contains(&i) {
                continue;
            }
            let d = chosen.iter().map(|&c| sq_dist(p, &points[c])).fold(f64::INFINITY, f64::min);
            if d > best_d {
                best = Some(i);
                best_d = d;
            }
        }
        chosen.push(best.expect("enough points"));
    }
    let mut centers: Vec<Vec<f64>> = chosen.iter().map(|&i| points[i].clone()).collect();
    let mut assign: Vec<usize> = points.iter().map(|p| nearest_center(p, &centers)).collect();
    // Seeds are distinct points, but duplicates can still leave a seed's own
    // point claimed by an earlier identical center.
    for (c, &i) in chosen.iter().enumerate() {
        assign[i] = c;
    }
    repair_empty(points, &mut assign, &mut centers, k);

    for _ in 0..iters {
        let mut moved = 0.0f64;
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&assign).filter(|(_, a)| **a == c).map(|(p, _)| p).collect();
            let mut next = vec![0.0; dim];
            for m in &members {
                for (n, x) in next.iter_mut().zip(m.iter()) {
                    *n += x;
                }
            }
            next.iter_mut().for_each(|n| *n /= members.len() as f64);
            moved = moved.max(sq_dist(center, &next).sqrt());
            *center = next;
        }
        let next_assign: Vec<usize> = points.iter().map(|p| nearest_center(p, &centers)).collect();
        let unchanged = next_assign == assign;
        assign = next_assign;
        repair_empty(points, &mut assign, &mut centers, k);
        if moved <= KMEANS_TOL && unchanged {
            break;
        }
    }
    Ok(assign)
}

/// Moves the point farthest from its center into each empty cluster, taken
/// only from clusters with more than one member.
fn repair_empty(points: &[Vec<f64>], assign: &mut [usize], centers: &mut [Vec<f64>], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for a in assign.iter() {
            counts[*a] += 1;
        }
        let Some(empty) = counts.iter().position(|c| *c == 0) else { return };
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            if counts[assign[i]] < 2 {
                continue;
            }
            let d = sq_dist(p, &centers[assign[i]]);
            if d > far_d {
                far = Some(i);
                far_d = d;
            }
        }
        let i = far.expect("points outnumber clusters");
        assign[i] = empty;
        centers[empty] = points[i].clone();
    }
}

/// Clusters the archive into `n_q` groups and draws one member uniformly
/// from each. Returns copies with the chosen entry indices.
pub fn select_partner_population<R: Rng + ?Sized>(
    archive: &Archive,
    n_q: usize,
    rng: &mut R,
) -> Result<(Vec<Learner>, Vec<usize>), ArchiveError> {
    let points: Vec<Vec<f64>> = archive.entries.iter().map(|e| e.behavior.clone()).collect();
    let assign = kmeans_cluster(&points, n_q, rng, KMEANS_ITERS)?;
    let mut picks = Vec::with_capacity(n_q);
    for c in 0..n_q {
        let members: Vec<usize> = (0..points.len()).filter(|i| assign[*i] == c).collect();
        picks.push(members[rng.gen_range(0..members.len())]);
    }
    let learners = picks.iter().map(|&i| archive.entries[i].partner.clone()).collect();
    Ok((learners, picks))
}
