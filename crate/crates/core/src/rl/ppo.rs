use super::{compute_gae, PpoConfig, RlError, RolloutBatch};
use crate::policy::{PolicyParams, LOG_PROB_FLOOR};
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, weights: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        for i in 0..weights.len() {
            let g = grad[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            weights[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }
}

/// A policy together with the optimiser state that trains it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub policy: PolicyParams,
    pub adam: AdamState,
}

impl Learner {
    pub fn new(policy: PolicyParams) -> Self {
        let n = policy.weights.len();
        Self { policy, adam: AdamState::new(n) }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

/// Clipped surrogate `min(r A, clip(r, 1 - eps, 1 + eps) A)` and whether the
/// unclipped branch is the active one.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> (f64, bool) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    if unclipped <= clipped {
        (unclipped, true)
    } else {
        (clipped, false)
    }
}

/// Normalises to zero mean and unit standard deviation.
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for x in xs {
        *x = (*x - mean) / (std + 1e-8);
    }
}

/// One PPO update over `batch`, which must have been collected with
/// `learner.policy` (or a recent snapshot of it). On a non-finite loss the
/// learner is left untouched.
pub fn ppo_update<R: Rng + ?Sized>(
    learner: &mut Learner,
    batch: &RolloutBatch,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats, RlError> {
    let n = batch.len();
    if n == 0 {
        return Err(RlError::EmptyBatch);
    }
    let rewards = batch.total_rewards();
    let (mut advantages, returns) = compute_gae(&rewards, &batch.values, &batch.dones, cfg.gamma, cfg.gae_lambda)?;
    normalize(&mut advantages);

    let mut trial = learner.clone();
    let plan = trial.policy.plan();
    let d = batch.obs.ncols();
    let mb = cfg.minibatch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut cursor = 0;
    let mut stats = UpdateStats::default();
    let mut grad = vec![0.0; trial.policy.weights.len()];

    for k in 0..cfg.num_minibatches {
        let mut idx = Vec::with_capacity(mb);
        while idx.len() < mb {
            if cursor == n {
                order.shuffle(rng);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }

        let mut obs = Array2::zeros((mb, d));
        for (row, &i) in idx.iter().enumerate() {
            obs.row_mut(row).assign(&batch.obs.row(i));
        }
        let fwd = crate::policy::net_forward(&plan, &trial.policy.weights, obs.view());

        let actions = fwd.probs.ncols();
        let scale = 1.0 / mb as f64;
        let mut dlogits = Array2::zeros((mb, actions));
        let mut dvalues = Array1::zeros(mb);
        let mut policy_loss = 0.0;
        let mut value_loss = 0.0;
        let mut clipped = 0usize;
        for (row, &i) in idx.iter().enumerate() {
            let a = batch.actions[i];
            let logp = fwd.log_probs[[row, a]];
            let ratio = (logp - batch.log_probs[i]).exp();
            let adv = advantages[i];
            let (surr, active) = clipped_surrogate(ratio, adv, cfg.clip);
            policy_loss -= surr * scale;
            if !active {
                clipped += 1;
            }
            if active && logp > LOG_PROB_FLOOR {
                // d(-r A)/d logits = -r A (onehot - p)
                let coef = -ratio * adv * scale;
                for j in 0..actions {
                    let indicator = if j == a { 1.0 } else { 0.0 };
                    dlogits[[row, j]] += coef * (indicator - fwd.probs[[row, j]]);
                }
            }
            if cfg.entropy_coef > 0.0 {
                let entropy: f64 = -(0..actions)
                    .map(|j| fwd.probs[[row, j]] * fwd.log_probs[[row, j]])
                    .sum::<f64>();
                policy_loss -= cfg.entropy_coef * entropy * scale;
                for j in 0..actions {
                    let p = fwd.probs[[row, j]];
                    dlogits[[row, j]] += cfg.entropy_coef * scale * p * (fwd.log_probs[[row, j]] + entropy);
                }
            }
            let err = fwd.values[row] - returns[i];
            value_loss += err * err * scale;
            dvalues[row] = 2.0 * cfg.value_coef * err * scale;
        }
        let loss = policy_loss + cfg.value_coef * value_loss;
        if !loss.is_finite() {
            return Err(RlError::NonFiniteLoss { minibatch: k });
        }

        grad.fill(0.0);
        crate::policy::net_backward(&plan, &trial.policy.weights, obs.view(), &fwd, dlogits.view(), dvalues.view(), &mut grad);
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(RlError::NonFiniteLoss { minibatch: k });
        }
        if norm > cfg.max_grad_norm {
            let s = cfg.max_grad_norm / norm;
            grad.iter_mut().for_each(|g| *g *= s);
        }
        trial.adam.step(&mut trial.policy.weights, &grad, cfg.learning_rate);

        let w = 1.0 / cfg.num_minibatches as f64;
        stats.policy_loss += policy_loss * w;
        stats.value_loss += value_loss * w;
        stats.clip_fraction += clipped as f64 / mb as f64 * w;
        stats.grad_norm += norm * w;
    }

    *learner = trial;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Role, NUM_ACTIONS};
    use crate::policy::{init_policy, Architecture, InitScheme};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_batch(policy: &PolicyParams, n: usize, rng: &mut ChaCha8Rng) -> RolloutBatch {
        let d = policy.arch.input;
        let obs = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
        let mut batch = RolloutBatch::empty(Role::Agent, d);
        batch.obs = obs;
        for i in 0..n {
            let dist = policy.forward(batch.obs.row(i).as_slice().unwrap()).unwrap();
            let a = rng.gen_range(0..NUM_ACTIONS);
            batch.actions.push(a);
            batch.log_probs.push(crate::policy::safe_ln(dist.probs[a]));
            batch.values.push(dist.value);
            batch.env_rewards.push(rng.gen_range(0.0..1.0));
            batch.diversity.push(0.0);
            batch.dones.push(i % 10 == 9);
        }
        batch
    }

    fn toy_learner() -> Learner {
        let arch = Architecture { input: 5, hidden: vec![8, 8], actions: NUM_ACTIONS };
        Learner::new(init_policy(&arch, Role::Agent, 11, InitScheme::Scaled).unwrap())
    }

    #[test]
    fn clipping_arithmetic() {
        let (v, active) = clipped_surrogate(1.2, 2.0, 0.05);
        assert!(!active);
        assert!((v - 1.05 * 2.0).abs() < 1e-15);
        let (v, active) = clipped_surrogate(0.5, 2.0, 0.05);
        assert!(active);
        assert_eq!(v, 1.0);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut learner = toy_learner();
        let batch = toy_batch(&learner.policy, 40, &mut rng);
        let before = learner.policy.weights.clone();
        let cfg = PpoConfig { learning_rate: 0.0, minibatch_size: 16, ..PpoConfig::default() };
        ppo_update(&mut learner, &batch, &cfg, &mut rng).unwrap();
        assert_eq!(learner.policy.weights, before);
    }

    #[test]
    fn zero_advantages_leave_policy_head_gradient_zero() {
        // One-step episodes paying V + 1 give constant advantages, which
        // normalise to exactly zero; the value head still has error to fit.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let learner = toy_learner();
        let mut batch = toy_batch(&learner.policy, 20, &mut rng);
        batch.dones.iter_mut().for_each(|d| *d = true);
        batch.values = vec![0.25; batch.len()];
        batch.env_rewards = vec![1.25; batch.len()];
        let (mut adv, _) = compute_gae(&batch.total_rewards(), &batch.values, &batch.dones, 0.99, 0.98).unwrap();
        normalize(&mut adv);
        assert!(adv.iter().all(|a| *a == 0.0));

        let mut moved = learner.clone();
        ppo_update(&mut moved, &batch, &PpoConfig::default(), &mut rng).unwrap();
        let spans = learner.policy.plan().layer_spans();
        let (off, _, nw, nb) = spans[spans.len() - 2];
        assert_eq!(
            &moved.policy.weights[off..off + nw + nb],
            &learner.policy.weights[off..off + nw + nb]
        );
        let (voff, _, vnw, vnb) = spans[spans.len() - 1];
        assert_ne!(moved.policy.weights[voff..voff + vnw + vnb], learner.policy.weights[voff..voff + vnw + vnb]);
    }

    #[test]
    fn non_finite_loss_aborts() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut learner = toy_learner();
        let mut batch = toy_batch(&learner.policy, 20, &mut rng);
        batch.env_rewards[3] = f64::NAN;
        let before = learner.clone();
        let err = ppo_update(&mut learner, &batch, &PpoConfig::default(), &mut rng).unwrap_err();
        assert!(matches!(err, RlError::NonFiniteLoss { minibatch: 0 }));
        assert_eq!(learner, before);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut adam = AdamState::new(2);
        let mut w = [1.0, 1.0];
        adam.step(&mut w, &[0.5, -3.0], 0.1);
        assert!((w[0] - 0.9).abs() < 1e-6);
        assert!((w[1] - 1.1).abs() < 1e-6);
    }
}
