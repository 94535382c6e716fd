//! Feedforward policy and value networks over flattened observation grids.

mod net;

pub use net::Forward;

use crate::env::{Action, Role, NUM_ACTIONS};
use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub(crate) use net::{backward as net_backward, forward as net_forward, Plan, LOG_PROB_FLOOR};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("architecture needs positive input and action sizes")]
    EmptyArchitecture,
    #[error("parameter vector has {found} entries, architecture expects {expected}")]
    ParamCount { expected: usize, found: usize },
    #[error("observation has {found} features, network expects {expected}")]
    InputSize { expected: usize, found: usize },
    #[error("non-finite parameter at index {0}")]
    NonFinite(usize),
}

/// Layer widths of a tanh trunk feeding separate policy and value heads.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Architecture {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub actions: usize,
}

impl Architecture {
    /// Three hidden layers of 64 units.
    pub fn standard(input: usize) -> Self {
        Self {
            input,
            hidden: vec![64, 64, 64],
            actions: NUM_ACTIONS,
        }
    }

    pub fn param_count(&self) -> usize {
        Plan::new(self).param_count()
    }

    fn validate(&self) -> Result<(), PolicyError> {
        if self.input == 0 || self.actions == 0 || self.hidden.contains(&0) {
            return Err(PolicyError::EmptyArchitecture);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitScheme {
    /// Gaussian weights with variance `1 / fan_in`; the policy head is scaled
    /// down by 0.01 so fresh policies start close to uniform.
    Scaled,
    /// Every parameter zero. Debug only.
    Zeros,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub arch: Architecture,
    pub weights: Vec<f64>,
    pub role: Role,
    pub lineage: u64,
    /// Environment steps this policy has been trained on.
    pub train_steps: u64,
}

/// Action probabilities and state-value estimate at one state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionDistribution {
    pub probs: [f64; NUM_ACTIONS],
    pub value: f64,
}

impl ActionDistribution {
    pub fn uniform() -> Self {
        Self {
            probs: [1.0 / NUM_ACTIONS as f64; NUM_ACTIONS],
            value: 0.0,
        }
    }

    /// Highest-probability action, lowest index on ties.
    pub fn argmax(&self) -> Action {
        argmax(&self.probs)
    }

    pub fn log_prob(&self, action: Action) -> f64 {
        safe_ln(self.probs[action.index()])
    }
}

pub(crate) fn argmax(probs: &[f64]) -> Action {
    let mut best = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = i;
        }
    }
    Action::from_index(best).expect("action index")
}

pub(crate) fn safe_ln(p: f64) -> f64 {
    p.ln().max(LOG_PROB_FLOOR)
}

pub fn init_policy(arch: &Architecture, role: Role, seed: u64, scheme: InitScheme) -> Result<PolicyParams, PolicyError> {
    arch.validate()?;
    let plan = Plan::new(arch);
    let mut weights = vec![0.0; plan.param_count()];
    if scheme == InitScheme::Scaled {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spans = plan.layer_spans();
        let policy_head = spans.len() - 2;
        for (li, (offset, fan_in, n_weights, _)) in spans.into_iter().enumerate() {
            let gain = if li == policy_head { 0.01 } else { 1.0 };
            let std = gain / (fan_in as f64).sqrt();
            for w in &mut weights[offset..offset + n_weights] {
                let z: f64 = StandardNormal.sample(&mut rng);
                *w = z * std;
            }
        }
    }
    Ok(PolicyParams {
        arch: arch.clone(),
        weights,
        role,
        lineage: seed,
        train_steps: 0,
    })
}

impl PolicyParams {
    pub fn validate(&self) -> Result<(), PolicyError> {
        self.arch.validate()?;
        let expected = self.arch.param_count();
        if self.weights.len() != expected {
            return Err(PolicyError::ParamCount { expected, found: self.weights.len() });
        }
        if let Some(i) = self.weights.iter().position(|w| !w.is_finite()) {
            return Err(PolicyError::NonFinite(i));
        }
        Ok(())
    }

    pub(crate) fn plan(&self) -> Plan {
        Plan::new(&self.arch)
    }

    /// Batched forward pass; rows of `obs` are observations.
    pub fn forward_batch(&self, obs: ArrayView2<f64>) -> Forward {
        assert_eq!(obs.ncols(), self.arch.input, "observation width");
        net::forward(&self.plan(), &self.weights, obs)
    }

    pub fn forward(&self, obs: &[f64]) -> Result<ActionDistribution, PolicyError> {
        if obs.len() != self.arch.input {
            return Err(PolicyError::InputSize { expected: self.arch.input, found: obs.len() });
        }
        let view = ArrayView2::from_shape((1, obs.len()), obs).expect("row view");
        let out = self.forward_batch(view);
        Ok(distribution_row(&out, 0))
    }

    /// Gradients of `log pi(action | obs)` and of `V(obs)` with respect to
    /// every parameter.
    pub fn log_prob_and_value_grads(&self, obs: &[f64], action: Action) -> (Vec<f64>, Vec<f64>) {
        let view = ArrayView2::from_shape((1, obs.len()), obs).expect("row view");
        let plan = self.plan();
        let fwd = net::forward(&plan, &self.weights, view);

        let mut dlogits = Array2::zeros((1, self.arch.actions));
        if fwd.log_probs[[0, action.index()]] > LOG_PROB_FLOOR {
            for a in 0..self.arch.actions {
                let indicator = if a == action.index() { 1.0 } else { 0.0 };
                dlogits[[0, a]] = indicator - fwd.probs[[0, a]];
            }
        }
        let mut g_logp = vec![0.0; self.weights.len()];
        net::backward(&plan, &self.weights, view, &fwd, dlogits.view(), Array1::zeros(1).view(), &mut g_logp);

        let mut g_value = vec![0.0; self.weights.len()];
        let zeros = Array2::zeros((1, self.arch.actions));
        net::backward(&plan, &self.weights, view, &fwd, zeros.view(), Array1::ones(1).view(), &mut g_value);
        (g_logp, g_value)
    }
}

pub(crate) fn distribution_row(out: &Forward, row: usize) -> ActionDistribution {
    let mut probs = [0.0; NUM_ACTIONS];
    for (a, p) in probs.iter_mut().enumerate() {
        *p = out.probs[[row, a]];
    }
    ActionDistribution { probs, value: out.values[row] }
}

/// Draws an action by inverse CDF and returns it with its log-probability.
pub fn sample_action<R: Rng + ?Sized>(dist: &ActionDistribution, rng: &mut R) -> (Action, f64) {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut chosen = None;
    let mut last_nonzero = 0;
    for (i, p) in dist.probs.iter().enumerate() {
        if *p <= 0.0 {
            continue;
        }
        last_nonzero = i;
        acc += p;
        if u < acc {
            chosen = Some(i);
            break;
        }
    }
    let index = chosen.unwrap_or(last_nonzero);
    let action = Action::from_index(index).expect("action index");
    (action, dist.log_prob(action))
}
