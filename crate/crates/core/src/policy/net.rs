//! Batched forward and backward passes over a flat parameter vector.

use super::Architecture;
use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};

pub(crate) const LOG_PROB_FLOOR: f64 = -18.420_680_743_952_367; // ln(1e-8)

#[derive(Clone, Copy, Debug)]
struct Dense {
    inputs: usize,
    outputs: usize,
    offset: usize,
}

impl Dense {
    fn weight<'a>(&self, flat: &'a [f64]) -> ArrayView2<'a, f64> {
        let n = self.inputs * self.outputs;
        ArrayView2::from_shape((self.inputs, self.outputs), &flat[self.offset..self.offset + n])
            .expect("weight shape")
    }

    fn bias<'a>(&self, flat: &'a [f64]) -> ArrayView1<'a, f64> {
        let start = self.offset + self.inputs * self.outputs;
        ArrayView1::from(&flat[start..start + self.outputs])
    }

    fn grads<'a>(&self, flat: &'a mut [f64]) -> (ArrayViewMut2<'a, f64>, ArrayViewMut1<'a, f64>) {
        let n = self.inputs * self.outputs;
        let (w, b) = flat[self.offset..self.offset + n + self.outputs].split_at_mut(n);
        (
            ArrayViewMut2::from_shape((self.inputs, self.outputs), w).expect("weight shape"),
            ArrayViewMut1::from(b),
        )
    }

    fn apply(&self, flat: &[f64], x: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weight(flat));
        z += &self.bias(flat);
        z
    }

    fn len(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }
}

/// Parameter slices of a trunk-plus-two-heads network.
#[derive(Clone, Debug)]
pub(crate) struct Plan {
    trunk: Vec<Dense>,
    policy: Dense,
    value: Dense,
}

impl Plan {
    pub(crate) fn new(arch: &Architecture) -> Plan {
        let mut offset = 0;
        let mut dense = |inputs: usize, outputs: usize| {
            let d = Dense { inputs, outputs, offset };
            offset += d.len();
            d
        };
        let mut trunk = Vec::with_capacity(arch.hidden.len());
        let mut width = arch.input;
        for &h in &arch.hidden {
            trunk.push(dense(width, h));
            width = h;
        }
        let policy = dense(width, arch.actions);
        let value = dense(width, 1);
        Plan { trunk, policy, value }
    }

    pub(crate) fn param_count(&self) -> usize {
        self.value.offset + self.value.len()
    }

    /// `(offset, fan_in, weight count, bias count)` for every layer, heads last
    /// (policy then value).
    pub(crate) fn layer_spans(&self) -> Vec<(usize, usize, usize, usize)> {
        self.trunk
            .iter()
            .chain([&self.policy, &self.value])
            .map(|d| (d.offset, d.inputs, d.inputs * d.outputs, d.outputs))
            .collect()
    }
}

/// Outputs and intermediate activations for a batch of observations.
pub struct Forward {
    /// Post-tanh activations of each trunk layer.
    hidden: Vec<Array2<f64>>,
    pub logits: Array2<f64>,
    pub log_probs: Array2<f64>,
    pub probs: Array2<f64>,
    pub values: Array1<f64>,
}

pub(crate) fn forward(plan: &Plan, flat: &[f64], obs: ArrayView2<f64>) -> Forward {
    let mut hidden: Vec<Array2<f64>> = Vec::with_capacity(plan.trunk.len());
    for (i, layer) in plan.trunk.iter().enumerate() {
        let input = if i == 0 { obs.view() } else { hidden[i - 1].view() };
        let mut z: Array2<f64> = layer.apply(flat, &input);
        z.mapv_inplace(f64::tanh);
        hidden.push(z);
    }
    let last = hidden.last().map(|h| h.view()).unwrap_or(obs.view());
    let logits = plan.policy.apply(flat, &last);
    let values = plan.value.apply(flat, &last).column(0).to_owned();

    let mut log_probs = logits.clone();
    let mut probs = logits.clone();
    for (mut lp, mut p) in log_probs.axis_iter_mut(Axis(0)).zip(probs.axis_iter_mut(Axis(0))) {
        let max = lp.fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let lse = max + lp.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        lp.mapv_inplace(|v| v - lse);
        p.assign(&lp.mapv(f64::exp));
        lp.mapv_inplace(|v| v.max(LOG_PROB_FLOOR));
    }
    Forward { hidden, logits, log_probs, probs, values }
}

/// Accumulates `d loss / d params` into `grad` given upstream gradients on
/// the logits and the value outputs.
pub(crate) fn backward(
    plan: &Plan,
    flat: &[f64],
    obs: ArrayView2<f64>,
    fwd: &Forward,
    dlogits: ArrayView2<f64>,
    dvalues: ArrayView1<f64>,
    grad: &mut [f64],
) {
    let last = fwd.hidden.last().map(|h| h.view()).unwrap_or(obs.view());
    let dvalues2 = dvalues.insert_axis(Axis(1));

    {
        let (mut gw, mut gb) = plan.policy.grads(grad);
        general_mat_mul(1.0, &last.t(), &dlogits, 1.0, &mut gw);
        gb += &dlogits.sum_axis(Axis(0));
    }
    {
        let (mut gw, mut gb) = plan.value.grads(grad);
        general_mat_mul(1.0, &last.t(), &dvalues2, 1.0, &mut gw);
        gb += &dvalues2.sum_axis(Axis(0));
    }
    if plan.trunk.is_empty() {
        return;
    }

    let mut dh = dlogits.dot(&plan.policy.weight(flat).t());
    general_mat_mul(1.0, &dvalues2, &plan.value.weight(flat).t(), 1.0, &mut dh);

    for i in (0..plan.trunk.len()).rev() {
        let layer = &plan.trunk[i];
        let h = &fwd.hidden[i];
        // tanh' = 1 - h^2
        ndarray::Zip::from(&mut dh).and(h).for_each(|d, &hv| *d *= 1.0 - hv * hv);
        let input = if i == 0 { obs.view() } else { fwd.hidden[i - 1].view() };
        {
            let (mut gw, mut gb) = layer.grads(grad);
            general_mat_mul(1.0, &input.t(), &dh, 1.0, &mut gw);
            gb += &dh.sum_axis(Axis(0));
        }
        if i > 0 {
            dh = dh.dot(&layer.weight(flat).t());
        }
    }
}
