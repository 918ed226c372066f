//! Small feedforward Q-approximators with hand-written backprop.
//!
//! Parameters live in one flat `Vec<f64>` so that SGD, target-network
//! copies and finite-difference probing all work on plain slices.
//!
//! Plain: `in -> H (relu) -> H (relu) -> A`.
//! Dueling: `in -> H (relu)`, then a value stream `H (relu) -> 1` and an
//! advantage stream `H (relu) -> A`, recombined as
//! `Q = V + (G - mean(G))` (or `G - max(G)` in max mode).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::replay::Transition;
use crate::agents::ActionMask;
use crate::{Error, Result};

pub const FEATURES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Plain,
    Dueling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Max,
}

#[derive(Debug, Clone, Copy)]
struct Dense {
    w: usize,
    b: usize,
    fan_in: usize,
    fan_out: usize,
}

impl Dense {
    fn len(&self) -> usize {
        self.fan_in * self.fan_out + self.fan_out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub arch: Architecture,
    pub aggregation: Aggregation,
    pub inputs: usize,
    pub hidden: usize,
    pub actions: usize,
    pub data: Vec<f64>,
}

fn layout(arch: Architecture, inputs: usize, hidden: usize, actions: usize) -> Vec<Dense> {
    let shapes: Vec<(usize, usize)> = match arch {
        Architecture::Plain => vec![(inputs, hidden), (hidden, hidden), (hidden, actions)],
        Architecture::Dueling => vec![
            (inputs, hidden),
            (hidden, hidden),
            (hidden, 1),
            (hidden, hidden),
            (hidden, actions),
        ],
    };
    let mut offset = 0;
    shapes
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let d = Dense {
                w: offset,
                b: offset + fan_in * fan_out,
                fan_in,
                fan_out,
            };
            offset += d.len();
            d
        })
        .collect()
}

fn dense_forward(data: &[f64], l: Dense, x: &[f64]) -> Vec<f64> {
    (0..l.fan_out)
        .map(|o| {
            let row = &data[l.w + o * l.fan_in..l.w + (o + 1) * l.fan_in];
            data[l.b + o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        })
        .collect()
}

/// Accumulates weight/bias gradients and returns the gradient w.r.t. `x`.
fn dense_backward(data: &[f64], grad: &mut [f64], l: Dense, x: &[f64], dout: &[f64]) -> Vec<f64> {
    let mut dx = vec![0.0; l.fan_in];
    for (o, &g) in dout.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        grad[l.b + o] += g;
        let base = l.w + o * l.fan_in;
        for i in 0..l.fan_in {
            grad[base + i] += g * x[i];
            dx[i] += g * data[base + i];
        }
    }
    dx
}

fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&z| z.max(0.0)).collect()
}

fn relu_backward(pre: &[f64], dout: &[f64]) -> Vec<f64> {
    pre.iter().zip(dout).map(|(&z, &g)| if z > 0.0 { g } else { 0.0 }).collect()
}

/// Intermediate values of one forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct Trace {
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    /// Value-stream scalar (dueling only).
    pub value: f64,
    /// Advantage-stream output before aggregation (dueling only).
    pub advantage: Vec<f64>,
}

impl Trace {
    /// Distance of the closest hidden pre-activation to the ReLU kink.
    pub fn kink_margin(&self) -> f64 {
        self.pre
            .iter()
            .flatten()
            .fold(f64::INFINITY, |m, z| m.min(z.abs()))
    }
}

impl NetworkParams {
    pub fn zeros(arch: Architecture, inputs: usize, hidden: usize, actions: usize) -> Self {
        let len = layout(arch, inputs, hidden, actions).iter().map(Dense::len).sum();
        Self {
            arch,
            aggregation: Aggregation::Mean,
            inputs,
            hidden,
            actions,
            data: vec![0.0; len],
        }
    }

    /// Weights uniform in `+-sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn init<R: Rng + ?Sized>(
        arch: Architecture,
        inputs: usize,
        hidden: usize,
        actions: usize,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(arch, inputs, hidden, actions);
        for l in p.layers() {
            let limit = (6.0 / (l.fan_in + l.fan_out) as f64).sqrt();
            for w in &mut p.data[l.w..l.b] {
                *w = rng.random_range(-limit..=limit);
            }
        }
        p
    }

    pub fn with_aggregation(mut self, aggregation: Aggregation) -> Self {
        self.aggregation = aggregation;
        self
    }

    fn layers(&self) -> Vec<Dense> {
        layout(self.arch, self.inputs, self.hidden, self.actions)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Mutable view of the value stream's output bias (dueling only).
    pub fn value_bias_mut(&mut self) -> Option<&mut f64> {
        match self.arch {
            Architecture::Dueling => {
                let l = self.layers()[2];
                Some(&mut self.data[l.b])
            }
            Architecture::Plain => None,
        }
    }

    /// Mutable view of the advantage stream's output biases (dueling only).
    pub fn advantage_bias_mut(&mut self) -> Option<&mut [f64]> {
        match self.arch {
            Architecture::Dueling => {
                let l = self.layers()[4];
                Some(&mut self.data[l.b..l.b + l.fan_out])
            }
            Architecture::Plain => None,
        }
    }

    pub fn trace(&self, features: &[f64]) -> Result<Trace> {
        if features.len() != self.inputs {
            return Err(Error::ShapeMismatch {
                expected: self.inputs,
                got: features.len(),
            });
        }
        let ls = self.layers();
        let d = &self.data;
        let input = features.to_vec();
        let t = match self.arch {
            Architecture::Plain => {
                let z0 = dense_forward(d, ls[0], &input);
                let h0 = relu(&z0);
                let z1 = dense_forward(d, ls[1], &h0);
                let h1 = relu(&z1);
                let q = dense_forward(d, ls[2], &h1);
                Trace {
                    input,
                    pre: vec![z0, z1],
                    post: vec![h0, h1],
                    q,
                    value: 0.0,
                    advantage: Vec::new(),
                }
            }
            Architecture::Dueling => {
                let zs = dense_forward(d, ls[0], &input);
                let hs = relu(&zs);
                let zv = dense_forward(d, ls[1], &hs);
                let hv = relu(&zv);
                let value = dense_forward(d, ls[2], &hv)[0];
                let zg = dense_forward(d, ls[3], &hs);
                let hg = relu(&zg);
                let advantage = dense_forward(d, ls[4], &hg);
                let offset = match self.aggregation {
                    Aggregation::Mean => advantage.iter().sum::<f64>() / advantage.len() as f64,
                    Aggregation::Max => advantage.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                };
                let q = advantage.iter().map(|g| value + (g - offset)).collect();
                Trace {
                    input,
                    pre: vec![zs, zv, zg],
                    post: vec![hs, hv, hg],
                    q,
                    value,
                    advantage,
                }
            }
        };
        Ok(t)
    }

    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(features)?.q)
    }

    /// Adds `dL/dparams` into `grad` given `dL/dQ` for one forward pass.
    pub fn backward(&self, trace: &Trace, dq: &[f64], grad: &mut [f64]) {
        let ls = self.layers();
        let d = &self.data;
        match self.arch {
            Architecture::Plain => {
                let dh1 = dense_backward(d, grad, ls[2], &trace.post[1], dq);
                let dz1 = relu_backward(&trace.pre[1], &dh1);
                let dh0 = dense_backward(d, grad, ls[1], &trace.post[0], &dz1);
                let dz0 = relu_backward(&trace.pre[0], &dh0);
                dense_backward(d, grad, ls[0], &trace.input, &dz0);
            }
            Architecture::Dueling => {
                let total: f64 = dq.iter().sum();
                let dadv: Vec<f64> = match self.aggregation {
                    Aggregation::Mean => dq.iter().map(|g| g - total / dq.len() as f64).collect(),
                    Aggregation::Max => {
                        let star = argmax(&trace.advantage);
                        dq.iter()
                            .enumerate()
                            .map(|(k, g)| if k == star { g - total } else { *g })
                            .collect()
                    }
                };
                let dhv = dense_backward(d, grad, ls[2], &trace.post[1], &[total]);
                let dzv = relu_backward(&trace.pre[1], &dhv);
                let dhs_v = dense_backward(d, grad, ls[1], &trace.post[0], &dzv);
                let dhg = dense_backward(d, grad, ls[4], &trace.post[2], &dadv);
                let dzg = relu_backward(&trace.pre[2], &dhg);
                let dhs_g = dense_backward(d, grad, ls[3], &trace.post[0], &dzg);
                let dhs: Vec<f64> = dhs_v.iter().zip(&dhs_g).map(|(a, b)| a + b).collect();
                let dzs = relu_backward(&trace.pre[0], &dhs);
                dense_backward(d, grad, ls[0], &trace.input, &dzs);
            }
        }
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn forward_plain(params: &NetworkParams, features: &[f64]) -> Result<Vec<f64>> {
    if params.arch != Architecture::Plain {
        return Err(Error::InvalidArgument("expected a plain network".into()));
    }
    params.forward(features)
}

pub fn forward_dueling(params: &NetworkParams, features: &[f64]) -> Result<Vec<f64>> {
    if params.arch != Architecture::Dueling {
        return Err(Error::InvalidArgument("expected a dueling network".into()));
    }
    params.forward(features)
}

/// Bootstrap target `r + gamma * max_a' Q_target(s', a')` over permitted actions.
pub fn td_target(
    target: &NetworkParams,
    t: &Transition,
    gamma: f64,
    mask: ActionMask,
) -> Result<f64> {
    let next = target.forward(&t.s_next_features)?;
    let allowed = mask.allowed(&t.s_next, target.actions);
    let best = next
        .iter()
        .zip(&allowed)
        .filter(|(_, &ok)| ok)
        .map(|(q, _)| *q)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(t.r + gamma * best)
}

/// Mean squared TD error over the batch and its gradient w.r.t. `params`;
/// the target network is held constant.
pub fn loss_and_gradient(
    params: &NetworkParams,
    target: &NetworkParams,
    batch: &[&Transition],
    gamma: f64,
) -> Result<(f64, Vec<f64>)> {
    loss_and_gradient_masked(params, target, batch, gamma, ActionMask::None)
}

pub fn loss_and_gradient_masked(
    params: &NetworkParams,
    target: &NetworkParams,
    batch: &[&Transition],
    gamma: f64,
    mask: ActionMask,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let n = batch.len() as f64;
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    let mut dq = vec![0.0; params.actions];
    for t in batch {
        let y = td_target(target, t, gamma, mask)?;
        let trace = params.trace(&t.s_features)?;
        let err = y - trace.q[t.a];
        loss += err * err / n;
        dq.fill(0.0);
        dq[t.a] = -2.0 * err / n;
        params.backward(&trace, &dq, &mut grad);
    }
    Ok((loss, grad))
}

/// Loss only; the same quantity `loss_and_gradient` differentiates.
pub fn batch_loss(
    params: &NetworkParams,
    target: &NetworkParams,
    batch: &[&Transition],
    gamma: f64,
) -> Result<f64> {
    let n = batch.len() as f64;
    let mut loss = 0.0;
    for t in batch {
        let y = td_target(target, t, gamma, ActionMask::None)?;
        let q = params.forward(&t.s_features)?;
        loss += (y - q[t.a]).powi(2) / n;
    }
    Ok(loss)
}

pub fn sgd_step(params: &mut NetworkParams, gradient: &[f64], nu: f64) -> Result<()> {
    if gradient.len() != params.len() {
        return Err(Error::ShapeMismatch {
            expected: params.len(),
            got: gradient.len(),
        });
    }
    for (p, g) in params.data.iter_mut().zip(gradient) {
        *p -= nu * g;
    }
    Ok(())
}
