//! Independent reference engines: exact enumeration of small environments,
//! value iteration, LP vertex enumeration for the jammer, and central finite
//! differences for network gradients.
//!
//! Nothing here shares code with the components it checks beyond the
//! configuration types.

use std::cmp::Ordering;

use crate::agents::network::{batch_loss, NetworkParams};
use crate::agents::replay::Transition;
use crate::env::{EnvConfig, Observation};
use crate::jammer::{JammerConfig, JammerStrategy};
use crate::{Error, Result};

/// Largest state space `enumerate_mdp` accepts.
pub const MAX_STATES: usize = 10_000;

/// A finite MDP with sparse transition rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitMdp {
    pub states: usize,
    pub actions: usize,
    /// `transitions[s * actions + a]`: `(s', probability)` pairs, sorted by `s'`.
    pub transitions: Vec<Vec<(usize, f64)>>,
    /// `rewards[s * actions + a]`: expected one-slot reward.
    pub rewards: Vec<f64>,
}

impl ExplicitMdp {
    pub fn row(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.transitions[s * self.actions + a]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.actions + a]
    }

    pub fn prob(&self, s: usize, a: usize, s_next: usize) -> f64 {
        let row = self.row(s, a);
        row.binary_search_by_key(&s_next, |&(t, _)| t)
            .map(|i| row[i].1)
            .unwrap_or(0.0)
    }

    /// Largest deviation of any row sum from 1.
    pub fn max_row_error(&self) -> f64 {
        self.transitions
            .iter()
            .map(|row| (row.iter().map(|&(_, p)| p).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn poisson_pmf(mean: f64, k: usize) -> f64 {
    if mean <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    // log-space keeps large k stable
    let lf: f64 = (1..=k).map(|i| (i as f64).ln()).sum();
    (k as f64 * mean.ln() - mean - lf).exp()
}

/// Poisson law truncated to `0..=cap`, with the tail folded into `cap`.
fn truncated_poisson(mean: f64, cap: usize) -> Vec<f64> {
    let mut out: Vec<f64> = (0..cap).map(|k| poisson_pmf(mean, k)).collect();
    let head: f64 = out.iter().sum();
    out.push((1.0 - head).max(0.0));
    out
}

/// Poisson with mean `(lo + hi) / 2`, clamped into `[lo, hi]`: returns
/// `(value, probability)` pairs.
fn clamped_poisson(lo: usize, hi: usize) -> Vec<(usize, f64)> {
    if lo == hi {
        return vec![(lo, 1.0)];
    }
    let mean = (lo + hi) as f64 / 2.0;
    let below: f64 = (0..=lo).map(|k| poisson_pmf(mean, k)).sum();
    let mut out = vec![(lo, below)];
    let mut acc = below;
    for v in (lo + 1)..hi {
        let p = poisson_pmf(mean, v);
        acc += p;
        out.push((v, p));
    }
    out.push((hi, (1.0 - acc).max(0.0)));
    out
}

fn sparse_add(row: &mut Vec<(usize, f64)>, s: usize, p: f64) {
    if p == 0.0 {
        return;
    }
    match row.binary_search_by_key(&s, |&(t, _)| t) {
        Ok(i) => row[i].1 += p,
        Err(i) => row.insert(i, (s, p)),
    }
}

/// Exact transition law of the environment over observation states
/// `(c, j, d, e)`. The hidden jamming level is resolved by conditioning on
/// `j`: given an active jammer, level `n` has probability `x_n / (1 - x_0)`.
///
/// Requires perfect sensing and latency discarding off (packet ages would
/// otherwise be part of the state).
pub fn enumerate_mdp(config: &EnvConfig, strategy: &JammerStrategy) -> Result<ExplicitMdp> {
    config.validate()?;
    strategy.check(&config.jammer)?;
    if config.latency_discard {
        return Err(Error::config(
            "env.latency_discard",
            "exact enumeration needs latency discarding off",
        ));
    }
    if config.p_md != 0.0 || config.p_fa != 0.0 {
        return Err(Error::config("env.p_md", "exact enumeration needs perfect sensing"));
    }
    let (dc, ec) = (config.queue_cap, config.energy_cap);
    let states = 4 * (dc + 1) * (ec + 1);
    if states > MAX_STATES {
        return Err(Error::StateSpaceTooLarge {
            states,
            limit: MAX_STATES,
        });
    }
    let actions = config.rates.len() + 4;
    let idx = |c: usize, j: usize, d: usize, e: usize| ((c * 2 + j) * (dc + 1) + d) * (ec + 1) + e;

    let x = &strategy.probs;
    let active = 1.0 - x[0];
    let p_c1 = 1.0 - config.eta;
    // (c', j') marginal: sources are redrawn independently each slot.
    let next_sources = [
        (0usize, 0usize, config.eta * x[0]),
        (0, 1, config.eta * active),
        (1, 0, p_c1 * x[0]),
        (1, 1, p_c1 * active),
    ];
    let arrivals: Vec<Vec<f64>> = (0..=dc).map(|room| truncated_poisson(config.lambda, room)).collect();

    let mut transitions = Vec::with_capacity(states * actions);
    let mut rewards = Vec::with_capacity(states * actions);
    for c in 0..2 {
        for j in 0..2 {
            // Conditional law of the hidden level.
            let levels: Vec<(usize, f64)> = if j == 0 {
                vec![(0, 1.0)]
            } else if active > 0.0 {
                (1..x.len()).filter(|&n| x[n] > 0.0).map(|n| (n, x[n] / active)).collect()
            } else {
                // Unreachable state; give it a harmless self-consistent law.
                vec![(0, 1.0)]
            };
            for d in 0..=dc {
                for e in 0..=ec {
                    for a in 0..actions {
                        // (delivered, energy after action, probability)
                        let mut outcomes: Vec<(usize, usize, f64)> = Vec::new();
                        for &(n, pn) in &levels {
                            for (del, e_after, p) in slot_outcomes(config, c, n, d, e, a) {
                                outcomes.push((del, e_after, pn * p));
                            }
                        }
                        let mut row = Vec::new();
                        let mut reward = 0.0;
                        for (del, e_after, p) in outcomes {
                            reward += p * del as f64;
                            let left = d - del;
                            let law = &arrivals[dc - left];
                            for (k, &pk) in law.iter().enumerate() {
                                let d_next = left + k;
                                for &(c2, j2, ps) in &next_sources {
                                    sparse_add(&mut row, idx(c2, j2, d_next, e_after), p * pk * ps);
                                }
                            }
                        }
                        transitions.push(row);
                        rewards.push(reward);
                    }
                }
            }
        }
    }
    Ok(ExplicitMdp {
        states,
        actions,
        transitions,
        rewards,
    })
}

/// Possible `(delivered, energy_after)` results of 0-based action `a`.
fn slot_outcomes(cfg: &EnvConfig, c: usize, n: usize, d: usize, e: usize, a: usize) -> Vec<(usize, usize, f64)> {
    let afford = |e: usize| e.checked_div(cfg.e_t).unwrap_or(d);
    let jammed = n > 0;
    let ambient = c == 1;
    match a {
        0 => vec![(0, e, 1.0)],
        1 => {
            if !ambient && !jammed {
                let k = cfg.d_hat_t.min(d).min(afford(e));
                vec![(k, e - k * cfg.e_t, 1.0)]
            } else {
                vec![(0, e, 1.0)]
            }
        }
        2 => {
            let law = match (ambient, jammed) {
                (false, false) => vec![(0, 1.0)],
                (true, false) => vec![(cfg.e_h, 1.0)],
                (false, true) => vec![(cfg.e_jam[n], 1.0)],
                (true, true) => {
                    let (h, hj) = (cfg.e_h, cfg.e_jam[n]);
                    clamped_poisson(h.max(hj), h + hj)
                }
            };
            law.into_iter()
                .map(|(h, p)| (0, (e + h).min(cfg.energy_cap), p))
                .collect()
        }
        3 => {
            let law = match (ambient, jammed) {
                (false, false) => vec![(0, 1.0)],
                (true, false) => vec![(cfg.d_hat_b, 1.0)],
                (false, true) => vec![(cfg.d_jam[n], 1.0)],
                (true, true) => {
                    let (b, bj) = (cfg.d_hat_b, cfg.d_jam[n]);
                    clamped_poisson(b.min(bj), b + bj)
                }
            };
            law.into_iter().map(|(b, p)| (b.min(d), e, p)).collect()
        }
        _ => {
            let m = a - 4;
            if !ambient && jammed && e > 0 {
                let k = cfg.rates[m][n].min(d).min(afford(e));
                vec![(k, e - k * cfg.e_t, 1.0)]
            } else {
                vec![(0, e, 1.0)]
            }
        }
    }
}

/// Result of [`value_iteration`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValueIteration {
    /// `q[s * actions + a]`.
    pub q: Vec<f64>,
    pub actions: usize,
    /// Sup-norm change of each sweep.
    pub residuals: Vec<f64>,
}

impl ValueIteration {
    pub fn row(&self, s: usize) -> &[f64] {
        &self.q[s * self.actions..(s + 1) * self.actions]
    }

    /// Actions within `tol` of the row maximum.
    pub fn optimal_actions(&self, s: usize, tol: f64) -> Vec<usize> {
        let row = self.row(s);
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (0..row.len()).filter(|&a| row[a] >= best - tol).collect()
    }

    /// Whether each sweep shrank the residual by at least `gamma`.
    pub fn contracts(&self, gamma: f64) -> bool {
        self.residuals
            .windows(2)
            .all(|w| w[1] <= gamma * w[0] + 1e-12)
    }
}

/// Iterates the Bellman optimality operator until the fixed point is within
/// `tol` in sup-norm.
pub fn value_iteration(mdp: &ExplicitMdp, gamma: f64, tol: f64) -> Result<ValueIteration> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let (s_count, a_count) = (mdp.states, mdp.actions);
    let mut q = vec![0.0; s_count * a_count];
    let mut v = vec![0.0; s_count];
    let mut residuals = Vec::new();
    // Stopping at change <= tol (1 - gamma) / gamma bounds the error by tol.
    let stop = if gamma == 0.0 { f64::INFINITY } else { tol * (1.0 - gamma) / gamma };
    let cap = 100_000;
    for _ in 0..cap {
        let mut change: f64 = 0.0;
        let mut next = vec![0.0; q.len()];
        for s in 0..s_count {
            for a in 0..a_count {
                let k = s * a_count + a;
                let future: f64 = mdp.transitions[k].iter().map(|&(t, p)| p * v[t]).sum();
                next[k] = mdp.rewards[k] + gamma * future;
                change = change.max((next[k] - q[k]).abs());
            }
        }
        q = next;
        for s in 0..s_count {
            v[s] = q[s * a_count..(s + 1) * a_count]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
        }
        residuals.push(change);
        if change <= stop {
            return Ok(ValueIteration {
                q,
                actions: a_count,
                residuals,
            });
        }
    }
    Err(Error::InvalidArgument(format!("value iteration did not converge in {cap} sweeps")))
}

/// A basic feasible solution of the jammer's LP.
#[derive(Debug, Clone, PartialEq)]
pub struct LpVertex {
    pub x: Vec<f64>,
    pub objective: f64,
    pub power: f64,
    /// Positive-probability levels, ascending.
    pub support: Vec<usize>,
    /// Lowest index pair among the bases that produce this point; a slack
    /// basis `{x_i, s}` counts as `(i, i)`.
    pub basis: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpEnumeration {
    pub vertices: Vec<LpVertex>,
    pub best: LpVertex,
}

/// Enumerates every basis of the standard-form system
/// `{ sum x = 1, P.x + s = p_avg, x >= 0, s >= 0 }` by Cramer's rule.
pub fn lp_vertices(config: &JammerConfig) -> Result<LpEnumeration> {
    config.validate()?;
    let n = config.levels();
    let p = &config.powers;
    let budget = config.p_avg;
    let tol = 1e-12 * budget.abs().max(1.0);
    let mut vertices: Vec<LpVertex> = Vec::new();
    let mut push = |x: Vec<f64>, basis: (usize, usize)| {
        if let Some(v) = vertices.iter_mut().find(|v| close_vec(&v.x, &x)) {
            v.basis = v.basis.min(basis);
            return;
        }
        let support: Vec<usize> = (0..n).filter(|&i| x[i] > 0.0).collect();
        let objective = x.iter().zip(&config.weights).map(|(a, b)| a * b).sum();
        let power = x.iter().zip(p).map(|(a, b)| a * b).sum();
        vertices.push(LpVertex {
            x,
            objective,
            power,
            support,
            basis,
        });
    };
    // Bases {x_i, slack}: x_i = 1, slack = p_avg - P_i.
    for i in 0..n {
        if budget - p[i] >= -tol {
            let mut x = vec![0.0; n];
            x[i] = 1.0;
            push(x, (i, i));
        }
    }
    // Bases {x_i, x_k}: determinant P_k - P_i.
    for i in 0..n {
        for k in (i + 1)..n {
            let det = p[k] - p[i];
            if det == 0.0 {
                continue;
            }
            let xi = (p[k] - budget) / det;
            let xk = (budget - p[i]) / det;
            if xi >= 0.0 && xk >= 0.0 {
                let mut x = vec![0.0; n];
                x[i] = xi;
                x[k] = xk;
                push(x, (i, k));
            }
        }
    }
    let best = vertices
        .iter()
        .min_by(|a, b| rank(a, b))
        .cloned()
        .expect("the idle point is always feasible");
    Ok(LpEnumeration { vertices, best })
}

fn close_vec(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12)
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Higher objective first; among positive-objective ties, more power; then
/// the lowest basis index pair.
fn rank(a: &LpVertex, b: &LpVertex) -> Ordering {
    if !near(a.objective, b.objective) {
        return b.objective.total_cmp(&a.objective);
    }
    if !near(a.objective, 0.0) && !near(a.power, b.power) {
        return b.power.total_cmp(&a.power);
    }
    a.basis.cmp(&b.basis)
}

/// Central-difference gradient of an arbitrary scalar function.
pub fn central_difference<F>(theta: &[f64], epsilon: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut work = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            let orig = work[i];
            work[i] = orig + epsilon;
            let up = f(&work);
            work[i] = orig - epsilon;
            let down = f(&work);
            work[i] = orig;
            (up - down) / (2.0 * epsilon)
        })
        .collect()
}

/// Finite-difference gradient of the minibatch TD loss with respect to the
/// online parameters (the target network is held fixed).
pub fn finite_diff_grad(
    params: &NetworkParams,
    target: &NetworkParams,
    batch: &[&Transition],
    gamma: f64,
    epsilon: f64,
) -> Result<Vec<f64>> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let mut probe = params.clone();
    let mut failure = None;
    let grad = central_difference(&params.data, epsilon, |theta| {
        probe.data.copy_from_slice(theta);
        match batch_loss(&probe, target, batch, gamma) {
            Ok(l) => l,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(grad),
    }
}

/// Simulated visit counts for each `(s, a)` row against `mdp`, pooled into
/// cells with expected count >= 5. Returns `(statistic, degrees of freedom)`
/// summed over rows that saw at least one visit.
pub fn chi_square(mdp: &ExplicitMdp, counts: &[Vec<(usize, u64)>]) -> (f64, usize) {
    let mut stat = 0.0;
    let mut df = 0usize;
    for (k, observed) in counts.iter().enumerate() {
        let total: u64 = observed.iter().map(|&(_, c)| c).sum();
        if total == 0 {
            continue;
        }
        let row = &mdp.transitions[k];
        let count_of = |s: usize| observed.iter().filter(|&&(t, _)| t == s).map(|&(_, c)| c).sum::<u64>();
        // Outcomes the model says are impossible must not occur.
        if observed
            .iter()
            .any(|&(t, c)| c > 0 && row.binary_search_by_key(&t, |&(u, _)| u).is_err())
        {
            return (f64::INFINITY, df.max(1));
        }
        let mut cells: Vec<(f64, f64)> = Vec::new();
        let (mut pool_e, mut pool_o) = (0.0, 0.0);
        for &(s, p) in row {
            let expected = p * total as f64;
            let obs = count_of(s) as f64;
            if expected >= 5.0 {
                cells.push((expected, obs));
            } else {
                pool_e += expected;
                pool_o += obs;
            }
        }
        if pool_e > 0.0 {
            if pool_e >= 5.0 || cells.is_empty() {
                cells.push((pool_e, pool_o));
            } else {
                // Fold a small remainder into the smallest regular cell.
                let i = (0..cells.len())
                    .min_by(|&a, &b| cells[a].0.total_cmp(&cells[b].0))
                    .unwrap_or(0);
                cells[i].0 += pool_e;
                cells[i].1 += pool_o;
            }
        }
        if cells.len() < 2 {
            continue;
        }
        df += cells.len() - 1;
        stat += cells.iter().map(|&(e, o)| (o - e) * (o - e) / e).sum::<f64>();
    }
    (stat, df)
}

/// Index of an observation in an [`ExplicitMdp`] built from `config`.
pub fn state_index(obs: &Observation, config: &EnvConfig) -> usize {
    obs.index(config)
}
