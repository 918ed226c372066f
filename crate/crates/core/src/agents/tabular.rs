//! Tabular Q-learning with a visit-count learning rate.

use crate::agents::network::argmax;
use crate::agents::ActionMask;
use crate::env::{EnvConfig, Observation};

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    states: usize,
    actions: usize,
    pub values: Vec<f64>,
    pub visits: Vec<u64>,
}

/// `tau = 1 / (1 + visits)^omega`; for `omega` in `(0.5, 1]` the step sizes
/// at any pair sum to infinity while their squares stay summable.
pub fn learning_rate(visits: u64, omega: f64) -> f64 {
    (1.0 + visits as f64).powf(-omega)
}

impl QTable {
    pub fn new(states: usize, actions: usize) -> Self {
        Self {
            states,
            actions,
            values: vec![0.0; states * actions],
            visits: vec![0; states * actions],
        }
    }

    pub fn for_env(config: &EnvConfig) -> Self {
        Self::new(Observation::state_count(config), crate::env::action_count(config))
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.actions..(s + 1) * self.actions]
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.actions + a]
    }

    /// One temporal-difference update of `Q(s, a)` toward
    /// `r + gamma * max_a' Q(s', a')`; returns the step size used.
    pub fn update(&mut self, s: usize, a: usize, r: f64, s_next: usize, gamma: f64, omega: f64) -> f64 {
        self.update_masked(s, a, r, s_next, None, gamma, omega)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn update_masked(
        &mut self,
        s: usize,
        a: usize,
        r: f64,
        s_next: usize,
        next_allowed: Option<&[bool]>,
        gamma: f64,
        omega: f64,
    ) -> f64 {
        let row = self.row(s_next);
        let best = match next_allowed {
            Some(ok) => row
                .iter()
                .zip(ok)
                .filter(|(_, &k)| k)
                .map(|(q, _)| *q)
                .fold(f64::NEG_INFINITY, f64::max),
            None => row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        };
        let i = s * self.actions + a;
        let tau = learning_rate(self.visits[i], omega);
        self.values[i] += tau * (r + gamma * best - self.values[i]);
        self.visits[i] += 1;
        tau
    }

    pub fn min_visits(&self) -> u64 {
        self.visits.iter().copied().min().unwrap_or(0)
    }

    pub fn greedy(&self, s: usize) -> usize {
        argmax(self.row(s))
    }
}

/// Applies one transition given as observations.
pub fn q_update(
    table: &mut QTable,
    config: &EnvConfig,
    s: &Observation,
    a: usize,
    r: f64,
    s_next: &Observation,
    gamma: f64,
    omega: f64,
    mask: ActionMask,
) {
    let allowed = mask.allowed(s_next, table.actions());
    let restrict = (mask != ActionMask::None).then_some(allowed.as_slice());
    table.update_masked(s.index(config), a, r, s_next.index(config), restrict, gamma, omega);
}
