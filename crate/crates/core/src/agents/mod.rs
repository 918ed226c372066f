//! Learning agents: tabular Q-learning, deep Q-learning and deep dueling.
//!
//! All agents see the four-feature observation `(c, j, d/D, e/E)` and pick
//! among the environment's `M + 4` actions (0-based here, 1-based in
//! [`crate::env`]).

pub mod network;
pub mod replay;
pub mod tabular;
pub mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, Observation};
use crate::{Error, Result};

pub use network::{
    argmax, forward_dueling, forward_plain, loss_and_gradient, sgd_step, Aggregation, Architecture,
    NetworkParams,
};
pub use replay::{ReplayBuffer, Transition};
pub use tabular::{q_update, QTable};
pub use train::{evaluate, greedy_policy, train, Learner, TrainOutcome, TrainedAgent};

/// Restricts which actions a baseline may take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMask {
    #[default]
    None,
    /// Harvest-then-transmit: never backscatter.
    Htt,
    /// Ignore the jamming signal: no harvesting or backscattering when the
    /// jammer is the only active source.
    Wtj,
}

impl ActionMask {
    /// Whether 0-based action `a` is permitted under observation `obs`.
    pub fn permits(self, obs: &Observation, a: usize) -> bool {
        const HARVEST: usize = 2;
        const BACKSCATTER: usize = 3;
        match self {
            ActionMask::None => true,
            ActionMask::Htt => a != BACKSCATTER,
            ActionMask::Wtj => !(obs.c == 0 && obs.j == 1 && (a == HARVEST || a == BACKSCATTER)),
        }
    }

    pub fn allowed(self, obs: &Observation, actions: usize) -> Vec<bool> {
        (0..actions).map(|a| self.permits(obs, a)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Defaults to a quarter of the run when absent.
    pub epsilon_decay_steps: Option<u64>,
    pub batch: usize,
    pub replay_capacity: usize,
    pub target_sync: u64,
    pub sgd_rate: f64,
    pub hidden: usize,
    pub iterations: u64,
    /// Overrides `iterations` for the tabular learner.
    pub tabular_iterations: Option<u64>,
    pub tabular_rate_exponent: f64,
    pub aggregation: Aggregation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            epsilon_start: 1.0,
            epsilon_end: 0.1,
            epsilon_decay_steps: None,
            batch: 16,
            replay_capacity: 10_000,
            target_sync: 1_000,
            sgd_rate: 1e-3,
            hidden: 16,
            iterations: 40_000,
            tabular_iterations: Some(1_000_000),
            tabular_rate_exponent: 0.7,
            aggregation: Aggregation::Mean,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, why: &str| Err(Error::config(format!("agent.{f}"), why));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma", "must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return bad("epsilon_start", "epsilons must lie in [0, 1]");
        }
        if self.epsilon_end > self.epsilon_start {
            return bad("epsilon_end", "must not exceed epsilon_start");
        }
        if self.batch == 0 {
            return bad("batch", "must be >= 1");
        }
        if self.replay_capacity == 0 {
            return bad("replay_capacity", "must be >= 1");
        }
        if self.target_sync == 0 {
            return bad("target_sync", "must be >= 1");
        }
        if !(self.sgd_rate > 0.0) {
            return bad("sgd_rate", "must be positive");
        }
        if self.hidden == 0 {
            return bad("hidden", "must be >= 1");
        }
        if !(self.tabular_rate_exponent > 0.5 && self.tabular_rate_exponent <= 1.0) {
            return bad("tabular_rate_exponent", "must lie in (0.5, 1]");
        }
        Ok(())
    }

    pub fn iterations_for(&self, learner: Learner) -> u64 {
        match learner {
            Learner::Tabular => self.tabular_iterations.unwrap_or(self.iterations),
            _ => self.iterations,
        }
    }

    pub fn decay_steps(&self, iterations: u64) -> u64 {
        self.epsilon_decay_steps.unwrap_or(iterations / 4)
    }
}

/// `(c, j, d / D, e / E)`.
pub fn encode_features(obs: &Observation, config: &EnvConfig) -> [f64; 4] {
    [
        f64::from(obs.c),
        f64::from(obs.j),
        obs.d as f64 / config.queue_cap as f64,
        obs.e as f64 / config.energy_cap as f64,
    ]
}

/// Linear decay from `start` to `end` over `decay_steps`, constant after.
pub fn epsilon_at(step: u64, start: f64, end: f64, decay_steps: u64) -> f64 {
    if decay_steps == 0 || step >= decay_steps {
        return end;
    }
    start + (end - start) * step as f64 / decay_steps as f64
}

/// Epsilon-greedy choice; greedy ties go to the lowest index.
pub fn select_action<R: Rng + ?Sized>(values: &[f64], epsilon: f64, rng: &mut R) -> usize {
    assert!(!values.is_empty(), "no actions to choose from");
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..values.len())
    } else {
        argmax(values)
    }
}

/// Epsilon-greedy restricted to permitted actions.
pub fn select_action_masked<R: Rng + ?Sized>(
    values: &[f64],
    allowed: &[bool],
    epsilon: f64,
    rng: &mut R,
) -> usize {
    let permitted: Vec<usize> = (0..values.len()).filter(|&a| allowed[a]).collect();
    assert!(!permitted.is_empty(), "mask forbids every action");
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        permitted[rng.random_range(0..permitted.len())]
    } else {
        greedy_masked(values, allowed)
    }
}

pub fn greedy_masked(values: &[f64], allowed: &[bool]) -> usize {
    let mut best: Option<usize> = None;
    for (a, &v) in values.iter().enumerate() {
        if allowed[a] && best.is_none_or(|b| v > values[b]) {
            best = Some(a);
        }
    }
    best.expect("mask forbids every action")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features() {
        let cfg = EnvConfig::default();
        let o = |c, j, d, e| Observation { c, j, d, e };
        assert_eq!(encode_features(&o(0, 0, 0, 0), &cfg), [0.0; 4]);
        assert_eq!(encode_features(&o(1, 1, 20, 20), &cfg), [1.0; 4]);
        assert_eq!(encode_features(&o(1, 0, 10, 5), &cfg), [1.0, 0.0, 0.5, 0.25]);
    }

    #[test]
    fn epsilon_schedule() {
        assert_eq!(epsilon_at(0, 1.0, 0.1, 1000), 1.0);
        assert_eq!(epsilon_at(1000, 1.0, 0.1, 1000), 0.1);
        assert_eq!(epsilon_at(5000, 1.0, 0.1, 1000), 0.1);
        assert!((epsilon_at(500, 1.0, 0.1, 1000) - 0.55).abs() < 1e-12);
    }

    #[test]
    fn greedy_choice_and_ties() {
        let mut rng = crate::rng_from_seed(0);
        assert_eq!(select_action(&[1.0, 3.0, 2.0], 0.0, &mut rng), 1);
        assert_eq!(select_action(&[0.5; 5], 0.0, &mut rng), 0);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut rng = crate::rng_from_seed(1);
        let mut counts = [0usize; 7];
        for _ in 0..100_000 {
            counts[select_action(&[0.0, 9.0, 0.0, 0.0, 0.0, 0.0, 0.0], 1.0, &mut rng)] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e5 - 1.0 / 7.0).abs() < 0.01);
        }
    }

    #[test]
    fn masks() {
        let jam_only = Observation { c: 0, j: 1, d: 3, e: 3 };
        let ambient = Observation { c: 1, j: 0, d: 3, e: 3 };
        assert!(!ActionMask::Htt.permits(&ambient, 3));
        assert!(ActionMask::Htt.permits(&jam_only, 2));
        assert!(!ActionMask::Wtj.permits(&jam_only, 2));
        assert!(!ActionMask::Wtj.permits(&jam_only, 3));
        assert!(ActionMask::Wtj.permits(&ambient, 3));
        assert!(ActionMask::Wtj.permits(&jam_only, 4));
        let allowed = ActionMask::Htt.allowed(&ambient, 7);
        let mut rng = crate::rng_from_seed(2);
        for _ in 0..1000 {
            assert_ne!(select_action_masked(&[0.0; 7], &allowed, 1.0, &mut rng), 3);
        }
        assert_eq!(greedy_masked(&[0.0, 0.0, 0.0, 5.0, 1.0, 0.0, 0.0], &allowed), 4);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { gamma: 1.0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { tabular_rate_exponent: 0.5, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
    }
}
