//! The power-budgeted reactive jammer.
//!
//! The jammer picks a mixed strategy `x` over its power levels that
//! maximises expected disruption `x . w` subject to `sum(x) = 1`, `x >= 0`
//! and the average-power budget `x . P <= p_avg`. The feasible set has two
//! equality/inequality rows, so every vertex has at most two positive
//! entries and the optimum is found by enumerating them.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Relative tolerance used when comparing objective values and budgets.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JammerConfig {
    /// Transmit power per level in watts; level 0 is the idle level.
    pub powers: Vec<f64>,
    /// Disruption credited to the jammer per level.
    pub weights: Vec<f64>,
    pub p_avg: f64,
    /// Attenuation of the jamming signal at the gateway.
    #[serde(default = "default_phi")]
    pub phi: f64,
}

fn default_phi() -> f64 {
    1.0
}

impl Default for JammerConfig {
    fn default() -> Self {
        Self {
            powers: vec![0.0, 7.0, 15.0, 21.0],
            weights: vec![0.0, 1.0, 2.0, 3.0],
            p_avg: 7.0,
            phi: 1.0,
        }
    }
}

impl JammerConfig {
    pub fn levels(&self) -> usize {
        self.powers.len()
    }

    pub fn p_max(&self) -> f64 {
        self.powers.last().copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.powers.len();
        if n == 0 {
            return Err(Error::config("jammer.powers", "must not be empty"));
        }
        if self.powers[0] != 0.0 {
            return Err(Error::config("jammer.powers", "level 0 must be the idle level (0 W)"));
        }
        if self.powers.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("jammer.powers", "must be strictly increasing"));
        }
        if self.weights.len() != n {
            return Err(Error::config(
                "jammer.weights",
                format!("expected {n} entries, got {}", self.weights.len()),
            ));
        }
        if self.weights[0] != 0.0 {
            return Err(Error::config("jammer.weights", "idle level must carry weight 0"));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::config("jammer.weights", "must be finite"));
        }
        if !(self.p_avg > 0.0) || self.p_avg > self.p_max() {
            return Err(Error::config(
                "jammer.p_avg",
                format!("must lie in (0, {}], got {}", self.p_max(), self.p_avg),
            ));
        }
        if !(0.0..=1.0).contains(&self.phi) {
            return Err(Error::config("jammer.phi", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JammerStrategy {
    pub probs: Vec<f64>,
    pub value: f64,
}

impl JammerStrategy {
    /// Always-idle strategy over `levels` levels.
    pub fn idle(levels: usize) -> Self {
        let mut probs = vec![0.0; levels.max(1)];
        probs[0] = 1.0;
        Self { probs, value: 0.0 }
    }

    pub fn mean_power(&self, config: &JammerConfig) -> f64 {
        self.probs.iter().zip(&config.powers).map(|(x, p)| x * p).sum()
    }

    /// Probability that the jammer is active in a slot.
    pub fn active_prob(&self) -> f64 {
        1.0 - self.probs[0]
    }

    pub fn check(&self, config: &JammerConfig) -> Result<()> {
        if self.probs.len() != config.levels() {
            return Err(Error::ShapeMismatch {
                expected: config.levels(),
                got: self.probs.len(),
            });
        }
        if self.probs.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::InvalidArgument("probabilities must lie in [0, 1]".into()));
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("probabilities sum to {total}")));
        }
        if self.mean_power(config) > config.p_avg + 1e-9 {
            return Err(Error::InvalidArgument("strategy exceeds the power budget".into()));
        }
        Ok(())
    }
}

/// A vertex of the strategy polytope with at most two positive levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    /// Level indices `(i, k)` with `i <= k`; `i == k` for a pure strategy.
    pub support: (usize, usize),
    pub probs: Vec<f64>,
    pub value: f64,
    pub power: f64,
}

fn close(x: f64, y: f64) -> bool {
    (x - y).abs() <= TIE_TOL * x.abs().max(y.abs()).max(1.0)
}

/// Preference order among vertices: higher objective, then higher spent
/// power, then the lexicographically lowest level pair. Power only breaks
/// ties between vertices with a positive objective; a jammer that gains
/// nothing stays idle.
pub fn prefer(a: &Vertex, b: &Vertex) -> Ordering {
    if !close(a.value, b.value) {
        return b.value.total_cmp(&a.value);
    }
    if !close(a.value, 0.0) && !close(a.power, b.power) {
        return b.power.total_cmp(&a.power);
    }
    a.support.cmp(&b.support)
}

fn vertex(config: &JammerConfig, support: (usize, usize), probs: Vec<f64>) -> Vertex {
    let value = probs.iter().zip(&config.weights).map(|(x, w)| x * w).sum();
    let power = probs.iter().zip(&config.powers).map(|(x, p)| x * p).sum();
    Vertex { support, probs, value, power }
}

/// Enumerates pure levels within budget and two-level mixtures that spend
/// the budget exactly.
pub fn candidate_vertices(config: &JammerConfig) -> Vec<Vertex> {
    let n = config.levels();
    let p = &config.powers;
    let budget = config.p_avg;
    let mut out = Vec::new();
    for i in 0..n {
        if p[i] <= budget * (1.0 + TIE_TOL) {
            let mut x = vec![0.0; n];
            x[i] = 1.0;
            out.push(vertex(config, (i, i), x));
        }
    }
    for i in 0..n {
        for k in (i + 1)..n {
            // Boundary solutions count: at p_avg = P_i the pair (i, k)
            // yields the pure point e_i under a lower index pair.
            if p[i] <= budget && budget <= p[k] {
                let hi = (budget - p[i]) / (p[k] - p[i]);
                let mut x = vec![0.0; n];
                x[i] = 1.0 - hi;
                x[k] = hi;
                out.push(vertex(config, (i, k), x));
            }
        }
    }
    out
}

pub fn optimal_strategy(config: &JammerConfig) -> Result<JammerStrategy> {
    config.validate()?;
    let best = candidate_vertices(config)
        .into_iter()
        .min_by(prefer)
        .expect("the idle level is always feasible");
    Ok(JammerStrategy {
        probs: best.probs,
        value: best.value,
    })
}

/// Draws a jamming level index from the strategy's categorical distribution.
pub fn sample_power<R: Rng + ?Sized>(strategy: &JammerStrategy, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (n, &x) in strategy.probs.iter().enumerate() {
        acc += x;
        if u < acc {
            return n;
        }
    }
    // Rounding left `acc` just under 1; return the last level with mass.
    strategy.probs.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

pub fn empirical_avg_power(levels: &[usize], config: &JammerConfig) -> Result<f64> {
    if levels.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let total: f64 = levels
        .iter()
        .map(|&n| {
            config
                .powers
                .get(n)
                .copied()
                .ok_or_else(|| Error::InvalidArgument(format!("level {n} out of range")))
        })
        .sum::<Result<f64>>()?;
    Ok(total / levels.len() as f64)
}
