//! Slotted MDP environment for the backscatter-assisted transmitter.
//!
//! Each slot is resolved in a fixed order:
//!
//! 1. the chosen action is applied against the current ambient activity
//!    `c`, jamming level `n`, queue length `d` and stored energy `e`;
//! 2. delivered packets leave the queue oldest-first and energy is
//!    debited or credited;
//! 3. surviving packets age by one slot and those older than `t_th` are
//!    discarded;
//! 4. Poisson arrivals join at age 0, overflow beyond `D` is dropped;
//! 5. the next `(c, n)` is drawn.
//!
//! Actions are numbered from 1: idle, transmit, harvest, backscatter, then
//! one rate-adaptation action per entry of `rates`.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::jammer::{self, JammerConfig, JammerStrategy};
use crate::{Error, Result, SimRng};

pub const ACTION_IDLE: usize = 1;
pub const ACTION_TRANSMIT: usize = 2;
pub const ACTION_HARVEST: usize = 3;
pub const ACTION_BACKSCATTER: usize = 4;

/// Action number of rate-adaptation entry `m` (1-based).
pub const fn rate_action(m: usize) -> usize {
    ACTION_BACKSCATTER + m
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    /// Probability that the ambient source is idle in a slot.
    pub eta: f64,
    /// Mean Poisson packet arrivals per slot.
    pub lambda: f64,
    /// Data queue capacity (packets).
    #[serde(rename = "D")]
    pub queue_cap: usize,
    /// Energy storage capacity (units).
    #[serde(rename = "E")]
    pub energy_cap: usize,
    /// Slots a packet may wait before it is discarded.
    pub t_th: u32,
    /// Turning this off removes latency discards (and packet ages from the
    /// Markov state), which the exact solver in `oracle` requires.
    #[serde(default = "yes")]
    pub latency_discard: bool,
    pub d_hat_t: usize,
    pub e_t: usize,
    pub d_hat_b: usize,
    pub e_h: usize,
    /// Energy harvestable from the jamming signal, per jamming level.
    pub e_jam: Vec<usize>,
    /// Packets backscatterable on the jamming signal, per jamming level.
    pub d_jam: Vec<usize>,
    /// `rates[m][n]`: packets deliverable at rate `m + 1` under jamming level `n`.
    pub rates: Vec<Vec<usize>>,
    #[serde(default)]
    pub p_md: f64,
    #[serde(default)]
    pub p_fa: f64,
    /// Carried separately in the JSON config (`jammer` sub-record).
    #[serde(skip)]
    pub jammer: JammerConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            eta: 0.5,
            lambda: 2.0,
            queue_cap: 20,
            energy_cap: 20,
            t_th: 3,
            latency_discard: true,
            d_hat_t: 4,
            e_t: 1,
            d_hat_b: 1,
            e_h: 2,
            e_jam: vec![0, 2, 3, 4],
            d_jam: vec![0, 1, 2, 3],
            // A lower rate survives stronger jamming: rate 1 carries 2
            // packets up to 7 W, rate 2 carries 1 packet up to 15 W, and
            // nothing gets through at 21 W.
            rates: vec![vec![2, 2, 0, 0], vec![1, 1, 1, 0], vec![0, 0, 0, 0]],
            p_md: 0.0,
            p_fa: 0.0,
            jammer: JammerConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn rate_count(&self) -> usize {
        self.rates.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.jammer.validate()?;
        let levels = self.jammer.levels();
        let prob = |name: &str, v: f64| -> Result<()> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(format!("env.{name}"), format!("must lie in [0, 1], got {v}")))
            }
        };
        prob("eta", self.eta)?;
        prob("p_md", self.p_md)?;
        prob("p_fa", self.p_fa)?;
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::config("env.lambda", "must be positive"));
        }
        if self.queue_cap == 0 {
            return Err(Error::config("env.D", "must be >= 1"));
        }
        if self.energy_cap == 0 {
            return Err(Error::config("env.E", "must be >= 1"));
        }
        if self.t_th == 0 {
            return Err(Error::config("env.t_th", "must be >= 1"));
        }
        for (name, table) in [("e_jam", &self.e_jam), ("d_jam", &self.d_jam)] {
            if table.len() != levels {
                return Err(Error::config(
                    format!("env.{name}"),
                    format!("expected {levels} entries (one per jamming level), got {}", table.len()),
                ));
            }
            if table[0] != 0 {
                return Err(Error::config(format!("env.{name}"), "idle level must be 0"));
            }
            if table.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::config(format!("env.{name}"), "must be non-decreasing"));
            }
        }
        for (m, row) in self.rates.iter().enumerate() {
            if row.len() != levels {
                return Err(Error::config(
                    format!("env.rates[{m}]"),
                    format!("expected {levels} entries, got {}", row.len()),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvState {
    /// Ambient source activity (1 = busy).
    pub c: u8,
    /// Hidden jamming level; the jammer is active iff this is non-zero.
    pub power_level: usize,
    /// Ages of queued packets, oldest first.
    pub packet_ages: VecDeque<u32>,
    pub e: usize,
}

impl EnvState {
    pub fn queue_len(&self) -> usize {
        self.packet_ages.len()
    }

    pub fn j(&self) -> u8 {
        u8::from(self.power_level > 0)
    }

    /// The state as seen without detection errors.
    pub fn truth(&self) -> Observation {
        Observation {
            c: self.c,
            j: self.j(),
            d: self.queue_len(),
            e: self.e,
        }
    }
}

/// What the agent sees: possibly misdetected activity bits plus exact
/// queue and energy levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Observation {
    pub c: u8,
    pub j: u8,
    pub d: usize,
    pub e: usize,
}

impl Observation {
    pub fn state_count(config: &EnvConfig) -> usize {
        4 * (config.queue_cap + 1) * (config.energy_cap + 1)
    }

    /// Dense index in `[0, 4 (D+1) (E+1))`.
    pub fn index(&self, config: &EnvConfig) -> usize {
        let cj = usize::from(self.c) * 2 + usize::from(self.j);
        (cj * (config.queue_cap + 1) + self.d) * (config.energy_cap + 1) + self.e
    }

    pub fn from_index(index: usize, config: &EnvConfig) -> Self {
        let e = index % (config.energy_cap + 1);
        let rest = index / (config.energy_cap + 1);
        let d = rest % (config.queue_cap + 1);
        let cj = rest / (config.queue_cap + 1);
        Observation {
            c: (cj / 2) as u8,
            j: (cj % 2) as u8,
            d,
            e,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepOutcome {
    pub action: usize,
    /// Ambient activity and jamming level the action was taken under.
    pub c: u8,
    pub power_level: usize,
    pub reward: f64,
    pub delivered: usize,
    /// Packets sent with stored energy (transmit or rate adaptation).
    pub actively_sent: usize,
    pub dropped_overflow: usize,
    pub discarded_latency: usize,
    pub arrivals: usize,
    /// Energy actually stored this slot.
    pub harvested: usize,
    pub energy_spent: usize,
    /// Sum over delivered packets of their age at delivery.
    pub delivered_age_sum: u64,
    pub action_effective: bool,
}

/// A validated configuration together with the jammer's fixed strategy.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: EnvConfig,
    pub strategy: JammerStrategy,
}

impl Scenario {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let strategy = jammer::optimal_strategy(&config.jammer)?;
        Ok(Self { config, strategy })
    }

    /// Uses a caller-supplied jamming strategy instead of the optimal one.
    pub fn with_strategy(config: EnvConfig, strategy: JammerStrategy) -> Result<Self> {
        config.validate()?;
        strategy.check(&config.jammer)?;
        Ok(Self { config, strategy })
    }

    pub fn action_count(&self) -> usize {
        action_count(&self.config)
    }

    fn sample_sources<R: Rng + ?Sized>(&self, rng: &mut R) -> (u8, usize) {
        let c = u8::from(rng.random::<f64>() >= self.config.eta);
        let n = jammer::sample_power(&self.strategy, rng);
        (c, n)
    }
}

pub fn action_count(config: &EnvConfig) -> usize {
    config.rate_count() + 4
}

pub fn reset(config: &EnvConfig, seed: u64) -> Result<EnvState> {
    Ok(Env::new(config.clone(), seed)?.state)
}

/// Poisson draw by sequential-search inversion of the CDF.
pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if !(mean > 0.0) {
        return 0;
    }
    let u: f64 = rng.random();
    let cap = (mean + 40.0 * mean.sqrt() + 40.0) as usize;
    let mut k = 0usize;
    let mut pmf = (-mean).exp();
    let mut cdf = pmf;
    while u > cdf && k < cap {
        k += 1;
        pmf *= mean / k as f64;
        cdf += pmf;
    }
    k
}

/// Poisson draw with the given mean, clamped into `[lo, hi]`.
pub fn sample_clamped_poisson<R: Rng + ?Sized>(lo: usize, hi: usize, rng: &mut R) -> usize {
    let mean = (lo + hi) as f64 / 2.0;
    sample_poisson(mean, rng).clamp(lo, hi)
}

/// Bounds `(min, max)` of the combined yield when both sources are active.
pub fn combined_backscatter_range(config: &EnvConfig, n: usize) -> (usize, usize) {
    let (b, bj) = (config.d_hat_b, config.d_jam[n]);
    (b.min(bj), b + bj)
}

pub fn combined_harvest_range(config: &EnvConfig, n: usize) -> (usize, usize) {
    let (h, hj) = (config.e_h, config.e_jam[n]);
    (h.max(hj), h + hj)
}

fn energy_limited(e: usize, e_t: usize) -> usize {
    e.checked_div(e_t).unwrap_or(usize::MAX)
}

pub fn step<R: Rng + ?Sized>(
    state: &mut EnvState,
    action: usize,
    scenario: &Scenario,
    rng: &mut R,
) -> Result<StepOutcome> {
    let cfg = &scenario.config;
    let max = action_count(cfg);
    if action == 0 || action > max {
        return Err(Error::ActionOutOfRange { action, max });
    }
    let (c, n) = (state.c, state.power_level);
    let d = state.queue_len();
    let e = state.e;
    let mut out = StepOutcome {
        action,
        c,
        power_level: n,
        action_effective: true,
        ..StepOutcome::default()
    };

    // (1)-(2): apply the action.
    match action {
        ACTION_IDLE => {}
        ACTION_TRANSMIT => {
            let sent = if c == 0 && n == 0 {
                cfg.d_hat_t.min(d).min(energy_limited(e, cfg.e_t))
            } else {
                0
            };
            out.delivered = sent;
            out.actively_sent = sent;
        }
        ACTION_HARVEST => {
            let h = match (c, n > 0) {
                (0, false) => 0,
                (1, false) => cfg.e_h,
                (0, true) => cfg.e_jam[n],
                _ => {
                    let (lo, hi) = combined_harvest_range(cfg, n);
                    sample_clamped_poisson(lo, hi, rng)
                }
            };
            out.harvested = h.min(cfg.energy_cap - e);
            out.action_effective = out.harvested > 0;
        }
        ACTION_BACKSCATTER => {
            let b = match (c, n > 0) {
                (0, false) => 0,
                (1, false) => cfg.d_hat_b,
                (0, true) => cfg.d_jam[n],
                _ => {
                    let (lo, hi) = combined_backscatter_range(cfg, n);
                    sample_clamped_poisson(lo, hi, rng)
                }
            };
            out.delivered = b.min(d);
        }
        a => {
            let m = a - ACTION_BACKSCATTER - 1;
            let sent = if c == 0 && n > 0 && e > 0 {
                cfg.rates[m][n].min(d).min(energy_limited(e, cfg.e_t))
            } else {
                0
            };
            out.delivered = sent;
            out.actively_sent = sent;
        }
    }
    if action != ACTION_IDLE && action != ACTION_HARVEST {
        out.action_effective = out.delivered > 0;
    }
    out.energy_spent = out.actively_sent * cfg.e_t;
    state.e = e + out.harvested - out.energy_spent;
    for age in state.packet_ages.drain(..out.delivered) {
        out.delivered_age_sum += u64::from(age);
    }
    out.reward = out.delivered as f64;

    // (3): ageing and latency discards.
    for age in state.packet_ages.iter_mut() {
        *age += 1;
    }
    if cfg.latency_discard {
        while state.packet_ages.front().is_some_and(|&a| a > cfg.t_th) {
            state.packet_ages.pop_front();
            out.discarded_latency += 1;
        }
    }

    // (4): arrivals.
    out.arrivals = sample_poisson(cfg.lambda, rng);
    let room = cfg.queue_cap - state.queue_len();
    let admitted = out.arrivals.min(room);
    out.dropped_overflow = out.arrivals - admitted;
    state.packet_ages.extend(std::iter::repeat_n(0, admitted));

    // (5): next source activity.
    let (c_next, n_next) = scenario.sample_sources(rng);
    state.c = c_next;
    state.power_level = n_next;
    Ok(out)
}

pub fn observe<R: Rng + ?Sized>(state: &EnvState, config: &EnvConfig, rng: &mut R) -> Observation {
    let mut flip = |bit: u8| -> u8 {
        if bit == 1 {
            u8::from(!(config.p_md > 0.0 && rng.random::<f64>() < config.p_md))
        } else {
            u8::from(config.p_fa > 0.0 && rng.random::<f64>() < config.p_fa)
        }
    };
    let truth = state.truth();
    let c = flip(truth.c);
    let j = flip(truth.j);
    Observation { c, j, ..truth }
}

/// An environment instance that owns its state and random stream.
#[derive(Debug, Clone)]
pub struct Env {
    pub scenario: Scenario,
    pub state: EnvState,
    rng: SimRng,
}

impl Env {
    pub fn new(config: EnvConfig, seed: u64) -> Result<Self> {
        Self::from_scenario(Scenario::new(config)?, seed)
    }

    pub fn from_scenario(scenario: Scenario, seed: u64) -> Result<Self> {
        let mut rng = crate::rng_from_seed(seed);
        let (c, power_level) = scenario.sample_sources(&mut rng);
        let state = EnvState {
            c,
            power_level,
            packet_ages: VecDeque::with_capacity(scenario.config.queue_cap),
            e: 0,
        };
        Ok(Self { scenario, state, rng })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.scenario.config
    }

    pub fn action_count(&self) -> usize {
        self.scenario.action_count()
    }

    pub fn observe(&mut self) -> Observation {
        observe(&self.state, &self.scenario.config, &mut self.rng)
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        step(&mut self.state, action, &self.scenario, &mut self.rng)
    }
}

/// Running totals for the link metrics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Metrics {
    pub slots: u64,
    pub delivered: u64,
    pub arrived: u64,
    pub dropped_overflow: u64,
    pub discarded_latency: u64,
    pub queue_sum: u64,
    pub delay_sum: u64,
}

impl Metrics {
    /// `queue_len` is the queue length after the slot was resolved.
    pub fn record(&mut self, outcome: &StepOutcome, queue_len: usize) {
        self.slots += 1;
        self.delivered += outcome.delivered as u64;
        self.arrived += outcome.arrivals as u64;
        self.dropped_overflow += outcome.dropped_overflow as u64;
        self.discarded_latency += outcome.discarded_latency as u64;
        self.queue_sum += queue_len as u64;
        self.delay_sum += outcome.delivered_age_sum;
    }

    fn per_slot(&self, v: u64) -> f64 {
        if self.slots == 0 {
            0.0
        } else {
            v as f64 / self.slots as f64
        }
    }

    pub fn throughput(&self) -> f64 {
        self.per_slot(self.delivered)
    }

    pub fn packet_loss(&self) -> f64 {
        self.per_slot(self.dropped_overflow + self.discarded_latency)
    }

    /// Delivered over arrived. Clamped to 1 because a window can deliver
    /// packets that arrived before it started.
    pub fn pdr(&self) -> f64 {
        if self.arrived == 0 {
            0.0
        } else {
            (self.delivered as f64 / self.arrived as f64).min(1.0)
        }
    }

    pub fn avg_queue(&self) -> f64 {
        self.per_slot(self.queue_sum)
    }

    pub fn avg_delay(&self) -> f64 {
        if self.delivered == 0 {
            0.0
        } else {
            self.delay_sum as f64 / self.delivered as f64
        }
    }

    pub fn merge(&mut self, other: &Metrics) {
        self.slots += other.slots;
        self.delivered += other.delivered;
        self.arrived += other.arrived;
        self.dropped_overflow += other.dropped_overflow;
        self.discarded_latency += other.discarded_latency;
        self.queue_sum += other.queue_sum;
        self.delay_sum += other.delay_sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(c: u8, n: usize, d: usize, e: usize) -> EnvState {
        EnvState {
            c,
            power_level: n,
            packet_ages: std::iter::repeat_n(0, d).collect(),
            e,
        }
    }

    fn default_scenario() -> Scenario {
        Scenario::new(EnvConfig::default()).unwrap()
    }

    #[test]
    fn reset_is_deterministic() {
        let cfg = EnvConfig::default();
        for seed in 0..20 {
            assert_eq!(reset(&cfg, seed).unwrap(), reset(&cfg, seed).unwrap());
        }
    }

    #[test]
    fn reset_respects_always_idle_sources() {
        let mut cfg = EnvConfig { eta: 1.0, ..EnvConfig::default() };
        cfg.jammer.weights = vec![0.0; 4];
        for seed in 0..50 {
            let s = reset(&cfg, seed).unwrap();
            assert_eq!(s.c, 0);
            assert_eq!(s.power_level, 0);
            assert_eq!(s.queue_len(), 0);
            assert_eq!(s.e, 0);
        }
    }

    #[test]
    fn action_count_is_rates_plus_four() {
        let mut cfg = EnvConfig::default();
        assert_eq!(action_count(&cfg), 7);
        cfg.rates.clear();
        assert_eq!(action_count(&cfg), 4);
        cfg.rates = vec![vec![0; 4]; 10];
        assert_eq!(action_count(&cfg), 14);
    }

    #[test]
    fn transmit_when_channel_clear() {
        let sc = default_scenario();
        let mut s = state(0, 0, 6, 10);
        let out = step(&mut s, ACTION_TRANSMIT, &sc, &mut crate::rng_from_seed(0)).unwrap();
        assert_eq!(out.delivered, 4);
        assert_eq!(out.reward, 4.0);
        assert_eq!(s.e, 6);
    }

    #[test]
    fn transmit_blocked_by_jammer() {
        let sc = default_scenario();
        let mut s = state(0, 1, 6, 10);
        let out = step(&mut s, ACTION_TRANSMIT, &sc, &mut crate::rng_from_seed(0)).unwrap();
        assert_eq!(out.delivered, 0);
        assert!(!out.action_effective);
        assert_eq!(s.e, 10);
    }

    #[test]
    fn backscatter_on_jamming_signal() {
        let sc = default_scenario();
        let mut s = state(0, 2, 5, 0);
        let out = step(&mut s, ACTION_BACKSCATTER, &sc, &mut crate::rng_from_seed(0)).unwrap();
        assert_eq!(out.delivered, 2);
        assert_eq!(out.energy_spent, 0);
    }

    #[test]
    fn nothing_to_harvest_when_quiet() {
        let sc = default_scenario();
        let mut s = state(0, 0, 0, 3);
        let out = step(&mut s, ACTION_HARVEST, &sc, &mut crate::rng_from_seed(0)).unwrap();
        assert_eq!(out.harvested, 0);
        assert_eq!(out.reward, 0.0);
    }

    #[test]
    fn harvest_saturates_at_capacity() {
        let sc = default_scenario();
        let mut s = state(0, 3, 0, 18);
        let out = step(&mut s, ACTION_HARVEST, &sc, &mut crate::rng_from_seed(0)).unwrap();
        assert_eq!(out.harvested, 2);
        assert_eq!(s.e, 20);
    }

    #[test]
    fn rate_adaptation_under_light_jamming() {
        let sc = default_scenario();
        let mut s = state(0, 1, 4, 5);
        let out = step(&mut s, rate_action(1), &sc, &mut crate::rng_from_seed(0)).unwrap();
        assert_eq!(out.delivered, 2);
        assert_eq!(s.e, 3);

        let mut s = state(0, 3, 4, 5);
        let out = step(&mut s, rate_action(1), &sc, &mut crate::rng_from_seed(0)).unwrap();
        assert_eq!(out.delivered, 0);
        assert!(!out.action_effective);
    }

    #[test]
    fn combined_sources_stay_in_range() {
        let sc = default_scenario();
        let mut rng = crate::rng_from_seed(8);
        for _ in 0..2000 {
            let mut s = state(1, 3, 20, 0);
            let out = step(&mut s, ACTION_BACKSCATTER, &sc, &mut rng).unwrap();
            assert!((1..=4).contains(&out.delivered));
            let mut s = state(1, 3, 0, 0);
            let out = step(&mut s, ACTION_HARVEST, &sc, &mut rng).unwrap();
            assert!((4..=6).contains(&out.harvested));
        }
    }

    #[test]
    fn rejects_out_of_range_action() {
        let sc = default_scenario();
        let mut s = state(0, 0, 0, 0);
        let mut rng = crate::rng_from_seed(0);
        assert!(step(&mut s, 0, &sc, &mut rng).is_err());
        assert!(step(&mut s, 8, &sc, &mut rng).is_err());
    }

    #[test]
    fn latency_discards_old_packets() {
        let sc = default_scenario();
        let mut s = state(0, 0, 0, 0);
        s.packet_ages = VecDeque::from(vec![3, 3, 1]);
        let out = step(&mut s, ACTION_IDLE, &sc, &mut crate::rng_from_seed(0)).unwrap();
        assert_eq!(out.discarded_latency, 2);
        assert!(s.packet_ages.iter().all(|&a| a <= 3));
    }

    #[test]
    fn observation_noise() {
        let mut cfg = EnvConfig::default();
        let s = state(1, 2, 3, 4);
        let mut rng = crate::rng_from_seed(1);
        assert_eq!(observe(&s, &cfg, &mut rng), s.truth());

        cfg.p_md = 1.0;
        for _ in 0..100 {
            let o = observe(&s, &cfg, &mut rng);
            assert_eq!((o.c, o.j), (0, 0));
        }

        cfg.p_md = 0.0;
        cfg.p_fa = 0.1;
        let quiet = state(0, 0, 0, 0);
        let hits = (0..100_000).filter(|_| observe(&quiet, &cfg, &mut rng).j == 1).count();
        assert!((hits as f64 / 1e5 - 0.1).abs() < 0.01);
    }

    #[test]
    fn observation_index_roundtrip() {
        let cfg = EnvConfig::default();
        for i in 0..Observation::state_count(&cfg) {
            assert_eq!(Observation::from_index(i, &cfg).index(&cfg), i);
        }
    }

    #[test]
    fn poisson_mean_and_variance() {
        let mut rng = crate::rng_from_seed(10);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_poisson(2.5, &mut rng) as f64).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 2.5).abs() < 0.02);
        assert!((var - 2.5).abs() < 0.05);
    }

    #[test]
    fn empty_metrics_are_zero() {
        let m = Metrics::default();
        assert_eq!(
            [m.throughput(), m.packet_loss(), m.pdr(), m.avg_queue(), m.avg_delay()],
            [0.0; 5]
        );
    }

    #[test]
    fn immediate_delivery_gives_unit_pdr() {
        let mut m = Metrics::default();
        for _ in 0..10 {
            let out = StepOutcome { delivered: 2, arrivals: 2, ..Default::default() };
            m.record(&out, 0);
        }
        assert_eq!(m.pdr(), 1.0);
        assert_eq!(m.avg_delay(), 0.0);
    }

    #[test]
    fn idle_policy_loses_everything() {
        let cfg = EnvConfig { lambda: 8.0, ..EnvConfig::default() };
        let mut env = Env::new(cfg, 3).unwrap();
        let mut m = Metrics::default();
        for _ in 0..10_000 {
            let out = env.step(ACTION_IDLE).unwrap();
            m.record(&out, env.state.queue_len());
        }
        // Once the queue is full every arrival is eventually lost.
        assert!((m.packet_loss() - 8.0).abs() < 0.15, "{}", m.packet_loss());
        assert_eq!(m.throughput(), 0.0);
    }

    #[test]
    fn config_validation_reports_field() {
        let cfg = EnvConfig { e_jam: vec![0, 2, 3], ..EnvConfig::default() };
        match cfg.validate() {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "env.e_jam"),
            other => panic!("{other:?}"),
        }
    }
}
