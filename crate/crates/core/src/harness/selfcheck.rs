//! Cross-validation of the simulator and learners against the reference
//! engines in [`crate::oracle`]. Each check returns a pass/fail verdict with
//! a one-line detail; thresholds are fixed here.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::Rng;

use crate::agents::network::{loss_and_gradient, Aggregation, Architecture, NetworkParams, FEATURES};
use crate::agents::replay::Transition;
use crate::agents::tabular::QTable;
use crate::agents::train::{run_loop, TabularLearner};
use crate::agents::{ActionMask, TrainConfig};
use crate::env::{Env, EnvConfig, Observation, Scenario};
use crate::exec::Execution;
use crate::jammer::{self, JammerConfig};
use crate::oracle;
use crate::phy::{self, BackscatterFrame, BerSweep};
use crate::{rng_from_seed, Result, SimRng};

pub const IDENTITY_TOL: f64 = 1e-9;
pub const GRAD_EPS: f64 = 1e-5;
pub const GRAD_REL_TOL: f64 = 1e-4;
/// Denominator floor for the elementwise relative gradient error.
pub const GRAD_FLOOR: f64 = 1e-6;
/// Cases with a ReLU pre-activation (or a max-aggregation gap) closer than
/// this to its kink are redrawn: the derivative is undefined there.
pub const KINK_MARGIN: f64 = 1e-3;
pub const Q_GAP_TOL: f64 = 0.05;
pub const POLICY_AGREEMENT: f64 = 0.95;
pub const VI_TOL: f64 = 1e-10;
/// Learned and optimal actions count as agreeing when the learned action is
/// within this of the row optimum under Q*.
pub const ARGMAX_TIE_TOL: f64 = 1e-6;
pub const LP_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Check {
    pub id: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl Check {
    pub fn line(&self) -> String {
        format!(
            "{} {:<28} {} ({:.2}s) {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

fn timed<F>(id: &'static str, name: &'static str, f: F) -> Check
where
    F: FnOnce() -> Result<(bool, String)>,
{
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    Check {
        id,
        name,
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

fn random_net(arch: Architecture, agg: Aggregation, rng: &mut SimRng) -> NetworkParams {
    let hidden = rng.random_range(2..=16);
    let actions = rng.random_range(2..=10);
    let mut p = NetworkParams::zeros(arch, FEATURES, hidden, actions).with_aggregation(agg);
    for w in p.data.iter_mut() {
        *w = rng.random_range(-1.0..1.0);
    }
    p
}

fn random_features(rng: &mut SimRng) -> Vec<f64> {
    (0..FEATURES).map(|_| rng.random_range(0.0..1.0)).collect()
}

/// Mean-aggregated dueling outputs average to the value stream; with max
/// aggregation the best advantage action reads the value exactly.
pub fn dueling_identity(draws: usize, seed: u64) -> Check {
    timed("A1", "dueling identity", || {
        let mut rng = rng_from_seed(seed);
        let (mut worst_mean, mut worst_max) = (0.0f64, 0.0f64);
        for _ in 0..draws {
            let x = random_features(&mut rng);
            let p = random_net(Architecture::Dueling, Aggregation::Mean, &mut rng);
            let t = p.trace(&x)?;
            let mean = t.q.iter().sum::<f64>() / t.q.len() as f64;
            worst_mean = worst_mean.max((mean - t.value).abs());
            let p = p.with_aggregation(Aggregation::Max);
            let t = p.trace(&x)?;
            let star = crate::agents::argmax(&t.advantage);
            worst_max = worst_max.max((t.q[star] - t.value).abs());
        }
        Ok((
            worst_mean <= IDENTITY_TOL && worst_max <= IDENTITY_TOL,
            format!("{draws} draws, max |mean Q - V| = {worst_mean:.1e}, max |Q(argmax G) - V| = {worst_max:.1e}"),
        ))
    })
}

fn random_transition(actions: usize, rng: &mut SimRng) -> Transition {
    let obs = |rng: &mut SimRng| Observation {
        c: rng.random_range(0..2),
        j: rng.random_range(0..2),
        d: rng.random_range(0..20),
        e: rng.random_range(0..20),
    };
    Transition {
        s: obs(rng),
        a: rng.random_range(0..actions),
        r: rng.random_range(0.0..4.0),
        s_next: obs(rng),
        s_features: random_features(rng),
        s_next_features: random_features(rng),
    }
}

/// Largest elementwise relative error between `a` and `b`.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

fn away_from_kinks(p: &NetworkParams, batch: &[&Transition]) -> Result<bool> {
    for t in batch {
        let tr = p.trace(&t.s_features)?;
        if tr.kink_margin() < KINK_MARGIN {
            return Ok(false);
        }
        if p.aggregation == Aggregation::Max && p.arch == Architecture::Dueling {
            let mut g = tr.advantage.clone();
            g.sort_by(|a, b| b.total_cmp(a));
            if g.len() > 1 && g[0] - g[1] < KINK_MARGIN {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Backpropagated loss gradients against central differences.
pub fn gradient_check(cases: usize, seed: u64) -> Check {
    timed("A2", "gradient check", || {
        let mut rng = rng_from_seed(seed);
        let mut worst = 0.0f64;
        let mut redrawn = 0usize;
        let mut done = 0usize;
        while done < cases {
            let arch = if rng.random_bool(0.5) { Architecture::Plain } else { Architecture::Dueling };
            let agg = if rng.random_bool(0.5) { Aggregation::Mean } else { Aggregation::Max };
            let p = random_net(arch, agg, &mut rng);
            let mut target = p.clone();
            for w in target.data.iter_mut() {
                *w = rng.random_range(-1.0..1.0);
            }
            let n = rng.random_range(1..=16);
            let batch: Vec<Transition> = (0..n).map(|_| random_transition(p.actions, &mut rng)).collect();
            let refs: Vec<&Transition> = batch.iter().collect();
            if !away_from_kinks(&p, &refs)? {
                redrawn += 1;
                continue;
            }
            let gamma = rng.random_range(0.0..0.99);
            let (_, analytic) = loss_and_gradient(&p, &target, &refs, gamma)?;
            let numeric = oracle::finite_diff_grad(&p, &target, &refs, gamma, GRAD_EPS)?;
            worst = worst.max(max_relative_error(&analytic, &numeric, GRAD_FLOOR));
            done += 1;
        }
        Ok((
            worst < GRAD_REL_TOL,
            format!("{cases} cases ({redrawn} redrawn near kinks), max relative error {worst:.2e}"),
        ))
    })
}

/// Half the full budget keeps the jammer idle in half the slots, so every
/// observation state is reachable.
fn half_budget() -> JammerConfig {
    JammerConfig {
        p_avg: 3.5,
        ..JammerConfig::default()
    }
}

/// The small environment used for the tabular convergence check.
pub fn convergence_env() -> EnvConfig {
    EnvConfig {
        jammer: half_budget(),
        queue_cap: 3,
        energy_cap: 3,
        latency_discard: false,
        lambda: 1.0,
        rates: vec![vec![2, 2, 0, 0]],
        ..EnvConfig::default()
    }
}

pub fn convergence_train_config() -> TrainConfig {
    TrainConfig {
        gamma: 0.9,
        tabular_rate_exponent: 0.7,
        epsilon_start: 1.0,
        epsilon_end: 1.0,
        ..TrainConfig::default()
    }
}

/// Outcome of tabular learning against the exact solution.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub sup_gap: f64,
    pub agreement: f64,
    pub min_visits: u64,
}

pub fn tabular_vs_exact(cfg: &EnvConfig, train: &TrainConfig, steps: u64, seed: u64) -> Result<ConvergenceReport> {
    let scenario = Scenario::new(cfg.clone())?;
    let mdp = oracle::enumerate_mdp(cfg, &scenario.strategy)?;
    let exact = oracle::value_iteration(&mdp, train.gamma, VI_TOL)?;
    let mut env = Env::from_scenario(scenario, crate::derive_seed(seed, 1))?;
    let mut learner = TabularLearner::new(cfg, train, ActionMask::None, steps, crate::derive_seed(seed, 2));
    run_loop(&mut env, &mut learner, steps, steps.max(1))?;
    let table: &QTable = &learner.table;
    let mut gap = 0.0f64;
    let mut agree = 0usize;
    for s in 0..mdp.states {
        let row = exact.row(s);
        for a in 0..mdp.actions {
            gap = gap.max((table.get(s, a) - row[a]).abs());
        }
        let learned = table.greedy(s);
        if exact.optimal_actions(s, ARGMAX_TIE_TOL).contains(&learned) {
            agree += 1;
        }
    }
    Ok(ConvergenceReport {
        sup_gap: gap,
        agreement: agree as f64 / mdp.states as f64,
        min_visits: table.min_visits(),
    })
}

/// Tabular Q-learning approaches the value-iteration fixed point.
pub fn tabular_convergence(steps: u64, seed: u64) -> Check {
    timed("A3", "tabular vs value iteration", || {
        let r = tabular_vs_exact(&convergence_env(), &convergence_train_config(), steps, seed)?;
        Ok((
            r.sup_gap < Q_GAP_TOL && r.agreement >= POLICY_AGREEMENT,
            format!(
                "{steps} steps, sup |Q - Q*| = {:.4}, greedy agreement {:.1}%, fewest visits {}",
                r.sup_gap,
                100.0 * r.agreement,
                r.min_visits
            ),
        ))
    })
}

pub fn random_jammer(rng: &mut SimRng) -> JammerConfig {
    let levels = rng.random_range(2..=8);
    let mut powers = vec![0.0];
    let mut weights = vec![0.0];
    for _ in 1..levels {
        let last = *powers.last().expect("non-empty");
        powers.push(last + rng.random_range(0.5..10.0));
        weights.push(rng.random_range(0.0..5.0));
    }
    let p_max = *powers.last().expect("non-empty");
    JammerConfig {
        p_avg: rng.random_range(0.01..=p_max),
        powers,
        weights,
        phi: 1.0,
    }
}

/// The jammer's solver agrees with exhaustive basis enumeration.
pub fn jammer_exactness(configs: usize, seed: u64) -> Check {
    timed("A4", "jammer LP exactness", || {
        let mut rng = rng_from_seed(seed);
        let mut worst = 0.0f64;
        let mut invalid = 0usize;
        let mut mismatched = 0usize;
        for _ in 0..configs {
            let cfg = random_jammer(&mut rng);
            let s = jammer::optimal_strategy(&cfg)?;
            let lp = oracle::lp_vertices(&cfg)?;
            let scale = lp.best.objective.abs().max(1.0);
            worst = worst.max((s.value - lp.best.objective).abs() / scale);
            if !s.probs.iter().zip(&lp.best.x).all(|(a, b)| (a - b).abs() <= LP_TOL) {
                mismatched += 1;
            }
            if s.check(&cfg).is_err() || s.probs.iter().any(|&x| x < 0.0) {
                invalid += 1;
            }
        }
        Ok((
            worst <= LP_TOL && invalid == 0 && mismatched == 0,
            format!(
                "{configs} configs, max objective gap {worst:.1e}, {invalid} infeasible outputs, {mismatched} maximiser mismatches"
            ),
        ))
    })
}

pub const BER_SPREADS: [usize; 4] = [2, 8, 32, 128];
pub const BER_NOISE_SIGMA: f64 = 0.5;
pub const BER_BITS: usize = 10_000;

/// Noiseless round trips plus BER monotonicity in the spreading factor.
pub fn backscatter_phy(seed: u64) -> Check {
    timed("A9", "backscatter PHY", || {
        let zeta = Complex64::new(0.5, 0.0);
        let threshold = phy::midpoint_threshold(zeta, 1.0, 0.0);
        let mut rng = rng_from_seed(seed);
        let mut wrong = 0usize;
        for pattern in 0u32..256 {
            let bits: Vec<u8> = (0..8).map(|k| ((pattern >> k) & 1) as u8).collect();
            let ambient: Vec<Complex64> = (0..64)
                .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
                .collect();
            let frame = BackscatterFrame {
                ambient,
                bits: bits.clone(),
                spreading: 8,
                zeta,
                noise_sigma: 0.0,
            };
            let rx = phy::modulate(&frame, &mut rng)?;
            let out = phy::threshold_decode(&phy::average_bit_power(&rx, 8)?, threshold)?;
            if out != bits {
                wrong += 1;
            }
        }
        let sweep = BerSweep {
            zeta,
            noise_sigma: BER_NOISE_SIGMA,
            bits: BER_BITS,
            seed,
        };
        let points = phy::ber_sweep(&sweep, &BER_SPREADS, Execution::Parallel)?;
        let monotone = points.windows(2).all(|w| {
            let band = 2.0 * (w[0].std_error().powi(2) + w[1].std_error().powi(2)).sqrt();
            w[1].ber() <= w[0].ber() + band
        });
        let bers: Vec<String> = points.iter().map(|p| format!("N={}:{:.4}", p.spreading, p.ber())).collect();
        Ok((
            wrong == 0 && monotone,
            format!("{wrong}/256 noiseless patterns wrong; BER {}", bers.join(" ")),
        ))
    })
}

/// Counts of slot-level invariant violations over a random-action run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PropertyViolations {
    pub bounds: usize,
    pub energy: usize,
    pub packets: usize,
    pub reward: usize,
    pub age: usize,
}

impl PropertyViolations {
    pub fn total(&self) -> usize {
        self.bounds + self.energy + self.packets + self.reward + self.age
    }
}

pub fn random_action_properties(cfg: &EnvConfig, steps: u64, seed: u64) -> Result<PropertyViolations> {
    let mut env = Env::new(cfg.clone(), seed)?;
    let mut rng = rng_from_seed(crate::derive_seed(seed, 7));
    let actions = env.action_count();
    let mut v = PropertyViolations::default();
    for _ in 0..steps {
        let (d0, e0) = (env.state.queue_len(), env.state.e);
        let a = rng.random_range(1..=actions);
        let out = env.step(a)?;
        let (d1, e1) = (env.state.queue_len(), env.state.e);
        if d1 > cfg.queue_cap || e1 > cfg.energy_cap {
            v.bounds += 1;
        }
        if e1 + out.energy_spent != e0 + out.harvested {
            v.energy += 1;
        }
        let admitted = out.arrivals - out.dropped_overflow;
        if d1 + out.delivered + out.discarded_latency != d0 + admitted {
            v.packets += 1;
        }
        if out.reward != out.delivered as f64 {
            v.reward += 1;
        }
        if cfg.latency_discard && env.state.packet_ages.iter().any(|&age| age > cfg.t_th) {
            v.age += 1;
        }
    }
    Ok(v)
}

/// Configuration for the enumeration-versus-simulation comparison.
pub fn chi_square_env() -> EnvConfig {
    EnvConfig {
        jammer: half_budget(),
        queue_cap: 2,
        energy_cap: 2,
        latency_discard: false,
        ..EnvConfig::default()
    }
}

/// Simulated transition counts against the exact law. Returns
/// `(statistic, degrees of freedom, max row-sum error)`.
pub fn enumeration_agreement(cfg: &EnvConfig, steps: u64, seed: u64) -> Result<(f64, usize, f64)> {
    let scenario = Scenario::new(cfg.clone())?;
    let mdp = oracle::enumerate_mdp(cfg, &scenario.strategy)?;
    let mut env = Env::from_scenario(scenario, seed)?;
    let mut rng = rng_from_seed(crate::derive_seed(seed, 9));
    let mut counts = vec![vec![0u64; mdp.states]; mdp.states * mdp.actions];
    let mut s = env.observe().index(cfg);
    for _ in 0..steps {
        let a = rng.random_range(0..mdp.actions);
        env.step(a + 1)?;
        let next = env.observe().index(cfg);
        counts[s * mdp.actions + a][next] += 1;
        s = next;
    }
    let sparse: Vec<Vec<(usize, u64)>> = counts
        .into_iter()
        .map(|row| row.into_iter().enumerate().filter(|&(_, c)| c > 0).collect())
        .collect();
    let (stat, df) = oracle::chi_square(&mdp, &sparse);
    Ok((stat, df, mdp.max_row_error()))
}

/// Chi-square acceptance: within three standard deviations of its mean.
pub fn chi_square_ok(stat: f64, df: usize) -> bool {
    stat <= df as f64 + 3.0 * (2.0 * df as f64).sqrt()
}

pub fn environment_properties(steps: u64, mc_steps: u64, seed: u64) -> Check {
    timed("A10", "environment properties", || {
        let v = random_action_properties(&EnvConfig::default(), steps, seed)?;
        let (stat, df, row_err) = enumeration_agreement(&chi_square_env(), mc_steps, seed)?;
        let ok = v.total() == 0 && row_err <= 1e-9 && chi_square_ok(stat, df);
        Ok((
            ok,
            format!(
                "{steps} steps, violations {v:?}; row-sum error {row_err:.1e}; chi-square {stat:.1} on {df} df"
            ),
        ))
    })
}

/// The suite behind `--selfcheck`.
pub fn run_all(seed: u64) -> Vec<Check> {
    vec![
        dueling_identity(1000, seed),
        gradient_check(50, seed),
        tabular_convergence(1_000_000, seed),
        jammer_exactness(100, seed),
        backscatter_phy(seed),
        environment_properties(100_000, 1_000_000, seed),
    ]
}

