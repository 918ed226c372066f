//! Training loops: tabular Q-learning and the replay/target-network loop
//! shared by deep Q-learning and deep dueling. One iteration is one slot;
//! the task is continuing, so the environment is never reset.

use serde::{Deserialize, Serialize};

use crate::agents::network::{self, Architecture, NetworkParams, FEATURES};
use crate::agents::replay::{ReplayBuffer, Transition};
use crate::agents::tabular::QTable;
use crate::agents::{encode_features, epsilon_at, greedy_masked, select_action_masked, ActionMask, TrainConfig};
use crate::env::{Env, EnvConfig, EnvState, Metrics, Observation, Scenario, StepOutcome};
use crate::{Result, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    Tabular,
    DeepQ,
    Dueling,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedAgent {
    Tabular(QTable),
    Network(NetworkParams),
}

impl TrainedAgent {
    pub fn q_values(&self, obs: &Observation, config: &EnvConfig) -> Vec<f64> {
        match self {
            TrainedAgent::Tabular(t) => t.row(obs.index(config)).to_vec(),
            TrainedAgent::Network(p) => p
                .forward(&encode_features(obs, config))
                .expect("network input width is fixed at construction"),
        }
    }

    pub fn greedy_action(&self, obs: &Observation, config: &EnvConfig, mask: ActionMask) -> usize {
        let q = self.q_values(obs, config);
        greedy_masked(&q, &mask.allowed(obs, q.len()))
    }
}

/// Greedy action (0-based) for every observation index.
pub fn greedy_policy(agent: &TrainedAgent, config: &EnvConfig, mask: ActionMask) -> Vec<usize> {
    (0..Observation::state_count(config))
        .map(|i| agent.greedy_action(&Observation::from_index(i, config), config, mask))
        .collect()
}

/// Per-run action accounting used to audit baseline masks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Audit {
    /// Indexed by 0-based action.
    pub action_counts: Vec<u64>,
    pub backscatter_deliveries: u64,
    /// Harvest actions taken while only the jammer was active.
    pub jam_only_harvests: u64,
    /// Backscatter actions taken while only the jammer was active.
    pub jam_only_backscatters: u64,
}

impl Audit {
    fn record(&mut self, out: &StepOutcome, actions: usize) {
        if self.action_counts.is_empty() {
            self.action_counts = vec![0; actions];
        }
        let a = out.action - 1;
        self.action_counts[a] += 1;
        let jam_only = out.c == 0 && out.power_level > 0;
        match out.action {
            crate::env::ACTION_HARVEST if jam_only => self.jam_only_harvests += 1,
            crate::env::ACTION_BACKSCATTER => {
                self.backscatter_deliveries += out.delivered as u64;
                if jam_only {
                    self.jam_only_backscatters += 1;
                }
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowRecord {
    /// Iteration count at the end of the window.
    pub iteration: u64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub windows: Vec<WindowRecord>,
    pub total: Metrics,
    pub audit: Audit,
    pub final_queue: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub run: RunRecord,
    pub agent: TrainedAgent,
    pub target_syncs: u64,
}

impl TrainOutcome {
    /// Average reward per window.
    pub fn learning_curve(&self) -> Vec<(u64, f64)> {
        self.run
            .windows
            .iter()
            .map(|w| (w.iteration, w.metrics.throughput()))
            .collect()
    }
}

/// Something that picks actions and optionally learns from transitions.
pub trait Controller {
    /// Returns a 0-based action. `state` is the hidden truth, which only
    /// oracle baselines may look at.
    fn act(&mut self, obs: &Observation, state: &EnvState, step: u64) -> usize;

    fn learn(&mut self, _t: Transition, _step: u64) -> Result<()> {
        Ok(())
    }
}

impl<F> Controller for F
where
    F: FnMut(&Observation, &EnvState) -> usize,
{
    fn act(&mut self, obs: &Observation, state: &EnvState, _step: u64) -> usize {
        self(obs, state)
    }
}

/// Drives `controller` for `iterations` slots, closing a metrics window
/// every `window` slots (a trailing partial window is kept).
pub fn run_loop<C: Controller + ?Sized>(
    env: &mut Env,
    controller: &mut C,
    iterations: u64,
    window: u64,
) -> Result<RunRecord> {
    let window = window.max(1);
    let actions = env.action_count();
    let mut record = RunRecord {
        windows: Vec::with_capacity((iterations / window) as usize + 1),
        total: Metrics::default(),
        audit: Audit::default(),
        final_queue: 0,
    };
    let mut current = Metrics::default();
    let mut obs = env.observe();
    for t in 0..iterations {
        let a = controller.act(&obs, &env.state, t);
        let out = env.step(a + 1)?;
        let next = env.observe();
        current.record(&out, env.state.queue_len());
        record.audit.record(&out, actions);
        let config = env.config();
        let transition = Transition {
            s: obs,
            a,
            r: out.reward,
            s_next: next,
            s_features: encode_features(&obs, config).to_vec(),
            s_next_features: encode_features(&next, config).to_vec(),
        };
        controller.learn(transition, t)?;
        obs = next;
        if (t + 1) % window == 0 || t + 1 == iterations {
            record.total.merge(&current);
            record.windows.push(WindowRecord {
                iteration: t + 1,
                metrics: current,
            });
            current = Metrics::default();
        }
    }
    record.final_queue = env.state.queue_len();
    Ok(record)
}

pub struct TabularLearner {
    pub table: QTable,
    config: EnvConfig,
    train: TrainConfig,
    mask: ActionMask,
    decay: u64,
    rng: SimRng,
}

impl TabularLearner {
    pub fn new(config: &EnvConfig, train: &TrainConfig, mask: ActionMask, iterations: u64, seed: u64) -> Self {
        Self {
            table: QTable::for_env(config),
            config: config.clone(),
            train: train.clone(),
            mask,
            decay: train.decay_steps(iterations),
            rng: crate::rng_from_seed(seed),
        }
    }
}

impl Controller for TabularLearner {
    fn act(&mut self, obs: &Observation, _state: &EnvState, step: u64) -> usize {
        let eps = epsilon_at(step, self.train.epsilon_start, self.train.epsilon_end, self.decay);
        let row = self.table.row(obs.index(&self.config));
        let allowed = self.mask.allowed(obs, row.len());
        select_action_masked(row, &allowed, eps, &mut self.rng)
    }

    fn learn(&mut self, t: Transition, _step: u64) -> Result<()> {
        crate::agents::tabular::q_update(
            &mut self.table,
            &self.config,
            &t.s,
            t.a,
            t.r,
            &t.s_next,
            self.train.gamma,
            self.train.tabular_rate_exponent,
            self.mask,
        );
        Ok(())
    }
}

/// Replay-buffer learner with a periodically synchronised target network.
pub struct DeepLearner {
    pub online: NetworkParams,
    pub target: NetworkParams,
    pub replay: ReplayBuffer,
    pub syncs: u64,
    config: EnvConfig,
    train: TrainConfig,
    mask: ActionMask,
    decay: u64,
    rng: SimRng,
}

impl DeepLearner {
    pub fn new(
        arch: Architecture,
        config: &EnvConfig,
        train: &TrainConfig,
        mask: ActionMask,
        iterations: u64,
        seed: u64,
    ) -> Self {
        let mut rng = crate::rng_from_seed(seed);
        let actions = crate::env::action_count(config);
        let online = NetworkParams::init(arch, FEATURES, train.hidden, actions, &mut rng)
            .with_aggregation(train.aggregation);
        Self {
            target: online.clone(),
            online,
            replay: ReplayBuffer::new(train.replay_capacity),
            syncs: 0,
            config: config.clone(),
            train: train.clone(),
            mask,
            decay: train.decay_steps(iterations),
            rng,
        }
    }
}

impl Controller for DeepLearner {
    fn act(&mut self, obs: &Observation, _state: &EnvState, step: u64) -> usize {
        let eps = epsilon_at(step, self.train.epsilon_start, self.train.epsilon_end, self.decay);
        let allowed = self.mask.allowed(obs, self.online.actions);
        let explore = eps > 0.0 && rand::Rng::random::<f64>(&mut self.rng) < eps;
        if explore {
            select_action_masked(&vec![0.0; self.online.actions], &allowed, 1.0, &mut self.rng)
        } else {
            let q = self
                .online
                .forward(&encode_features(obs, &self.config))
                .expect("network input width is fixed at construction");
            greedy_masked(&q, &allowed)
        }
    }

    fn learn(&mut self, t: Transition, step: u64) -> Result<()> {
        self.replay.push(t);
        if self.replay.len() >= self.train.batch {
            let batch = self.replay.sample(self.train.batch, &mut self.rng);
            let (_, grad) =
                network::loss_and_gradient_masked(&self.online, &self.target, &batch, self.train.gamma, self.mask)?;
            network::sgd_step(&mut self.online, &grad, self.train.sgd_rate)?;
        }
        if (step + 1).is_multiple_of(self.train.target_sync) {
            self.target = self.online.clone();
            self.syncs += 1;
        }
        Ok(())
    }
}

/// Trains `learner` on a fresh environment built from `scenario`.
pub fn train(
    scenario: &Scenario,
    learner: Learner,
    cfg: &TrainConfig,
    mask: ActionMask,
    seed: u64,
    window: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let iterations = cfg.iterations_for(learner);
    let mut env = Env::from_scenario(scenario.clone(), crate::derive_seed(seed, 1))?;
    let agent_seed = crate::derive_seed(seed, 2);
    match learner {
        Learner::Tabular => {
            let mut ctl = TabularLearner::new(env.config(), cfg, mask, iterations, agent_seed);
            let run = run_loop(&mut env, &mut ctl, iterations, window)?;
            Ok(TrainOutcome {
                run,
                agent: TrainedAgent::Tabular(ctl.table),
                target_syncs: 0,
            })
        }
        Learner::DeepQ | Learner::Dueling => {
            let arch = if learner == Learner::Dueling {
                Architecture::Dueling
            } else {
                Architecture::Plain
            };
            let mut ctl = DeepLearner::new(arch, env.config(), cfg, mask, iterations, agent_seed);
            let run = run_loop(&mut env, &mut ctl, iterations, window)?;
            Ok(TrainOutcome {
                run,
                agent: TrainedAgent::Network(ctl.online),
                target_syncs: ctl.syncs,
            })
        }
    }
}

/// Runs a fixed decision rule for `slots` slots and returns the totals.
pub fn evaluate<F>(scenario: &Scenario, mut policy: F, slots: u64, seed: u64) -> Result<Metrics>
where
    F: FnMut(&Observation, &EnvState) -> usize,
{
    let mut env = Env::from_scenario(scenario.clone(), seed)?;
    Ok(run_loop(&mut env, &mut policy, slots, slots.max(1))?.total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jammer::JammerConfig;

    fn quiet_env() -> EnvConfig {
        // Ambient source always idle, jammer never attacks, free transmissions.
        EnvConfig {
            eta: 1.0,
            e_t: 0,
            queue_cap: 5,
            energy_cap: 5,
            jammer: JammerConfig {
                weights: vec![0.0; 4],
                ..JammerConfig::default()
            },
            ..EnvConfig::default()
        }
    }

    fn small_train(iterations: u64) -> TrainConfig {
        TrainConfig {
            iterations,
            tabular_iterations: Some(iterations),
            target_sync: 50,
            replay_capacity: 500,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn windows_cover_the_run() {
        let scenario = Scenario::new(quiet_env()).unwrap();
        let out = train(&scenario, Learner::Tabular, &small_train(2500), ActionMask::None, 3, 1000).unwrap();
        let its: Vec<u64> = out.run.windows.iter().map(|w| w.iteration).collect();
        assert_eq!(its, vec![1000, 2000, 2500]);
        assert_eq!(out.run.total.slots, 2500);
        assert_eq!(out.learning_curve().len(), 3);
    }

    #[test]
    fn target_is_frozen_between_syncs() {
        let cfg = quiet_env();
        let train = small_train(400);
        let mut env = Env::new(cfg.clone(), 1).unwrap();
        let mut learner = DeepLearner::new(Architecture::Dueling, &cfg, &train, ActionMask::None, 400, 2);
        let mut obs = env.observe();
        let mut last_target = learner.target.clone();
        for t in 0..400u64 {
            let a = learner.act(&obs, &env.state, t);
            let out = env.step(a + 1).unwrap();
            let next = env.observe();
            let tr = Transition {
                s: obs,
                a,
                r: out.reward,
                s_next: next,
                s_features: encode_features(&obs, &cfg).to_vec(),
                s_next_features: encode_features(&next, &cfg).to_vec(),
            };
            learner.learn(tr, t).unwrap();
            if (t + 1) % train.target_sync == 0 {
                assert_eq!(learner.target, learner.online);
            } else {
                assert_eq!(learner.target.data, last_target.data, "target moved at step {t}");
            }
            last_target = learner.target.clone();
            obs = next;
        }
        assert_eq!(learner.syncs, 8);
        assert_ne!(learner.online, DeepLearner::new(Architecture::Dueling, &cfg, &train, ActionMask::None, 400, 2).online);
    }

    #[test]
    fn training_is_deterministic() {
        let scenario = Scenario::new(EnvConfig::default()).unwrap();
        let cfg = small_train(3000);
        let a = train(&scenario, Learner::Dueling, &cfg, ActionMask::None, 9, 500).unwrap();
        let b = train(&scenario, Learner::Dueling, &cfg, ActionMask::None, 9, 500).unwrap();
        assert_eq!(a.agent, b.agent);
        assert_eq!(a.learning_curve(), b.learning_curve());
        let c = train(&scenario, Learner::Dueling, &cfg, ActionMask::None, 10, 500).unwrap();
        assert_ne!(a.agent, c.agent);
    }

    #[test]
    fn tabular_learns_to_transmit_when_free() {
        let cfg = quiet_env();
        let scenario = Scenario::new(cfg.clone()).unwrap();
        let out = train(&scenario, Learner::Tabular, &small_train(50_000), ActionMask::None, 4, 50_000).unwrap();
        // A full queue loses packets unless it is drained now.
        let full = Observation { c: 0, j: 0, d: cfg.queue_cap, e: 0 };
        assert_eq!(out.agent.greedy_action(&full, &cfg, ActionMask::None), 1);
        let policy = greedy_policy(&out.agent, &cfg, ActionMask::None);
        assert_eq!(policy.len(), Observation::state_count(&cfg));
        let learned = evaluate(&scenario, |o: &Observation, _: &EnvState| policy[o.index(&cfg)], 5000, 8).unwrap();
        let send = evaluate(&scenario, |_: &Observation, _: &EnvState| 1, 5000, 8).unwrap();
        assert!(learned.throughput() >= 0.95 * send.throughput(), "{} vs {}", learned.throughput(), send.throughput());
    }

    #[test]
    fn masks_hold_during_training() {
        let scenario = Scenario::new(EnvConfig {
            jammer: JammerConfig {
                p_avg: 3.5,
                ..JammerConfig::default()
            },
            ..EnvConfig::default()
        })
        .unwrap();
        let htt = train(&scenario, Learner::Dueling, &small_train(3000), ActionMask::Htt, 1, 3000).unwrap();
        assert_eq!(htt.run.audit.action_counts[3], 0);
        assert_eq!(htt.run.audit.backscatter_deliveries, 0);
        let wtj = train(&scenario, Learner::Dueling, &small_train(3000), ActionMask::Wtj, 1, 3000).unwrap();
        assert_eq!(wtj.run.audit.jam_only_harvests, 0);
        assert_eq!(wtj.run.audit.jam_only_backscatters, 0);
        let free = train(&scenario, Learner::Dueling, &small_train(3000), ActionMask::None, 1, 3000).unwrap();
        assert!(free.run.audit.jam_only_harvests + free.run.audit.jam_only_backscatters > 0);
    }

    #[test]
    fn evaluate_runs_fixed_rules() {
        let scenario = Scenario::new(quiet_env()).unwrap();
        let idle = evaluate(&scenario, |_: &Observation, _: &EnvState| 0, 1000, 1).unwrap();
        assert_eq!(idle.delivered, 0);
        assert_eq!(idle.slots, 1000);
        let send = evaluate(&scenario, |_: &Observation, _: &EnvState| 1, 5000, 1).unwrap();
        // Free transmissions with capacity 4 > lambda keep up with arrivals.
        assert!(send.throughput() > 1.8, "{}", send.throughput());
    }
}
