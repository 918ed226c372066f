//! Experiment orchestration: baselines, parameter sweeps, metric rows and
//! the self-check suite behind the CLI.

pub mod config;
pub mod output;
pub mod selfcheck;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::agents::{self, greedy_policy, ActionMask, Learner, TrainConfig};
use crate::env::{self, Env, EnvConfig, EnvState, Metrics, Observation, Scenario};
use crate::exec::{self, Execution};
use crate::{derive_seed, Error, Result};

pub use output::{emit_csv, format_sig, parse_csv, read_csv, to_csv, MetricsRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Tabular,
    DeepQ,
    Dueling,
    Htt,
    Wtj,
    FixedRa,
}

impl AgentKind {
    pub const ALL: [AgentKind; 6] = [
        AgentKind::Tabular,
        AgentKind::DeepQ,
        AgentKind::Dueling,
        AgentKind::Htt,
        AgentKind::Wtj,
        AgentKind::FixedRa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Tabular => "tabular",
            AgentKind::DeepQ => "deep_q",
            AgentKind::Dueling => "dueling",
            AgentKind::Htt => "htt",
            AgentKind::Wtj => "wtj",
            AgentKind::FixedRa => "fixed_ra",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown agent kind `{s}`")))
    }

    /// Learner and action mask, or `None` for the fixed policy.
    pub fn learner(self) -> Option<(Learner, ActionMask)> {
        match self {
            AgentKind::Tabular => Some((Learner::Tabular, ActionMask::None)),
            AgentKind::DeepQ => Some((Learner::DeepQ, ActionMask::None)),
            AgentKind::Dueling => Some((Learner::Dueling, ActionMask::None)),
            AgentKind::Htt => Some((Learner::Dueling, ActionMask::Htt)),
            AgentKind::Wtj => Some((Learner::Dueling, ActionMask::Wtj)),
            AgentKind::FixedRa => None,
        }
    }
}

/// One swept parameter set. Several paths receive the same value, which is
/// how `D = E` is varied together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub params: Vec<String>,
    pub values: Vec<f64>,
}

impl Sweep {
    pub fn single(param: &str, values: Vec<f64>) -> Self {
        Self {
            params: vec![param.to_string()],
            values,
        }
    }

    pub fn label(&self) -> String {
        self.params.join("+")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Environment, including the jammer.
    pub env: EnvConfig,
    pub agent: TrainConfig,
    pub agents: Vec<AgentKind>,
    pub sweep: Option<Sweep>,
    pub seeds: Vec<u64>,
    /// Iterations per reported row.
    pub eval_window: u64,
    /// Greedy-policy evaluation slots after training; 0 skips it.
    pub eval_slots: u64,
    pub out_path: Option<PathBuf>,
    pub execution: Execution,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            agent: TrainConfig::default(),
            agents: vec![AgentKind::Dueling],
            sweep: None,
            seeds: vec![0],
            eval_window: 1000,
            eval_slots: 0,
            out_path: None,
            execution: Execution::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_file(cfg: &config::FileConfig) -> Result<Self> {
        let mut spec = match &cfg.run.figure {
            Some(f) => sweep_defaults(f)?,
            None => ExperimentSpec::default(),
        };
        spec.env = cfg.env.clone();
        spec.agent = cfg.agent.clone();
        if cfg.run.figure.is_none() || cfg.run.agents != config::RunConfig::default().agents {
            spec.agents = cfg.run.agents.clone();
        }
        if cfg.run.figure.is_none() || cfg.run.seeds != config::RunConfig::default().seeds {
            spec.seeds = cfg.run.seeds.clone();
        }
        if cfg.run.sweep.is_some() {
            spec.sweep = cfg.run.sweep.clone();
        }
        spec.eval_window = cfg.run.eval_window;
        if cfg.run.eval_slots > 0 {
            spec.eval_slots = cfg.run.eval_slots;
        }
        spec.out_path = cfg.run.out.clone();
        spec.execution = if cfg.run.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        };
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.agent.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::config("run.seeds", "need at least one seed"));
        }
        if self.agents.is_empty() {
            return Err(Error::config("run.agents", "need at least one agent"));
        }
        if self.eval_window == 0 {
            return Err(Error::config("run.eval_window", "must be >= 1"));
        }
        if let Some(s) = &self.sweep {
            if s.params.is_empty() || s.values.is_empty() {
                return Err(Error::config("run.sweep", "needs parameters and values"));
            }
            // Paths are checked up front; values are checked per cell so one
            // bad value does not sink the others.
            let mut doc = config::to_document(&self.env, &self.agent);
            for p in &s.params {
                config::set_path(&mut doc, p, 1.0)?;
            }
        }
        Ok(())
    }

    /// Environment and training settings for one sweep value.
    pub fn configure(&self, value: Option<f64>) -> Result<(EnvConfig, TrainConfig)> {
        match (&self.sweep, value) {
            (Some(s), Some(v)) => {
                let mut doc = config::to_document(&self.env, &self.agent);
                for p in &s.params {
                    config::set_path(&mut doc, p, v)?;
                }
                config::resolve(&doc)
            }
            _ => Ok((self.env.clone(), self.agent.clone())),
        }
    }
}

/// Figure presets: the default configuration with one parameter swept.
pub fn sweep_defaults(figure: &str) -> Result<ExperimentSpec> {
    let learned = vec![AgentKind::Dueling, AgentKind::Tabular, AgentKind::Htt, AgentKind::Wtj];
    let range = |lo: f64, hi: f64, step: f64| -> Vec<f64> {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n).map(|i| lo + step * i as f64).collect()
    };
    let base = ExperimentSpec {
        seeds: vec![1, 2, 3, 4, 5],
        eval_slots: 20_000,
        ..ExperimentSpec::default()
    };
    let spec = match figure {
        "fig5" => ExperimentSpec {
            agents: vec![AgentKind::Dueling, AgentKind::FixedRa],
            sweep: Some(Sweep::single("jammer.p_avg", range(1.0, 7.0, 1.0))),
            ..base
        },
        "fig6" => ExperimentSpec {
            agents: learned,
            sweep: Some(Sweep::single("env.eta", range(0.0, 1.0, 0.1))),
            ..base
        },
        "fig7" => ExperimentSpec {
            agents: learned,
            sweep: Some(Sweep::single("jammer.p_avg", range(1.0, 7.0, 1.0))),
            ..base
        },
        "fig8" => ExperimentSpec {
            agents: learned,
            sweep: Some(Sweep::single("env.d_hat_t", range(1.0, 10.0, 1.0))),
            ..base
        },
        "fig9" => ExperimentSpec {
            agents: learned,
            sweep: Some(Sweep::single("env.lambda", range(0.5, 4.0, 0.5))),
            ..base
        },
        "fig10" => ExperimentSpec {
            agents: learned,
            sweep: Some(Sweep::single("env.t_th", range(1.0, 6.0, 1.0))),
            ..base
        },
        "fig11" => ExperimentSpec {
            agents: vec![AgentKind::Tabular, AgentKind::DeepQ, AgentKind::Dueling],
            sweep: Some(Sweep {
                params: vec!["env.D".into(), "env.E".into()],
                values: vec![10.0, 20.0],
            }),
            agent: TrainConfig {
                tabular_iterations: None,
                ..TrainConfig::default()
            },
            eval_slots: 0,
            ..base
        },
        other => return Err(Error::UnknownFigure(other.to_string())),
    };
    Ok(spec)
}

/// The rate-adaptation baseline. Sees the true jamming level; returns a
/// 1-based action.
pub fn fixed_ra_policy(obs: &Observation, power_level: usize, config: &EnvConfig) -> usize {
    if power_level > 0 && config.rate_count() > 0 {
        let mut best = 0;
        for m in 1..config.rate_count() {
            if config.rates[m][power_level] > config.rates[best][power_level] {
                best = m;
            }
        }
        return env::rate_action(best + 1);
    }
    if obs.c == 1 {
        return env::ACTION_HARVEST;
    }
    if power_level == 0 && obs.d > 0 && obs.e >= config.e_t {
        env::ACTION_TRANSMIT
    } else {
        env::ACTION_IDLE
    }
}

/// Per-cell accounting kept alongside the rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub agent: AgentKind,
    pub seed: u64,
    pub sweep_value: Option<f64>,
    pub total: Metrics,
    pub final_queue: usize,
    pub audit: agents::train::Audit,
    /// Greedy-policy evaluation, when requested.
    pub eval: Option<Metrics>,
}

#[derive(Debug)]
pub struct CellFailure {
    pub agent: AgentKind,
    pub seed: u64,
    pub sweep_value: Option<f64>,
    pub error: Error,
}

#[derive(Debug, Default)]
pub struct ExperimentOutput {
    /// Training-window rows.
    pub rows: Vec<MetricsRow>,
    /// One greedy-evaluation row per successful cell, when requested.
    pub evals: Vec<MetricsRow>,
    pub cells: Vec<CellSummary>,
    pub failures: Vec<CellFailure>,
}

fn row(kind: AgentKind, seed: u64, sweep: &(String, Option<f64>), iteration: u64, m: &Metrics) -> MetricsRow {
    MetricsRow {
        agent: kind.name().to_string(),
        seed,
        sweep_param: sweep.0.clone(),
        sweep_value: sweep.1,
        iteration,
        throughput: m.throughput(),
        packet_loss: m.packet_loss(),
        pdr: m.pdr(),
        avg_queue: m.avg_queue(),
        avg_delay: m.avg_delay(),
    }
}

struct Cell {
    kind: AgentKind,
    seed: u64,
    value: Option<f64>,
}

fn run_cell(spec: &ExperimentSpec, cell: &Cell) -> Result<(Vec<MetricsRow>, CellSummary)> {
    let (env_cfg, train_cfg) = spec.configure(cell.value)?;
    let scenario = Scenario::new(env_cfg)?;
    let label = (spec.sweep.as_ref().map(Sweep::label).unwrap_or_default(), cell.value);
    let eval_seed = derive_seed(cell.seed, 3);
    let (run, eval) = match cell.kind.learner() {
        Some((learner, mask)) => {
            let out = agents::train(&scenario, learner, &train_cfg, mask, cell.seed, spec.eval_window)?;
            let eval = if spec.eval_slots > 0 {
                let table = greedy_policy(&out.agent, &scenario.config, mask);
                let cfg = scenario.config.clone();
                Some(agents::evaluate(
                    &scenario,
                    |o: &Observation, _: &EnvState| table[o.index(&cfg)],
                    spec.eval_slots,
                    eval_seed,
                )?)
            } else {
                None
            };
            (out.run, eval)
        }
        None => {
            let cfg = scenario.config.clone();
            let mut policy = |o: &Observation, s: &EnvState| fixed_ra_policy(o, s.power_level, &cfg) - 1;
            let mut env = Env::from_scenario(scenario.clone(), derive_seed(cell.seed, 1))?;
            let run = agents::train::run_loop(&mut env, &mut policy, train_cfg.iterations, spec.eval_window)?;
            let eval = if spec.eval_slots > 0 {
                Some(agents::evaluate(&scenario, &mut policy, spec.eval_slots, eval_seed)?)
            } else {
                None
            };
            (run, eval)
        }
    };
    let rows = run
        .windows
        .iter()
        .map(|w| row(cell.kind, cell.seed, &label, w.iteration, &w.metrics))
        .collect();
    let summary = CellSummary {
        agent: cell.kind,
        seed: cell.seed,
        sweep_value: cell.value,
        total: run.total,
        final_queue: run.final_queue,
        audit: run.audit,
        eval,
    };
    Ok((rows, summary))
}

/// Runs every (sweep value, agent, seed) cell. Cells are independent and
/// may run concurrently; output order is fixed by the experiment spec alone. A failing
/// cell is reported in `failures` without discarding the others.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let values: Vec<Option<f64>> = match &spec.sweep {
        Some(s) => s.values.iter().copied().map(Some).collect(),
        None => vec![None],
    };
    let mut cells = Vec::new();
    for &value in &values {
        for &kind in &spec.agents {
            for &seed in &spec.seeds {
                cells.push(Cell { kind, seed, value });
            }
        }
    }
    let results = exec::map(spec.execution, cells, |cell| (run_cell(spec, &cell), cell));
    let mut out = ExperimentOutput::default();
    let label = spec.sweep.as_ref().map(Sweep::label).unwrap_or_default();
    for (result, cell) in results {
        match result {
            Ok((rows, summary)) => {
                out.rows.extend(rows);
                if let Some(m) = &summary.eval {
                    let iterations = summary.total.slots;
                    out.evals.push(row(summary.agent, summary.seed, &(label.clone(), summary.sweep_value), iterations, m));
                }
                out.cells.push(summary);
            }
            Err(error) => out.failures.push(CellFailure {
                agent: cell.kind,
                seed: cell.seed,
                sweep_value: cell.value,
                error,
            }),
        }
    }
    Ok(out)
}

/// Mean of `f` over cells grouped by (agent, sweep value), in first-seen
/// order.
pub fn seed_average<F>(cells: &[CellSummary], f: F) -> Vec<(AgentKind, Option<f64>, f64)>
where
    F: Fn(&CellSummary) -> f64,
{
    let mut out: Vec<(AgentKind, Option<f64>, f64, usize)> = Vec::new();
    for c in cells {
        let v = f(c);
        match out.iter_mut().find(|(k, s, _, _)| *k == c.agent && *s == c.sweep_value) {
            Some(slot) => {
                slot.2 += v;
                slot.3 += 1;
            }
            None => out.push((c.agent, c.sweep_value, v, 1)),
        }
    }
    out.into_iter().map(|(k, s, sum, n)| (k, s, sum / n as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ra_examples() {
        let cfg = EnvConfig::default();
        let obs = |c, d, e| Observation { c, j: 0, d, e };
        let a = fixed_ra_policy(&obs(0, 5, 5), 1, &cfg);
        assert_eq!(a, env::rate_action(1));
        assert_eq!(cfg.rates[a - 5][1], 2);
        assert_eq!(fixed_ra_policy(&obs(1, 5, 5), 0, &cfg), env::ACTION_HARVEST);
        assert_eq!(fixed_ra_policy(&obs(0, 0, 5), 0, &cfg), env::ACTION_IDLE);
        assert_eq!(fixed_ra_policy(&obs(0, 3, 0), 0, &cfg), env::ACTION_IDLE);
        assert_eq!(fixed_ra_policy(&obs(0, 3, 1), 0, &cfg), env::ACTION_TRANSMIT);
        assert_eq!(fixed_ra_policy(&obs(0, 3, 1), 2, &cfg), env::rate_action(2));
    }

    #[test]
    fn figure_presets() {
        let p = |f| sweep_defaults(f).unwrap().sweep.unwrap();
        assert_eq!(p("fig7").params, vec!["jammer.p_avg"]);
        assert_eq!(p("fig7").values, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        assert_eq!(p("fig6").params, vec!["env.eta"]);
        assert_eq!(p("fig6").values.len(), 11);
        assert_eq!(p("fig11").label(), "env.D+env.E");
        assert!(matches!(sweep_defaults("fig12"), Err(Error::UnknownFigure(_))));
        for f in ["fig5", "fig6", "fig7", "fig8", "fig9", "fig10", "fig11"] {
            sweep_defaults(f).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn agent_names_roundtrip() {
        for k in AgentKind::ALL {
            assert_eq!(AgentKind::parse(k.name()).unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
        assert!(AgentKind::parse("dqn").is_err());
    }

    #[test]
    fn bad_sweep_names_field() {
        let spec = ExperimentSpec {
            sweep: Some(Sweep::single("env.D", vec![2.5])),
            ..ExperimentSpec::default()
        };
        match spec.configure(Some(2.5)) {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "env.D"),
            other => panic!("{other:?}"),
        }
        let spec = ExperimentSpec {
            sweep: Some(Sweep::single("env.nope", vec![1.0])),
            ..ExperimentSpec::default()
        };
        match spec.validate() {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "env.nope"),
            other => panic!("{other:?}"),
        }
    }
}
