use ambijam::env::EnvConfig;
use ambijam::exec::Execution;
use ambijam::harness::{self, run_experiment, AgentKind, ExperimentSpec, Sweep};
use ambijam::jammer::JammerConfig;
use ambijam::Error;

fn spec(agents: Vec<AgentKind>, iterations: u64) -> ExperimentSpec {
    let mut s = ExperimentSpec {
        agents,
        seeds: vec![3],
        eval_window: 500,
        ..ExperimentSpec::default()
    };
    s.agent.iterations = iterations;
    s.agent.tabular_iterations = Some(iterations);
    s
}

#[test]
fn row_accounting() {
    let mut s = spec(vec![AgentKind::Dueling], 2000);
    s.sweep = Some(Sweep::single("jammer.p_avg", vec![2.0, 5.0]));
    let out = run_experiment(&s).unwrap();
    assert_eq!(out.rows.len(), 2 * (2000 / 500));
    assert!(out.failures.is_empty());
    assert!(out.rows.iter().all(|r| r.sweep_param == "jammer.p_avg"));
    assert_eq!(out.rows[0].sweep_value, Some(2.0));
    assert_eq!(out.rows[7].sweep_value, Some(5.0));
}

#[test]
fn identical_csv_on_rerun_and_across_execution_modes() {
    let mut s = spec(vec![AgentKind::Tabular, AgentKind::DeepQ, AgentKind::FixedRa], 1500);
    s.seeds = vec![1, 2];
    s.sweep = Some(Sweep::single("env.eta", vec![0.25, 0.75]));
    s.eval_slots = 300;
    let a = harness::to_csv(&run_experiment(&s).unwrap().rows);
    let b = harness::to_csv(&run_experiment(&s).unwrap().rows);
    assert_eq!(a, b);
    s.execution = Execution::Sequential;
    let out = run_experiment(&s).unwrap();
    assert_eq!(a, harness::to_csv(&out.rows));
    assert_eq!(out.evals.len(), 3 * 2 * 2);
}

#[test]
fn row_metrics_match_accumulators() {
    let mut s = spec(AgentKind::ALL.to_vec(), 3000);
    s.env.jammer = JammerConfig {
        p_avg: 3.5,
        ..JammerConfig::default()
    };
    s.eval_window = 3000;
    let out = run_experiment(&s).unwrap();
    assert_eq!(out.cells.len(), AgentKind::ALL.len());
    for (cell, row) in out.cells.iter().zip(&out.rows) {
        let m = &cell.total;
        assert_eq!(row.iteration, m.slots);
        let pdr = m.delivered as f64 / m.arrived as f64;
        assert!((row.pdr - pdr.min(1.0)).abs() < 1e-9);
        assert!((0.0..=1.0).contains(&row.pdr));
        assert!(row.throughput >= 0.0 && row.packet_loss >= 0.0 && row.avg_queue >= 0.0 && row.avg_delay >= 0.0);
        // Every arrival is delivered, lost or still queued.
        assert_eq!(
            m.dropped_overflow + m.discarded_latency + m.delivered + cell.final_queue as u64,
            m.arrived,
            "{:?}",
            cell.agent
        );
    }
}

#[test]
fn baseline_masks_are_respected() {
    let mut s = spec(vec![AgentKind::Htt, AgentKind::Wtj], 4000);
    s.seeds = vec![1, 2];
    s.env.jammer.p_avg = 4.0;
    let out = run_experiment(&s).unwrap();
    for c in &out.cells {
        match c.agent {
            AgentKind::Htt => assert_eq!(c.audit.backscatter_deliveries, 0),
            AgentKind::Wtj => {
                assert_eq!(c.audit.jam_only_harvests, 0);
                assert_eq!(c.audit.jam_only_backscatters, 0);
            }
            _ => unreachable!(),
        }
    }
}

#[test]
fn failing_cell_keeps_the_rest() {
    let mut s = spec(vec![AgentKind::FixedRa], 1000);
    // 50 W exceeds the 21 W peak power.
    s.sweep = Some(Sweep::single("jammer.p_avg", vec![3.0, 50.0]));
    let out = run_experiment(&s).unwrap();
    assert_eq!(out.rows.len(), 2);
    assert!(out.rows.iter().all(|r| r.sweep_value == Some(3.0)));
    assert_eq!(out.failures.len(), 1);
    match &out.failures[0].error {
        Error::InvalidConfig { field, .. } => assert_eq!(field, "jammer.p_avg"),
        e => panic!("{e:?}"),
    }
}

#[test]
fn joint_sweep_sets_both_capacities() {
    let mut s = spec(vec![AgentKind::Tabular], 500);
    s.sweep = Some(Sweep {
        params: vec!["env.D".into(), "env.E".into()],
        values: vec![10.0],
    });
    let (env, _) = s.configure(Some(10.0)).unwrap();
    assert_eq!((env.queue_cap, env.energy_cap), (10, 10));
    let out = run_experiment(&s).unwrap();
    assert_eq!(out.rows[0].sweep_param, "env.D+env.E");
}

#[test]
fn invalid_spec_is_rejected_up_front() {
    let mut s = spec(vec![AgentKind::Dueling], 100);
    s.seeds.clear();
    assert!(matches!(run_experiment(&s), Err(Error::InvalidConfig { .. })));
    let mut s = spec(vec![AgentKind::Dueling], 100);
    s.env = EnvConfig {
        lambda: -1.0,
        ..EnvConfig::default()
    };
    match run_experiment(&s) {
        Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "env.lambda"),
        other => panic!("{other:?}"),
    }
}
