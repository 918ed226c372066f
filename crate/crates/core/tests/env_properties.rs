use std::collections::VecDeque;

use ambijam::env::{self, EnvConfig, EnvState, Scenario, StepOutcome};
use ambijam::rng_from_seed;
use proptest::prelude::*;

fn micro() -> EnvConfig {
    EnvConfig {
        queue_cap: 3,
        energy_cap: 3,
        t_th: 2,
        d_hat_t: 2,
        ..EnvConfig::default()
    }
}

/// Queues as oldest-first age lists: non-increasing, each age in 0..=t_th.
fn queues(cap: usize, max_age: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..cap {
        let mut next = Vec::new();
        for q in &frontier {
            let top = q.last().copied().unwrap_or(max_age);
            for a in 0..=top {
                let mut q2: Vec<u32> = q.clone();
                q2.push(a);
                next.push(q2);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// What the action phase must produce: an exact count, or a range for the
/// random combined-source yields.
#[derive(Debug)]
enum Expect {
    Exact(usize),
    Between(usize, usize),
}

/// Delivered packets and harvested energy, written out case by case.
fn expected(cfg: &EnvConfig, c: u8, n: usize, d: usize, e: usize, a: usize) -> (Expect, Expect) {
    let budget = if cfg.e_t == 0 { usize::MAX } else { e / cfg.e_t };
    let room = cfg.energy_cap - e;
    let none = Expect::Exact(0);
    match a {
        1 => (Expect::Exact(0), none),
        2 if c == 0 && n == 0 => (Expect::Exact(cfg.d_hat_t.min(d).min(budget)), none),
        2 => (Expect::Exact(0), none),
        3 if c == 0 && n == 0 => (Expect::Exact(0), none),
        3 if c == 1 && n == 0 => (Expect::Exact(0), Expect::Exact(cfg.e_h.min(room))),
        3 if c == 0 => (Expect::Exact(0), Expect::Exact(cfg.e_jam[n].min(room))),
        3 => {
            let lo = cfg.e_h.max(cfg.e_jam[n]);
            let hi = cfg.e_h + cfg.e_jam[n];
            (Expect::Exact(0), Expect::Between(lo.min(room), hi.min(room)))
        }
        4 if c == 0 && n == 0 => (Expect::Exact(0), none),
        4 if c == 1 && n == 0 => (Expect::Exact(cfg.d_hat_b.min(d)), none),
        4 if c == 0 => (Expect::Exact(cfg.d_jam[n].min(d)), none),
        4 => {
            let lo = cfg.d_hat_b.min(cfg.d_jam[n]);
            let hi = cfg.d_hat_b + cfg.d_jam[n];
            (Expect::Between(lo.min(d), hi.min(d)), none)
        }
        _ if c == 0 && n > 0 && e > 0 => {
            let m = a - 5;
            (Expect::Exact(cfg.rates[m][n].min(d).min(budget)), none)
        }
        _ => (Expect::Exact(0), none),
    }
}

fn holds(x: &Expect, v: usize) -> bool {
    match *x {
        Expect::Exact(k) => v == k,
        Expect::Between(lo, hi) => (lo..=hi).contains(&v),
    }
}

fn check_slot(cfg: &EnvConfig, before: &EnvState, a: usize, after: &EnvState, out: &StepOutcome) {
    let d = before.packet_ages.len();
    let (del, harv) = expected(cfg, before.c, before.power_level, d, before.e, a);
    assert!(holds(&del, out.delivered), "{before:?} a={a} {out:?} want {del:?}");
    assert!(holds(&harv, out.harvested), "{before:?} a={a} {out:?} want {harv:?}");
    let active = matches!(a, 2) || a >= 5;
    let spent = if active { out.delivered * cfg.e_t } else { 0 };
    assert_eq!(after.e, before.e + out.harvested - spent);
    assert!(out.harvested == 0 || out.delivered == 0);
    assert_eq!(out.reward, out.delivered as f64);

    // Oldest packets leave first, the rest age, stale ones go.
    let mut ages: Vec<u32> = before.packet_ages.iter().skip(out.delivered).map(|a| a + 1).collect();
    let age_sum: u64 = before.packet_ages.iter().take(out.delivered).map(|&a| u64::from(a)).sum();
    assert_eq!(out.delivered_age_sum, age_sum);
    let stale = if cfg.latency_discard {
        ages.iter().filter(|&&a| a > cfg.t_th).count()
    } else {
        0
    };
    assert_eq!(out.discarded_latency, stale);
    ages.retain(|&a| !cfg.latency_discard || a <= cfg.t_th);
    let admitted = out.arrivals.min(cfg.queue_cap - ages.len());
    assert_eq!(out.dropped_overflow, out.arrivals - admitted);
    ages.extend(std::iter::repeat_n(0, admitted));
    assert_eq!(after.packet_ages.iter().copied().collect::<Vec<_>>(), ages);
    assert_eq!(after.queue_len(), (d - out.delivered - stale + out.arrivals).min(cfg.queue_cap));
}

#[test]
fn every_micro_state_and_action_follows_the_slot_law() {
    let cfg = micro();
    let scenario = Scenario::new(cfg.clone()).unwrap();
    let levels = cfg.e_jam.len();
    let mut rng = rng_from_seed(11);
    let mut checked = 0;
    for q in queues(cfg.queue_cap, cfg.t_th) {
        for c in 0..2u8 {
            for n in 0..levels {
                for e in 0..=cfg.energy_cap {
                    for a in 1..=env::action_count(&cfg) {
                        for _ in 0..4 {
                            let before = EnvState {
                                c,
                                power_level: n,
                                packet_ages: VecDeque::from(q.clone()),
                                e,
                            };
                            let mut after = before.clone();
                            let out = env::step(&mut after, a, &scenario, &mut rng).unwrap();
                            check_slot(&cfg, &before, a, &after, &out);
                            checked += 1;
                        }
                    }
                }
            }
        }
    }
    // 20 queues x 2 x 4 x 4 x 7 actions x 4 draws
    assert_eq!(checked, 20 * 2 * 4 * 4 * 7 * 4);
}

fn config_strategy() -> impl Strategy<Value = EnvConfig> {
    (
        0.0..=1.0f64,
        0.1..5.0f64,
        1usize..12,
        1usize..12,
        1u32..5,
        any::<bool>(),
        0usize..4,
        0.5..21.0f64,
    )
        .prop_map(|(eta, lambda, d, e, t_th, latency, e_t, p_avg)| {
            let mut c = EnvConfig {
                eta,
                lambda,
                queue_cap: d,
                energy_cap: e,
                t_th,
                latency_discard: latency,
                e_t,
                ..EnvConfig::default()
            };
            c.jammer.p_avg = p_avg;
            c
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_runs_keep_the_state_valid(
        cfg in config_strategy(),
        seed in any::<u64>(),
        actions in prop::collection::vec(1usize..=7, 200),
    ) {
        let mut e = env::Env::new(cfg.clone(), seed).unwrap();
        let mut arrived = 0;
        let mut gone = 0;
        for &a in &actions {
            let before = e.state.clone();
            let out = e.step(a).unwrap();
            check_slot(&cfg, &before, a, &e.state, &out);
            prop_assert!(e.state.queue_len() <= cfg.queue_cap);
            prop_assert!(e.state.e <= cfg.energy_cap);
            prop_assert!(e.state.packet_ages.iter().zip(e.state.packet_ages.iter().skip(1)).all(|(x, y)| x >= y));
            if cfg.latency_discard {
                prop_assert!(e.state.packet_ages.iter().all(|&x| x <= cfg.t_th));
            }
            prop_assert!(e.state.c <= 1 && e.state.power_level < cfg.e_jam.len());
            if cfg.eta == 1.0 {
                prop_assert_eq!(e.state.c, 0);
            }
            arrived += out.arrivals;
            gone += out.delivered + out.dropped_overflow + out.discarded_latency;
        }
        prop_assert_eq!(arrived, gone + e.state.queue_len());
    }

    #[test]
    fn observation_is_exact_without_sensing_errors(cfg in config_strategy(), seed in any::<u64>()) {
        let mut e = env::Env::new(cfg.clone(), seed).unwrap();
        for a in [2usize, 3, 4, 1, 5] {
            let obs = e.observe();
            prop_assert_eq!(obs, e.state.truth());
            prop_assert!(obs.index(&cfg) < env::Observation::state_count(&cfg));
            e.step(a).unwrap();
        }
    }
}
