use aoisgd::engine::{replicate, run, run_seed, simulate, TraceOptions};
use aoisgd::optimizer::{AgentState, Problem, StepSchedule};
use aoisgd::par::Execution;
use aoisgd::protocol::Component;
use aoisgd::rng::SimRng;
use aoisgd::scenario::{builtin, Scenario, ScenarioConfig};

fn builtin_short(name: &str, slots: u64) -> Scenario {
    let mut s = builtin(name).unwrap().unwrap();
    s.config.slots = slots;
    s
}

fn from_toml(text: &str) -> Scenario {
    Scenario::from_config(ScenarioConfig::parse(text, "inline").unwrap()).unwrap()
}

#[test]
fn agent_visible_state_has_no_global_clock() {
    // Exhaustive destructuring: adding a field breaks this test.
    let AgentState {
        id,
        x,
        nu,
        error_bound,
    } = AgentState::new(0, vec![0.0], 0.0);
    let Component {
        value,
        timestamp,
        origin,
    } = Component {
        value: x.clone(),
        timestamp: nu,
        origin: id,
    };
    assert_eq!(
        (value, timestamp, origin, error_bound),
        (vec![0.0], 1, 0, 0.0)
    );
}

#[test]
fn timestamps_count_local_updates_not_slots() {
    let s = builtin_short("paper-experiment", 400);
    let t = run(&s, 5, &TraceOptions::default()).unwrap();
    for (i, nu) in t.final_nu.iter().enumerate() {
        assert_eq!(*nu, t.cumulative_updates[i].last().unwrap() + 1);
        assert!(*nu < 400);
    }
}

/// Agent `i` pulls towards agent `i+1 mod D`.
struct Ring {
    agents: usize,
}

impl Problem for Ring {
    type Noise = ();

    fn agent_count(&self) -> usize {
        self.agents
    }

    fn dim(&self) -> usize {
        1
    }

    fn sample_noise(&self, _rng: &mut SimRng) {}

    fn gradients(
        &self,
        x: &[Vec<f64>],
        agent: usize,
        _noise: &(),
        _rng: &mut SimRng,
    ) -> (Vec<f64>, Vec<f64>) {
        let next = (agent + 1) % self.agents;
        (vec![2.0 * (x[agent][0] - x[next][0])], vec![0.0])
    }
}

#[test]
fn simultaneous_updates_use_the_slot_snapshot() {
    let s = builtin_short("lossless-sanity", 5);
    let d = s.config.agents;
    let ring = Ring { agents: d };
    let initial: Vec<Vec<f64>> = (0..d).map(|i| vec![i as f64]).collect();
    let opts = TraceOptions {
        positions: true,
        ..TraceOptions::default()
    };
    let eval = |_: &[Vec<f64>]| (0.0, 0.0);
    let t = simulate(&s, &ring, &initial, &eval, 3, &opts).unwrap();

    let schedule: &StepSchedule = &s.config.schedule;
    let mut x: Vec<f64> = (0..d).map(|i| i as f64).collect();
    for n in 1..=5u64 {
        let a = schedule.step_size(n);
        let b = schedule.penalty_param(n);
        x = (0..d)
            .map(|i| x[i] - a * (b * 2.0 * (x[i] - x[(i + 1) % d]) + 0.0))
            .collect();
        let got: Vec<f64> = t.positions[n as usize - 1].iter().map(|v| v[0]).collect();
        assert_eq!(got, x, "slot {n}");
    }
}

const TRIANGLE: &str = r#"
name = "triangle"
agents = 3
slots = 3000
seed = 77

[topology]
kind = "explicit"
graphs = [[[0, 1], [1, 2], [2, 0]], [[0, 2], [2, 1], [1, 0]]]
epsilon_floor = 0.1

[channel]
mode = "fading"
capacity = 1

[channel.fading]
channels = 3
decay = "constant"
latent_matrix = [[0.9, 0.1], [0.3, 0.7]]
channel_matrices = [[[0.9, 0.1], [0.2, 0.8]], [[0.6, 0.4], [0.4, 0.6]]]
success_scale = { kind = "uniform", low = 0.3, high = 0.9, seed = 1 }

[problem]
kind = "quadratic"
centers = [[0.0], [1.0], [2.0]]
initial = [[5.0], [5.0], [5.0]]

[schedule]
a = { kind = "constant", value = 0.01 }
b = { kind = "constant", value = 1.0 }

[clocks]
kind = "poisson"
rate = 0.5
"#;

#[test]
fn pair_ages_match_message_replay_and_never_exceed_edge_ages() {
    let s = from_toml(TRIANGLE);
    let opts = TraceOptions {
        pair_stride: Some(1),
        edge_ages: true,
        message_log: true,
        ..TraceOptions::default()
    };
    let t = run(&s, run_seed(&s, 0), &opts).unwrap();
    let d = 3;

    // Birth slots of every timestamp, from the cumulative update counts.
    let births: Vec<Vec<u64>> = (0..d)
        .map(|i| {
            let mut b = vec![0u64];
            let mut prev = 0;
            for (k, &c) in t.cumulative_updates[i].iter().enumerate() {
                if c > prev {
                    b.push(k as u64 + 1);
                    prev = c;
                }
            }
            b
        })
        .collect();
    let birth = |i: usize, ts: u64| births[i][(ts - 1) as usize];

    let mut held = vec![vec![1u64; d]; d];
    let mut direct = vec![vec![1u64; d]; d];
    let mut log = t.messages.iter().peekable();
    for (k, row) in t.pair_rows.iter().enumerate() {
        let n = k as u64 + 1;
        while let Some(m) = log.next_if(|m| m.slot == n) {
            let h = &mut held[m.receiver][m.origin];
            *h = (*h).max(m.timestamp);
            if m.origin == m.sender {
                let e = &mut direct[m.sender][m.receiver];
                *e = (*e).max(m.timestamp);
            }
        }
        for (i, h) in held.iter_mut().enumerate() {
            h[i] = t.cumulative_updates[i][k] + 1;
        }
        for (i, h) in held.iter().enumerate() {
            for (j, &ts) in h.iter().enumerate() {
                assert_eq!(row.pair[i][j], n - birth(j, ts), "slot {n} pair ({i},{j})");
            }
        }
        for (e, &(src, dst)) in t.union_edges.iter().enumerate() {
            let edge_age = n - birth(src, direct[src][dst]);
            assert_eq!(t.edge_ages[e][k], edge_age);
            assert!(row.pair[dst][src] <= edge_age);
        }
    }
    assert!(t.messages.len() > 100);
}

const SINR: &str = r#"
name = "sinr-ring"
agents = 4
slots = 2000
seed = 8

[topology]
kind = "interleaved_cycles"
epsilon_floor = 0.1

[channel]
mode = "sinr"

[channel.sinr]
noise_floor = 0.05
beta = 1.0
bandwidth = 1.0
attenuation = { kind = "exponential", mean = 1.0 }
epsilon = 0.1
delta = 0.1
fallback_power = 1.0

[problem]
kind = "quadratic"
centers = [[0.0], [1.0], [2.0], [3.0]]
initial = [[0.0], [0.0], [0.0], [0.0]]

[schedule]
a = { kind = "constant", value = 0.05 }
b = { kind = "constant", value = 1.0 }

[clocks]
kind = "every_slot"
"#;

#[test]
fn sinr_mode_runs_and_is_lossy() {
    let s = from_toml(SINR);
    let t = run(&s, 1, &TraceOptions::default()).unwrap();
    let attempts: u64 = t.records.iter().map(|r| r.attempts as u64).sum();
    let successes: u64 = t.records.iter().map(|r| r.successes as u64).sum();
    assert!(
        successes > 0 && successes < attempts,
        "{successes}/{attempts}"
    );
    assert_eq!(t, run(&s, 1, &TraceOptions::default()).unwrap());
    for (x, c) in t.final_positions.iter().zip([0.0, 1.0, 2.0, 3.0]) {
        assert!((x[0] - c).abs() < 1e-6);
    }
}

#[test]
fn replications_have_distinct_seeds_and_finite_bands() {
    let s = builtin_short("lossless-sanity", 30);
    let traces = replicate(&s, 16, &TraceOptions::default(), Execution::Parallel).unwrap();
    let mut seeds: Vec<u64> = traces.iter().map(|t| t.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    assert_eq!(seeds.len(), 16);
    let agg = aoisgd::engine::Aggregate::from_traces(&traces);
    assert!(agg
        .objective
        .std_error
        .iter()
        .all(|v| v.is_finite() && *v >= 0.0));
    assert!(agg.objective.std_error.iter().any(|v| *v > 0.0));
    let seq = replicate(&s, 16, &TraceOptions::default(), Execution::Sequential).unwrap();
    assert_eq!(traces, seq);
}

#[test]
fn different_seeds_give_different_traces() {
    let s = builtin_short("paper-experiment", 200);
    let a = run(&s, 1, &TraceOptions::default()).unwrap();
    let b = run(&s, 2, &TraceOptions::default()).unwrap();
    assert_ne!(a.records, b.records);
}
