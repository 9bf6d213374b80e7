//! Slotted discrete-event engine.
//!
//! Every slot `n` first samples the active topology and advances the
//! channel model, realising one success draw per active edge. Two phases
//! follow, in the order given by [`SlotOrder`](crate::scenario::SlotOrder):
//!
//! - update: draw the slot's `xi`; each agent whose clock ticked performs one
//!   update on its own belief (several ticks in one slot coalesce into one
//!   update) and enqueues its own component to all out-neighbours;
//! - exchange: every active edge transmits from its FIFO plan; all
//!   deliveries are computed first, then merged at the receivers in
//!   ascending sender order, and changed components are flooded onward.
//!
//! Ages and metrics are recorded at the end of the slot. Updates in a slot
//! never see each other's results, since beliefs change only in the
//! exchange phase.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use crate::channel::{epsilon_greedy_power, sinr, ActiveTransmitter, FadingChannelBank, LogMgf};
use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::optimizer::{norm, sgd_update, AgentState, Problem, SlotClock};
use crate::par::{map_indexed, Execution};
use crate::protocol::{AoiRow, AoiTracker, BeliefVector, Message, TransmissionPlan};
use crate::rng::{replication_seed, stream_rng, SimRng, Stream};
use crate::scenario::{ChannelSetup, Phase, ProblemSetup, Scenario, SinrSetup};
use crate::stats::{mean, std_error};

/// Coalescing above this fraction of raw ticks is reported.
pub const COALESCENCE_WARN: f64 = 0.01;

/// Optional, heavier traces.
#[derive(Debug, Clone, Default)]
pub struct TraceOptions {
    /// Keep the full pair/edge age matrix every `pair_stride` slots.
    pub pair_stride: Option<u64>,
    /// Keep the per-slot direct-edge age of every union edge.
    pub edge_ages: bool,
    /// Keep one row per active edge and slot with channel state and outcome.
    pub channel_trace: bool,
    /// Keep every delivered message.
    pub message_log: bool,
    /// Keep all iterates at the end of every slot.
    pub positions: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlotRecord {
    pub slot: u64,
    pub topology: usize,
    pub objective: f64,
    pub penalty: f64,
    pub mean_aoi: f64,
    pub max_aoi: u64,
    pub mean_edge_aoi: f64,
    pub attempts: u32,
    pub successes: u32,
    pub updates: u32,
    pub max_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelRow {
    pub slot: u64,
    pub sender: usize,
    pub receiver: usize,
    /// Physical channel carrying the edge; `None` outside fading mode.
    pub channel: Option<usize>,
    pub latent_state: Option<usize>,
    pub state: Option<usize>,
    pub success_probability: f64,
    pub success: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MessageRecord {
    pub slot: u64,
    pub sender: usize,
    pub receiver: usize,
    pub origin: usize,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace {
    pub scenario: String,
    pub seed: u64,
    pub records: Vec<SlotRecord>,
    pub final_positions: Vec<Vec<f64>>,
    /// Final local update counters (`nu`, starting at 1).
    pub final_nu: Vec<u64>,
    /// `cumulative_updates[i][n-1]`: updates of agent `i` in slots `1..=n`.
    pub cumulative_updates: Vec<Vec<u64>>,
    pub target_errors: Vec<f64>,
    pub raw_ticks: u64,
    pub coalesced_ticks: u64,
    pub union_edges: Vec<(usize, usize)>,
    pub pair_rows: Vec<AoiRow>,
    /// `edge_ages[e][n-1]` for union edge `e`.
    pub edge_ages: Vec<Vec<u64>>,
    pub channel_rows: Vec<ChannelRow>,
    pub messages: Vec<MessageRecord>,
    /// `positions[n-1][i]`: iterate of agent `i` at the end of slot `n`.
    pub positions: Vec<Vec<Vec<f64>>>,
}

impl RunTrace {
    pub fn coalescence_rate(&self) -> f64 {
        if self.raw_ticks == 0 {
            0.0
        } else {
            self.coalesced_ticks as f64 / self.raw_ticks as f64
        }
    }

    pub fn last(&self) -> &SlotRecord {
        self.records.last().expect("a run has at least one slot")
    }
}

/// Per-slot metric evaluator: `(objective, penalty)` of the current iterates.
type Evaluator<'a> = dyn Fn(&[Vec<f64>]) -> (f64, f64) + Sync + 'a;

struct ChannelState {
    setup: ChannelSetup,
    fading_rng: SimRng,
    success_rng: SimRng,
    power_rng: SimRng,
    attenuation_rng: SimRng,
}

struct EdgeOutcome {
    success: bool,
    probability: f64,
    channel: Option<usize>,
    latent_state: Option<usize>,
    state: Option<usize>,
}

impl ChannelState {
    fn new(setup: ChannelSetup, seed: u64) -> Self {
        Self {
            setup,
            fading_rng: stream_rng(seed, Stream::Fading),
            success_rng: stream_rng(seed, Stream::Success),
            power_rng: stream_rng(seed, Stream::Power),
            attenuation_rng: stream_rng(seed, Stream::Attenuation),
        }
    }

    fn step(&mut self, slot: u64, graph: &DirectedGraph) -> Result<Vec<EdgeOutcome>> {
        match &mut self.setup {
            ChannelSetup::Lossless => Ok(graph
                .edges()
                .iter()
                .map(|_| EdgeOutcome {
                    success: true,
                    probability: 1.0,
                    channel: None,
                    latent_state: None,
                    state: None,
                })
                .collect()),
            ChannelSetup::Fading(bank) => Ok(fading_outcomes(
                bank,
                slot,
                graph,
                &mut self.fading_rng,
                &mut self.success_rng,
            )),
            ChannelSetup::Sinr(s) => {
                sinr_outcomes(s, graph, &mut self.power_rng, &mut self.attenuation_rng)
            }
        }
    }
}

fn fading_outcomes(
    bank: &mut FadingChannelBank,
    slot: u64,
    graph: &DirectedGraph,
    fading_rng: &mut SimRng,
    success_rng: &mut SimRng,
) -> Vec<EdgeOutcome> {
    let samples = bank.step_fading(slot, fading_rng);
    let c = samples.len();
    graph
        .edges()
        .iter()
        .enumerate()
        .map(|(k, _)| {
            let s = samples[k % c];
            let u: f64 = success_rng.random();
            EdgeOutcome {
                success: u < s.success_probability,
                probability: s.success_probability,
                channel: Some(k % c),
                latent_state: Some(s.latent_state),
                state: Some(s.state),
            }
        })
        .collect()
}

fn sinr_outcomes(
    s: &SinrSetup,
    graph: &DirectedGraph,
    power_rng: &mut SimRng,
    attenuation_rng: &mut SimRng,
) -> Result<Vec<EdgeOutcome>> {
    let beta = s.physics.sinr_threshold;
    let mean_att = s.attenuation.mean();
    let mut senders: Vec<usize> = graph.edges().iter().map(|e| e.0).collect();
    senders.sort_unstable();
    senders.dedup();
    let mut receivers: Vec<usize> = graph.edges().iter().map(|e| e.1).collect();
    receivers.sort_unstable();
    receivers.dedup();

    let mut power = BTreeMap::new();
    for &i in &senders {
        let load = s.mean_interference_plus_noise(graph, i);
        let p = epsilon_greedy_power(
            load,
            mean_att,
            beta,
            s.epsilon,
            s.delta,
            s.fallback_power,
            power_rng,
        )?;
        power.insert(i, p);
    }
    let mut seen: BTreeMap<usize, Vec<ActiveTransmitter>> = BTreeMap::new();
    for &j in &receivers {
        let tx = senders
            .iter()
            .map(|&i| ActiveTransmitter {
                node: i,
                power: power[&i],
                attenuation: s.attenuation.sample(attenuation_rng),
            })
            .collect();
        seen.insert(j, tx);
    }
    graph
        .edges()
        .iter()
        .map(|&(i, j)| {
            let v = sinr((i, j), &seen[&j], &s.physics)?;
            let ok = v >= beta;
            Ok(EdgeOutcome {
                success: ok,
                probability: if ok { 1.0 } else { 0.0 },
                channel: None,
                latent_state: None,
                state: None,
            })
        })
        .collect()
}

/// Run a scenario once with the given run seed.
pub fn run(scenario: &Scenario, seed: u64, options: &TraceOptions) -> Result<RunTrace> {
    match &scenario.problem {
        ProblemSetup::Coverage {
            problem,
            initial,
            metrics,
        } => {
            let eval = |x: &[Vec<f64>]| {
                (
                    metrics.objective(x),
                    metrics.penalty(x, &problem.targets, problem.delta),
                )
            };
            let mut trace = simulate(scenario, problem, initial, &eval, seed, options)?;
            trace.target_errors = metrics.target_errors(&trace.final_positions, &problem.targets);
            Ok(trace)
        }
        ProblemSetup::Quadratic { problem, initial } => {
            let eval = |x: &[Vec<f64>]| {
                let f = x
                    .iter()
                    .zip(&problem.centers)
                    .map(|(xi, ci)| {
                        xi.iter()
                            .zip(ci)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                    })
                    .sum();
                (f, 0.0)
            };
            simulate(scenario, problem, initial, &eval, seed, options)
        }
    }
}

/// Core loop, generic over the optimisation problem.
pub fn simulate<P: Problem>(
    scenario: &Scenario,
    problem: &P,
    initial: &[Vec<f64>],
    eval: &Evaluator<'_>,
    seed: u64,
    options: &TraceOptions,
) -> Result<RunTrace> {
    let cfg = &scenario.config;
    let d = cfg.agents;
    if problem.agent_count() != d || initial.len() != d {
        return Err(Error::InvalidConfig(
            "problem and initial values must match the agent count".into(),
        ));
    }
    let topology = &scenario.topology;
    let union = topology.union();
    let union_edges = union.edges().to_vec();

    let mut topo_rng = stream_rng(seed, Stream::Topology);
    let mut xi_rng = stream_rng(seed, Stream::Xi);
    let mut disk_rng = stream_rng(seed, Stream::DiskSamples);
    let mut error_rng = stream_rng(seed, Stream::GradientError);
    let mut channel = ChannelState::new(scenario.channel.clone(), seed);
    let mut clocks = scenario
        .clocks
        .iter()
        .enumerate()
        .map(|(i, &m)| SlotClock::new(m, cfg.slot_duration, stream_rng(seed, Stream::Clock(i))))
        .collect::<Result<Vec<_>>>()?;

    let mut agents: Vec<AgentState> = initial
        .iter()
        .enumerate()
        .map(|(i, x)| AgentState::new(i, x.clone(), cfg.optimizer.error_bound))
        .collect();
    let mut beliefs = (0..d)
        .map(|i| BeliefVector::new(i, initial.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let mut plans: Vec<TransmissionPlan> = (0..d)
        .map(|i| TransmissionPlan::new(i, union.out_neighbors(i), d))
        .collect();
    let mut tracker = AoiTracker::new(d, union_edges.clone());

    let slots = cfg.slots;
    let mut records = Vec::with_capacity(slots as usize);
    let mut cumulative = vec![Vec::with_capacity(slots as usize); d];
    let mut counts = vec![0u64; d];
    let mut pair_rows = Vec::new();
    let mut edge_ages = if options.edge_ages {
        vec![Vec::with_capacity(slots as usize); union_edges.len()]
    } else {
        Vec::new()
    };
    let mut channel_rows = Vec::new();
    let mut messages = Vec::new();
    let mut positions = Vec::new();
    let (mut raw_ticks, mut coalesced) = (0u64, 0u64);
    let mut metrics = eval(initial);
    let mut max_norm = initial.iter().map(|x| norm(x)).fold(0.0, f64::max);

    for n in 1..=slots {
        // 1. topology
        let g_index = topology.sample_index(&mut topo_rng);
        let graph = &topology.graphs()[g_index];

        // 2. channel
        let outcomes = channel.step(n, graph)?;
        let successes = outcomes.iter().filter(|o| o.success).count() as u32;

        let mut updated = Vec::new();
        for phase in cfg.slot_order.phases() {
            match phase {
                Phase::Exchange => {
                    // 3. transmissions, then merges in ascending sender order
                    let mut deliveries: Vec<(usize, usize, Vec<Message>)> = Vec::new();
                    for (k, &(i, j)) in graph.edges().iter().enumerate() {
                        let o = &outcomes[k];
                        if options.channel_trace {
                            channel_rows.push(ChannelRow {
                                slot: n,
                                sender: i,
                                receiver: j,
                                channel: o.channel,
                                latent_state: o.latent_state,
                                state: o.state,
                                success_probability: o.probability,
                                success: o.success,
                            });
                        }
                        let ids = plans[i].transmit_slot(j, o.success, scenario.capacity);
                        if !ids.is_empty() {
                            deliveries.push((
                                i,
                                j,
                                ids.iter().map(|&c| beliefs[i].message(c)).collect(),
                            ));
                        }
                    }
                    deliveries.sort_by_key(|&(i, j, _)| (i, j));
                    for (i, j, msgs) in deliveries {
                        if options.message_log {
                            messages.extend(msgs.iter().map(|m| MessageRecord {
                                slot: n,
                                sender: i,
                                receiver: j,
                                origin: m.origin,
                                timestamp: m.timestamp,
                            }));
                        }
                        let changed = beliefs[j].merge_incoming(&msgs)?;
                        tracker.on_delivery(i, j, &msgs);
                        let flood: Vec<(usize, Option<usize>)> =
                            changed.into_iter().map(|c| (c, Some(i))).collect();
                        plans[j].flood_on_change(&flood);
                    }
                }
                Phase::Update => {
                    // 4. local updates
                    let shared = problem.sample_noise(&mut xi_rng);
                    for i in 0..d {
                        let k = clocks[i].ticks_in_slot(n);
                        if k == 0 {
                            continue;
                        }
                        raw_ticks += k as u64;
                        coalesced += (k - 1) as u64;
                        let noise = if cfg.optimizer.shared_xi {
                            shared.clone()
                        } else {
                            problem.sample_noise(&mut xi_rng)
                        };
                        let view = beliefs[i].values();
                        sgd_update(
                            &mut agents[i],
                            &view,
                            &noise,
                            problem,
                            &cfg.schedule,
                            &mut disk_rng,
                            &mut error_rng,
                        )
                        .map_err(|e| match e {
                            Error::StabilityViolation { agent, detail, .. } => {
                                Error::StabilityViolation {
                                    slot: Some(n),
                                    agent,
                                    detail,
                                }
                            }
                            other => other,
                        })?;
                        beliefs[i].on_local_update(agents[i].x.clone());
                        tracker.on_local_update(i, n);
                        updated.push(i);
                    }

                    // 5. enqueue own component
                    for &i in &updated {
                        plans[i].flood_on_change(&[(i, None)]);
                        counts[i] += 1;
                    }
                    for i in 0..d {
                        cumulative[i].push(counts[i]);
                    }
                }
            }
        }

        // 6. record
        if !updated.is_empty() {
            let x: Vec<Vec<f64>> = agents.iter().map(|a| a.x.clone()).collect();
            metrics = eval(&x);
            max_norm = x.iter().map(|v| norm(v)).fold(0.0, f64::max);
        }
        let (mean_aoi, max_aoi) = tracker.mean_pair_age(&beliefs, n);
        let ages = tracker.edge_ages(n);
        let mean_edge_aoi = if ages.is_empty() {
            0.0
        } else {
            ages.iter().sum::<u64>() as f64 / ages.len() as f64
        };
        if options.edge_ages {
            for (e, a) in ages.iter().enumerate() {
                edge_ages[e].push(*a);
            }
        }
        if let Some(stride) = options.pair_stride {
            if stride > 0 && n % stride == 0 {
                pair_rows.push(tracker.record(&beliefs, n));
            }
        }
        if options.positions {
            positions.push(agents.iter().map(|a| a.x.clone()).collect());
        }
        records.push(SlotRecord {
            slot: n,
            topology: g_index,
            objective: metrics.0,
            penalty: metrics.1,
            mean_aoi,
            max_aoi,
            mean_edge_aoi,
            attempts: graph.edges().len() as u32,
            successes,
            updates: updated.len() as u32,
            max_norm,
        });
    }

    let trace = RunTrace {
        scenario: cfg.name.clone(),
        seed,
        records,
        final_positions: agents.iter().map(|a| a.x.clone()).collect(),
        final_nu: agents.iter().map(|a| a.nu).collect(),
        cumulative_updates: cumulative,
        target_errors: Vec::new(),
        raw_ticks,
        coalesced_ticks: coalesced,
        union_edges,
        pair_rows,
        edge_ages,
        channel_rows,
        messages,
        positions,
    };
    let rate = trace.coalescence_rate();
    if rate > COALESCENCE_WARN {
        log::warn!(
            "{}: {:.2}% of clock ticks coalesced into shared slots; shorten the slot duration to reduce this",
            cfg.name,
            100.0 * rate
        );
    }
    Ok(trace)
}

/// Mean and standard error of one metric across replications, per slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Band {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
}

impl Band {
    fn from_series(series: &[Vec<f64>]) -> Self {
        let len = series.first().map_or(0, |s| s.len());
        let mut mean_v = Vec::with_capacity(len);
        let mut se_v = Vec::with_capacity(len);
        let mut col = Vec::with_capacity(series.len());
        for k in 0..len {
            col.clear();
            col.extend(series.iter().map(|s| s[k]));
            mean_v.push(mean(&col));
            se_v.push(std_error(&col));
        }
        Self {
            mean: mean_v,
            std_error: se_v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub replications: usize,
    pub seeds: Vec<u64>,
    pub objective: Band,
    pub penalty: Band,
    pub mean_aoi: Band,
    pub max_aoi: Band,
}

impl Aggregate {
    pub fn from_traces(traces: &[RunTrace]) -> Self {
        let pick = |f: fn(&SlotRecord) -> f64| -> Vec<Vec<f64>> {
            traces
                .iter()
                .map(|t| t.records.iter().map(f).collect())
                .collect()
        };
        Self {
            replications: traces.len(),
            seeds: traces.iter().map(|t| t.seed).collect(),
            objective: Band::from_series(&pick(|r| r.objective)),
            penalty: Band::from_series(&pick(|r| r.penalty)),
            mean_aoi: Band::from_series(&pick(|r| r.mean_aoi)),
            max_aoi: Band::from_series(&pick(|r| r.max_aoi as f64)),
        }
    }
}

/// Seed of replication `index` of a scenario.
pub fn run_seed(scenario: &Scenario, index: usize) -> u64 {
    replication_seed(scenario.config.seed, index)
}

/// Run `count` independent replications. Results are in replication order
/// and do not depend on `mode`.
pub fn replicate(
    scenario: &Scenario,
    count: usize,
    options: &TraceOptions,
    mode: Execution,
) -> Result<Vec<RunTrace>> {
    map_indexed(mode, count, |r| {
        run(scenario, run_seed(scenario, r), options)
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{builtin, SlotOrder};

    fn short(name: &str, slots: u64) -> Scenario {
        let mut s = builtin(name).unwrap().unwrap();
        s.config.slots = slots;
        s
    }

    #[test]
    fn records_every_slot() {
        let s = short("lossless-sanity", 50);
        let t = run(&s, 1, &TraceOptions::default()).unwrap();
        assert_eq!(t.records.len(), 50);
        assert_eq!(t.cumulative_updates[0].len(), 50);
        assert!(t
            .records
            .iter()
            .enumerate()
            .all(|(k, r)| r.slot == k as u64 + 1));
    }

    #[test]
    fn same_seed_same_trace() {
        let s = short("paper-experiment", 200);
        let a = run(&s, 9, &TraceOptions::default()).unwrap();
        let b = run(&s, 9, &TraceOptions::default()).unwrap();
        assert_eq!(a, b);
        let c = run(&s, 10, &TraceOptions::default()).unwrap();
        assert_ne!(a.final_positions, c.final_positions);
    }

    #[test]
    fn every_slot_clocks_never_coalesce() {
        let s = short("lossless-sanity", 100);
        let t = run(&s, 3, &TraceOptions::default()).unwrap();
        assert_eq!(t.coalesced_ticks, 0);
        assert_eq!(t.final_nu, vec![101; s.config.agents]);
    }

    #[test]
    fn lossless_complete_graph_ages_follow_slot_order() {
        // Every agent updates every slot and every edge is up. Updating first
        // delivers the fresh value within the slot; transmitting first
        // delivers the previous slot's value.
        for (order, age) in [(SlotOrder::UpdateFirst, 0), (SlotOrder::TransmitFirst, 1)] {
            let mut s = short("lossless-sanity", 30);
            s.config.slot_order = order;
            let t = run(&s, 4, &TraceOptions::default()).unwrap();
            for r in &t.records[1..] {
                assert_eq!(r.max_aoi, age);
                assert!((r.mean_aoi - age as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_replication_aggregate_matches_trace() {
        let s = short("paper-experiment", 100);
        let traces = replicate(&s, 1, &TraceOptions::default(), Execution::Sequential).unwrap();
        let agg = Aggregate::from_traces(&traces);
        let obj: Vec<f64> = traces[0].records.iter().map(|r| r.objective).collect();
        assert_eq!(agg.objective.mean, obj);
        assert!(agg.objective.std_error.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn replication_is_mode_independent() {
        let s = short("paper-experiment", 100);
        let a = replicate(&s, 3, &TraceOptions::default(), Execution::Sequential).unwrap();
        let b = replicate(&s, 3, &TraceOptions::default(), Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nan_iterate_reports_slot() {
        let mut s = short("lossless-sanity", 10);
        if let ProblemSetup::Coverage { initial, .. } = &mut s.problem {
            initial[0][0] = f64::NAN;
        }
        match run(&s, 1, &TraceOptions::default()) {
            Err(Error::StabilityViolation { slot, agent, .. }) => {
                assert_eq!(slot, Some(1));
                assert_eq!(agent, 0);
            }
            other => panic!("expected a stability violation, got {other:?}"),
        }
    }
}
