//! Command-line front end: scenario ingestion, runs, replications,
//! assumption checks and age analyses.

pub mod bounds;
pub mod output;
pub mod verify;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use aoisgd::aoi_analysis::{empirical_ccdf, sqrt_scaling_check, CcdfPoint};
use aoisgd::engine::{replicate, run, run_seed, Aggregate, RunTrace, TraceOptions};
use aoisgd::par::Execution;
use aoisgd::scenario::{builtin, ProblemSetup, Scenario, ScenarioConfig};
use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::output::{Bundle, Format, SCHEMA_VERSION};

#[derive(Debug, Parser)]
#[command(
    name = "aoisgd",
    version,
    about = "Asynchronous distributed SGD over lossy networks with age-of-information tracking"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario file, or `builtin:NAME` for a shipped scenario.
    #[arg(long, global = true)]
    pub scenario: Option<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Override the scenario's master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One run: metrics, ages, final positions and a summary.
    Run {
        /// Also write per-slot channel states and outcomes.
        #[arg(long)]
        channel_trace: bool,
        /// Also write every delivered message.
        #[arg(long)]
        message_log: bool,
    },
    /// Independent replications with mean and standard-error bands.
    Replicate {
        #[arg(short = 'n', long, default_value_t = 8)]
        replications: usize,
        /// Run replications one after another.
        #[arg(long)]
        sequential: bool,
    },
    /// Check the scenario against the convergence assumptions.
    Verify,
    /// Age series, square-root scaling and edge-age distributions of one run.
    AnalyzeAoi,
    /// Analytic tail bounds against simulated ages.
    Bounds {
        #[arg(short = 'n', long, default_value_t = 20)]
        replications: usize,
        #[arg(long, default_value_t = 200)]
        max_m: u64,
    },
    /// The same run with the penalty switched off.
    ReferenceUnconstrained {
        #[arg(short = 'n', long, default_value_t = 1)]
        replications: usize,
    },
}

/// `builtin:NAME` or a path to a TOML file.
pub fn load_scenario(spec: &str) -> Result<Scenario> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return match builtin(name) {
            Some(s) => Ok(s?),
            None => bail!("unknown builtin scenario `{name}`"),
        };
    }
    Ok(Scenario::load(std::path::Path::new(spec))?)
}

pub fn unconstrained(scenario: &Scenario) -> Result<Scenario> {
    let mut s = scenario.clone();
    match &mut s.problem {
        ProblemSetup::Coverage { problem, .. } => {
            *problem = problem.unconstrained();
            if let aoisgd::scenario::ProblemConfig::Coverage { penalty, .. } = &mut s.config.problem
            {
                *penalty = false;
            }
        }
        ProblemSetup::Quadratic { .. } => {}
    }
    Ok(s)
}

#[derive(Debug, Serialize)]
struct MetricsRow {
    slot: u64,
    objective: f64,
    penalty: f64,
    mean_aoi: f64,
    max_aoi: u64,
    mean_aoi_over_sqrt_n: f64,
    max_aoi_over_sqrt_n: f64,
    mean_edge_aoi: f64,
    attempts: u32,
    successes: u32,
    updates: u32,
    topology: usize,
    max_norm: f64,
}

#[derive(Debug, Serialize)]
struct AoiRowOut {
    slot: u64,
    src: usize,
    dst: usize,
    pair_aoi: u64,
    edge_aoi: Option<u64>,
}

#[derive(Debug, Serialize)]
struct PositionRow {
    kind: &'static str,
    index: usize,
    x: f64,
    y: f64,
    error_prob: Option<f64>,
}

#[derive(Debug, Serialize)]
struct FinalMetrics {
    objective: f64,
    penalty: f64,
    mean_aoi: f64,
    max_aoi: u64,
    max_target_error: Option<f64>,
}

#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    schema_version: u32,
    command: &'a str,
    scenario: &'a str,
    master_seed: u64,
    run_seed: u64,
    slots: u64,
    final_metrics: FinalMetrics,
    target_errors: &'a [f64],
    final_nu: &'a [u64],
    raw_ticks: u64,
    coalesced_ticks: u64,
    coalescence_rate: f64,
    config: &'a ScenarioConfig,
}

fn final_metrics(t: &RunTrace) -> FinalMetrics {
    let r = t.last();
    FinalMetrics {
        objective: r.objective,
        penalty: r.penalty,
        mean_aoi: r.mean_aoi,
        max_aoi: r.max_aoi,
        max_target_error: t.target_errors.iter().copied().reduce(f64::max),
    }
}

fn metrics_rows(t: &RunTrace) -> Vec<MetricsRow> {
    t.records
        .iter()
        .map(|r| {
            let s = (r.slot as f64).sqrt();
            MetricsRow {
                slot: r.slot,
                objective: r.objective,
                penalty: r.penalty,
                mean_aoi: r.mean_aoi,
                max_aoi: r.max_aoi,
                mean_aoi_over_sqrt_n: r.mean_aoi / s,
                max_aoi_over_sqrt_n: r.max_aoi as f64 / s,
                mean_edge_aoi: r.mean_edge_aoi,
                attempts: r.attempts,
                successes: r.successes,
                updates: r.updates,
                topology: r.topology,
                max_norm: r.max_norm,
            }
        })
        .collect()
}

fn aoi_rows(t: &RunTrace) -> Vec<AoiRowOut> {
    let mut out = Vec::new();
    for row in &t.pair_rows {
        for (dst, ages) in row.pair.iter().enumerate() {
            for (src, &age) in ages.iter().enumerate() {
                if src == dst {
                    continue;
                }
                let edge_aoi = row
                    .edge
                    .iter()
                    .find(|e| e.0 == src && e.1 == dst)
                    .map(|e| e.2);
                out.push(AoiRowOut {
                    slot: row.slot,
                    src,
                    dst,
                    pair_aoi: age,
                    edge_aoi,
                });
            }
        }
    }
    out
}

fn position_rows(scenario: &Scenario, t: &RunTrace) -> Vec<PositionRow> {
    let xy = |v: &[f64]| {
        (
            v.first().copied().unwrap_or(0.0),
            v.get(1).copied().unwrap_or(0.0),
        )
    };
    let mut out = Vec::new();
    for (i, p) in scenario.problem.initial().iter().enumerate() {
        let (x, y) = xy(p);
        out.push(PositionRow {
            kind: "initial",
            index: i,
            x,
            y,
            error_prob: None,
        });
    }
    for (i, p) in t.final_positions.iter().enumerate() {
        let (x, y) = xy(p);
        out.push(PositionRow {
            kind: "final",
            index: i,
            x,
            y,
            error_prob: None,
        });
    }
    if let ProblemSetup::Coverage { problem, .. } = &scenario.problem {
        for (k, y) in problem.targets.iter().enumerate() {
            out.push(PositionRow {
                kind: "target",
                index: k,
                x: y[0],
                y: y[1],
                error_prob: t.target_errors.get(k).copied(),
            });
        }
    }
    out
}

/// Files written by `run` and `reference-unconstrained`.
pub fn run_bundle(
    command: &str,
    scenario: &Scenario,
    trace: &RunTrace,
    format: Format,
) -> Result<Bundle> {
    let mut b = Bundle::new();
    b.table("metrics", &metrics_rows(trace), format)?;
    b.table("aoi", &aoi_rows(trace), format)?;
    b.table("positions", &position_rows(scenario, trace), format)?;
    if !trace.channel_rows.is_empty() {
        b.table("channel", &trace.channel_rows, format)?;
    }
    if !trace.messages.is_empty() {
        b.table("messages", &trace.messages, format)?;
    }
    b.json(
        "summary.json",
        &RunSummary {
            schema_version: SCHEMA_VERSION,
            command,
            scenario: &scenario.config.name,
            master_seed: scenario.config.seed,
            run_seed: trace.seed,
            slots: scenario.config.slots,
            final_metrics: final_metrics(trace),
            target_errors: &trace.target_errors,
            final_nu: &trace.final_nu,
            raw_ticks: trace.raw_ticks,
            coalesced_ticks: trace.coalesced_ticks,
            coalescence_rate: trace.coalescence_rate(),
            config: &scenario.config,
        },
    )?;
    Ok(b)
}

#[derive(Debug, Serialize)]
struct AggregateRow {
    slot: u64,
    objective_mean: f64,
    objective_se: f64,
    penalty_mean: f64,
    penalty_se: f64,
    mean_aoi_mean: f64,
    mean_aoi_se: f64,
    max_aoi_mean: f64,
    max_aoi_se: f64,
}

#[derive(Debug, Serialize)]
struct ReplicationRow {
    replication: usize,
    seed: u64,
    objective: f64,
    penalty: f64,
    mean_aoi: f64,
    max_aoi: u64,
    max_target_error: Option<f64>,
    coalescence_rate: f64,
}

#[derive(Debug, Serialize)]
struct ReplicateSummary<'a> {
    schema_version: u32,
    command: &'a str,
    scenario: &'a str,
    master_seed: u64,
    seeds: &'a [u64],
    replications: usize,
    config: &'a ScenarioConfig,
}

pub fn replicate_bundle(
    command: &str,
    scenario: &Scenario,
    traces: &[RunTrace],
    format: Format,
) -> Result<Bundle> {
    let agg = Aggregate::from_traces(traces);
    let rows: Vec<AggregateRow> = (0..agg.objective.mean.len())
        .map(|k| AggregateRow {
            slot: k as u64 + 1,
            objective_mean: agg.objective.mean[k],
            objective_se: agg.objective.std_error[k],
            penalty_mean: agg.penalty.mean[k],
            penalty_se: agg.penalty.std_error[k],
            mean_aoi_mean: agg.mean_aoi.mean[k],
            mean_aoi_se: agg.mean_aoi.std_error[k],
            max_aoi_mean: agg.max_aoi.mean[k],
            max_aoi_se: agg.max_aoi.std_error[k],
        })
        .collect();
    let reps: Vec<ReplicationRow> = traces
        .iter()
        .enumerate()
        .map(|(r, t)| {
            let f = final_metrics(t);
            ReplicationRow {
                replication: r,
                seed: t.seed,
                objective: f.objective,
                penalty: f.penalty,
                mean_aoi: f.mean_aoi,
                max_aoi: f.max_aoi,
                max_target_error: f.max_target_error,
                coalescence_rate: t.coalescence_rate(),
            }
        })
        .collect();
    let mut b = Bundle::new();
    b.table("aggregate", &rows, format)?;
    b.table("replications", &reps, format)?;
    b.json(
        "summary.json",
        &ReplicateSummary {
            schema_version: SCHEMA_VERSION,
            command,
            scenario: &scenario.config.name,
            master_seed: scenario.config.seed,
            seeds: &agg.seeds,
            replications: traces.len(),
            config: &scenario.config,
        },
    )?;
    Ok(b)
}

/// Age statistics of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AoiAnalysis {
    pub slots: usize,
    /// Mean of `mean_aoi / sqrt(n)` over the first and second half of
    /// `[window_start, N]`.
    pub window_start: usize,
    pub normalized_first_half: f64,
    pub normalized_second_half: f64,
    pub normalized_peak: f64,
    pub exceed_previous: usize,
    pub exceed_trailing: usize,
    pub sqrt_check_passed: bool,
    pub edge_ccdf: Vec<CcdfPoint>,
}

/// Half means of `series[k] / sqrt(k + 1)` over `[start, len]` (slots, 1-based).
pub fn normalized_half_means(series: &[f64], start: usize) -> (f64, f64, f64) {
    let norm: Vec<f64> = (start..=series.len())
        .map(|n| series[n - 1] / (n as f64).sqrt())
        .collect();
    let half = norm.len() / 2;
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let peak = norm.iter().copied().fold(0.0, f64::max);
    (avg(&norm[..half]), avg(&norm[half..]), peak)
}

pub fn analyze_aoi(trace: &RunTrace) -> Result<AoiAnalysis> {
    let n = trace.records.len();
    let max: Vec<u64> = trace.records.iter().map(|r| r.max_aoi).collect();
    let mean: Vec<f64> = trace.records.iter().map(|r| r.mean_aoi).collect();
    let window = (n / 5).max(1);
    let sq = sqrt_scaling_check(&max, &mean, window)?;
    let start = (n / 5).max(1);
    let (first, second, peak) = normalized_half_means(&mean, start);
    let pooled: Vec<u64> = trace.edge_ages.iter().flatten().copied().collect();
    let max_m = pooled.iter().copied().max().unwrap_or(0).min(10_000);
    Ok(AoiAnalysis {
        slots: n,
        window_start: start,
        normalized_first_half: first,
        normalized_second_half: second,
        normalized_peak: peak,
        exceed_previous: sq.exceed_previous,
        exceed_trailing: sq.exceed_trailing,
        sqrt_check_passed: sq.passed,
        edge_ccdf: empirical_ccdf(&pooled, max_m),
    })
}

#[derive(Debug, Serialize)]
struct SeriesRow {
    slot: u64,
    mean_aoi: f64,
    max_aoi: u64,
    mean_over_sqrt_n: f64,
    max_over_sqrt_n: f64,
}

#[derive(Debug, Serialize)]
struct BoundsSummary<'a> {
    schema_version: u32,
    scenario: &'a str,
    master_seed: u64,
    replications: usize,
    edges: &'a [bounds::EdgeBound],
    edge_violations: usize,
    containment: Vec<bounds::ContainmentReport>,
    composition: Option<bounds::CompositionMoments>,
}

/// Everything a command writes, computed before anything touches the disk.
pub fn execute(cli: &Cli) -> Result<Bundle> {
    let spec = cli.scenario.as_deref().context("--scenario is required")?;
    let mut scenario = load_scenario(spec)?;
    if let Some(seed) = cli.seed {
        scenario = scenario.with_seed(seed);
    }
    let format = cli.format;
    match &cli.command {
        Command::Run {
            channel_trace,
            message_log,
        } => {
            let options = TraceOptions {
                pair_stride: Some(scenario.config.metrics.aoi_stride.max(1)),
                edge_ages: false,
                channel_trace: *channel_trace,
                message_log: *message_log || cli.verbose >= 2,
                positions: false,
            };
            let trace = run(&scenario, run_seed(&scenario, 0), &options)?;
            run_bundle("run", &scenario, &trace, format)
        }
        Command::ReferenceUnconstrained { replications } => {
            let s = unconstrained(&scenario)?;
            if *replications <= 1 {
                let options = TraceOptions {
                    pair_stride: Some(s.config.metrics.aoi_stride.max(1)),
                    ..TraceOptions::default()
                };
                let trace = run(&s, run_seed(&s, 0), &options)?;
                run_bundle("reference-unconstrained", &s, &trace, format)
            } else {
                let traces = replicate(
                    &s,
                    *replications,
                    &TraceOptions::default(),
                    Execution::Parallel,
                )?;
                replicate_bundle("reference-unconstrained", &s, &traces, format)
            }
        }
        Command::Replicate {
            replications,
            sequential,
        } => {
            if *replications == 0 {
                bail!("at least one replication is needed");
            }
            let mode = if *sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            };
            let traces = replicate(&scenario, *replications, &TraceOptions::default(), mode)?;
            replicate_bundle("replicate", &scenario, &traces, format)
        }
        Command::Verify => {
            let report = verify::verify(&scenario)?;
            print!("{}", report.render());
            let mut b = Bundle::new();
            b.table("verify", &report.findings, format)?;
            b.json("verify_summary.json", &report)?;
            Ok(b)
        }
        Command::AnalyzeAoi => {
            let options = TraceOptions {
                edge_ages: true,
                ..TraceOptions::default()
            };
            let trace = run(&scenario, run_seed(&scenario, 0), &options)?;
            let a = analyze_aoi(&trace)?;
            let series: Vec<SeriesRow> = trace
                .records
                .iter()
                .map(|r| {
                    let s = (r.slot as f64).sqrt();
                    SeriesRow {
                        slot: r.slot,
                        mean_aoi: r.mean_aoi,
                        max_aoi: r.max_aoi,
                        mean_over_sqrt_n: r.mean_aoi / s,
                        max_over_sqrt_n: r.max_aoi as f64 / s,
                    }
                })
                .collect();
            println!(
                "normalized mean age: first half {:.3}, second half {:.3}; sqrt exceedances {} -> {} ({})",
                a.normalized_first_half,
                a.normalized_second_half,
                a.exceed_previous,
                a.exceed_trailing,
                if a.sqrt_check_passed { "pass" } else { "FAIL" }
            );
            let mut b = Bundle::new();
            b.table("aoi_series", &series, format)?;
            b.table("edge_ccdf", &a.edge_ccdf, format)?;
            b.json("aoi_analysis.json", &a)?;
            Ok(b)
        }
        Command::Bounds {
            replications,
            max_m,
        } => {
            if *replications == 0 {
                bail!("at least one replication is needed");
            }
            if scenario.config.slots < 1000 {
                bail!(
                    "traces of at least 1000 slots are needed, scenario has {}",
                    scenario.config.slots
                );
            }
            let traces = bounds::bound_traces(&scenario, *replications, Execution::Parallel)?;
            let report = bounds::edge_bounds(&scenario, &traces, *max_m)?;
            let mut containment = Vec::new();
            let union = scenario.topology.union();
            for &(a, b) in union.edges() {
                for c in union.out_neighbors(b) {
                    if c != a && !union.contains((a, c)) {
                        for t in &traces {
                            containment.push(bounds::containment(t, [a, b, c], *max_m)?);
                        }
                    }
                }
            }
            let composition = match report.edges.as_slice() {
                [e1, e2, ..] => Some(bounds::composition_moments(
                    &bounds::edge_tail(e1.p_tilde, e1.q_hat)?,
                    &bounds::edge_tail(e2.p_tilde, e2.q_hat)?,
                )?),
                _ => None,
            };
            println!(
                "edge bound violations: {} over {} edges; containment violations: {}",
                report.violations(),
                report.edges.len(),
                containment.iter().map(|c| c.violations).sum::<u64>()
            );
            let mut b = Bundle::new();
            b.table("bounds", &report.rows, format)?;
            b.json(
                "bounds_summary.json",
                &BoundsSummary {
                    schema_version: SCHEMA_VERSION,
                    scenario: &scenario.config.name,
                    master_seed: scenario.config.seed,
                    replications: *replications,
                    edges: &report.edges,
                    edge_violations: report.violations(),
                    containment,
                    composition,
                },
            )?;
            Ok(b)
        }
    }
}

/// Run a command and write its files. Nothing is written on error.
pub fn run_cli(cli: &Cli) -> Result<()> {
    let bundle = execute(cli)?;
    bundle.write_to(&cli.out)?;
    log::info!(
        "wrote {} to {}",
        bundle.names().join(", "),
        cli.out.display()
    );
    Ok(())
}
