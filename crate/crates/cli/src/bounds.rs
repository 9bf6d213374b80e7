//! Analytic tail bounds against simulated ages.

use std::collections::BTreeSet;

use anyhow::{bail, Result};
use aoisgd::aoi_analysis::{
    compose_tails, dependency_decay_estimate, empirical_ccdf, second_moment_auto, single_edge_tail,
    TailBound,
};
use aoisgd::channel::DecayMode;
use aoisgd::engine::{replicate, RunTrace, TraceOptions};
use aoisgd::par::Execution;
use aoisgd::scenario::{ChannelSetup, Scenario};
use aoisgd::stats::{mean, std_error};
use serde::Serialize;

use crate::verify::pilot_channel_trace;

/// Exceedances needed before a CCDF point is compared with its bound.
pub const MIN_EXCEEDANCES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub src: usize,
    pub dst: usize,
    pub m: u64,
    pub empirical: f64,
    /// Standard error across replications.
    pub std_error: f64,
    pub exceedances: usize,
    pub bound: f64,
    pub checked: bool,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeBound {
    pub src: usize,
    pub dst: usize,
    pub p_tilde: f64,
    pub q_hat: f64,
    pub checked_points: usize,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeBoundReport {
    pub edges: Vec<EdgeBound>,
    pub rows: Vec<BoundRow>,
}

impl EdgeBoundReport {
    pub fn violations(&self) -> usize {
        self.edges.iter().map(|e| e.violations).sum()
    }
}

/// `((src, dst), p_tilde, q_hat)`.
pub type EdgeParameters = ((usize, usize), f64, f64);

/// Stationary failure `p_tilde` and fitted dependency rate `q_hat` per union
/// edge, taking the worst channel an edge can be scheduled on.
pub fn edge_parameters(scenario: &Scenario) -> Result<Vec<EdgeParameters>> {
    let ChannelSetup::Fading(bank) = &scenario.channel else {
        bail!("tail bounds need a fading channel");
    };
    if bank.decay() != DecayMode::Constant {
        bail!("tail bounds need constant success probabilities");
    }
    let cfg = &scenario.config;
    let lags: Vec<usize> = (1..=cfg.verify.decay_lags).collect();
    let series = pilot_channel_trace(
        bank,
        cfg.verify.channel_pilot_slots,
        aoisgd::engine::run_seed(scenario, 0),
    );
    let mut q_hat = Vec::with_capacity(series.len());
    for s in &series {
        q_hat.push(dependency_decay_estimate(s, &lags, cfg.verify.min_bin)?.q_hat);
    }
    let channels = bank.channel_count();
    let union = scenario.topology.union();
    let mut out = Vec::new();
    for &e in union.edges() {
        let used: BTreeSet<usize> = scenario
            .topology
            .graphs()
            .iter()
            .flat_map(|g| {
                g.edges()
                    .iter()
                    .enumerate()
                    .filter(|(_, x)| **x == e)
                    .map(|(k, _)| k % channels)
            })
            .collect();
        let p = used
            .iter()
            .map(|&c| bank.stationary_failure(c))
            .fold(0.0, f64::max);
        let q = used.iter().map(|&c| q_hat[c]).fold(0.0, f64::max);
        out.push((e, p, q));
    }
    Ok(out)
}

/// The single-edge bound with `q` kept inside `(0, 1)`.
pub fn edge_tail(p_tilde: f64, q: f64) -> Result<TailBound> {
    Ok(single_edge_tail(p_tilde, q.clamp(1e-9, 1.0 - 1e-9))?)
}

/// Compare per-edge empirical age CCDFs with the single-edge bound.
pub fn edge_bounds(
    scenario: &Scenario,
    traces: &[RunTrace],
    max_m: u64,
) -> Result<EdgeBoundReport> {
    if traces.is_empty() || traces.iter().any(|t| t.edge_ages.is_empty()) {
        bail!("edge bounds need traces recorded with edge ages");
    }
    let params = edge_parameters(scenario)?;
    let mut edges = Vec::new();
    let mut rows = Vec::new();
    for (e, &((src, dst), p, q)) in params.iter().enumerate() {
        let bound = edge_tail(p, q)?;
        let per_rep: Vec<Vec<f64>> = traces
            .iter()
            .map(|t| {
                empirical_ccdf(&t.edge_ages[e], max_m)
                    .into_iter()
                    .map(|c| c.prob)
                    .collect()
            })
            .collect();
        let pooled: Vec<u64> = traces
            .iter()
            .flat_map(|t| t.edge_ages[e].iter().copied())
            .collect();
        let pooled_ccdf = empirical_ccdf(&pooled, max_m);
        let (mut checked_points, mut violations) = (0, 0);
        for m in 0..=max_m {
            let col: Vec<f64> = per_rep.iter().map(|r| r[m as usize]).collect();
            let emp = mean(&col);
            let se = std_error(&col);
            let exceed = (pooled_ccdf[m as usize].prob * pooled.len() as f64).round() as usize;
            let b = bound.ccdf(m);
            let checked = exceed >= MIN_EXCEEDANCES;
            let holds = emp <= b + 3.0 * se;
            if checked {
                checked_points += 1;
                if !holds {
                    violations += 1;
                }
            }
            rows.push(BoundRow {
                src,
                dst,
                m,
                empirical: emp,
                std_error: se,
                exceedances: exceed,
                bound: b,
                checked,
                holds,
            });
        }
        edges.push(EdgeBound {
            src,
            dst,
            p_tilde: p,
            q_hat: q,
            checked_points,
            violations,
        });
    }
    Ok(EdgeBoundReport { edges, rows })
}

/// Relay containment on a path `a -> b -> c`: whenever `b` held a fresh
/// enough direct copy of `a` at `n - ceil(m/2)` and `c` a fresh enough direct
/// copy of `b` at `n`, the end-to-end age at `c` is at most `m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContainmentReport {
    pub path: [usize; 3],
    pub max_m: u64,
    pub checked_events: u64,
    pub violations: u64,
}

/// `first[n-1]`, `second[n-1]`: direct-edge ages on the two hops at slot
/// `n`; `end_to_end[n-1]`: age of the path origin at the path end.
pub fn count_containment(
    first: &[u64],
    second: &[u64],
    end_to_end: &[u64],
    max_m: u64,
) -> (u64, u64) {
    let len = first.len().min(second.len()).min(end_to_end.len());
    let (mut checked, mut violations) = (0, 0);
    for m in 0..=max_m {
        let lo = m / 2;
        let hi = m - lo;
        for n in (hi as usize + 1)..=len {
            let k = n - 1;
            if first[k - hi as usize] <= lo && second[k] <= lo {
                checked += 1;
                if end_to_end[k] > m {
                    violations += 1;
                }
            }
        }
    }
    (checked, violations)
}

/// Containment on the relay path `a -> b -> c`, from a trace with edge ages
/// and per-slot pair rows.
pub fn containment(trace: &RunTrace, path: [usize; 3], max_m: u64) -> Result<ContainmentReport> {
    let [a, b, c] = path;
    let idx = |e: (usize, usize)| trace.union_edges.iter().position(|&x| x == e);
    let (Some(e1), Some(e2)) = (idx((a, b)), idx((b, c))) else {
        bail!("path {a}->{b}->{c} is not in the union graph");
    };
    if trace.edge_ages.is_empty() || trace.pair_rows.len() != trace.records.len() {
        bail!("containment needs edge ages and a pair row every slot");
    }
    let end: Vec<u64> = trace.pair_rows.iter().map(|r| r.pair[c][a]).collect();
    let (checked_events, violations) =
        count_containment(&trace.edge_ages[e1], &trace.edge_ages[e2], &end, max_m);
    Ok(ContainmentReport {
        path,
        max_m,
        checked_events,
        violations,
    })
}

/// Second moments of two single-edge bounds and of their composition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositionMoments {
    pub first: f64,
    pub second: f64,
    pub composed: f64,
    /// `composed / (first + second)`.
    pub factor: f64,
}

pub fn composition_moments(t1: &TailBound, t2: &TailBound) -> Result<CompositionMoments> {
    let first = second_moment_auto(t1)?;
    let second = second_moment_auto(t2)?;
    let composed = second_moment_auto(&compose_tails(t1, t2))?;
    Ok(CompositionMoments {
        first,
        second,
        composed,
        factor: composed / (first + second),
    })
}

/// Mean of `tau^2` over a series.
pub fn empirical_second_moment(ages: &[u64]) -> f64 {
    ages.iter().map(|&a| (a as f64) * (a as f64)).sum::<f64>() / ages.len().max(1) as f64
}

/// Replications with the traces the bound checks need.
pub fn bound_traces(
    scenario: &Scenario,
    replications: usize,
    mode: Execution,
) -> Result<Vec<RunTrace>> {
    let options = TraceOptions {
        pair_stride: Some(1),
        edge_ages: true,
        ..TraceOptions::default()
    };
    Ok(replicate(scenario, replications, &options, mode)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn containment_counts_by_hand() {
        // m = 2: lo = hi = 1. Slot 3 checks first[1] and second[2].
        let first = [1, 1, 5];
        let second = [9, 9, 1];
        assert_eq!(count_containment(&first, &second, &[0, 0, 2], 2), (1, 0));
        let (checked, violations) = count_containment(&first, &second, &[0, 0, 3], 2);
        assert!(checked >= 1);
        assert_eq!(violations, 1);
    }

    #[test]
    fn empirical_second_moment_of_constant() {
        assert_eq!(empirical_second_moment(&[3, 3, 3]), 9.0);
    }
}
