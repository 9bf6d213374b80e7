//! Assumption checks for a scenario.

use aoisgd::aoi_analysis::dependency_decay_estimate;
use aoisgd::channel::{
    chernoff_failure_bound, mean_sinr_condition, DecayMode, FadingChannelBank, LogMgf,
};
use aoisgd::engine::{run, run_seed, TraceOptions};
use aoisgd::optimizer::{async_rate_check, validate_schedule, ClauseStatus};
use aoisgd::rng::{stream_rng, Stream};
use aoisgd::scenario::{ChannelSetup, Scenario, SinrSetup};
use rand::Rng;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    HeuristicPass,
    Fail,
    /// The scenario deliberately goes beyond the assumption.
    Exceeded,
}

impl Status {
    pub fn ok(self) -> bool {
        matches!(self, Status::Pass | Status::HeuristicPass)
    }

    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::HeuristicPass => "heuristic-pass",
            Status::Fail => "FAIL",
            Status::Exceeded => "exceeded",
        }
    }
}

impl From<ClauseStatus> for Status {
    fn from(s: ClauseStatus) -> Self {
        match s {
            ClauseStatus::Pass => Status::Pass,
            ClauseStatus::HeuristicPass => Status::HeuristicPass,
            ClauseStatus::Fail => Status::Fail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub assumption: String,
    pub clause: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometricFit {
    pub channel: usize,
    pub q_hat: f64,
    pub fitted_lags: usize,
    pub mixing_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub scenario: String,
    pub findings: Vec<Finding>,
    pub dependency_fits: Vec<GeometricFit>,
}

impl VerifyReport {
    pub fn of(&self, assumption: &str) -> Vec<&Finding> {
        self.findings
            .iter()
            .filter(|f| f.assumption == assumption)
            .collect()
    }

    /// All findings of `assumption` pass; false when there are none.
    pub fn passes(&self, assumption: &str) -> bool {
        let f = self.of(assumption);
        !f.is_empty() && f.iter().all(|x| x.status.ok())
    }

    pub fn status_of(&self, assumption: &str, clause_prefix: &str) -> Option<Status> {
        self.findings
            .iter()
            .find(|f| f.assumption == assumption && f.clause.starts_with(clause_prefix))
            .map(|f| f.status)
    }

    pub fn render(&self) -> String {
        let mut out = format!("assumption check: {}\n", self.scenario);
        for f in &self.findings {
            out.push_str(&format!(
                "  [{:<14}] {:<12} {}: {}\n",
                f.status.label(),
                f.assumption,
                f.clause,
                f.detail
            ));
        }
        out
    }
}

fn finding(
    assumption: &str,
    clause: impl Into<String>,
    status: Status,
    detail: impl Into<String>,
) -> Finding {
    Finding {
        assumption: assumption.into(),
        clause: clause.into(),
        status,
        detail: detail.into(),
    }
}

pub const CONNECTIVITY: &str = "connectivity";

/// Per-channel success series of `bank` in constant mode, from the run seed.
pub fn pilot_channel_trace(bank: &FadingChannelBank, slots: u64, seed: u64) -> Vec<Vec<bool>> {
    let mut bank = bank.clone().with_decay(DecayMode::Constant);
    let mut fading = stream_rng(seed, Stream::Fading);
    let mut success = stream_rng(seed, Stream::Success);
    let mut out = vec![Vec::with_capacity(slots as usize); bank.channel_count()];
    for n in 1..=slots {
        for (c, s) in bank.step_fading(n, &mut fading).iter().enumerate() {
            out[c].push(success.random::<f64>() < s.success_probability);
        }
    }
    out
}

fn sinr_findings(s: &SinrSetup, scenario: &Scenario, out: &mut Vec<Finding>) {
    let n0 = s.physics.noise_floor;
    let beta = s.physics.sinr_threshold;
    for (g, graph) in scenario.topology.graphs().iter().enumerate() {
        for &(i, j) in graph.edges() {
            let signal = s.received_power(graph, i);
            let mut senders: Vec<usize> = graph
                .edges()
                .iter()
                .map(|e| e.0)
                .filter(|&k| k != i && k != j)
                .collect();
            senders.sort_unstable();
            senders.dedup();
            let interferers: Vec<_> = senders
                .iter()
                .map(|&k| s.received_power(graph, k))
                .collect();
            let refs: Vec<&dyn LogMgf> = interferers.iter().map(|m| m as &dyn LogMgf).collect();
            let means: Vec<f64> = interferers.iter().map(|m| m.mean()).collect();
            let mean_ok = mean_sinr_condition(signal.mean(), &means, n0, beta).unwrap_or(false);
            let clause = format!("graph {g} edge ({i},{j}) failure bound");
            match chernoff_failure_bound(&signal, &refs, n0, beta) {
                Ok(b) => out.push(finding(
                    "A8(i)",
                    clause,
                    if b < 1.0 { Status::Pass } else { Status::Fail },
                    format!(
                        "Chernoff bound {b:.4e}; mean-SINR condition {}",
                        if mean_ok { "holds" } else { "fails" }
                    ),
                )),
                Err(e) => out.push(finding("A8(i)", clause, Status::Fail, e.to_string())),
            }
        }
    }
}

pub fn verify(scenario: &Scenario) -> anyhow::Result<VerifyReport> {
    let cfg = &scenario.config;
    let mut findings = Vec::new();
    let mut fits = Vec::new();

    let c = scenario.topology.check_stochastic_strong_connectivity();
    findings.push(finding(
        CONNECTIVITY,
        "union graph strongly connected",
        if c.connected {
            Status::Pass
        } else {
            Status::Fail
        },
        format!("{} graphs", scenario.topology.graphs().len()),
    ));
    findings.push(finding(
        CONNECTIVITY,
        "every graph above the probability floor",
        if c.min_graph_probability > c.epsilon_floor {
            Status::Pass
        } else {
            Status::Fail
        },
        format!(
            "min probability {:.4}, floor {:.4}",
            c.min_graph_probability, c.epsilon_floor
        ),
    ));

    let settings = cfg.verify.validation.unwrap_or_default();
    let rep = validate_schedule(&cfg.schedule, cfg.verify.horizon.max(1000), &settings)?;
    for cl in &rep.clauses {
        findings.push(finding(
            "A3",
            cl.clause.clone(),
            cl.status.into(),
            cl.detail.clone(),
        ));
    }
    let q = &rep.quasi_stationarity;
    findings.push(finding(
        "diagnostic",
        q.clause.clone(),
        q.status.into(),
        q.detail.clone(),
    ));

    let mut pilot = scenario.clone();
    pilot.config.slots = cfg.verify.pilot_slots.max(1000);
    let trace = run(&pilot, run_seed(&pilot, 0), &TraceOptions::default())?;
    let a = async_rate_check(&trace.cumulative_updates, cfg.verify.async_floor)?;
    let worst = a.estimates.iter().copied().fold(f64::INFINITY, f64::min);
    findings.push(finding(
        "A5",
        "liminf updates(n)/n above floor",
        if a.passed { Status::Pass } else { Status::Fail },
        format!(
            "min estimate {worst:.4} over {} slots, floor {}",
            pilot.config.slots, a.floor
        ),
    ));
    findings.push(finding(
        "A6",
        "gradient error bounded",
        if cfg.optimizer.error_bound.is_finite() {
            Status::Pass
        } else {
            Status::Fail
        },
        format!("error ball radius {}", cfg.optimizer.error_bound),
    ));

    match &scenario.channel {
        ChannelSetup::Lossless => {
            findings.push(finding(
                "A8(i)",
                "failure probability below one",
                Status::Pass,
                "lossless: failure probability 0",
            ));
            findings.push(finding(
                "A8(ii)",
                "dependency decay",
                Status::Pass,
                "lossless: no dependence",
            ));
        }
        ChannelSetup::Sinr(s) => {
            sinr_findings(s, scenario, &mut findings);
            findings.push(finding(
                "A8(ii)",
                "dependency decay",
                Status::Pass,
                "independent draws per slot: no dependence",
            ));
        }
        ChannelSetup::Fading(bank) => {
            match bank.decay() {
                DecayMode::SqrtDecay => findings.push(finding(
                    "A8(i)",
                    "failure probability below one",
                    Status::Exceeded,
                    "exceeded: decaying success probability c_s(1 - exp(-sqrt(n)/n)) -> 0",
                )),
                DecayMode::Constant => {
                    let sup = (0..bank.channel_count())
                        .map(|c| bank.stationary_failure(c))
                        .fold(0.0, f64::max);
                    findings.push(finding(
                        "A8(i)",
                        "failure probability below one",
                        if sup < 1.0 {
                            Status::Pass
                        } else {
                            Status::Fail
                        },
                        format!("largest stationary failure probability {sup:.4}"),
                    ));
                }
            }
            let lags: Vec<usize> = (1..=cfg.verify.decay_lags).collect();
            let series =
                pilot_channel_trace(bank, cfg.verify.channel_pilot_slots, run_seed(scenario, 0));
            let mut all_ok = true;
            let mut parts = Vec::new();
            for (ch, s) in series.iter().enumerate() {
                let est = dependency_decay_estimate(s, &lags, cfg.verify.min_bin)?;
                all_ok &= est.q_hat < 1.0;
                parts.push(format!(
                    "c{ch}: q={:.3} ({} lags)",
                    est.q_hat, est.fitted_lags
                ));
                fits.push(GeometricFit {
                    channel: ch,
                    q_hat: est.q_hat,
                    fitted_lags: est.fitted_lags,
                    mixing_rate: bank.dependency_rate(ch),
                });
            }
            findings.push(finding(
                "A8(ii)",
                "geometric dependency decay",
                if all_ok { Status::Pass } else { Status::Fail },
                format!(
                    "constant-mode pilot of {} slots; {}",
                    cfg.verify.channel_pilot_slots,
                    parts.join(", ")
                ),
            ));
        }
    }

    Ok(VerifyReport {
        scenario: cfg.name.clone(),
        findings,
        dependency_fits: fits,
    })
}
