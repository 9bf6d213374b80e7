//! Declarative scenario files.
//!
//! A scenario is a TOML document that fully determines a run: agents,
//! topology schedule, channel model, problem, step sizes, clocks and seeds.
//! [`ScenarioConfig`] mirrors the file; [`Scenario`] holds the validated,
//! constructed objects.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{
    DecayMode, FadingChannelBank, LinkPhysics, LogMgf, MarkovChain, Matrix, PowerLaw, PowerMixture,
};
use crate::coverage::{
    annulus_positions, pentagon_targets, CoverageProblem, MetricSet, Point, XiDistribution,
};
use crate::error::{Error, Result};
use crate::graph::{interleaved_cycles, DirectedGraph, TopologySchedule};
use crate::optimizer::{ClockModel, SeparableQuadratic, StepSchedule, ValidationSettings};
use crate::rng::config_rng;

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

fn default_one() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub agents: usize,
    pub slots: u64,
    #[serde(default = "default_one")]
    pub slot_duration: f64,
    pub seed: u64,
    #[serde(default)]
    pub slot_order: SlotOrder,
    pub topology: TopologyConfig,
    pub channel: ChannelConfig,
    pub problem: ProblemConfig,
    pub schedule: StepSchedule,
    pub clocks: ClocksConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

/// Order of the two halves of a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotOrder {
    /// Exchange first, then ticks. What an agent sends in slot `n` is its
    /// whole belief at the end of slot `n - 1`, so a value produced in slot
    /// `n` arrives in slot `n + 1` at the earliest.
    #[default]
    TransmitFirst,
    /// Ticks first, then exchange. A fresh own value can arrive within the
    /// slot it was produced, while relayed values still wait a slot.
    UpdateFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Exchange,
    Update,
}

impl SlotOrder {
    pub fn phases(self) -> [Phase; 2] {
        match self {
            SlotOrder::UpdateFirst => [Phase::Update, Phase::Exchange],
            SlotOrder::TransmitFirst => [Phase::Exchange, Phase::Update],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    /// Four edge-disjoint directed cycles with a strongly connected union.
    InterleavedCycles,
    Complete,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub kind: TopologyKind,
    #[serde(default)]
    pub graphs: Option<Vec<Vec<[usize; 2]>>>,
    #[serde(default)]
    pub probabilities: Option<Vec<f64>>,
    pub epsilon_floor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    Lossless,
    Fading,
    Sinr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub mode: ChannelMode,
    /// Components delivered per successful slot; defaults to the agent count.
    #[serde(default)]
    pub capacity: Option<usize>,
    #[serde(default)]
    pub fading: Option<FadingConfig>,
    #[serde(default)]
    pub sinr: Option<SinrConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FadingConfig {
    pub channels: usize,
    #[serde(default)]
    pub decay: DecayMode,
    pub latent_matrix: Matrix,
    #[serde(default)]
    pub latent_initial: usize,
    /// One channel transition matrix per latent state, shared by all channels.
    pub channel_matrices: Vec<Matrix>,
    #[serde(default)]
    pub initial_state: usize,
    pub success_scale: SuccessScaleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SuccessScaleConfig {
    /// Independent uniform draws per channel and state.
    Uniform {
        low: f64,
        high: f64,
        seed: u64,
    },
    /// The same per-state values for every channel.
    PerState {
        values: Vec<f64>,
    },
    PerChannel {
        values: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinrConfig {
    pub noise_floor: f64,
    pub beta: f64,
    pub bandwidth: f64,
    /// Law of the per-slot attenuation between any transmitter and receiver.
    pub attenuation: PowerLaw,
    pub epsilon: f64,
    pub delta: f64,
    pub fallback_power: f64,
    /// Bits per slot; checked against the Shannon bound when present.
    #[serde(default)]
    pub payload_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    Coverage {
        delta: f64,
        targets: TargetsConfig,
        #[serde(default)]
        xi: XiDistribution,
        mc_samples: usize,
        #[serde(default = "default_true")]
        penalty: bool,
        initial: InitialConfig,
    },
    Quadratic {
        centers: Vec<Vec<f64>>,
        initial: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetsConfig {
    Pentagon { radius: f64 },
    Points { points: Vec<Point> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    Annulus { r_min: f64, r_max: f64, seed: u64 },
    Points { points: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockKind {
    Poisson,
    EverySlot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClocksConfig {
    pub kind: ClockKind,
    /// Poisson rate per unit time, shared by all agents.
    #[serde(default)]
    pub rate: Option<f64>,
    /// Per-agent Poisson rates; overrides `rate`.
    #[serde(default)]
    pub rates: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default)]
    pub error_bound: f64,
    /// All agents ticking in a slot see the same `xi`.
    #[serde(default = "default_true")]
    pub shared_xi: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            error_bound: 0.0,
            shared_xi: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    #[serde(default = "MetricsConfig::default_points")]
    pub disk_points: usize,
    #[serde(default = "MetricsConfig::default_seed")]
    pub seed: u64,
    /// Slot stride of the per-pair AoI export.
    #[serde(default = "MetricsConfig::default_stride")]
    pub aoi_stride: u64,
}

impl MetricsConfig {
    fn default_points() -> usize {
        256
    }
    fn default_seed() -> u64 {
        0x5EED
    }
    fn default_stride() -> u64 {
        10
    }
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            disk_points: 256,
            seed: 0x5EED,
            aoi_stride: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "VerifyConfig::default_horizon")]
    pub horizon: u64,
    #[serde(default = "VerifyConfig::default_pilot")]
    pub pilot_slots: u64,
    #[serde(default = "VerifyConfig::default_channel_pilot")]
    pub channel_pilot_slots: u64,
    #[serde(default = "VerifyConfig::default_floor")]
    pub async_floor: f64,
    #[serde(default = "VerifyConfig::default_lags")]
    pub decay_lags: usize,
    #[serde(default = "VerifyConfig::default_min_bin")]
    pub min_bin: usize,
    #[serde(default)]
    pub validation: Option<ValidationSettings>,
}

impl VerifyConfig {
    fn default_horizon() -> u64 {
        1_000_000
    }
    fn default_pilot() -> u64 {
        5_000
    }
    fn default_channel_pilot() -> u64 {
        200_000
    }
    fn default_floor() -> f64 {
        0.05
    }
    fn default_lags() -> usize {
        30
    }
    fn default_min_bin() -> usize {
        100
    }
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            horizon: Self::default_horizon(),
            pilot_slots: Self::default_pilot(),
            channel_pilot_slots: Self::default_channel_pilot(),
            async_floor: Self::default_floor(),
            decay_lags: Self::default_lags(),
            min_bin: Self::default_min_bin(),
            validation: None,
        }
    }
}

/// Analytic SINR channel path.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrSetup {
    pub physics: LinkPhysics,
    pub attenuation: PowerLaw,
    pub epsilon: f64,
    pub delta: f64,
    pub fallback_power: f64,
}

impl SinrSetup {
    /// Largest mean interference plus noise over the out-edges of `sender`
    /// in `graph`, with every other sender at the fallback power.
    pub fn mean_interference_plus_noise(&self, graph: &DirectedGraph, sender: usize) -> f64 {
        let mut senders: Vec<usize> = graph.edges().iter().map(|e| e.0).collect();
        senders.sort_unstable();
        senders.dedup();
        let mean_att = self.attenuation.mean();
        graph
            .edges()
            .iter()
            .filter(|e| e.0 == sender)
            .map(|&(_, j)| {
                let others = senders.iter().filter(|&&k| k != sender && k != j).count() as f64;
                others * self.fallback_power * mean_att + self.physics.noise_floor
            })
            .fold(0.0, f64::max)
    }

    /// Power of the greedy branch for `sender` in `graph`.
    pub fn greedy_power(&self, graph: &DirectedGraph, sender: usize) -> f64 {
        self.physics.sinr_threshold * self.mean_interference_plus_noise(graph, sender)
            / self.attenuation.mean()
            + self.delta
    }

    /// Law of the received power from `sender` under the epsilon-greedy rule.
    pub fn received_power(&self, graph: &DirectedGraph, sender: usize) -> PowerMixture {
        PowerMixture {
            law: self.attenuation,
            powers: vec![
                (self.epsilon, self.greedy_power(graph, sender)),
                (1.0 - self.epsilon, self.fallback_power),
            ],
        }
    }
}

#[derive(Debug, Clone)]
pub enum ChannelSetup {
    Lossless,
    Fading(FadingChannelBank),
    Sinr(SinrSetup),
}

#[derive(Debug, Clone)]
pub enum ProblemSetup {
    Coverage {
        problem: CoverageProblem,
        initial: Vec<Vec<f64>>,
        metrics: MetricSet,
    },
    Quadratic {
        problem: SeparableQuadratic,
        initial: Vec<Vec<f64>>,
    },
}

impl ProblemSetup {
    pub fn initial(&self) -> &[Vec<f64>] {
        match self {
            ProblemSetup::Coverage { initial, .. } | ProblemSetup::Quadratic { initial, .. } => {
                initial
            }
        }
    }
}

/// A validated scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub topology: TopologySchedule,
    pub channel: ChannelSetup,
    pub capacity: usize,
    pub problem: ProblemSetup,
    pub clocks: Vec<ClockModel>,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    (line, col)
}

impl ScenarioConfig {
    /// Parse TOML text. Errors carry `line:column` of the offending item.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            match e.span() {
                Some(span) => {
                    let (l, c) = line_col(text, span.start);
                    cfg_err(format!("{origin}:{l}:{c}: {msg}"))
                }
                None => cfg_err(format!("{origin}: {msg}")),
            }
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }
}

/// Scenarios shipped with the crate, by name.
pub const BUILTIN: &[(&str, &str)] = &[
    (
        "paper-experiment",
        include_str!("../../../scenarios/paper-experiment.toml"),
    ),
    (
        "lossless-sanity",
        include_str!("../../../scenarios/lossless-sanity.toml"),
    ),
    (
        "single-edge-bound",
        include_str!("../../../scenarios/single-edge-bound.toml"),
    ),
    (
        "line-3node",
        include_str!("../../../scenarios/line-3node.toml"),
    ),
    (
        "negative-inverse-sqrt-step",
        include_str!("../../../scenarios/negative-inverse-sqrt-step.toml"),
    ),
    (
        "negative-disconnected",
        include_str!("../../../scenarios/negative-disconnected.toml"),
    ),
];

pub fn builtin(name: &str) -> Option<Result<Scenario>> {
    BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, text)| ScenarioConfig::parse(text, n).and_then(Scenario::from_config))
}

fn build_topology(cfg: &ScenarioConfig) -> Result<TopologySchedule> {
    let d = cfg.agents;
    let t = &cfg.topology;
    let graphs = match t.kind {
        TopologyKind::InterleavedCycles => interleaved_cycles(d)?,
        TopologyKind::Complete => vec![DirectedGraph::complete(d)?],
        TopologyKind::Explicit => {
            let gs = t
                .graphs
                .as_ref()
                .ok_or_else(|| cfg_err("explicit topology needs `graphs`"))?;
            gs.iter()
                .map(|edges| DirectedGraph::new(d, edges.iter().map(|e| (e[0], e[1]))))
                .collect::<Result<Vec<_>>>()?
        }
    };
    match &t.probabilities {
        Some(p) => TopologySchedule::new(graphs, p.clone(), t.epsilon_floor),
        None => TopologySchedule::uniform(graphs, t.epsilon_floor),
    }
}

fn build_fading(f: &FadingConfig) -> Result<FadingChannelBank> {
    let latent = MarkovChain::new(f.latent_matrix.clone(), f.latent_initial)?;
    let states = f.channel_matrices.first().map_or(0, |m| m.len());
    let scales: Vec<Vec<f64>> = match &f.success_scale {
        SuccessScaleConfig::Uniform { low, high, seed } => {
            if !(0.0 < *low && low <= high && *high < 1.0) {
                return Err(cfg_err("success scale range must lie in (0,1)"));
            }
            let mut rng = config_rng(*seed);
            (0..f.channels)
                .map(|_| {
                    (0..states)
                        .map(|_| low + (high - low) * rng.random::<f64>())
                        .collect()
                })
                .collect()
        }
        SuccessScaleConfig::PerState { values } => vec![values.clone(); f.channels],
        SuccessScaleConfig::PerChannel { values } => values.clone(),
    };
    FadingChannelBank::new(
        latent,
        vec![f.channel_matrices.clone(); f.channels],
        vec![f.initial_state; f.channels],
        scales,
        f.decay,
    )
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig) -> Result<Self> {
        let d = config.agents;
        if d == 0 {
            return Err(cfg_err("agents must be positive"));
        }
        if config.slots == 0 {
            return Err(cfg_err("slots must be at least 1"));
        }
        if !(config.slot_duration > 0.0) {
            return Err(cfg_err("slot_duration must be positive"));
        }
        let topology = build_topology(&config)?;
        if topology.node_count() != d {
            return Err(cfg_err("topology node count differs from agents"));
        }
        let capacity = config.channel.capacity.unwrap_or(d);
        if capacity == 0 {
            return Err(cfg_err("channel capacity must be positive"));
        }
        let channel = match config.channel.mode {
            ChannelMode::Lossless => ChannelSetup::Lossless,
            ChannelMode::Fading => {
                let f = config
                    .channel
                    .fading
                    .as_ref()
                    .ok_or_else(|| cfg_err("fading mode needs [channel.fading]"))?;
                ChannelSetup::Fading(build_fading(f)?)
            }
            ChannelMode::Sinr => {
                let s = config
                    .channel
                    .sinr
                    .as_ref()
                    .ok_or_else(|| cfg_err("sinr mode needs [channel.sinr]"))?;
                let physics = LinkPhysics::new(s.noise_floor, s.beta, s.bandwidth)?;
                if let Some(rate) = s.payload_rate {
                    let bound = crate::channel::shannon_rate_bound(s.bandwidth, s.beta);
                    if rate > bound {
                        return Err(cfg_err(format!(
                            "payload rate {rate} exceeds the Shannon bound {bound}"
                        )));
                    }
                }
                if !(0.0..=1.0).contains(&s.epsilon) || s.delta < 0.0 || s.fallback_power < 0.0 {
                    return Err(cfg_err(
                        "sinr: epsilon in [0,1], delta and fallback_power nonnegative",
                    ));
                }
                ChannelSetup::Sinr(SinrSetup {
                    physics,
                    attenuation: s.attenuation,
                    epsilon: s.epsilon,
                    delta: s.delta,
                    fallback_power: s.fallback_power,
                })
            }
        };
        let problem = match &config.problem {
            ProblemConfig::Coverage {
                delta,
                targets,
                xi,
                mc_samples,
                penalty,
                initial,
            } => {
                let targets = match targets {
                    TargetsConfig::Pentagon { radius } => pentagon_targets(*radius),
                    TargetsConfig::Points { points } => points.clone(),
                };
                let problem = CoverageProblem {
                    agent_count: d,
                    targets,
                    delta: *delta,
                    xi: *xi,
                    mc_samples: *mc_samples,
                    penalty_enabled: *penalty,
                };
                problem.validate()?;
                let initial = match initial {
                    InitialConfig::Annulus { r_min, r_max, seed } => {
                        if !(0.0 <= *r_min && r_min <= r_max) {
                            return Err(cfg_err("annulus radii must satisfy 0 <= r_min <= r_max"));
                        }
                        annulus_positions(d, *r_min, *r_max, *seed)
                    }
                    InitialConfig::Points { points } => points.clone(),
                };
                if initial.len() != d || initial.iter().any(|p| p.len() != 2) {
                    return Err(cfg_err("initial positions must be one 2-vector per agent"));
                }
                let metrics =
                    MetricSet::new(xi, config.metrics.disk_points.max(1), config.metrics.seed);
                ProblemSetup::Coverage {
                    problem,
                    initial,
                    metrics,
                }
            }
            ProblemConfig::Quadratic { centers, initial } => {
                let dim = centers.first().map_or(0, |c| c.len());
                if centers.len() != d
                    || initial.len() != d
                    || centers.iter().chain(initial).any(|c| c.len() != dim)
                {
                    return Err(cfg_err(
                        "quadratic centers and initial values must be one vector per agent",
                    ));
                }
                ProblemSetup::Quadratic {
                    problem: SeparableQuadratic {
                        centers: centers.clone(),
                    },
                    initial: initial.clone(),
                }
            }
        };
        let clocks = match config.clocks.kind {
            ClockKind::EverySlot => vec![ClockModel::EverySlot; d],
            ClockKind::Poisson => {
                let rates = match (&config.clocks.rates, config.clocks.rate) {
                    (Some(r), _) => r.clone(),
                    (None, Some(r)) => vec![r; d],
                    (None, None) => return Err(cfg_err("poisson clocks need `rate` or `rates`")),
                };
                if rates.len() != d || rates.iter().any(|r| !(*r >= 0.0)) {
                    return Err(cfg_err(
                        "clock rates must be one nonnegative value per agent",
                    ));
                }
                rates
                    .into_iter()
                    .map(|rate| ClockModel::Poisson { rate })
                    .collect()
            }
        };
        if !(config.optimizer.error_bound >= 0.0) {
            return Err(cfg_err("error_bound must be nonnegative"));
        }
        Ok(Self {
            config,
            topology,
            channel,
            capacity,
            problem,
            clocks,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
        Scenario::from_config(ScenarioConfig::parse(&text, &path.display().to_string())?)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.config.seed = seed;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse() {
        for (name, _) in BUILTIN {
            let s = builtin(name)
                .unwrap()
                .unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.config.name, *name);
        }
        assert!(builtin("nope").is_none());
    }

    #[test]
    fn parse_errors_point_at_the_line() {
        let text = "name = \"x\"\nagents = \"many\"\n";
        let err = ScenarioConfig::parse(text, "bad.toml")
            .unwrap_err()
            .to_string();
        assert!(err.contains("bad.toml:2:"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let (_, text) = BUILTIN[1];
        let patched = text.replace("slots =", "slotz =");
        assert!(ScenarioConfig::parse(&patched, "x").is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        for (name, text) in BUILTIN {
            let c = ScenarioConfig::parse(text, name).unwrap();
            let again = ScenarioConfig::parse(&c.to_toml(), name).unwrap();
            assert_eq!(c, again);
        }
    }

    #[test]
    fn zero_slots_rejected() {
        let (_, text) = BUILTIN[1];
        let mut c = ScenarioConfig::parse(text, "x").unwrap();
        c.slots = 0;
        assert!(Scenario::from_config(c).is_err());
    }
}
