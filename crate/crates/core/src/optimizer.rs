//! Asynchronous penalty-based SGD.
//!
//! Each ticking agent applies
//! `x <- x - a(nu) (b(nu) grad_f(X_hat, xi) + grad_P(X_hat, xi) + eps)`
//! to its own block, reading the other blocks from its belief vector.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::SimRng;

/// A positive sequence indexed by the local update count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sequence {
    /// `1 / ((nu + shift)^exponent / scale + offset)`.
    Power {
        scale: f64,
        exponent: f64,
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        shift: f64,
    },
    Constant {
        value: f64,
    },
}

impl Sequence {
    pub fn eval(&self, nu: u64) -> f64 {
        match *self {
            Sequence::Power {
                scale,
                exponent,
                offset,
                shift,
            } => 1.0 / ((nu as f64 + shift).powf(exponent) / scale + offset),
            Sequence::Constant { value } => value,
        }
    }

    /// `1 / (nu / 1000 + 10)`.
    pub fn experiment_step() -> Self {
        Sequence::Power {
            scale: 1000.0,
            exponent: 1.0,
            offset: 10.0,
            shift: 0.0,
        }
    }

    /// `1 / (nu^(2/3) / 1000 + 10)`.
    pub fn experiment_penalty() -> Self {
        Sequence::Power {
            scale: 1000.0,
            exponent: 2.0 / 3.0,
            offset: 10.0,
            shift: 0.0,
        }
    }
}

/// Step-size sequence `a`, penalty parameter sequence `b` and ratio constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub a: Sequence,
    pub b: Sequence,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

fn default_kappa() -> f64 {
    1.0
}

impl StepSchedule {
    pub fn experiment() -> Self {
        Self {
            a: Sequence::experiment_step(),
            b: Sequence::experiment_penalty(),
            kappa: 1.0,
        }
    }

    pub fn step_size(&self, nu: u64) -> f64 {
        self.a.eval(nu)
    }

    pub fn penalty_param(&self, nu: u64) -> f64 {
        self.b.eval(nu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClauseStatus {
    Pass,
    HeuristicPass,
    Fail,
}

impl ClauseStatus {
    pub fn ok(self) -> bool {
        self != ClauseStatus::Fail
    }

    fn from_bool(ok: bool) -> Self {
        if ok {
            ClauseStatus::Pass
        } else {
            ClauseStatus::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClauseResult {
    pub clause: String,
    pub status: ClauseStatus,
    pub detail: String,
}

/// Tolerances of the numeric schedule checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationSettings {
    /// Required growth of a partial sum from horizon/2 to horizon.
    pub divergence_margin: f64,
    /// Largest ratio of successive doubling-block sums of `a^2` accepted as
    /// geometric (convergent) decay.
    pub cauchy_ratio: f64,
    /// Allowed growth of `a(n/2)/a(n)` between horizon/2 and horizon.
    pub ratio_growth: f64,
}

impl Default for ValidationSettings {
    fn default() -> Self {
        Self {
            divergence_margin: 1.0,
            cauchy_ratio: 0.75,
            ratio_growth: 1.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleReport {
    pub horizon: u64,
    pub clauses: Vec<ClauseResult>,
    pub empirical_kappa: f64,
    /// `|b(nu+1) - b(nu)| / a(nu)` trend; a timescale-separation proxy
    /// reported next to the clauses.
    pub quasi_stationarity: ClauseResult,
}

impl ScheduleReport {
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| c.status.ok())
    }

    pub fn clause(&self, prefix: &str) -> Option<&ClauseResult> {
        self.clauses.iter().find(|c| c.clause.starts_with(prefix))
    }
}

fn partial_sums(f: impl Fn(u64) -> f64, horizon: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(horizon as usize + 1);
    let mut s = 0.0;
    for nu in 0..=horizon {
        s += f(nu);
        out.push(s);
    }
    out
}

fn log_grid(lo: u64, hi: u64, points: usize) -> Vec<u64> {
    let lo = lo.max(1);
    let mut v: Vec<u64> = (0..points)
        .map(|k| {
            let t = k as f64 / (points - 1) as f64;
            ((lo as f64).ln() * (1.0 - t) + (hi as f64).ln() * t)
                .exp()
                .round() as u64
        })
        .map(|n| n.clamp(lo, hi))
        .collect();
    v.dedup();
    v
}

/// Numeric checks of the step-size and penalty-sequence assumptions over
/// `[0, horizon]`.
pub fn validate_schedule(
    schedule: &StepSchedule,
    horizon: u64,
    settings: &ValidationSettings,
) -> Result<ScheduleReport> {
    if horizon < 1000 {
        return Err(invalid(
            "schedule validation needs a horizon of at least 1000",
        ));
    }
    let a = |n| schedule.a.eval(n);
    let b = |n| schedule.b.eval(n);
    let h = horizon as usize;
    let mut clauses = Vec::new();

    let finite =
        (0..=horizon).all(|n| a(n).is_finite() && a(n) > 0.0 && b(n).is_finite() && b(n) > 0.0);
    clauses.push(ClauseResult {
        clause: "A3 well-defined: a, b finite and positive".into(),
        status: ClauseStatus::from_bool(finite),
        detail: if finite {
            "ok".into()
        } else {
            "non-finite or nonpositive value".into()
        },
    });

    let sa = partial_sums(a, horizon);
    let growth = sa[h] - sa[h / 2];
    clauses.push(ClauseResult {
        clause: "A3(i) sum a = inf".into(),
        status: if growth.is_finite() && growth > settings.divergence_margin {
            ClauseStatus::HeuristicPass
        } else {
            ClauseStatus::Fail
        },
        detail: format!(
            "S(H) - S(H/2) = {growth:.4} (margin {})",
            settings.divergence_margin
        ),
    });

    let sa2 = partial_sums(|n| a(n) * a(n), horizon);
    let late = sa2[h] - sa2[h / 2];
    let early = sa2[h / 2] - sa2[h / 4];
    let ratio = late / early;
    clauses.push(ClauseResult {
        clause: "A3(i) sum a^2 < inf".into(),
        status: if ratio.is_finite() && ratio <= settings.cauchy_ratio {
            ClauseStatus::HeuristicPass
        } else {
            ClauseStatus::Fail
        },
        detail: format!(
            "block sums [H/4,H/2] = {early:.4e}, [H/2,H] = {late:.4e}, ratio {ratio:.4} (limit {})",
            settings.cauchy_ratio
        ),
    });

    let sb = partial_sums(b, horizon);
    let growth_b = sb[h] - sb[h / 2];
    clauses.push(ClauseResult {
        clause: "A3(i) sum b = inf".into(),
        status: if growth_b.is_finite() && growth_b > settings.divergence_margin {
            ClauseStatus::HeuristicPass
        } else {
            ClauseStatus::Fail
        },
        detail: format!(
            "S_b(H) - S_b(H/2) = {growth_b:.4} (margin {})",
            settings.divergence_margin
        ),
    });

    let first_increase = (0..horizon).find(|&n| b(n + 1) > b(n));
    clauses.push(ClauseResult {
        clause: "A3(ii) b nonincreasing".into(),
        status: ClauseStatus::from_bool(first_increase.is_none()),
        detail: match first_increase {
            None => "ok".into(),
            Some(n) => format!("b({}) > b({n})", n + 1),
        },
    });

    let r = |n| b(n) / a(n);
    let grid = log_grid(horizon / 2, horizon, 64);
    let trailing_nonincreasing = grid.windows(2).all(|w| r(w[1]) <= r(w[0]));
    let (r_start, r_mid, r_end) = (r(1), r(horizon / 2), r(horizon));
    let ratio_ok = trailing_nonincreasing && r_end < r_mid && r_end < r_start;
    clauses.push(ClauseResult {
        clause: "A3(ii) b/a -> 0".into(),
        status: ClauseStatus::from_bool(ratio_ok),
        detail: format!("b/a at 1: {r_start:.4}, H/2: {r_mid:.4}, H: {r_end:.4}"),
    });

    let sup_ratio = |n: u64| {
        // sup over y in [1/2, 1] of a(floor(y n)) / a(n)
        let an = a(n);
        (n / 2..=n)
            .step_by(((n / 2) / 256).max(1) as usize)
            .map(|m| a(m) / an)
            .fold(0.0, f64::max)
    };
    let (s_mid, s_end) = (sup_ratio(horizon / 2), sup_ratio(horizon));
    let decay_ok = s_end.is_finite() && s_end <= settings.ratio_growth * s_mid + 1e-12;
    clauses.push(ClauseResult {
        clause: "A3(iii) sup a(yn)/a(n) bounded (x = 1/2)".into(),
        status: if decay_ok {
            ClauseStatus::HeuristicPass
        } else {
            ClauseStatus::Fail
        },
        detail: format!("at H/2: {s_mid:.4}, at H: {s_end:.4}"),
    });

    let a_max = (0..=horizon).map(a).fold(0.0, f64::max);
    clauses.push(ClauseResult {
        clause: "A3(iv) sup a <= 1".into(),
        status: ClauseStatus::from_bool(a_max <= 1.0),
        detail: format!("max a = {a_max:.6}"),
    });

    let samples: Vec<u64> = std::iter::once(0)
        .chain(log_grid(1, horizon, 200))
        .collect();
    let mut kappa: f64 = 0.0;
    for (k, &n) in samples.iter().enumerate() {
        for &m in &samples[..=k] {
            kappa = kappa.max(a(n) / a(m));
        }
    }
    clauses.push(ClauseResult {
        clause: "A3(v) a(n) <= kappa a(m)".into(),
        status: ClauseStatus::from_bool(kappa.is_finite()),
        detail: format!(
            "empirical kappa = {kappa:.6}, configured {}",
            schedule.kappa
        ),
    });

    // Pointwise, so it can be probed far beyond the horizon.
    let drift = |n: u64| (b(n + 1) - b(n)).abs() / a(n);
    let far = horizon.saturating_mul(1000);
    let probe = log_grid(horizon / 4, far, 96);
    let peak = probe.iter().map(|&n| drift(n)).fold(0.0, f64::max);
    let (d_start, d_far) = (drift(horizon / 4), drift(far));
    let quasi_stationarity = ClauseResult {
        clause: "b quasi-stationary: |b(nu+1)-b(nu)|/a(nu) -> 0".into(),
        status: ClauseStatus::from_bool(d_far.is_finite() && d_far < d_start && d_far < 0.5 * peak),
        detail: format!(
            "at H/4: {d_start:.3e}, peak on [H/4, 1000H]: {peak:.3e}, at 1000H: {d_far:.3e}"
        ),
    };

    Ok(ScheduleReport {
        horizon,
        clauses,
        empirical_kappa: kappa,
        quasi_stationarity,
    })
}

/// An agent's own optimisation state.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub x: Vec<f64>,
    /// Local update count, starting at 1.
    pub nu: u64,
    pub error_bound: f64,
}

impl AgentState {
    pub fn new(id: usize, x: Vec<f64>, error_bound: f64) -> Self {
        Self {
            id,
            x,
            nu: 1,
            error_bound,
        }
    }
}

/// A stochastic objective with a penalty, both differentiable per block.
pub trait Problem: Send + Sync {
    /// Randomness shared by all agents ticking in a slot.
    type Noise: Clone + std::fmt::Debug + Send + Sync;

    fn agent_count(&self) -> usize;
    fn dim(&self) -> usize;
    fn sample_noise(&self, rng: &mut SimRng) -> Self::Noise;

    /// `(grad_{x_agent} f(x, noise), grad_{x_agent} P(x, noise))`.
    /// `rng` feeds any per-evaluation sampling the objective needs.
    fn gradients(
        &self,
        x: &[Vec<f64>],
        agent: usize,
        noise: &Self::Noise,
        rng: &mut SimRng,
    ) -> (Vec<f64>, Vec<f64>);
}

/// `f(x) = sum_i |x_i - c_i|^2`, no penalty, no noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableQuadratic {
    pub centers: Vec<Vec<f64>>,
}

impl Problem for SeparableQuadratic {
    type Noise = ();

    fn agent_count(&self) -> usize {
        self.centers.len()
    }

    fn dim(&self) -> usize {
        self.centers.first().map_or(0, |c| c.len())
    }

    fn sample_noise(&self, _rng: &mut SimRng) {}

    fn gradients(
        &self,
        x: &[Vec<f64>],
        agent: usize,
        _noise: &(),
        _rng: &mut SimRng,
    ) -> (Vec<f64>, Vec<f64>) {
        let g = x[agent]
            .iter()
            .zip(&self.centers[agent])
            .map(|(xi, ci)| 2.0 * (xi - ci))
            .collect();
        (g, vec![0.0; self.dim()])
    }
}

/// Uniform draw on the closed ball of radius `r` in `d` dimensions.
pub fn ball_uniform<R: Rng + ?Sized>(d: usize, r: f64, rng: &mut R) -> Vec<f64> {
    if d == 0 || r == 0.0 {
        return vec![0.0; d];
    }
    let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let radius = r * rng.random::<f64>().powf(1.0 / d as f64);
    if norm == 0.0 {
        let mut v = vec![0.0; d];
        v[0] = radius;
        return v;
    }
    dir.into_iter().map(|v| v / norm * radius).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Diagnostics of one update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SgdStep {
    pub nu: u64,
    pub a: f64,
    pub b: f64,
    pub grad_f_norm: f64,
    pub grad_p_norm: f64,
    pub error_norm: f64,
}

/// One local tick. `belief` holds the agent's copies of all blocks; its own
/// block is replaced by `agent.x`.
pub fn sgd_update<P: Problem>(
    agent: &mut AgentState,
    belief: &[Vec<f64>],
    noise: &P::Noise,
    problem: &P,
    schedule: &StepSchedule,
    sample_rng: &mut SimRng,
    error_rng: &mut SimRng,
) -> Result<SgdStep> {
    let mut view = belief.to_vec();
    view[agent.id].clone_from(&agent.x);
    let (gf, gp) = problem.gradients(&view, agent.id, noise, sample_rng);
    let nu = agent.nu;
    let a = schedule.step_size(nu);
    let b = schedule.penalty_param(nu);
    let eps = ball_uniform(agent.x.len(), agent.error_bound, error_rng);
    let mut next = agent.x.clone();
    for k in 0..next.len() {
        next[k] -= a * (b * gf[k] + gp[k] + eps[k]);
    }
    if !(gf.iter().chain(&gp).all(|v| v.is_finite()) && next.iter().all(|v| v.is_finite())) {
        return Err(Error::StabilityViolation {
            slot: None,
            agent: agent.id,
            detail: "non-finite gradient or iterate".into(),
        });
    }
    agent.x = next;
    agent.nu += 1;
    Ok(SgdStep {
        nu,
        a,
        b,
        grad_f_norm: norm(&gf),
        grad_p_norm: norm(&gp),
        error_norm: norm(&eps),
    })
}

/// Local clock model of an agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClockModel {
    /// Homogeneous Poisson process with `rate` ticks per unit time.
    Poisson { rate: f64 },
    /// One tick in every slot.
    EverySlot,
}

/// Streaming projection of a local clock onto global slots. Slot `n >= 1`
/// covers the time interval `((n-1) Δ, n Δ]`.
#[derive(Debug, Clone)]
pub struct SlotClock {
    model: ClockModel,
    delta: f64,
    next_time: f64,
    rng: SimRng,
}

impl SlotClock {
    pub fn new(model: ClockModel, delta: f64, mut rng: SimRng) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(invalid("slot duration must be positive"));
        }
        let next_time = match model {
            ClockModel::Poisson { rate } => {
                if !(rate >= 0.0) {
                    return Err(invalid("clock rate must be nonnegative"));
                }
                exp_draw(rate, &mut rng)
            }
            ClockModel::EverySlot => 0.0,
        };
        Ok(Self {
            model,
            delta,
            next_time,
            rng,
        })
    }

    /// Number of raw ticks that fall into `slot`.
    pub fn ticks_in_slot(&mut self, slot: u64) -> u32 {
        match self.model {
            ClockModel::EverySlot => 1,
            ClockModel::Poisson { rate } => {
                let end = slot as f64 * self.delta;
                let mut k = 0;
                while self.next_time <= end {
                    k += 1;
                    self.next_time += exp_draw(rate, &mut self.rng);
                }
                k
            }
        }
    }
}

fn exp_draw(rate: f64, rng: &mut SimRng) -> f64 {
    if rate == 0.0 {
        return f64::INFINITY;
    }
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

/// Tick slots of a Poisson clock over `1..=horizon`, coalesced per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ClockTicks {
    pub slots: Vec<u64>,
    pub raw_ticks: u64,
    /// Ticks lost to coalescing (raw ticks minus distinct tick slots).
    pub coalesced: u64,
}

impl ClockTicks {
    pub fn coalescence_rate(&self) -> f64 {
        if self.raw_ticks == 0 {
            0.0
        } else {
            self.coalesced as f64 / self.raw_ticks as f64
        }
    }
}

pub fn poisson_clock_ticks(
    rate: f64,
    horizon_slots: u64,
    delta: f64,
    rng: SimRng,
) -> Result<ClockTicks> {
    if !(rate > 0.0) {
        return Err(invalid("clock rate must be positive"));
    }
    let mut clock = SlotClock::new(ClockModel::Poisson { rate }, delta, rng)?;
    let mut slots = Vec::new();
    let mut raw = 0u64;
    for n in 1..=horizon_slots {
        let k = clock.ticks_in_slot(n) as u64;
        if k > 0 {
            slots.push(n);
            raw += k;
        }
    }
    let coalesced = raw - slots.len() as u64;
    Ok(ClockTicks {
        slots,
        raw_ticks: raw,
        coalesced,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsyncReport {
    /// Per agent: min over the trailing half of `updates(n) / n`.
    pub estimates: Vec<f64>,
    pub floor: f64,
    pub passed: bool,
}

/// `updates[i][n-1]` is the number of updates agent `i` made in slots `1..=n`.
pub fn async_rate_check(updates: &[Vec<u64>], floor: f64) -> Result<AsyncReport> {
    if updates.iter().any(|t| t.len() < 1000) {
        return Err(invalid("update trace shorter than 1000 slots"));
    }
    let estimates: Vec<f64> = updates
        .iter()
        .map(|t| {
            let len = t.len();
            (len / 2..len)
                .map(|k| t[k] as f64 / (k + 1) as f64)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let passed = estimates.iter().all(|&e| e > floor);
    Ok(AsyncReport {
        estimates,
        floor,
        passed,
    })
}
