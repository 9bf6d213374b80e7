//! Link-level channel models.
//!
//! Two routes decide whether a scheduled transmission succeeds:
//!
//! * the analytic route evaluates the additive SINR of each active link and
//!   compares it to the threshold `beta`;
//! * the fading route draws a Bernoulli success whose probability is set by
//!   the state of a correlated Markov fading channel.
//!
//! The module also carries the first-order mean-SINR condition, the
//! Chernoff/MGF failure bound that makes it quantitative, and the
//! epsilon-greedy power rule built on top of it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Smallest value returned by [`chernoff_failure_bound`].
pub const BOUND_FLOOR: f64 = 1e-300;

/// Physical constants of the additive SINR model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkPhysics {
    pub noise_floor: f64,
    pub sinr_threshold: f64,
    pub bandwidth: f64,
}

impl LinkPhysics {
    pub fn new(noise_floor: f64, sinr_threshold: f64, bandwidth: f64) -> Result<Self> {
        let p = Self {
            noise_floor,
            sinr_threshold,
            bandwidth,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_floor > 0.0) {
            return Err(invalid("noise floor must be positive"));
        }
        if !(self.sinr_threshold > 0.0) {
            return Err(invalid("SINR threshold must be positive"));
        }
        if !(self.bandwidth > 0.0) {
            return Err(invalid("bandwidth must be positive"));
        }
        Ok(())
    }
}

/// A node transmitting in the current slot, seen from one receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveTransmitter {
    pub node: usize,
    pub power: f64,
    /// Attenuation from this node toward the receiver of interest.
    pub attenuation: f64,
}

/// Instantaneous SINR of `edge = (sender, receiver)`.
///
/// The sender's term is the signal; every other transmitter except the
/// receiver itself contributes interference.
pub fn sinr(
    edge: (usize, usize),
    transmitters: &[ActiveTransmitter],
    physics: &LinkPhysics,
) -> Result<f64> {
    if !(physics.noise_floor > 0.0) {
        return Err(invalid("noise floor must be positive"));
    }
    let (sender, receiver) = edge;
    let mut signal = None;
    let mut interference = 0.0;
    for t in transmitters {
        if t.power < 0.0 || t.attenuation < 0.0 {
            return Err(invalid("powers and attenuations must be nonnegative"));
        }
        if t.node == sender {
            signal = Some(t.power * t.attenuation);
        } else if t.node != receiver {
            interference += t.power * t.attenuation;
        }
    }
    let signal = signal.ok_or_else(|| invalid(format!("sender {sender} is not transmitting")))?;
    Ok(signal / (interference + physics.noise_floor))
}

/// Reception succeeds when the SINR reaches the threshold.
pub fn success_event(sinr_value: f64, beta: f64) -> bool {
    sinr_value >= beta
}

/// Shannon rate bound `B log2(1 + beta)` on the effective bit rate.
pub fn shannon_rate_bound(bandwidth: f64, beta: f64) -> f64 {
    bandwidth * (1.0 + beta).log2()
}

/// First-order condition: mean signal over mean interference plus noise
/// exceeds `beta`.
pub fn mean_sinr_condition(
    mean_signal: f64,
    mean_interference_terms: &[f64],
    noise_floor: f64,
    beta: f64,
) -> Result<bool> {
    if !(noise_floor > 0.0) {
        return Err(invalid("noise floor must be positive"));
    }
    let total: f64 = mean_interference_terms.iter().sum();
    Ok(mean_signal / (total + noise_floor) > beta)
}

/// Log moment-generating function `ln E[exp(tX)]` of a nonnegative
/// received-power term. Returns `+inf` where the MGF diverges.
pub trait LogMgf {
    fn log_mgf(&self, t: f64) -> f64;
    fn mean(&self) -> f64;
}

/// Distributions of received power `p * alpha` with closed-form MGFs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PowerLaw {
    PointMass { value: f64 },
    Exponential { mean: f64 },
    Uniform { low: f64, high: f64 },
}

impl PowerLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            PowerLaw::PointMass { value } => value,
            PowerLaw::Exponential { mean } => {
                let u: f64 = rng.random();
                -mean * (1.0 - u).ln()
            }
            PowerLaw::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
        }
    }

    /// Same law with the variable multiplied by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> PowerLaw {
        match *self {
            PowerLaw::PointMass { value } => PowerLaw::PointMass {
                value: value * factor,
            },
            PowerLaw::Exponential { mean } => PowerLaw::Exponential {
                mean: mean * factor,
            },
            PowerLaw::Uniform { low, high } => PowerLaw::Uniform {
                low: low * factor,
                high: high * factor,
            },
        }
    }
}

impl LogMgf for PowerLaw {
    fn log_mgf(&self, t: f64) -> f64 {
        match *self {
            PowerLaw::PointMass { value } => t * value,
            PowerLaw::Exponential { mean } => {
                if mean == 0.0 {
                    return 0.0;
                }
                let x = t * mean;
                if x >= 1.0 {
                    f64::INFINITY
                } else {
                    -(-x).ln_1p()
                }
            }
            PowerLaw::Uniform { low, high } => {
                let w = high - low;
                let x = t * w;
                if x.abs() < 1e-8 {
                    // expm1(x)/x = 1 + x/2 + x^2/6
                    t * low + (x / 2.0 + x * x / 24.0)
                } else if x > 0.0 {
                    // ln((e^x - 1)/x) = x + ln((1 - e^-x)/x)
                    t * low + x + (-(-x).exp_m1() / x).ln()
                } else {
                    t * low + (x.exp_m1() / x).ln()
                }
            }
        }
    }

    fn mean(&self) -> f64 {
        match *self {
            PowerLaw::PointMass { value } => value,
            PowerLaw::Exponential { mean } => mean,
            PowerLaw::Uniform { low, high } => 0.5 * (low + high),
        }
    }
}

/// `p * alpha` with `alpha ~ law` and an independent discrete power `p`
/// taking `powers[k].1` with probability `powers[k].0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerMixture {
    pub law: PowerLaw,
    pub powers: Vec<(f64, f64)>,
}

impl LogMgf for PowerMixture {
    fn log_mgf(&self, t: f64) -> f64 {
        let terms: Vec<f64> = self
            .powers
            .iter()
            .filter(|(w, _)| *w > 0.0)
            .map(|&(w, p)| w.ln() + self.law.scaled(p).log_mgf(t))
            .collect();
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return top;
        }
        top + terms.iter().map(|v| (v - top).exp()).sum::<f64>().ln()
    }

    fn mean(&self) -> f64 {
        self.powers.iter().map(|&(w, p)| w * p).sum::<f64>() * self.law.mean()
    }
}

/// Upper bound on `P(SINR < beta)` from the moment-generating functions of
/// the signal and (independent) interferer terms:
/// `inf_{t>0} sqrt(g(t))`, `g(t) = exp(2 beta N0 t) M_s(-2t) prod M_k(2 beta t)`.
///
/// `log g` is convex with `log g(0) = 0`, so the infimum is below one
/// exactly when `g'(0) < 0`, i.e. when the mean-SINR condition holds.
/// The minimiser is bracketed by geometric growth and located by ternary
/// search to 1e-10 in `t`. The result is clamped to `[BOUND_FLOOR, 1]`.
pub fn chernoff_failure_bound(
    signal: &dyn LogMgf,
    interferers: &[&dyn LogMgf],
    noise_floor: f64,
    beta: f64,
) -> Result<f64> {
    if !(noise_floor > 0.0) {
        return Err(invalid("noise floor must be positive"));
    }
    if !(beta > 0.0) {
        return Err(invalid("SINR threshold must be positive"));
    }
    let log_g = |t: f64| -> f64 {
        let v = 2.0 * beta * noise_floor * t
            + signal.log_mgf(-2.0 * t)
            + interferers
                .iter()
                .map(|m| m.log_mgf(2.0 * beta * t))
                .sum::<f64>();
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let floor_log = 2.0 * BOUND_FLOOR.ln();

    // Find a finite starting point near zero.
    let mut t = 1e-6;
    while !log_g(t).is_finite() {
        t *= 0.5;
        if t < 1e-15 {
            return Err(Error::BoundUnavailable(
                "MGF diverges over the whole search interval".into(),
            ));
        }
    }
    if log_g(t) >= 0.0 {
        // log g is convex with log g(0) = 0 and nondecreasing at t: the
        // infimum over t > 0 is approached at 0.
        return Ok(1.0);
    }
    let mut lo = 0.0;
    let mut mid = t;
    let mut hi = 2.0 * t;
    loop {
        let v_hi = log_g(hi);
        if v_hi < floor_log {
            return Ok(BOUND_FLOOR);
        }
        if !(v_hi < log_g(mid)) {
            break;
        }
        lo = mid;
        mid = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Ok(BOUND_FLOOR);
        }
    }
    // Ternary search on the bracket [lo, hi] around mid.
    let (mut a, mut b) = (lo, hi);
    while b - a > 1e-10 * (1.0 + b) && b - a > 1e-10 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if log_g(m1) <= log_g(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    let best = log_g(0.5 * (a + b)).min(log_g(mid));
    Ok((0.5 * best).exp().clamp(BOUND_FLOOR, 1.0))
}

/// Epsilon-greedy transmit power: with probability `epsilon` the power that
/// puts the mean SINR `delta` above the threshold, otherwise the fallback.
pub fn epsilon_greedy_power<R: Rng + ?Sized>(
    mean_interference_plus_noise: f64,
    mean_attenuation: f64,
    beta: f64,
    epsilon: f64,
    delta: f64,
    fallback_power: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(mean_attenuation > 0.0) {
        return Err(invalid("mean attenuation must be positive"));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(invalid("epsilon must be a probability"));
    }
    if rng.random::<f64>() < epsilon {
        Ok(beta * mean_interference_plus_noise / mean_attenuation + delta)
    } else {
        Ok(fallback_power)
    }
}

/// Row-stochastic transition matrix.
pub type Matrix = Vec<Vec<f64>>;

fn validate_stochastic(m: &Matrix, what: &str) -> Result<()> {
    let n = m.len();
    if n == 0 {
        return Err(invalid(format!("{what}: empty transition matrix")));
    }
    for (r, row) in m.iter().enumerate() {
        if row.len() != n {
            return Err(invalid(format!(
                "{what}: row {r} has {} entries, expected {n}",
                row.len()
            )));
        }
        if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid(format!(
                "{what}: row {r} has an entry outside [0,1]"
            )));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("{what}: row {r} sums to {s}")));
        }
    }
    Ok(())
}

/// Irreducible and aperiodic, i.e. primitive: some power `P^k` with
/// `k <= (n-1)^2 + 1` is entrywise positive.
pub fn is_ergodic(m: &Matrix) -> bool {
    let n = m.len();
    let base: Vec<Vec<bool>> = m
        .iter()
        .map(|r| r.iter().map(|&p| p > 0.0).collect())
        .collect();
    let mut cur = base.clone();
    for _ in 0..((n - 1) * (n - 1) + 1) {
        if cur.iter().all(|r| r.iter().all(|&b| b)) {
            return true;
        }
        let mut next = vec![vec![false; n]; n];
        for i in 0..n {
            for k in 0..n {
                if cur[i][k] {
                    for j in 0..n {
                        next[i][j] |= base[k][j];
                    }
                }
            }
        }
        cur = next;
    }
    cur.iter().all(|r| r.iter().all(|&b| b))
}

fn vec_mat(v: &[f64], m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.len()];
    for (i, &vi) in v.iter().enumerate() {
        if vi != 0.0 {
            for (j, &p) in m[i].iter().enumerate() {
                out[j] += vi * p;
            }
        }
    }
    out
}

/// Stationary distribution of an ergodic chain by power iteration.
pub fn stationary_distribution(m: &Matrix) -> Vec<f64> {
    let n = m.len();
    let mut v = vec![1.0 / n as f64; n];
    for _ in 0..100_000 {
        let next = vec_mat(&v, m);
        let diff: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        v = next;
        if diff < 1e-15 {
            break;
        }
    }
    v
}

/// Geometric mixing rate: `max_i ||P^k(i,.) - pi||_1^(1/k)` at `k = 64`,
/// which approaches the second-largest eigenvalue modulus.
pub fn mixing_rate(m: &Matrix) -> f64 {
    if m.len() == 2 {
        return (1.0 - m[0][1] - m[1][0]).abs();
    }
    let pi = stationary_distribution(m);
    let k = 64;
    let mut worst: f64 = 0.0;
    for i in 0..m.len() {
        let mut v = vec![0.0; m.len()];
        v[i] = 1.0;
        for _ in 0..k {
            v = vec_mat(&v, m);
        }
        let tv: f64 = v.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        worst = worst.max(tv);
    }
    worst.powf(1.0 / k as f64)
}

/// A finite Markov chain with its current state.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    transition: Matrix,
    state: usize,
}

impl MarkovChain {
    pub fn new(transition: Matrix, initial: usize) -> Result<Self> {
        validate_stochastic(&transition, "Markov chain")?;
        if initial >= transition.len() {
            return Err(invalid("initial state out of range"));
        }
        Ok(Self {
            transition,
            state: initial,
        })
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn transition(&self) -> &Matrix {
        &self.transition
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        self.state = sample_row(&self.transition[self.state], rng);
        self.state
    }
}

fn sample_row<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    // Rounding left u above the cumulative sum: last state with mass.
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

/// How the per-state success scale maps to a success probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DecayMode {
    #[default]
    Constant,
    /// `c_s (1 - exp(-sqrt(n)/n))`; slot 0 uses the slot-1 value.
    SqrtDecay,
}

impl DecayMode {
    pub fn success_probability(self, scale: f64, slot: u64) -> f64 {
        match self {
            DecayMode::Constant => scale,
            DecayMode::SqrtDecay => {
                let n = slot.max(1) as f64;
                scale * -(-(n.sqrt() / n)).exp_m1()
            }
        }
    }
}

/// State of one channel after a fading step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelSample {
    pub latent_state: usize,
    pub state: usize,
    pub success_probability: f64,
}

/// Correlated Markov fading channels.
///
/// A latent chain selects, per step, which transition matrix every channel
/// uses; the channels are therefore coupled through the shared latent
/// state while each one remains an ergodic chain on its own states.
#[derive(Debug, Clone)]
pub struct FadingChannelBank {
    latent: MarkovChain,
    /// `channel_matrices[c][l]`: transition matrix of channel `c` under latent state `l`.
    channel_matrices: Vec<Vec<Matrix>>,
    channel_states: Vec<usize>,
    /// `success_scale[c][s]`: success scale of channel `c` in state `s`.
    success_scale: Vec<Vec<f64>>,
    decay: DecayMode,
}

impl FadingChannelBank {
    pub fn new(
        latent: MarkovChain,
        channel_matrices: Vec<Vec<Matrix>>,
        initial_states: Vec<usize>,
        success_scale: Vec<Vec<f64>>,
        decay: DecayMode,
    ) -> Result<Self> {
        let latent_n = latent.transition.len();
        if !is_ergodic(&latent.transition) {
            return Err(invalid("latent chain is not ergodic"));
        }
        if channel_matrices.is_empty() {
            return Err(invalid("fading bank needs at least one channel"));
        }
        if initial_states.len() != channel_matrices.len()
            || success_scale.len() != channel_matrices.len()
        {
            return Err(invalid(
                "per-channel arrays must have one entry per channel",
            ));
        }
        for (c, per_latent) in channel_matrices.iter().enumerate() {
            if per_latent.len() != latent_n {
                return Err(invalid(format!(
                    "channel {c}: need one transition matrix per latent state ({latent_n})"
                )));
            }
            let s = per_latent[0].len();
            for (l, m) in per_latent.iter().enumerate() {
                validate_stochastic(m, &format!("channel {c} latent {l}"))?;
                if m.len() != s {
                    return Err(invalid(format!(
                        "channel {c}: state count differs across latent states"
                    )));
                }
                if !is_ergodic(m) {
                    return Err(invalid(format!(
                        "channel {c} is not ergodic under latent state {l}"
                    )));
                }
            }
            if initial_states[c] >= s {
                return Err(invalid(format!("channel {c}: initial state out of range")));
            }
            if success_scale[c].len() != s {
                return Err(invalid(format!(
                    "channel {c}: need one success scale per state"
                )));
            }
            if success_scale[c].iter().any(|&x| !(x > 0.0 && x < 1.0)) {
                return Err(invalid(format!(
                    "channel {c}: success scales must lie in (0,1)"
                )));
            }
        }
        Ok(Self {
            latent,
            channel_matrices,
            channel_states: initial_states,
            success_scale,
            decay,
        })
    }

    pub fn channel_count(&self) -> usize {
        self.channel_matrices.len()
    }

    pub fn decay(&self) -> DecayMode {
        self.decay
    }

    pub fn with_decay(mut self, decay: DecayMode) -> Self {
        self.decay = decay;
        self
    }

    pub fn latent(&self) -> &MarkovChain {
        &self.latent
    }

    pub fn channel_states(&self) -> &[usize] {
        &self.channel_states
    }

    pub fn success_scale(&self) -> &[Vec<f64>] {
        &self.success_scale
    }

    /// Advance the latent chain, then every channel under the new latent
    /// state, and report per-channel success probabilities for `slot`.
    pub fn step_fading<R: Rng + ?Sized>(&mut self, slot: u64, rng: &mut R) -> Vec<ChannelSample> {
        let l = self.latent.step(rng);
        let decay = self.decay;
        self.channel_states
            .iter_mut()
            .enumerate()
            .map(|(c, s)| {
                *s = sample_row(&self.channel_matrices[c][l][*s], rng);
                ChannelSample {
                    latent_state: l,
                    state: *s,
                    success_probability: decay.success_probability(self.success_scale[c][*s], slot),
                }
            })
            .collect()
    }

    /// Transition matrix of the joint (latent, channel state) chain of
    /// channel `c`, indexed `l * S + s`.
    pub fn joint_transition(&self, c: usize) -> Matrix {
        let lat = &self.latent.transition;
        let ln = lat.len();
        let sn = self.success_scale[c].len();
        let mut m = vec![vec![0.0; ln * sn]; ln * sn];
        for l in 0..ln {
            for s in 0..sn {
                for l2 in 0..ln {
                    for s2 in 0..sn {
                        m[l * sn + s][l2 * sn + s2] =
                            lat[l][l2] * self.channel_matrices[c][l2][s][s2];
                    }
                }
            }
        }
        m
    }

    /// Supremum over slots of the marginal failure probability of channel
    /// `c` in constant mode, by propagating the joint state distribution
    /// from the current state (law of total probability).
    pub fn failure_probability_sup(&self, c: usize) -> f64 {
        let m = self.joint_transition(c);
        let sn = self.success_scale[c].len();
        let fail: Vec<f64> = (0..m.len())
            .map(|k| 1.0 - self.success_scale[c][k % sn])
            .collect();
        let mut v = vec![0.0; m.len()];
        v[self.latent.state * sn + self.channel_states[c]] = 1.0;
        let mut sup: f64 = 0.0;
        for _ in 0..100_000 {
            let next = vec_mat(&v, &m);
            let p: f64 = next.iter().zip(&fail).map(|(a, b)| a * b).sum();
            sup = sup.max(p);
            let diff: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
            v = next;
            if diff < 1e-15 {
                break;
            }
        }
        sup
    }

    /// Stationary failure probability of channel `c` in constant mode.
    pub fn stationary_failure(&self, c: usize) -> f64 {
        let m = self.joint_transition(c);
        let sn = self.success_scale[c].len();
        stationary_distribution(&m)
            .iter()
            .enumerate()
            .map(|(k, p)| p * (1.0 - self.success_scale[c][k % sn]))
            .sum()
    }

    /// Per-step decay rate of dependence for channel `c` (mixing rate of the
    /// joint chain).
    pub fn dependency_rate(&self, c: usize) -> f64 {
        mixing_rate(&self.joint_transition(c))
    }
}
