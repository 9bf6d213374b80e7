//! Tail bounds on age of information and their empirical counterparts.
//!
//! A [`TailBound`] is a complementary CDF `m -> P(tau_bar > m)` on the
//! nonnegative integers. Single-edge bounds come from the per-slot failure
//! probability `p_tilde` and the dependency-decay rate `q`; path bounds
//! compose edge bounds by halving the age budget.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::stats::{linear_fit, proportion_std_error};

/// Values below this are treated as zero when scanning for change points.
const NEGLIGIBLE: f64 = 1e-30;

/// Largest table of running minima kept for a single edge.
const MAX_PREFIX: u64 = 50_000_000;

#[derive(Debug)]
enum Node {
    Zero,
    Table(Vec<f64>),
    Edge(EdgeTail),
    Compose(Arc<Node>, Arc<Node>),
}

#[derive(Debug)]
struct EdgeTail {
    p_tilde: f64,
    q: f64,
    /// Running minimum of the clamped expression for `m < prefix.len()`;
    /// beyond the prefix the expression is nonincreasing.
    prefix: Vec<f64>,
    /// First index at which the bound is negligible.
    negligible_from: u64,
}

impl EdgeTail {
    fn raw(&self, m: u64) -> f64 {
        let m = m as f64;
        self.p_tilde.powf((m + 1.0).sqrt() - 2.0) + m.sqrt() * self.q.powf(m.sqrt())
    }

    fn eval(&self, m: u64) -> f64 {
        if (m as usize) < self.prefix.len() {
            self.prefix[m as usize]
        } else {
            let tail_min = *self.prefix.last().unwrap_or(&1.0);
            tail_min.min(self.raw(m).min(1.0))
        }
    }
}

impl Node {
    fn eval(&self, m: u64) -> f64 {
        match self {
            Node::Zero => 0.0,
            Node::Table(v) => v.get(m as usize).copied().unwrap_or(0.0),
            Node::Edge(e) => e.eval(m),
            Node::Compose(a, b) => (a.eval(m / 2) + b.eval(m / 2)).min(1.0),
        }
    }

    fn raw(&self, m: u64) -> f64 {
        match self {
            Node::Edge(e) => e.raw(m),
            Node::Compose(a, b) => a.eval(m / 2) + b.eval(m / 2),
            other => other.eval(m),
        }
    }

    /// Smallest `m' > m` at which the value may differ from the value at
    /// `m`, or `None` if it is constant (up to negligible amounts) after `m`.
    fn next_change(&self, m: u64) -> Option<u64> {
        match self {
            Node::Zero => None,
            Node::Table(v) => ((m as usize) < v.len()).then_some(m + 1),
            Node::Edge(e) => (m < e.negligible_from).then_some(m + 1),
            Node::Compose(a, b) => {
                let h = m / 2;
                match (a.next_change(h), b.next_change(h)) {
                    (None, None) => None,
                    (x, y) => Some(2 * x.unwrap_or(u64::MAX / 4).min(y.unwrap_or(u64::MAX / 4))),
                }
            }
        }
    }
}

/// Complementary CDF of a nonnegative integer random variable with a
/// cutoff `M` below which it equals one.
#[derive(Debug, Clone)]
pub struct TailBound {
    node: Arc<Node>,
    cutoff: u64,
}

impl TailBound {
    /// `P(tau_bar > m) = 0` for all `m >= 0`.
    pub fn zero() -> Self {
        Self {
            node: Arc::new(Node::Zero),
            cutoff: 0,
        }
    }

    /// Explicit CCDF values for `m = 0..values.len()`, zero afterwards.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("CCDF values must lie in [0,1]"));
        }
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(invalid("CCDF values must be nonincreasing"));
        }
        let cutoff = values.iter().take_while(|&&v| v >= 1.0).count() as u64;
        Ok(Self {
            node: Arc::new(Node::Table(values)),
            cutoff,
        })
    }

    pub fn ccdf(&self, m: u64) -> f64 {
        self.node.eval(m)
    }

    pub fn cutoff(&self) -> u64 {
        self.cutoff
    }

    fn next_change(&self, m: u64) -> Option<u64> {
        self.node.next_change(m)
    }
}

/// `min{1, p^(sqrt(m+1)-2) + sqrt(m) q^sqrt(m)}`, made nonincreasing by a
/// running minimum (the minimum of valid upper bounds at smaller ages is
/// still an upper bound).
pub fn single_edge_tail(p_tilde: f64, q: f64) -> Result<TailBound> {
    if !(p_tilde > 0.0 && p_tilde < 1.0 && q > 0.0 && q < 1.0) {
        return Err(invalid("p_tilde and q must lie in (0,1)"));
    }
    // s q^s peaks at s = 1/ln(1/q); both terms decrease after that.
    let s_peak = 1.0 / (1.0 / q).ln();
    let monotone_from = (s_peak * s_peak).ceil() as u64 + 2;
    if monotone_from > MAX_PREFIX {
        return Err(invalid("q too close to 1 for a tabulated bound"));
    }
    let mut e = EdgeTail {
        p_tilde,
        q,
        prefix: Vec::new(),
        negligible_from: 0,
    };
    let mut run: f64 = 1.0;
    for m in 0..=monotone_from {
        run = run.min(e.raw(m).min(1.0));
        e.prefix.push(run);
    }
    let mut cutoff = 0;
    while e.raw(cutoff) > 1.0 {
        cutoff += 1;
    }
    let mut hi = monotone_from.max(1);
    while e.eval(hi) >= NEGLIGIBLE {
        hi *= 2;
    }
    let mut lo = monotone_from;
    while lo + 1 < hi {
        let mid = lo + (hi - lo) / 2;
        if e.eval(mid) >= NEGLIGIBLE {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    e.negligible_from = hi;
    Ok(TailBound {
        node: Arc::new(Node::Edge(e)),
        cutoff,
    })
}

/// `min{1, t1(floor(m/2)) + t2(floor(m/2))}` with the cutoff recomputed as
/// the first `m` where the unclamped sum is at most one.
pub fn compose_tails(t1: &TailBound, t2: &TailBound) -> TailBound {
    let node = Arc::new(Node::Compose(t1.node.clone(), t2.node.clone()));
    let mut m = 0;
    while node.raw(m) > 1.0 {
        m = node.next_change(m).unwrap_or(m + 1);
    }
    TailBound { node, cutoff: m }
}

/// Left fold of [`compose_tails`] over single-edge bounds.
pub fn path_bound(edge_params: &[(f64, f64)]) -> Result<TailBound> {
    let (first, rest) = edge_params
        .split_first()
        .ok_or_else(|| invalid("path needs at least one edge"))?;
    let mut acc = single_edge_tail(first.0, first.1)?;
    for &(p, q) in rest {
        acc = compose_tails(&acc, &single_edge_tail(p, q)?);
    }
    Ok(acc)
}

fn block_sum(t: &TailBound, truncation: u64, weight: impl Fn(u64, u64) -> f64) -> (f64, f64) {
    let mut m = 0u64;
    let mut total = 0.0;
    let mut last = 1.0;
    while m <= truncation {
        let v = t.ccdf(m);
        last = v;
        if v == 0.0 {
            break;
        }
        let next = t.next_change(m);
        if next.is_none() && v < NEGLIGIBLE {
            break;
        }
        let end = next.unwrap_or(u64::MAX).min(truncation + 1);
        total += v * weight(m, end);
        m = end;
    }
    (total, last)
}

/// `sum_{m=0}^{truncation} 2 m P(tau_bar > m)`.
///
/// The integer identity is `E[tau^2] = sum (2m + 1) P(tau > m)`; this form
/// drops `E[tau]` and so sits just below the exact second moment.
/// Fails when the tail has not decayed by `truncation`: the estimated
/// remainder must be below `1e-9`.
pub fn second_moment(t: &TailBound, truncation: u64) -> Result<f64> {
    let (total, _) = block_sum(t, truncation, |m, e| {
        // sum_{k=m}^{e-1} 2k = e(e-1) - m(m-1)
        let (m, e) = (m as f64, e as f64);
        e * (e - 1.0) - m * (m - 1.0)
    });
    let c_end = t.ccdf(truncation);
    if c_end < NEGLIGIBLE {
        return Ok(total);
    }
    let half = (truncation / 2).max(1);
    let c_half = t.ccdf(half);
    if t.next_change(truncation).is_none() {
        return Err(Error::DivergenceDetected(format!(
            "tail constant at {c_end:e} beyond m = {truncation}"
        )));
    }
    if c_end >= c_half {
        return Err(Error::DivergenceDetected(format!(
            "tail does not decay between m = {half} and m = {truncation}"
        )));
    }
    let r = (c_end / c_half).powf(1.0 / (truncation - half) as f64);
    let tn = truncation as f64;
    let remainder = 2.0 * c_end * (tn * r / (1.0 - r) + r / ((1.0 - r) * (1.0 - r)));
    if !(remainder < 1e-9) {
        return Err(Error::DivergenceDetected(format!(
            "remainder beyond m = {truncation} estimated at {remainder:e}"
        )));
    }
    Ok(total)
}

/// `sum_m P(tau_bar > m)`, the mean.
pub fn first_moment(t: &TailBound, truncation: u64) -> f64 {
    block_sum(t, truncation, |m, e| (e - m) as f64).0
}

/// Doubles the truncation from 1024 until [`second_moment`] accepts it.
pub fn second_moment_auto(t: &TailBound) -> Result<f64> {
    let mut trunc = 1024u64;
    loop {
        match second_moment(t, trunc) {
            Ok(v) => return Ok(v),
            Err(e) => {
                if trunc >= 1 << 60 {
                    return Err(e);
                }
                if let Error::DivergenceDetected(msg) = &e {
                    if msg.contains("constant") {
                        return Err(e);
                    }
                }
                trunc *= 2;
            }
        }
    }
}

/// Empirical CCDF point with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CcdfPoint {
    pub m: u64,
    pub prob: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// `P(tau > m)` for `m = 0..=max_m` from a sample.
pub fn empirical_ccdf(samples: &[u64], max_m: u64) -> Vec<CcdfPoint> {
    let n = samples.len();
    let mut counts = vec![0usize; max_m as usize + 2];
    for &s in samples {
        counts[(s.min(max_m + 1)) as usize] += 1;
    }
    // exceed[m] = #{s > m}
    let mut out = Vec::with_capacity(max_m as usize + 1);
    let mut at_most = 0usize;
    for m in 0..=max_m {
        at_most += counts[m as usize];
        let p = if n == 0 {
            0.0
        } else {
            (n - at_most) as f64 / n as f64
        };
        out.push(CcdfPoint {
            m,
            prob: p,
            std_error: proportion_std_error(p, n),
            samples: n,
        });
    }
    out
}

/// Result of the finitely-often proxy for `tau(n) <= sqrt(n)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SqrtScalingReport {
    /// `max over pairs tau(n) / sqrt(n)` for `n = 1..`.
    pub normalized_max: Vec<f64>,
    /// `mean over pairs tau(n) / sqrt(n)`.
    pub normalized_mean: Vec<f64>,
    /// Exceedances `max tau(n) > sqrt(n)` in the window before the trailing one.
    pub exceed_previous: usize,
    /// Exceedances in the trailing window.
    pub exceed_trailing: usize,
    pub passed: bool,
}

/// `max_aoi[k]` and `mean_aoi[k]` are taken at slot `n = k + 1`. The check
/// passes when exceedances in the trailing window `(N - w, N]` do not
/// outnumber those in `(N - 2w, N - w]`.
pub fn sqrt_scaling_check(
    max_aoi: &[u64],
    mean_aoi: &[f64],
    window: usize,
) -> Result<SqrtScalingReport> {
    let n = max_aoi.len();
    if n < 1000 || mean_aoi.len() != n {
        return Err(invalid(
            "AoI series must have at least 1000 slots and matching lengths",
        ));
    }
    if window == 0 || 2 * window > n {
        return Err(invalid("window must satisfy 0 < 2 window <= series length"));
    }
    let sq = |k: usize| ((k + 1) as f64).sqrt();
    let normalized_max: Vec<f64> = max_aoi
        .iter()
        .enumerate()
        .map(|(k, &t)| t as f64 / sq(k))
        .collect();
    let normalized_mean: Vec<f64> = mean_aoi
        .iter()
        .enumerate()
        .map(|(k, &t)| t / sq(k))
        .collect();
    let exceed = |lo: usize, hi: usize| (lo..hi).filter(|&k| max_aoi[k] as f64 > sq(k)).count();
    let exceed_trailing = exceed(n - window, n);
    let exceed_previous = exceed(n - 2 * window, n - window);
    Ok(SqrtScalingReport {
        normalized_max,
        normalized_mean,
        exceed_previous,
        exceed_trailing,
        passed: exceed_trailing <= exceed_previous,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LagGap {
    pub lag: usize,
    /// `max_b |P(A^n) - P(A^n | A^{n-lag} = b)|`, if every bucket had
    /// enough samples.
    pub gap: Option<f64>,
    pub std_error: Option<f64>,
}

impl LagGap {
    pub fn significant(&self) -> bool {
        matches!((self.gap, self.std_error), (Some(g), Some(s)) if g > 3.0 * s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayEstimate {
    pub marginal: f64,
    pub per_lag: Vec<LagGap>,
    /// Geometric rate fitted on the leading run of significant gaps; zero
    /// when no dependence is detectable.
    pub q_hat: f64,
    pub fitted_lags: usize,
}

/// Conditional-versus-marginal success gaps per lag and a least-squares
/// geometric fit `log gap ~ c + lag log q`.
pub fn dependency_decay_estimate(
    success: &[bool],
    lags: &[usize],
    min_bin: usize,
) -> Result<DecayEstimate> {
    let n = success.len();
    if n < 2 {
        return Err(invalid("success trace too short"));
    }
    let marginal = success.iter().filter(|&&s| s).count() as f64 / n as f64;
    let mut per_lag = Vec::with_capacity(lags.len());
    for &lag in lags {
        if lag == 0 || lag >= n {
            per_lag.push(LagGap {
                lag,
                gap: None,
                std_error: None,
            });
            continue;
        }
        let mut count = [0usize; 2];
        let mut hits = [0usize; 2];
        for t in lag..n {
            let b = success[t - lag] as usize;
            count[b] += 1;
            hits[b] += success[t] as usize;
        }
        if count.iter().any(|&c| c < min_bin) {
            per_lag.push(LagGap {
                lag,
                gap: None,
                std_error: None,
            });
            continue;
        }
        let mut best = (0.0, 0.0);
        for b in 0..2 {
            let p = hits[b] as f64 / count[b] as f64;
            let g = (p - marginal).abs();
            if g >= best.0 {
                best = (g, proportion_std_error(p, count[b]));
            }
        }
        per_lag.push(LagGap {
            lag,
            gap: Some(best.0),
            std_error: Some(best.1),
        });
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for g in &per_lag {
        if !g.significant() {
            break;
        }
        xs.push(g.lag as f64);
        ys.push(g.gap.unwrap().ln());
    }
    let q_hat = if xs.len() >= 2 {
        linear_fit(&xs, &ys).map_or(0.0, |(_, slope)| slope.exp().min(1.0))
    } else {
        0.0
    };
    Ok(DecayEstimate {
        marginal,
        per_lag,
        q_hat,
        fitted_lags: xs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::config_rng;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn single_edge_examples() {
        let t = single_edge_tail(0.5, 0.5).unwrap();
        // 0.5^(sqrt(1) - 2) = 2, clamped.
        assert_eq!(t.ccdf(0), 1.0);
        assert!(t.ccdf(100_000) < 1e-30);
        assert!(single_edge_tail(0.0, 0.5).is_err());
        assert!(single_edge_tail(0.5, 1.0).is_err());
    }

    #[test]
    fn single_edge_nonincreasing_beyond_cutoff() {
        let t = single_edge_tail(0.9, 0.5).unwrap();
        let mm = t.cutoff();
        for m in 0..mm {
            assert_eq!(t.ccdf(m), 1.0);
        }
        for m in mm..10_000 {
            assert!(t.ccdf(m + 1) <= t.ccdf(m));
        }
        // Cutoff is the first index where the raw expression is at most one.
        let raw = |m: f64| 0.9f64.powf((m + 1.0).sqrt() - 2.0) + m.sqrt() * 0.5f64.powf(m.sqrt());
        assert!(raw(mm as f64) <= 1.0 && raw(mm as f64 - 1.0) > 1.0);
    }

    #[test]
    fn raw_expression_is_used_where_it_decreases() {
        let t = single_edge_tail(0.6, 0.3).unwrap();
        let raw = |m: f64| 0.6f64.powf((m + 1.0).sqrt() - 2.0) + m.sqrt() * 0.3f64.powf(m.sqrt());
        for m in [50u64, 200, 1000, 5000] {
            assert!((t.ccdf(m) - raw(m as f64)).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_is_additive_identity() {
        let t = single_edge_tail(0.7, 0.4).unwrap();
        let c = compose_tails(&t, &TailBound::zero());
        for m in 0..3000 {
            assert_eq!(c.ccdf(m), t.ccdf(m / 2));
        }
    }

    #[test]
    fn composition_is_monotone() {
        let lo = single_edge_tail(0.5, 0.3).unwrap();
        let hi = single_edge_tail(0.7, 0.5).unwrap();
        let other = single_edge_tail(0.6, 0.4).unwrap();
        let a = compose_tails(&lo, &other);
        let b = compose_tails(&hi, &other);
        for m in 0..5000 {
            assert!(lo.ccdf(m) <= hi.ccdf(m));
            assert!(a.ccdf(m) <= b.ccdf(m));
        }
    }

    #[test]
    fn second_moment_examples() {
        assert_eq!(second_moment(&TailBound::zero(), 100).unwrap(), 0.0);
        let step = TailBound::from_values(vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(second_moment(&step, 100).unwrap(), 6.0);
        let t = single_edge_tail(0.5, 0.5).unwrap();
        let a = second_moment(&t, 50_000).unwrap();
        let b = second_moment(&t, 100_000).unwrap();
        assert!(a.is_finite() && (a - b).abs() < 1e-6);
        assert!(second_moment(&t, 10).is_err());
    }

    #[test]
    fn constant_tail_is_divergent() {
        let flat = TailBound::from_values(vec![0.5; 10]).unwrap();
        // Finite support: fine.
        assert!(second_moment(&flat, 100).is_ok());
        let t = single_edge_tail(0.999, 0.5).unwrap();
        assert!(matches!(
            second_moment(&t, 64),
            Err(Error::DivergenceDetected(_))
        ));
    }

    #[test]
    fn block_sum_matches_direct_sum() {
        let t = compose_tails(
            &single_edge_tail(0.6, 0.4).unwrap(),
            &single_edge_tail(0.5, 0.3).unwrap(),
        );
        let direct: f64 = (0..=40_000u64).map(|m| 2.0 * m as f64 * t.ccdf(m)).sum();
        let blocks = second_moment(&t, 40_000).unwrap();
        assert!((direct - blocks).abs() <= 1e-9 * direct);
    }

    #[test]
    fn composition_moment_relation() {
        // With floor halving, sum_m 2m c(floor(m/2)) = 4 sum_j 2j c(j) + 2 sum_j c(j),
        // so the composed moment is bounded by 4(E1 + E2) + 2(mean1 + mean2).
        let t1 = single_edge_tail(0.6, 0.4).unwrap();
        let t2 = single_edge_tail(0.5, 0.3).unwrap();
        let c = compose_tails(&t1, &t2);
        let e = |t: &TailBound| second_moment_auto(t).unwrap();
        let mean = |t: &TailBound| first_moment(t, 1 << 40);
        let lhs = e(&c);
        let rhs4 = 4.0 * (e(&t1) + e(&t2)) + 2.0 * (mean(&t1) + mean(&t2));
        assert!(lhs <= rhs4 * (1.0 + 1e-12));
        // The factor-two form does not hold for these edges.
        assert!(lhs > 2.0 * (e(&t1) + e(&t2)));
    }

    #[test]
    fn path_bound_examples() {
        let single = path_bound(&[(0.5, 0.5)]).unwrap();
        let t = single_edge_tail(0.5, 0.5).unwrap();
        for m in 0..2000 {
            assert_eq!(single.ccdf(m), t.ccdf(m));
        }
        let long = path_bound(&vec![(0.5, 0.5); 31]).unwrap();
        let v = second_moment_auto(&long).unwrap();
        assert!(v.is_finite() && v > 0.0);
        assert!(path_bound(&[]).is_err());
    }

    #[test]
    fn empirical_ccdf_counts() {
        let c = empirical_ccdf(&[0, 1, 1, 3], 4);
        let p: Vec<f64> = c.iter().map(|x| x.prob).collect();
        assert_eq!(p, vec![0.75, 0.25, 0.25, 0.0, 0.0]);
    }

    #[test]
    fn sqrt_check_examples() {
        let n = 4000;
        let flat: Vec<u64> = vec![1; n];
        let r = sqrt_scaling_check(&flat, &vec![1.0; n], 1000).unwrap();
        assert!(r.passed && r.exceed_trailing == 0);
        assert!(r.normalized_max[n - 1] < 0.02);
        let growing: Vec<u64> = (1..=n as u64).collect();
        let r = sqrt_scaling_check(&growing, &vec![0.0; n], 1000).unwrap();
        assert_eq!(r.exceed_trailing, 1000);
        assert!(sqrt_scaling_check(&flat[..10], &[1.0; 10], 2).is_err());
    }

    #[test]
    fn iid_edge_has_no_detectable_dependence() {
        let mut rng = config_rng(21);
        let s: Vec<bool> = (0..200_000).map(|_| rng.random::<f64>() < 0.6).collect();
        let est = dependency_decay_estimate(&s, &(1..=20).collect::<Vec<_>>(), 100).unwrap();
        for g in &est.per_lag {
            assert!(
                g.gap.unwrap() <= 4.0 * g.std_error.unwrap(),
                "lag {}",
                g.lag
            );
        }
        assert!(est.q_hat < 0.2);
    }

    #[test]
    fn markov_edge_rate_matches_second_eigenvalue() {
        // Gilbert-Elliott edge: states good/bad with success 0.9/0.2.
        let p = [[0.9, 0.1], [0.2, 0.8]];
        let lambda = 1.0 - p[0][1] - p[1][0];
        let mut rng = config_rng(22);
        let mut s = 0usize;
        let trace: Vec<bool> = (0..400_000)
            .map(|_| {
                s = if rng.random::<f64>() < p[s][0] { 0 } else { 1 };
                rng.random::<f64>() < [0.9, 0.2][s]
            })
            .collect();
        let est = dependency_decay_estimate(&trace, &(1..=30).collect::<Vec<_>>(), 100).unwrap();
        assert!(est.fitted_lags >= 3);
        assert!(
            est.q_hat >= 0.5 * lambda && est.q_hat <= (2.0 * lambda).min(1.0),
            "{}",
            est.q_hat
        );
        // Gaps shrink with lag once past lag 1, up to noise.
        let gaps: Vec<(f64, f64)> = est
            .per_lag
            .iter()
            .map(|g| (g.gap.unwrap(), g.std_error.unwrap()))
            .collect();
        for w in gaps.windows(2).skip(1) {
            assert!(w[1].0 <= w[0].0 + 3.0 * (w[0].1 + w[1].1));
        }
    }

    proptest! {
        #[test]
        fn tail_bounds_are_ccdfs(p in 0.05f64..0.95, q in 0.05f64..0.9, p2 in 0.05f64..0.95, q2 in 0.05f64..0.9) {
            let a = single_edge_tail(p, q).unwrap();
            let b = single_edge_tail(p2, q2).unwrap();
            let c = compose_tails(&a, &b);
            for t in [&a, &b, &c] {
                let mut prev = 1.0;
                for m in 0..3000 {
                    let v = t.ccdf(m);
                    prop_assert!((0.0..=1.0).contains(&v));
                    prop_assert!(v <= prev);
                    if m < t.cutoff() {
                        prop_assert_eq!(v, 1.0);
                    }
                    prev = v;
                }
            }
        }
    }
}
