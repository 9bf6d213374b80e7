//! Stochastic sensor coverage benchmark.
//!
//! Agent `i` at `x_i` detects a target at `y` with probability
//! `p = exp(-xi |x_i - y|^2)`; all agents miss with probability
//! `p_e = prod_i (1 - p_i)`. The objective averages `p_e` over the unit disk
//! and a Courant-Beltrami penalty keeps `p_e <= delta` at every target.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::optimizer::Problem;
use crate::rng::{config_rng, SimRng};

pub type Point = [f64; 2];

fn dist2(a: &[f64], b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

pub fn detection_prob(agent: &[f64], target: &Point, xi: f64) -> f64 {
    (-xi * dist2(agent, target)).exp()
}

pub fn error_prob(positions: &[Vec<f64>], target: &Point, xi: f64) -> f64 {
    positions
        .iter()
        .map(|x| 1.0 - detection_prob(x, target, xi))
        .product()
}

/// `d p_e / d x_i = 2 xi (x_i - y) p_i prod_{k != i} (1 - p_k)`.
pub fn grad_error_prob(positions: &[Vec<f64>], agent: usize, target: &Point, xi: f64) -> Point {
    let mut others = 1.0;
    for (k, x) in positions.iter().enumerate() {
        if k != agent {
            others *= 1.0 - detection_prob(x, target, xi);
        }
    }
    let x = &positions[agent];
    let c = 2.0 * xi * detection_prob(x, target, xi) * others;
    [c * (x[0] - target[0]), c * (x[1] - target[1])]
}

/// Sample mean of `p_e` over points drawn uniformly on the unit disk.
pub fn objective_sample(positions: &[Vec<f64>], xi: f64, disk_samples: &[Point]) -> Result<f64> {
    if disk_samples.is_empty() {
        return Err(invalid("objective needs at least one disk sample"));
    }
    let s: f64 = disk_samples
        .iter()
        .map(|y| error_prob(positions, y, xi))
        .sum();
    Ok(s / disk_samples.len() as f64)
}

pub fn grad_objective_agent(
    positions: &[Vec<f64>],
    agent: usize,
    xi: f64,
    disk_samples: &[Point],
) -> Point {
    let mut g = [0.0; 2];
    for y in disk_samples {
        let d = grad_error_prob(positions, agent, y, xi);
        g[0] += d[0];
        g[1] += d[1];
    }
    let n = disk_samples.len().max(1) as f64;
    [g[0] / n, g[1] / n]
}

pub fn grad_objective_sample(
    positions: &[Vec<f64>],
    xi: f64,
    disk_samples: &[Point],
) -> Vec<Point> {
    (0..positions.len())
        .map(|i| grad_objective_agent(positions, i, xi, disk_samples))
        .collect()
}

/// `sum_y max(0, p_e(y) - delta)^2`.
pub fn penalty(positions: &[Vec<f64>], xi: f64, targets: &[Point], delta: f64) -> f64 {
    targets
        .iter()
        .map(|y| {
            let v = (error_prob(positions, y, xi) - delta).max(0.0);
            v * v
        })
        .sum()
}

pub fn grad_penalty_agent(
    positions: &[Vec<f64>],
    agent: usize,
    xi: f64,
    targets: &[Point],
    delta: f64,
) -> Point {
    let mut g = [0.0; 2];
    for y in targets {
        let v = error_prob(positions, y, xi) - delta;
        if v > 0.0 {
            let d = grad_error_prob(positions, agent, y, xi);
            g[0] += 2.0 * v * d[0];
            g[1] += 2.0 * v * d[1];
        }
    }
    g
}

pub fn grad_penalty(positions: &[Vec<f64>], xi: f64, targets: &[Point], delta: f64) -> Vec<Point> {
    (0..positions.len())
        .map(|i| grad_penalty_agent(positions, i, xi, targets, delta))
        .collect()
}

/// Distribution of the sensing parameter `xi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum XiDistribution {
    Uniform { low: f64, high: f64 },
}

impl Default for XiDistribution {
    fn default() -> Self {
        XiDistribution::Uniform {
            low: 0.5,
            high: 1.5,
        }
    }
}

const GL5_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

impl XiDistribution {
    pub fn validate(&self) -> Result<()> {
        let XiDistribution::Uniform { low, high } = *self;
        if !(low > 0.0 && low <= high && high.is_finite()) {
            return Err(invalid("xi support must satisfy 0 < low <= high < inf"));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let XiDistribution::Uniform { low, high } = *self;
        if low == high {
            low
        } else {
            low + (high - low) * rng.random::<f64>()
        }
    }

    pub fn support(&self) -> (f64, f64) {
        let XiDistribution::Uniform { low, high } = *self;
        (low, high)
    }

    /// Nodes and probability weights of a 5-point Gauss-Legendre rule.
    pub fn quadrature(&self) -> Vec<(f64, f64)> {
        let XiDistribution::Uniform { low, high } = *self;
        if low == high {
            return vec![(low, 1.0)];
        }
        let (c, h) = (0.5 * (low + high), 0.5 * (high - low));
        GL5_NODES
            .iter()
            .zip(GL5_WEIGHTS)
            .map(|(&t, w)| (c + h * t, 0.5 * w))
            .collect()
    }
}

/// Uniform point on the closed unit disk.
pub fn sample_disk<R: Rng + ?Sized>(rng: &mut R) -> Point {
    let r = rng.random::<f64>().sqrt();
    let th = 2.0 * PI * rng.random::<f64>();
    [r * th.cos(), r * th.sin()]
}

/// Regular pentagon of the given radius, first vertex on the positive x axis.
pub fn pentagon_targets(radius: f64) -> Vec<Point> {
    (0..5)
        .map(|k| {
            let th = 2.0 * PI * k as f64 / 5.0;
            [radius * th.cos(), radius * th.sin()]
        })
        .collect()
}

/// Uniform positions on the annulus `r_min <= |x| <= r_max`.
pub fn annulus_positions(count: usize, r_min: f64, r_max: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = config_rng(seed);
    (0..count)
        .map(|_| {
            let u: f64 = rng.random();
            let r = (r_min * r_min + u * (r_max * r_max - r_min * r_min)).sqrt();
            let th = 2.0 * PI * rng.random::<f64>();
            vec![r * th.cos(), r * th.sin()]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageProblem {
    pub agent_count: usize,
    pub targets: Vec<Point>,
    pub delta: f64,
    pub xi: XiDistribution,
    pub mc_samples: usize,
    pub penalty_enabled: bool,
}

impl CoverageProblem {
    pub fn validate(&self) -> Result<()> {
        if self.agent_count == 0 {
            return Err(invalid("coverage problem needs at least one agent"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid("delta must lie in (0,1)"));
        }
        if self
            .targets
            .iter()
            .any(|t| t[0] * t[0] + t[1] * t[1] > 1.0 + 1e-12)
        {
            return Err(invalid("targets must lie in the closed unit disk"));
        }
        if self.mc_samples == 0 {
            return Err(invalid("mc_samples must be positive"));
        }
        self.xi.validate()
    }

    pub fn unconstrained(&self) -> Self {
        Self {
            penalty_enabled: false,
            ..self.clone()
        }
    }
}

impl Problem for CoverageProblem {
    type Noise = f64;

    fn agent_count(&self) -> usize {
        self.agent_count
    }

    fn dim(&self) -> usize {
        2
    }

    fn sample_noise(&self, rng: &mut SimRng) -> f64 {
        self.xi.sample(rng)
    }

    fn gradients(
        &self,
        x: &[Vec<f64>],
        agent: usize,
        xi: &f64,
        rng: &mut SimRng,
    ) -> (Vec<f64>, Vec<f64>) {
        let disk: Vec<Point> = (0..self.mc_samples).map(|_| sample_disk(rng)).collect();
        let gf = grad_objective_agent(x, agent, *xi, &disk);
        let gp = if self.penalty_enabled {
            grad_penalty_agent(x, agent, *xi, &self.targets, self.delta)
        } else {
            [0.0, 0.0]
        };
        (gf.to_vec(), gp.to_vec())
    }
}

/// Fixed evaluation set for reporting: deterministic disk points and a
/// Gauss-Legendre rule in `xi`, so metric series are comparable across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSet {
    pub disk: Vec<Point>,
    pub xi_rule: Vec<(f64, f64)>,
}

impl MetricSet {
    pub fn new(xi: &XiDistribution, points: usize, seed: u64) -> Self {
        let mut rng = config_rng(seed);
        Self {
            disk: (0..points).map(|_| sample_disk(&mut rng)).collect(),
            xi_rule: xi.quadrature(),
        }
    }

    /// `E_xi` of the disk-averaged error probability.
    pub fn objective(&self, positions: &[Vec<f64>]) -> f64 {
        let mut acc = 0.0;
        for y in &self.disk {
            for &(xi, w) in &self.xi_rule {
                acc += w * error_prob(positions, y, xi);
            }
        }
        acc / self.disk.len() as f64
    }

    /// `E_xi` of the penalty.
    pub fn penalty(&self, positions: &[Vec<f64>], targets: &[Point], delta: f64) -> f64 {
        self.xi_rule
            .iter()
            .map(|&(xi, w)| w * penalty(positions, xi, targets, delta))
            .sum()
    }

    /// `E_xi p_e` at each target.
    pub fn target_errors(&self, positions: &[Vec<f64>], targets: &[Point]) -> Vec<f64> {
        targets
            .iter()
            .map(|y| {
                self.xi_rule
                    .iter()
                    .map(|&(xi, w)| w * error_prob(positions, y, xi))
                    .sum()
            })
            .collect()
    }
}
