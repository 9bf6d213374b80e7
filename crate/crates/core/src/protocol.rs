//! Communication protocol: belief vectors, timestamp merging, flooding
//! plans and age-of-information bookkeeping.
//!
//! Agent-visible state ([`BeliefVector`], [`TransmissionPlan`]) carries
//! values, timestamps and origins only. The global slot at which each value
//! was produced lives in [`AoiTracker`], which belongs to the simulator and
//! is never handed to an agent.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{invalid, Result};

/// One stored copy of an agent's variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub value: Vec<f64>,
    pub timestamp: u64,
    pub origin: usize,
}

/// A component as it travels over an edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub origin: usize,
    pub value: Vec<f64>,
    pub timestamp: u64,
}

/// An agent's timestamped copies of every agent's variable.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefVector {
    owner: usize,
    components: Vec<Component>,
}

impl BeliefVector {
    /// Every component starts at timestamp 1 with the given initial values.
    pub fn new(owner: usize, initial: Vec<Vec<f64>>) -> Result<Self> {
        if owner >= initial.len() {
            return Err(invalid("belief owner out of range"));
        }
        let components = initial
            .into_iter()
            .enumerate()
            .map(|(origin, value)| Component {
                value,
                timestamp: 1,
                origin,
            })
            .collect();
        Ok(Self { owner, components })
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn component(&self, j: usize) -> &Component {
        &self.components[j]
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Local update count of the owner.
    pub fn nu(&self) -> u64 {
        self.components[self.owner].timestamp
    }

    /// Values of all components, indexed by origin.
    pub fn values(&self) -> Vec<Vec<f64>> {
        self.components.iter().map(|c| c.value.clone()).collect()
    }

    pub fn message(&self, j: usize) -> Message {
        let c = &self.components[j];
        Message {
            origin: j,
            value: c.value.clone(),
            timestamp: c.timestamp,
        }
    }

    /// Keep each received entry iff it is strictly newer than the stored
    /// copy. Returns the ids that changed, ascending.
    pub fn merge_incoming(&mut self, received: &[Message]) -> Result<Vec<usize>> {
        if let Some(m) = received.iter().find(|m| m.origin >= self.components.len()) {
            return Err(invalid(format!("origin {} out of range", m.origin)));
        }
        let mut changed = Vec::new();
        for m in received {
            let c = &mut self.components[m.origin];
            if m.timestamp > c.timestamp {
                c.value.clone_from(&m.value);
                c.timestamp = m.timestamp;
                if !changed.contains(&m.origin) {
                    changed.push(m.origin);
                }
            }
        }
        changed.sort_unstable();
        Ok(changed)
    }

    /// Store a freshly computed own value and advance the update count.
    pub fn on_local_update(&mut self, new_value: Vec<f64>) {
        let c = &mut self.components[self.owner];
        c.value = new_value;
        c.timestamp += 1;
    }
}

/// Per-neighbor FIFO queues of component ids awaiting transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionPlan {
    owner: usize,
    neighbors: Vec<usize>,
    queues: Vec<VecDeque<usize>>,
    queued: Vec<Vec<bool>>,
}

impl TransmissionPlan {
    pub fn new(owner: usize, neighbors: Vec<usize>, component_count: usize) -> Self {
        let k = neighbors.len();
        Self {
            owner,
            neighbors,
            queues: vec![VecDeque::new(); k],
            queued: vec![vec![false; component_count]; k],
        }
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn neighbors(&self) -> &[usize] {
        &self.neighbors
    }

    /// Pending ids toward `neighbor`, head first.
    pub fn queue(&self, neighbor: usize) -> Option<&VecDeque<usize>> {
        self.slot_of(neighbor).map(|k| &self.queues[k])
    }

    fn slot_of(&self, neighbor: usize) -> Option<usize> {
        self.neighbors.iter().position(|&n| n == neighbor)
    }

    fn enqueue(&mut self, k: usize, component: usize) {
        if !self.queued[k][component] {
            self.queued[k][component] = true;
            self.queues[k].push_back(component);
        }
    }

    /// Enqueue each changed component toward every neighbor except its
    /// origin and the neighbor it arrived from (`None` for local updates).
    pub fn flood_on_change(&mut self, changed: &[(usize, Option<usize>)]) {
        for &(component, from) in changed {
            for k in 0..self.neighbors.len() {
                let n = self.neighbors[k];
                if n != component && Some(n) != from {
                    self.enqueue(k, component);
                }
            }
        }
    }

    /// Dequeue up to `capacity` ids toward `neighbor` if the slot succeeded.
    pub fn transmit_slot(&mut self, neighbor: usize, success: bool, capacity: usize) -> Vec<usize> {
        let Some(k) = self.slot_of(neighbor) else {
            return Vec::new();
        };
        if !success {
            return Vec::new();
        }
        let take = capacity.min(self.queues[k].len());
        let out: Vec<usize> = self.queues[k].drain(..take).collect();
        for &c in &out {
            self.queued[k][c] = false;
        }
        out
    }
}

/// Simulator-side record of when each value was produced and of the newest
/// timestamps delivered over each direct edge.
#[derive(Debug, Clone)]
pub struct AoiTracker {
    /// `birth[j][t - 1]`: slot at which agent `j` produced timestamp `t`.
    birth: Vec<Vec<u64>>,
    /// `direct[i][j]`: newest timestamp of `x_i` delivered to `j` over (i, j).
    direct: Vec<Vec<Option<u64>>>,
    edges: Vec<(usize, usize)>,
}

/// One slot of pair and edge ages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AoiRow {
    pub slot: u64,
    /// `pair[i][j]`: age of agent `j`'s newest value held at `i`.
    pub pair: Vec<Vec<u64>>,
    /// `(i, j, age)` for each union edge: age of `x_i` at `j` counting only
    /// deliveries over the edge itself.
    pub edge: Vec<(usize, usize, u64)>,
}

impl AoiRow {
    /// Mean over ordered pairs `i != j`.
    pub fn mean_off_diagonal(&self) -> f64 {
        let d = self.pair.len();
        if d < 2 {
            return 0.0;
        }
        let mut s = 0u64;
        for (i, row) in self.pair.iter().enumerate() {
            for (j, &t) in row.iter().enumerate() {
                if i != j {
                    s += t;
                }
            }
        }
        s as f64 / (d * (d - 1)) as f64
    }

    pub fn max_off_diagonal(&self) -> u64 {
        let mut m = 0;
        for (i, row) in self.pair.iter().enumerate() {
            for (j, &t) in row.iter().enumerate() {
                if i != j {
                    m = m.max(t);
                }
            }
        }
        m
    }

    pub fn mean_edge(&self) -> f64 {
        if self.edge.is_empty() {
            0.0
        } else {
            self.edge.iter().map(|e| e.2 as f64).sum::<f64>() / self.edge.len() as f64
        }
    }
}

impl AoiTracker {
    /// Initial values (timestamp 1) are produced at slot 0 and known everywhere.
    pub fn new(agent_count: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut direct = vec![vec![None; agent_count]; agent_count];
        for &(i, j) in &edges {
            direct[i][j] = Some(1);
        }
        Self {
            birth: vec![vec![0]; agent_count],
            direct,
            edges,
        }
    }

    /// Register that `agent` produced its next timestamp at `slot`.
    pub fn on_local_update(&mut self, agent: usize, slot: u64) {
        self.birth[agent].push(slot);
    }

    /// Register a delivery from `sender` to `receiver`.
    pub fn on_delivery(&mut self, sender: usize, receiver: usize, messages: &[Message]) {
        if let Some(m) = messages.iter().find(|m| m.origin == sender) {
            if let Some(t) = self.direct[sender][receiver].as_mut() {
                *t = (*t).max(m.timestamp);
            }
        }
    }

    /// Slot at which `origin` produced `timestamp`.
    pub fn birth_slot(&self, origin: usize, timestamp: u64) -> u64 {
        self.birth[origin][(timestamp - 1) as usize]
    }

    pub fn record(&self, beliefs: &[BeliefVector], slot: u64) -> AoiRow {
        let pair = beliefs
            .iter()
            .map(|b| {
                b.components()
                    .iter()
                    .map(|c| slot - self.birth_slot(c.origin, c.timestamp))
                    .collect()
            })
            .collect();
        let edge = self
            .edges
            .iter()
            .map(|&(i, j)| {
                let t = self.direct[i][j].unwrap_or(1);
                (i, j, slot - self.birth_slot(i, t))
            })
            .collect();
        AoiRow { slot, pair, edge }
    }

    /// Per union edge, the age of the sender's value at the receiver counting
    /// only deliveries over that edge. Order follows the tracker's edge list.
    pub fn edge_ages(&self, slot: u64) -> Vec<u64> {
        self.edges
            .iter()
            .map(|&(i, j)| slot - self.birth_slot(i, self.direct[i][j].unwrap_or(1)))
            .collect()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Mean off-diagonal pair age without materialising a row.
    pub fn mean_pair_age(&self, beliefs: &[BeliefVector], slot: u64) -> (f64, u64) {
        let d = beliefs.len();
        if d < 2 {
            return (0.0, 0);
        }
        let mut sum = 0u64;
        let mut max = 0u64;
        for (i, b) in beliefs.iter().enumerate() {
            for (j, c) in b.components().iter().enumerate() {
                if i != j {
                    let t = slot - self.birth_slot(c.origin, c.timestamp);
                    sum += t;
                    max = max.max(t);
                }
            }
        }
        (sum as f64 / (d * (d - 1)) as f64, max)
    }
}
