//! Directed graphs and stochastic topology schedules.

use std::collections::{BTreeSet, VecDeque};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Result};

/// A directed graph without self-loops or duplicate edges.
///
/// Edges keep their declaration order; the engine maps physical channels to
/// edge slots by that order. Equality compares edge *sets*.
#[derive(Debug, Clone)]
pub struct DirectedGraph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
}

impl PartialEq for DirectedGraph {
    fn eq(&self, other: &Self) -> bool {
        self.node_count == other.node_count && self.edge_set() == other.edge_set()
    }
}

impl Eq for DirectedGraph {}

impl DirectedGraph {
    pub fn new(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if node_count == 0 {
            return Err(invalid("graph needs at least one node"));
        }
        let mut seen = BTreeSet::new();
        let mut list = Vec::new();
        for (i, j) in edges {
            if i >= node_count || j >= node_count {
                return Err(invalid(format!("edge ({i},{j}) outside 0..{node_count}")));
            }
            if i == j {
                return Err(invalid(format!("self-loop at node {i}")));
            }
            if !seen.insert((i, j)) {
                return Err(invalid(format!("duplicate edge ({i},{j})")));
            }
            list.push((i, j));
        }
        Ok(Self {
            node_count,
            edges: list,
        })
    }

    pub fn empty(node_count: usize) -> Result<Self> {
        Self::new(node_count, std::iter::empty())
    }

    /// Complete directed graph: every ordered pair `i != j`.
    pub fn complete(node_count: usize) -> Result<Self> {
        let edges = (0..node_count).flat_map(|i| {
            (0..node_count)
                .filter(move |&j| j != i)
                .map(move |j| (i, j))
        });
        Self::new(node_count, edges)
    }

    /// Directed cycle through `nodes` in the given order, on a graph of
    /// `node_count` nodes.
    pub fn cycle_through(node_count: usize, nodes: &[usize]) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(invalid("a cycle needs at least two nodes"));
        }
        let edges = (0..nodes.len()).map(|k| (nodes[k], nodes[(k + 1) % nodes.len()]));
        Self::new(node_count, edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Edges in declaration order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_set(&self) -> BTreeSet<(usize, usize)> {
        self.edges.iter().copied().collect()
    }

    pub fn contains(&self, edge: (usize, usize)) -> bool {
        self.edges.contains(&edge)
    }

    pub fn out_neighbors(&self, node: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter(|e| e.0 == node)
            .map(|e| e.1)
            .collect();
        out.sort_unstable();
        out
    }

    fn adjacency(&self, reverse: bool) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count];
        for &(i, j) in &self.edges {
            if reverse {
                adj[j].push(i);
            } else {
                adj[i].push(j);
            }
        }
        adj
    }

    fn reach(adj: &[Vec<usize>], start: usize) -> Vec<bool> {
        let mut seen = vec![false; adj.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    /// Forward and reverse reachability sweeps from node 0.
    pub fn is_strongly_connected(&self) -> bool {
        let fwd = Self::reach(&self.adjacency(false), 0);
        let bwd = Self::reach(&self.adjacency(true), 0);
        fwd.iter().chain(bwd.iter()).all(|&b| b)
    }

    /// Shortest directed path from `from` to `to` as a node sequence.
    pub fn shortest_path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let adj = self.adjacency(false);
        let mut prev = vec![usize::MAX; self.node_count];
        let mut seen = vec![false; self.node_count];
        seen[from] = true;
        let mut queue = VecDeque::from([from]);
        while let Some(v) = queue.pop_front() {
            if v == to {
                break;
            }
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    prev[w] = v;
                    queue.push_back(w);
                }
            }
        }
        if !seen[to] {
            return None;
        }
        let mut path = vec![to];
        let mut cur = to;
        while cur != from {
            cur = prev[cur];
            path.push(cur);
        }
        path.reverse();
        Some(path)
    }

    /// Closed walk that visits every node at least `passes` times, built by
    /// chaining shortest paths `0 -> 1 -> ... -> n-1 -> 0` and repeating.
    pub fn covering_walk(&self, passes: usize) -> Result<Vec<(usize, usize)>> {
        if !self.is_strongly_connected() {
            return Err(invalid("covering walk needs a strongly connected graph"));
        }
        let n = self.node_count;
        let mut lap = Vec::new();
        for k in 0..n {
            let path = self
                .shortest_path(k, (k + 1) % n)
                .expect("strongly connected graph has all paths");
            lap.extend(path.windows(2).map(|w| (w[0], w[1])));
        }
        Ok(lap
            .iter()
            .copied()
            .cycle()
            .take(lap.len() * passes.max(1))
            .collect())
    }
}

/// Edge-set union of a nonempty list of graphs over a shared node set.
pub fn union_graph(graphs: &[DirectedGraph]) -> Result<DirectedGraph> {
    let first = graphs
        .first()
        .ok_or_else(|| invalid("union of an empty graph list"))?;
    let n = first.node_count;
    let mut seen = BTreeSet::new();
    let mut edges = Vec::new();
    for g in graphs {
        if g.node_count != n {
            return Err(invalid(format!(
                "node count mismatch in union: {} vs {n}",
                g.node_count
            )));
        }
        for &e in &g.edges {
            if seen.insert(e) {
                edges.push(e);
            }
        }
    }
    DirectedGraph::new(n, edges)
}

/// Four edge-disjoint directed cycles on `n` nodes (`n` even, `n >= 4`)
/// whose union is strongly connected: a cycle on each half of the nodes,
/// a forward cycle over the even nodes and a backward cycle over the odd
/// nodes. For `n = 16` each topology has eight edges.
pub fn interleaved_cycles(n: usize) -> Result<Vec<DirectedGraph>> {
    if n < 4 || !n.is_multiple_of(2) {
        return Err(invalid("interleaved cycles need an even node count >= 4"));
    }
    let h = n / 2;
    let first: Vec<usize> = (0..h).collect();
    let second: Vec<usize> = (h..n).collect();
    let evens: Vec<usize> = (0..n).step_by(2).collect();
    let odds: Vec<usize> = (1..n).step_by(2).rev().collect();
    [first, second, evens, odds]
        .iter()
        .map(|nodes| DirectedGraph::cycle_through(n, nodes))
        .collect()
}

/// A finite set of topologies with an i.i.d. per-slot categorical selection.
#[derive(Debug, Clone)]
pub struct TopologySchedule {
    graphs: Vec<DirectedGraph>,
    probabilities: Vec<f64>,
    epsilon_floor: f64,
    sampler: WeightedIndex<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConnectivityReport {
    pub connected: bool,
    pub min_graph_probability: f64,
    pub epsilon_floor: f64,
    pub passed: bool,
}

impl TopologySchedule {
    pub fn new(
        graphs: Vec<DirectedGraph>,
        probabilities: Vec<f64>,
        epsilon_floor: f64,
    ) -> Result<Self> {
        if graphs.is_empty() {
            return Err(invalid("topology schedule needs at least one graph"));
        }
        if graphs.len() != probabilities.len() {
            return Err(invalid("one selection probability per graph"));
        }
        let n = graphs[0].node_count;
        if graphs.iter().any(|g| g.node_count != n) {
            return Err(invalid("all topologies must share the node count"));
        }
        if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid("selection probabilities must lie in [0,1]"));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!(
                "selection probabilities sum to {total}, not 1"
            )));
        }
        if !(0.0..1.0).contains(&epsilon_floor) {
            return Err(invalid("epsilon floor must lie in [0,1)"));
        }
        let sampler = WeightedIndex::new(&probabilities).map_err(|e| invalid(e.to_string()))?;
        Ok(Self {
            graphs,
            probabilities,
            epsilon_floor,
            sampler,
        })
    }

    pub fn uniform(graphs: Vec<DirectedGraph>, epsilon_floor: f64) -> Result<Self> {
        let k = graphs.len().max(1);
        let probs = vec![1.0 / k as f64; graphs.len()];
        Self::new(graphs, probs, epsilon_floor)
    }

    pub fn graphs(&self) -> &[DirectedGraph] {
        &self.graphs
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn epsilon_floor(&self) -> f64 {
        self.epsilon_floor
    }

    pub fn node_count(&self) -> usize {
        self.graphs[0].node_count
    }

    pub fn union(&self) -> DirectedGraph {
        union_graph(&self.graphs).expect("schedule graphs validated at construction")
    }

    /// Stochastic strong connectivity: strongly connected union and every
    /// topology selected with probability above the floor.
    pub fn check_stochastic_strong_connectivity(&self) -> ConnectivityReport {
        let connected = self.union().is_strongly_connected();
        let min_graph_probability = self
            .probabilities
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        ConnectivityReport {
            connected,
            min_graph_probability,
            epsilon_floor: self.epsilon_floor,
            passed: connected && min_graph_probability > self.epsilon_floor,
        }
    }

    /// Index of the topology active in the next slot.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.graphs.len() == 1 {
            return 0;
        }
        self.sampler.sample(rng)
    }

    pub fn sample_topology<R: Rng + ?Sized>(&self, rng: &mut R) -> &DirectedGraph {
        &self.graphs[self.sample_index(rng)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::config_rng;
    use proptest::prelude::*;

    fn g(n: usize, e: &[(usize, usize)]) -> DirectedGraph {
        DirectedGraph::new(n, e.iter().copied()).unwrap()
    }

    /// Floyd-Warshall style closure over all pairs.
    fn brute_force_strong(graph: &DirectedGraph) -> bool {
        let n = graph.node_count();
        let mut r = vec![vec![false; n]; n];
        for (i, row) in r.iter_mut().enumerate() {
            row[i] = true;
        }
        for &(i, j) in graph.edges() {
            r[i][j] = true;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if r[i][k] && r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
        r.iter().all(|row| row.iter().all(|&b| b))
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(DirectedGraph::new(2, [(0, 2)]).is_err());
        assert!(DirectedGraph::new(2, [(1, 1)]).is_err());
        assert!(DirectedGraph::new(2, [(0, 1), (0, 1)]).is_err());
        assert!(DirectedGraph::new(0, []).is_err());
    }

    #[test]
    fn union_examples() {
        let a = g(2, &[(0, 1)]);
        let b = g(2, &[(1, 0)]);
        let u = union_graph(&[a.clone(), b]).unwrap();
        assert_eq!(u.edge_set(), BTreeSet::from([(0, 1), (1, 0)]));
        assert_eq!(union_graph(&[a.clone(), a.clone()]).unwrap(), a);
        assert!(union_graph(&[]).is_err());
        assert!(union_graph(&[a, g(3, &[])]).is_err());
    }

    #[test]
    fn strong_connectivity_examples() {
        assert!(DirectedGraph::complete(3).unwrap().is_strongly_connected());
        assert!(!g(2, &[(0, 1)]).is_strongly_connected());
        let ring: Vec<usize> = (0..16).collect();
        let cycle = DirectedGraph::cycle_through(16, &ring).unwrap();
        assert!(brute_force_strong(&cycle));
        assert!(cycle.is_strongly_connected());
    }

    #[test]
    fn default_topologies_union_is_strong() {
        let tops = interleaved_cycles(16).unwrap();
        assert_eq!(tops.len(), 4);
        assert!(tops.iter().all(|t| t.edges().len() == 8));
        let total: usize = tops.iter().map(|t| t.edges().len()).sum();
        let u = union_graph(&tops).unwrap();
        assert_eq!(u.edges().len(), total, "topologies are edge-disjoint");
        assert!(u.is_strongly_connected());
        assert!(tops.iter().all(|t| !t.is_strongly_connected()));
    }

    #[test]
    fn schedule_check_examples() {
        let s = TopologySchedule::uniform(interleaved_cycles(16).unwrap(), 0.1).unwrap();
        let r = s.check_stochastic_strong_connectivity();
        assert!(r.passed && r.connected);
        assert!((r.min_graph_probability - 0.25).abs() < 1e-15);

        let empty = TopologySchedule::uniform(vec![DirectedGraph::empty(3).unwrap()], 0.1).unwrap();
        assert!(!empty.check_stochastic_strong_connectivity().passed);

        // The return edge lives only in a graph whose mass is below the floor.
        let fwd = g(2, &[(0, 1)]);
        let back = g(2, &[(1, 0)]);
        let s =
            TopologySchedule::new(vec![fwd.clone(), back.clone()], vec![0.95, 0.05], 0.1).unwrap();
        let r = s.check_stochastic_strong_connectivity();
        assert!(r.connected && !r.passed);
        let s = TopologySchedule::new(vec![fwd, back], vec![0.5, 0.5], 0.1).unwrap();
        assert!(s.check_stochastic_strong_connectivity().passed);
    }

    #[test]
    fn deleting_a_topology_recomputes_connectivity() {
        let tops = interleaved_cycles(16).unwrap();
        for k in 0..tops.len() {
            let rest: Vec<_> = tops
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != k)
                .map(|(_, t)| t.clone())
                .collect();
            let s = TopologySchedule::uniform(rest.clone(), 0.1).unwrap();
            let expected = brute_force_strong(&union_graph(&rest).unwrap());
            assert_eq!(s.check_stochastic_strong_connectivity().passed, expected);
        }
        // The two half cycles alone never connect the halves.
        let two = vec![tops[0].clone(), tops[1].clone()];
        assert!(
            !TopologySchedule::uniform(two, 0.1)
                .unwrap()
                .check_stochastic_strong_connectivity()
                .passed
        );
    }

    #[test]
    fn schedule_rejects_bad_probabilities() {
        let a = g(2, &[(0, 1)]);
        assert!(TopologySchedule::new(vec![a.clone()], vec![0.9], 0.0).is_err());
        assert!(TopologySchedule::new(vec![a.clone(), g(3, &[])], vec![0.5, 0.5], 0.0).is_err());
        assert!(TopologySchedule::new(vec![], vec![], 0.0).is_err());
    }

    #[test]
    fn sampling_frequencies_and_determinism() {
        let s = TopologySchedule::uniform(interleaved_cycles(16).unwrap(), 0.1).unwrap();
        let mut rng = config_rng(5);
        let mut counts = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            counts[s.sample_index(&mut rng)] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.01);
        }
        let draw = |seed| {
            let mut r = config_rng(seed);
            (0..50).map(|_| s.sample_index(&mut r)).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));

        let single = TopologySchedule::uniform(vec![g(2, &[(0, 1)])], 0.1).unwrap();
        let mut r = config_rng(1);
        assert!((0..100).all(|_| single.sample_topology(&mut r) == &single.graphs()[0]));
    }

    #[test]
    fn covering_walk_visits_every_node_twice() {
        let u = union_graph(&interleaved_cycles(16).unwrap()).unwrap();
        let walk = u.covering_walk(2).unwrap();
        let mut visits = [0; 16];
        for (i, j) in &walk {
            assert!(u.contains((*i, *j)));
            visits[*j] += 1;
        }
        assert!(visits.iter().all(|&v| v >= 2));
        for w in walk.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
    }

    fn graph_on(n: usize) -> impl Strategy<Value = DirectedGraph> {
        proptest::collection::btree_set((0..n, 0..n), 0..=n * n).prop_map(move |set| {
            DirectedGraph::new(n, set.into_iter().filter(|(i, j)| i != j)).unwrap()
        })
    }

    fn arb_graph() -> impl Strategy<Value = DirectedGraph> {
        (1usize..=6).prop_flat_map(graph_on)
    }

    fn arb_triple() -> impl Strategy<Value = (DirectedGraph, DirectedGraph, DirectedGraph)> {
        (1usize..=6).prop_flat_map(|n| (graph_on(n), graph_on(n), graph_on(n)))
    }

    proptest! {
        #[test]
        fn strong_connectivity_matches_brute_force(graph in arb_graph()) {
            prop_assert_eq!(graph.is_strongly_connected(), brute_force_strong(&graph));
        }

        #[test]
        fn union_is_commutative_associative_idempotent((a, b, c) in arb_triple()) {
            let ab = union_graph(&[a.clone(), b.clone()]).unwrap();
            let ba = union_graph(&[b.clone(), a.clone()]).unwrap();
            prop_assert_eq!(&ab, &ba);
            let ab_c = union_graph(&[ab.clone(), c.clone()]).unwrap();
            let bc = union_graph(&[b.clone(), c.clone()]).unwrap();
            let a_bc = union_graph(&[a.clone(), bc]).unwrap();
            prop_assert_eq!(ab_c, a_bc);
            prop_assert_eq!(union_graph(&[a.clone(), a.clone()]).unwrap(), a);
        }
    }
}
