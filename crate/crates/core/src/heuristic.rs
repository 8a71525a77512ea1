//! Linear lower-bounding surrogate of the bilinear program, solved as a
//! maximal closure.
//!
//! Every path `i` whose best period `T^i` precedes the horizon owns a binary
//! "stop at `T^i`" node. Level nodes `w^i_{t,l}` exist for `t` in
//! `{T^i, T}`; a level node in the closure means reward level `kappa^i_l` is
//! no longer guaranteed at period `t`. Recovery sets `sigma[i] = T^i` for
//! every selected stop node and `sigma[i] = T` otherwise.

use std::collections::HashMap;

use crate::error::Result;
use crate::instance::{boxes_intersect, RobustInstance};
use crate::maxflow::{maximal_closure, ClosureProblem};
use crate::policy::ip_objective;
use crate::types::SigmaPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HbarNode {
    /// `b^i_{T^i}`; `period` is `T^i`.
    Stop { path: usize, period: usize },
    /// `w^i_{t,l}`.
    Level {
        path: usize,
        period: usize,
        level: usize,
    },
    /// Zero-weight routing node of the compact encoding.
    Hub,
}

#[derive(Debug, Clone)]
pub struct HbarGraph {
    pub problem: ClosureProblem,
    pub labels: Vec<HbarNode>,
    stop_nodes: Vec<Option<usize>>,
    index: HashMap<HbarNode, usize>,
}

impl HbarGraph {
    fn new(n_paths: usize) -> Self {
        Self {
            problem: ClosureProblem::default(),
            labels: Vec::new(),
            stop_nodes: vec![None; n_paths],
            index: HashMap::new(),
        }
    }

    fn push(&mut self, label: HbarNode, weight: f64) -> usize {
        let id = self.problem.add_node(weight);
        self.labels.push(label);
        if label != HbarNode::Hub {
            self.index.insert(label, id);
        }
        if let HbarNode::Stop { path, .. } = label {
            self.stop_nodes[path] = Some(id);
        }
        id
    }

    pub fn node(&self, label: HbarNode) -> Option<usize> {
        self.index.get(&label).copied()
    }

    pub fn weight(&self, label: HbarNode) -> Option<f64> {
        self.node(label).map(|id| self.problem.weights[id])
    }

    pub fn has_arc(&self, from: HbarNode, to: HbarNode) -> bool {
        match (self.node(from), self.node(to)) {
            (Some(u), Some(v)) => self.problem.arcs.contains(&(u, v)),
            _ => false,
        }
    }

    /// Stop node of path `i`, present iff `T^i < T`.
    pub fn stop_node(&self, i: usize) -> Option<usize> {
        self.stop_nodes[i]
    }

    pub fn offset(&self) -> f64 {
        self.problem.offset
    }
}

/// `{T^i, T}` in increasing order.
fn periods_of(instance: &RobustInstance, i: usize) -> Vec<usize> {
    let (ts, horizon) = (instance.t_star(i), instance.horizon());
    if ts < horizon {
        vec![ts, horizon]
    } else {
        vec![horizon]
    }
}

/// Weight of `w^i_{t,l}`: minus the level gap when `l <= L^i_t - 1`, zero
/// above.
fn level_weight(instance: &RobustInstance, i: usize, t: usize, l: usize) -> f64 {
    let k = instance.kappa(i);
    if l < k.level(t) {
        -(k.kappa(l + 1) - k.kappa(l)) / instance.n_paths() as f64
    } else {
        0.0
    }
}

fn offset(instance: &RobustInstance) -> f64 {
    let horizon = instance.horizon();
    (0..instance.n_paths())
        .map(|i| instance.reward(i, horizon))
        .sum::<f64>()
        / instance.n_paths() as f64
}

fn add_stop_nodes(instance: &RobustInstance, graph: &mut HbarGraph) {
    let n = instance.n_paths() as f64;
    for i in 0..instance.n_paths() {
        let ts = instance.t_star(i);
        if ts < instance.horizon() {
            graph.push(
                HbarNode::Stop {
                    path: i,
                    period: ts,
                },
                instance.reward(i, ts) / n,
            );
        }
    }
}

/// Every `(j, i, t, l)` with constraint `b^j_{T^j} <= w^i_{t,l}`: `T^j < T`,
/// `t` in `{T^i, T}`, `T^j <= t`, the boxes of `i` and `j` meet at `T^j`,
/// and `l = L^i_{T^j}`.
fn cross_constraints(instance: &RobustInstance) -> Vec<(usize, usize, usize, usize)> {
    let mut out = Vec::new();
    for j in 0..instance.n_paths() {
        let s = instance.t_star(j);
        if s >= instance.horizon() {
            continue;
        }
        for i in 0..instance.n_paths() {
            if !instance.intersects(i, j, s) {
                continue;
            }
            let l = instance.kappa(i).level(s);
            for t in periods_of(instance, i) {
                if s <= t {
                    out.push((j, i, t, l));
                }
            }
        }
    }
    out
}

/// The full closure encoding, one node per referenced variable and one arc
/// per constraint.
pub fn build_hbar(instance: &RobustInstance) -> HbarGraph {
    let n = instance.n_paths();
    let horizon = instance.horizon();
    let mut graph = HbarGraph::new(n);
    graph.problem.offset = offset(instance);
    add_stop_nodes(instance, &mut graph);

    let cross = cross_constraints(instance);
    let mut top: HashMap<(usize, usize), usize> = HashMap::new();
    for i in 0..n {
        for t in periods_of(instance, i) {
            top.insert((i, t), instance.kappa(i).level(t) - 1);
        }
        if instance.t_star(i) < horizon {
            let e = top.get_mut(&(i, horizon)).expect("T is always a slot");
            *e = (*e).max(1);
        }
    }
    for &(_, i, t, l) in &cross {
        let e = top.get_mut(&(i, t)).expect("slot exists");
        *e = (*e).max(l);
    }
    for i in 0..n {
        for t in periods_of(instance, i) {
            let height = top[&(i, t)];
            for l in 1..=height {
                let id = graph.push(
                    HbarNode::Level {
                        path: i,
                        period: t,
                        level: l,
                    },
                    level_weight(instance, i, t, l),
                );
                if l > 1 {
                    graph.problem.add_arc(id - 1, id);
                }
            }
        }
    }
    for i in 0..n {
        if let Some(b) = graph.stop_node(i) {
            let w = graph
                .node(HbarNode::Level {
                    path: i,
                    period: horizon,
                    level: 1,
                })
                .expect("created above");
            graph.problem.add_arc(b, w);
        }
    }
    for (j, i, t, l) in cross {
        let b = graph.stop_node(j).expect("T^j < T");
        let w = graph
            .node(HbarNode::Level {
                path: i,
                period: t,
                level: l,
            })
            .expect("created above");
        graph.problem.add_arc(b, w);
    }
    graph
}

/// Same optimum as [`build_hbar`] with far fewer arcs.
///
/// Level nodes at or above `L^i_t` carry zero weight and only point further
/// up their own chain, so arcs into them are dropped. For one-dimensional
/// states the cross constraints of each period `s` run through a segment
/// tree over the paths sorted by `x_s`: a stop node links to the
/// `O(log N)` tree nodes that cover its window `|x^i_s - x^j_s| <= 2 eps`.
pub fn build_hbar_compact(instance: &RobustInstance) -> HbarGraph {
    let n = instance.n_paths();
    let horizon = instance.horizon();
    let mut graph = HbarGraph::new(n);
    graph.problem.offset = offset(instance);
    add_stop_nodes(instance, &mut graph);

    // Level nodes with nonzero weight, chained upward.
    for i in 0..n {
        for t in periods_of(instance, i) {
            for l in 1..instance.kappa(i).level(t) {
                let id = graph.push(
                    HbarNode::Level {
                        path: i,
                        period: t,
                        level: l,
                    },
                    level_weight(instance, i, t, l),
                );
                if l > 1 {
                    graph.problem.add_arc(id - 1, id);
                }
            }
        }
    }
    for i in 0..n {
        if let Some(b) = graph.stop_node(i) {
            if let Some(w) = graph.node(HbarNode::Level {
                path: i,
                period: horizon,
                level: 1,
            }) {
                graph.problem.add_arc(b, w);
            }
        }
    }

    // Targets of path i for stop period s.
    let targets = |graph: &HbarGraph, i: usize, s: usize| -> Vec<usize> {
        let l = instance.kappa(i).level(s);
        periods_of(instance, i)
            .into_iter()
            .filter(|&t| s <= t)
            .filter_map(|t| {
                graph.node(HbarNode::Level {
                    path: i,
                    period: t,
                    level: l,
                })
            })
            .collect()
    };

    let mut by_period: Vec<Vec<usize>> = vec![Vec::new(); horizon + 1];
    for j in 0..n {
        if graph.stop_node(j).is_some() {
            by_period[instance.t_star(j)].push(j);
        }
    }

    for (s, stoppers) in by_period.iter().enumerate() {
        if stoppers.is_empty() {
            continue;
        }
        if instance.dim() != 1 {
            for &j in stoppers {
                let b = graph.stop_node(j).expect("stopper");
                for i in 0..n {
                    if instance.intersects(i, j, s) {
                        for w in targets(&graph, i, s) {
                            graph.problem.add_arc(b, w);
                        }
                    }
                }
            }
            continue;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| instance.state(a, s)[0].total_cmp(&instance.state(b, s)[0]));
        let values: Vec<f64> = order.iter().map(|&i| instance.state(i, s)[0]).collect();
        let leaves: Vec<Vec<usize>> = order.iter().map(|&i| targets(&graph, i, s)).collect();
        let mut tree = SegmentTree::new(n);
        tree.build(&mut graph, &leaves, 1, 0, n);
        let eps = instance.epsilon();
        for &j in stoppers {
            let c = instance.state(j, s)[0];
            let lo = values.partition_point(|&v| v < c && !boxes_intersect(&[v], &[c], eps));
            let hi = values.partition_point(|&v| v <= c || boxes_intersect(&[v], &[c], eps));
            let b = graph.stop_node(j).expect("stopper");
            let mut cover = Vec::new();
            tree.query(1, 0, n, lo, hi, &mut cover);
            for node in cover {
                graph.problem.add_arc(b, node);
            }
        }
    }
    graph
}

struct SegmentTree {
    nodes: Vec<Option<usize>>,
}

impl SegmentTree {
    fn new(n: usize) -> Self {
        Self {
            nodes: vec![None; 4 * n.max(1)],
        }
    }

    fn build(
        &mut self,
        graph: &mut HbarGraph,
        leaves: &[Vec<usize>],
        node: usize,
        lo: usize,
        hi: usize,
    ) -> Option<usize> {
        let id = if hi - lo == 1 {
            match leaves[lo].as_slice() {
                [] => None,
                [single] => Some(*single),
                many => {
                    let hub = graph.push(HbarNode::Hub, 0.0);
                    for &w in many {
                        graph.problem.add_arc(hub, w);
                    }
                    Some(hub)
                }
            }
        } else {
            let mid = (lo + hi) / 2;
            let left = self.build(graph, leaves, 2 * node, lo, mid);
            let right = self.build(graph, leaves, 2 * node + 1, mid, hi);
            match (left, right) {
                (None, None) => None,
                (Some(x), None) | (None, Some(x)) => Some(x),
                (Some(a), Some(b)) => {
                    let hub = graph.push(HbarNode::Hub, 0.0);
                    graph.problem.add_arc(hub, a);
                    graph.problem.add_arc(hub, b);
                    Some(hub)
                }
            }
        };
        self.nodes[node] = id;
        id
    }

    fn query(&self, node: usize, lo: usize, hi: usize, qlo: usize, qhi: usize, out: &mut Vec<usize>) {
        if qhi <= lo || hi <= qlo {
            return;
        }
        let Some(id) = self.nodes[node] else {
            return;
        };
        if qlo <= lo && hi <= qhi {
            out.push(id);
            return;
        }
        let mid = (lo + hi) / 2;
        self.query(2 * node, lo, mid, qlo, qhi, out);
        self.query(2 * node + 1, mid, hi, qlo, qhi, out);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicSolution {
    pub sigma: SigmaPolicy,
    /// Optimal value of the surrogate, before lifting.
    pub hbar_value: f64,
    /// Robust objective of the recovered `sigma`.
    pub ip_value: f64,
}

/// Solve the closure problem held by `graph` and recover a policy.
pub fn solve_graph(instance: &RobustInstance, graph: &HbarGraph) -> Result<HeuristicSolution> {
    let closure = maximal_closure(&graph.problem);
    let horizon = instance.horizon();
    let sigma: Vec<usize> = (0..instance.n_paths())
        .map(|i| match graph.stop_node(i) {
            Some(b) if closure.members[b] => instance.t_star(i),
            _ => horizon,
        })
        .collect();
    let sigma = SigmaPolicy::new(sigma, horizon)?;
    let ip_value = ip_objective(instance, &sigma)?;
    Ok(HeuristicSolution {
        sigma,
        hbar_value: closure.weight,
        ip_value,
    })
}

pub fn solve_heuristic(instance: &RobustInstance) -> Result<HeuristicSolution> {
    solve_graph(instance, &build_hbar_compact(instance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::two_path;
    use crate::types::{RewardMatrix, SamplePathSet};

    fn level(path: usize, period: usize, level: usize) -> HbarNode {
        HbarNode::Level {
            path,
            period,
            level,
        }
    }

    #[test]
    fn two_path_graph() {
        let g = build_hbar(&two_path());
        assert_eq!(g.offset(), 4.5);
        assert_eq!(g.weight(HbarNode::Stop { path: 0, period: 1 }), Some(4.0));
        assert_eq!(g.weight(HbarNode::Stop { path: 1, period: 2 }), Some(2.0));
        assert_eq!(g.weight(level(0, 3, 1)), Some(-3.0));
        assert_eq!(g.weight(level(1, 3, 1)), Some(-1.5));
        assert!(g.has_arc(HbarNode::Stop { path: 0, period: 1 }, level(0, 3, 1)));
        assert!(g.has_arc(HbarNode::Stop { path: 1, period: 2 }, level(0, 3, 3)));
        assert_eq!(g.weight(level(0, 3, 3)), Some(0.0));
        assert!(g.has_arc(level(0, 3, 1), level(0, 3, 2)));
    }

    #[test]
    fn two_path_solution() {
        let inst = two_path();
        for graph in [build_hbar(&inst), build_hbar_compact(&inst)] {
            let sol = solve_graph(&inst, &graph).unwrap();
            assert_eq!(sol.sigma.as_slice(), &[1, 2]);
            assert!((sol.hbar_value - 6.0).abs() < 1e-12);
            assert_eq!(sol.ip_value, 6.0);
        }
    }

    #[test]
    fn all_zero_rewards() {
        let paths = SamplePathSet::from_rows_1d(&[vec![1.0, 2.0], vec![3.0, 1.0]]).unwrap();
        let g = RewardMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let inst = RobustInstance::build(&paths, g, 0.5).unwrap();
        let graph = build_hbar(&inst);
        assert_eq!(graph.offset(), 0.0);
        assert!(graph.problem.weights.iter().all(|&w| w == 0.0));
        let sol = solve_heuristic(&inst).unwrap();
        assert_eq!(sol.hbar_value, 0.0);
        assert_eq!(sol.sigma.as_slice(), &[2, 2]);
    }

    #[test]
    fn single_path_increasing_rewards_stops_last() {
        let paths = SamplePathSet::from_rows_1d(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let g = RewardMatrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let inst = RobustInstance::build(&paths, g, 0.1).unwrap();
        let sol = solve_heuristic(&inst).unwrap();
        assert_eq!(sol.sigma.as_slice(), &[3]);
        assert_eq!(sol.hbar_value, 3.0);
    }

    #[test]
    fn single_path_picks_better_of_two_choices() {
        let paths = SamplePathSet::from_rows_1d(&[vec![5.0, 1.0, 2.0]]).unwrap();
        let g = RewardMatrix::from_rows(&[vec![5.0, 1.0, 2.0]]).unwrap();
        let inst = RobustInstance::build(&paths, g, 0.1).unwrap();
        let sol = solve_heuristic(&inst).unwrap();
        assert_eq!(sol.sigma.as_slice(), &[1]);
        assert_eq!(sol.hbar_value, 5.0);
    }
}
