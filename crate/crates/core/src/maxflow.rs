//! Maximum flow (Dinic's blocking-flow algorithm on real capacities) and the
//! maximal-closure reduction built on it.

use std::collections::VecDeque;
use std::io::{self, Write};

/// Directed network with a designated source and sink.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowGraph {
    pub n_nodes: usize,
    pub source: usize,
    pub sink: usize,
    pub arcs: Vec<(usize, usize, f64)>,
}

impl FlowGraph {
    pub fn new(n_nodes: usize, source: usize, sink: usize) -> Self {
        Self {
            n_nodes,
            source,
            sink,
            arcs: Vec::new(),
        }
    }

    pub fn add_arc(&mut self, from: usize, to: usize, capacity: f64) {
        debug_assert!(capacity >= 0.0 && capacity.is_finite());
        self.arcs.push((from, to, capacity));
    }

    /// Total capacity of arcs leaving `side` (a source-side indicator).
    pub fn cut_capacity(&self, side: &[bool]) -> f64 {
        self.arcs
            .iter()
            .filter(|(u, v, _)| side[*u] && !side[*v])
            .map(|(_, _, c)| c)
            .sum()
    }

    pub fn write_dot<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "digraph flow {{")?;
        writeln!(out, "  n{} [shape=box,label=\"source\"];", self.source)?;
        writeln!(out, "  n{} [shape=box,label=\"sink\"];", self.sink)?;
        for (u, v, c) in &self.arcs {
            writeln!(out, "  n{u} -> n{v} [label=\"{c}\"];")?;
        }
        writeln!(out, "}}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxFlow {
    pub value: f64,
    /// Nodes reachable from the source in the final residual network; the
    /// smallest source side among all minimum cuts.
    pub source_side: Vec<bool>,
    /// Flow on each arc of the input graph, in input order.
    pub arc_flows: Vec<f64>,
}

/// Residual network in compressed adjacency form. Arc `2k` is input arc `k`,
/// arc `2k + 1` its reverse.
struct Residual {
    first: Vec<usize>,
    order: Vec<u32>,
    head: Vec<u32>,
    cap: Vec<f64>,
}

impl Residual {
    fn new(g: &FlowGraph) -> Self {
        let m = g.arcs.len();
        let mut head = Vec::with_capacity(2 * m);
        let mut cap = Vec::with_capacity(2 * m);
        let mut degree = vec![0usize; g.n_nodes + 1];
        for &(u, v, c) in &g.arcs {
            head.push(v as u32);
            cap.push(c);
            head.push(u as u32);
            cap.push(0.0);
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut first = vec![0usize; g.n_nodes + 1];
        for v in 0..g.n_nodes {
            first[v + 1] = first[v] + degree[v];
        }
        let mut fill = first.clone();
        let mut order = vec![0u32; 2 * m];
        for (k, &(u, v, _)) in g.arcs.iter().enumerate() {
            order[fill[u]] = (2 * k) as u32;
            fill[u] += 1;
            order[fill[v]] = (2 * k + 1) as u32;
            fill[v] += 1;
        }
        Self {
            first,
            order,
            head,
            cap,
        }
    }

    fn arcs_of(&self, v: usize) -> &[u32] {
        &self.order[self.first[v]..self.first[v + 1]]
    }
}

/// Residual capacities at or below this fraction of the largest capacity are
/// treated as saturated.
const RELATIVE_TOLERANCE: f64 = 1e-13;

pub fn max_flow(g: &FlowGraph) -> MaxFlow {
    assert_ne!(g.source, g.sink, "source and sink must differ");
    let n = g.n_nodes;
    let mut r = Residual::new(g);
    let scale = g.arcs.iter().map(|a| a.2).fold(1.0, f64::max);
    let tol = scale * RELATIVE_TOLERANCE;

    let mut level = vec![u32::MAX; n];
    let mut next = vec![0usize; n];
    let mut queue = VecDeque::with_capacity(n);
    let mut path: Vec<u32> = Vec::new();
    let mut value = 0.0;

    loop {
        level.fill(u32::MAX);
        level[g.source] = 0;
        queue.clear();
        queue.push_back(g.source);
        while let Some(v) = queue.pop_front() {
            for &a in r.arcs_of(v) {
                let w = r.head[a as usize] as usize;
                if r.cap[a as usize] > tol && level[w] == u32::MAX {
                    level[w] = level[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        if level[g.sink] == u32::MAX {
            break;
        }
        for v in 0..n {
            next[v] = r.first[v];
        }

        // Iterative DFS over the level graph; `path` holds arc ids.
        path.clear();
        let mut v = g.source;
        loop {
            if v == g.sink {
                let push = path
                    .iter()
                    .map(|&a| r.cap[a as usize])
                    .fold(f64::INFINITY, f64::min);
                value += push;
                let mut retreat = path.len();
                for (k, &a) in path.iter().enumerate() {
                    let a = a as usize;
                    r.cap[a] -= push;
                    r.cap[a ^ 1] += push;
                    if r.cap[a] <= tol && retreat == path.len() {
                        retreat = k;
                    }
                }
                path.truncate(retreat);
                v = match path.last() {
                    Some(&a) => r.head[a as usize] as usize,
                    None => g.source,
                };
                continue;
            }
            let mut advanced = false;
            while next[v] < r.first[v + 1] {
                let a = r.order[next[v]] as usize;
                let w = r.head[a] as usize;
                if r.cap[a] > tol && level[w] == level[v] + 1 {
                    path.push(a as u32);
                    v = w;
                    advanced = true;
                    break;
                }
                next[v] += 1;
            }
            if advanced {
                continue;
            }
            // Dead end: no augmenting path through v in this phase.
            level[v] = u32::MAX;
            match path.pop() {
                Some(a) => {
                    let tail = r.head[(a ^ 1) as usize] as usize;
                    next[tail] += 1;
                    v = tail;
                }
                None => break,
            }
        }
    }

    let mut source_side = vec![false; n];
    source_side[g.source] = true;
    queue.clear();
    queue.push_back(g.source);
    while let Some(v) = queue.pop_front() {
        for &a in r.arcs_of(v) {
            let w = r.head[a as usize] as usize;
            if r.cap[a as usize] > tol && !source_side[w] {
                source_side[w] = true;
                queue.push_back(w);
            }
        }
    }
    let arc_flows = g
        .arcs
        .iter()
        .enumerate()
        .map(|(k, &(_, _, c))| (c - r.cap[2 * k]).max(0.0))
        .collect();
    MaxFlow {
        value,
        source_side,
        arc_flows,
    }
}

/// Weighted precedence graph: an arc `(u, v)` requires `v` in the closure
/// whenever `u` is.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClosureProblem {
    pub weights: Vec<f64>,
    pub arcs: Vec<(usize, usize)>,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Closure {
    pub members: Vec<bool>,
    /// `offset + sum of member weights`.
    pub weight: f64,
}

impl ClosureProblem {
    pub fn add_node(&mut self, weight: f64) -> usize {
        self.weights.push(weight);
        self.weights.len() - 1
    }

    pub fn add_arc(&mut self, from: usize, to: usize) {
        self.arcs.push((from, to));
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.len()
    }

    pub fn is_closed(&self, members: &[bool]) -> bool {
        self.arcs.iter().all(|&(u, v)| !members[u] || members[v])
    }

    pub fn weight_of(&self, members: &[bool]) -> f64 {
        self.offset
            + self
                .weights
                .iter()
                .zip(members)
                .filter(|(_, &m)| m)
                .map(|(w, _)| w)
                .sum::<f64>()
    }

    /// The flow network of the min-cut reduction. Node `n` is the source,
    /// `n + 1` the sink.
    pub fn flow_graph(&self) -> FlowGraph {
        let n = self.n_nodes();
        let (source, sink) = (n, n + 1);
        let mut g = FlowGraph::new(n + 2, source, sink);
        let total: f64 = self.weights.iter().map(|w| w.abs()).sum();
        // Precedence arcs must never be cut.
        let infinite = total + 1.0;
        for (v, &w) in self.weights.iter().enumerate() {
            if w > 0.0 {
                g.add_arc(source, v, w);
            } else if w < 0.0 {
                g.add_arc(v, sink, -w);
            }
        }
        for &(u, v) in &self.arcs {
            g.add_arc(u, v, infinite);
        }
        g
    }

    pub fn write_dot<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "digraph closure {{")?;
        writeln!(out, "  label=\"offset {}\";", self.offset)?;
        for (v, w) in self.weights.iter().enumerate() {
            writeln!(out, "  n{v} [label=\"{v}: {w}\"];")?;
        }
        for (u, v) in &self.arcs {
            writeln!(out, "  n{u} -> n{v};")?;
        }
        writeln!(out, "}}")
    }
}

pub fn maximal_closure(problem: &ClosureProblem) -> Closure {
    let n = problem.n_nodes();
    let flow = max_flow(&problem.flow_graph());
    let members: Vec<bool> = flow.source_side[..n].to_vec();
    debug_assert!(problem.is_closed(&members));
    Closure {
        weight: problem.weight_of(&members),
        members,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_arc() {
        let mut g = FlowGraph::new(2, 0, 1);
        g.add_arc(0, 1, 3.0);
        let f = max_flow(&g);
        assert_eq!(f.value, 3.0);
        assert_eq!(f.source_side, vec![true, false]);
    }

    #[test]
    fn diamond() {
        // s=0, a=1, b=2, t=3
        let mut g = FlowGraph::new(4, 0, 3);
        g.add_arc(0, 1, 2.0);
        g.add_arc(0, 2, 2.0);
        g.add_arc(1, 3, 1.0);
        g.add_arc(2, 3, 3.0);
        let f = max_flow(&g);
        assert_eq!(f.value, 3.0);
        assert_eq!(f.source_side, vec![true, true, false, false]);
        assert_eq!(g.cut_capacity(&f.source_side), 3.0);
    }

    #[test]
    fn disconnected() {
        let mut g = FlowGraph::new(4, 0, 3);
        g.add_arc(0, 1, 5.0);
        g.add_arc(2, 3, 5.0);
        let f = max_flow(&g);
        assert_eq!(f.value, 0.0);
        assert_eq!(f.source_side, vec![true, true, false, false]);
    }

    #[test]
    fn closure_two_nodes() {
        let p = ClosureProblem {
            weights: vec![5.0, -3.0],
            arcs: vec![(0, 1)],
            offset: 0.0,
        };
        let c = maximal_closure(&p);
        assert_eq!(c.members, vec![true, true]);
        assert_eq!(c.weight, 2.0);
    }

    #[test]
    fn closure_all_negative_is_empty() {
        let p = ClosureProblem {
            weights: vec![-1.0, -2.0],
            arcs: vec![(0, 1)],
            offset: 4.5,
        };
        let c = maximal_closure(&p);
        assert_eq!(c.members, vec![false, false]);
        assert_eq!(c.weight, 4.5);
    }

    #[test]
    fn closure_single_node() {
        let p = ClosureProblem {
            weights: vec![7.0],
            arcs: vec![],
            offset: 0.0,
        };
        assert_eq!(maximal_closure(&p).weight, 7.0);
    }

    #[test]
    fn closure_zero_weight_boundary_excluded() {
        let p = ClosureProblem {
            weights: vec![1.0, -1.0, 0.0],
            arcs: vec![(0, 1)],
            offset: 0.0,
        };
        let c = maximal_closure(&p);
        assert_eq!(c.weight, 0.0);
        assert_eq!(c.members, vec![false, false, false]);
    }

    #[test]
    fn dot_output_mentions_every_arc() {
        let p = ClosureProblem {
            weights: vec![1.0, -1.0],
            arcs: vec![(0, 1)],
            offset: 0.0,
        };
        let mut buf = Vec::new();
        p.write_dot(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("n0 -> n1"));
    }

    fn real_graph() -> impl Strategy<Value = FlowGraph> {
        (3usize..40).prop_flat_map(|n| {
            prop::collection::vec((0..n, 0..n, 0.0f64..10.0), 0..(4 * n)).prop_map(move |arcs| {
                let mut g = FlowGraph::new(n, 0, n - 1);
                for (u, v, c) in arcs {
                    if u != v {
                        g.add_arc(u, v, c);
                    }
                }
                g
            })
        })
    }

    proptest! {
        #[test]
        fn flow_is_feasible_and_matches_cut(g in real_graph()) {
            let f = max_flow(&g);
            let mut balance = vec![0.0; g.n_nodes];
            for ((u, v, c), x) in g.arcs.iter().zip(&f.arc_flows) {
                prop_assert!(*x >= 0.0 && *x <= c + 1e-9);
                balance[*u] -= x;
                balance[*v] += x;
            }
            for (v, b) in balance.iter().enumerate() {
                if v != g.source && v != g.sink {
                    prop_assert!(b.abs() < 1e-9, "conservation violated at {}: {}", v, b);
                }
            }
            prop_assert!((balance[g.sink] - f.value).abs() < 1e-9);
            prop_assert!(f.source_side[g.source] && !f.source_side[g.sink]);
            prop_assert!((g.cut_capacity(&f.source_side) - f.value).abs() < 1e-9);
        }
    }
}
