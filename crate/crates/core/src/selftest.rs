//! Randomised consistency checks runnable from an installed binary.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::exact::{
    bilinear_objective, minimal_completion, sigma_from_indicators, solve_bnb, solve_enumeration,
};
use crate::heuristic::{build_hbar, build_hbar_compact, solve_graph, solve_heuristic};
use crate::instance::RobustInstance;
use crate::maxflow::{max_flow, maximal_closure, ClosureProblem, FlowGraph};
use crate::policy::ip_objective;
use crate::reward::{reward_matrix, RewardSpec};
use crate::types::SamplePathSet;

const TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    pub first_failure: Option<String>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Random identity-reward instance with states on a quarter grid.
pub fn random_instance(rng: &mut impl Rng, max_n: usize, horizons: (usize, usize)) -> Result<RobustInstance> {
    let n = rng.random_range(1..=max_n);
    let t = rng.random_range(horizons.0..=horizons.1);
    let d = rng.random_range(1..=2);
    let eps = *[0.0, 0.1, 1.0].choose(rng).expect("non-empty");
    let states = (0..n * t * d).map(|_| rng.random_range(0..=20) as f64 * 0.25).collect();
    let paths = SamplePathSet::new(n, t, d, states, 0, "selftest")?;
    let g = reward_matrix(&paths, &RewardSpec::Identity)?;
    RobustInstance::build(&paths, g, eps)
}

fn check<F>(name: &'static str, cases: usize, rng: &mut ChaCha8Rng, mut case: F) -> Result<CheckResult>
where
    F: FnMut(&mut ChaCha8Rng) -> Result<Option<String>>,
{
    let mut failures = 0;
    let mut first_failure = None;
    for _ in 0..cases {
        if let Some(msg) = case(rng)? {
            failures += 1;
            first_failure.get_or_insert(msg);
        }
    }
    Ok(CheckResult {
        name,
        cases,
        failures,
        first_failure,
    })
}

fn brute_min_cut(g: &FlowGraph) -> f64 {
    let inner: Vec<usize> = (0..g.n_nodes).filter(|&v| v != g.source && v != g.sink).collect();
    (0u32..1 << inner.len())
        .map(|mask| {
            let mut side = vec![false; g.n_nodes];
            side[g.source] = true;
            for (k, &v) in inner.iter().enumerate() {
                side[v] = mask >> k & 1 == 1;
            }
            g.cut_capacity(&side)
        })
        .fold(f64::INFINITY, f64::min)
}

fn brute_closure(p: &ClosureProblem) -> f64 {
    (0u32..1 << p.n_nodes())
        .map(|mask| (0..p.n_nodes()).map(|v| mask >> v & 1 == 1).collect::<Vec<_>>())
        .filter(|m| p.is_closed(m))
        .map(|m| p.weight_of(&m))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn run_selftest(seed: u64, cases: usize) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    out.push(check("bnb equals enumeration", cases, &mut rng, |rng| {
        let inst = random_instance(rng, 6, (1, 4))?;
        let exact = solve_enumeration(&inst)?.value;
        let bnb = solve_bnb(&inst, u64::MAX)?.value;
        Ok(((bnb - exact).abs() > TOL).then(|| format!("bnb {bnb} vs enumeration {exact}")))
    })?);

    out.push(check("heuristic within bounds", cases, &mut rng, |rng| {
        let inst = random_instance(rng, 6, (1, 4))?;
        let exact = solve_enumeration(&inst)?.value;
        let h = solve_heuristic(&inst)?;
        let n = inst.n_paths() as f64;
        let t = inst.horizon() as f64;
        let ok = h.hbar_value <= exact + TOL
            && h.ip_value <= exact + TOL
            && h.hbar_value <= h.ip_value + TOL
            && h.hbar_value >= exact / t - TOL
            && h.hbar_value >= exact / (n.ln() + 1.0) - 2.0 * inst.epsilon() - TOL;
        Ok((!ok).then(|| format!("hbar {} policy {} exact {exact}", h.hbar_value, h.ip_value)))
    })?);

    out.push(check("two periods: heuristic is exact", cases, &mut rng, |rng| {
        let inst = random_instance(rng, 8, (2, 2))?;
        let exact = solve_enumeration(&inst)?.value;
        let h = solve_heuristic(&inst)?.hbar_value;
        Ok(((h - exact).abs() > TOL).then(|| format!("hbar {h} vs exact {exact}")))
    })?);

    out.push(check("compact surrogate graph", cases, &mut rng, |rng| {
        let inst = random_instance(rng, 6, (1, 4))?;
        let a = solve_graph(&inst, &build_hbar(&inst))?.hbar_value;
        let b = solve_graph(&inst, &build_hbar_compact(&inst))?.hbar_value;
        Ok(((a - b).abs() > TOL).then(|| format!("direct {a} vs compact {b}")))
    })?);

    out.push(check("bilinear value below lifted policy", cases, &mut rng, |rng| {
        let inst = random_instance(rng, 6, (1, 4))?;
        let b: Vec<Vec<bool>> = (0..inst.n_paths())
            .map(|_| (0..inst.horizon()).map(|_| rng.random_bool(0.4)).collect())
            .collect();
        let w = minimal_completion(&inst, &b)?;
        let bp = bilinear_objective(&inst, &b, &w)?;
        let ip = ip_objective(&inst, &sigma_from_indicators(&b, inst.horizon())?)?;
        Ok((bp > ip + TOL).then(|| format!("bilinear {bp} > policy {ip}")))
    })?);

    out.push(check("max flow equals min cut", cases, &mut rng, |rng| {
        let n = rng.random_range(2..=12);
        let mut g = FlowGraph::new(n, 0, n - 1);
        for u in 0..n {
            for v in 0..n {
                if u != v && rng.random_bool(0.3) {
                    g.add_arc(u, v, rng.random_range(0..=10) as f64);
                }
            }
        }
        let flow = max_flow(&g).value;
        let cut = brute_min_cut(&g);
        Ok((flow != cut).then(|| format!("flow {flow} vs cut {cut}")))
    })?);

    out.push(check("maximal closure", cases, &mut rng, |rng| {
        let n = rng.random_range(1..=10);
        let mut p = ClosureProblem::default();
        for _ in 0..n {
            p.add_node(rng.random_range(-5..=5) as f64);
        }
        for u in 0..n {
            for v in 0..n {
                if u != v && rng.random_bool(0.2) {
                    p.add_arc(u, v);
                }
            }
        }
        let got = maximal_closure(&p);
        let best = brute_closure(&p);
        let ok = got.weight == best && p.is_closed(&got.members) && p.weight_of(&got.members) == got.weight;
        Ok((!ok).then(|| format!("closure {} vs brute force {best}", got.weight)))
    })?);

    Ok(out)
}
