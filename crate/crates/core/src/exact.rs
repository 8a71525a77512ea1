//! Exact solvers for the sampled robust problem over `sigma`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::heuristic::solve_heuristic;
use crate::instance::RobustInstance;
use crate::policy::ip_objective;
use crate::types::SigmaPolicy;

pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

const PRUNE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub sigma: SigmaPolicy,
    pub value: f64,
    pub proved_optimal: bool,
    pub nodes_explored: u64,
}

/// Number of candidate policies `T^N`, as a float so huge counts do not
/// overflow.
pub fn candidate_count(instance: &RobustInstance) -> f64 {
    (instance.horizon() as f64).powi(instance.n_paths() as i32)
}

pub fn solve_enumeration(instance: &RobustInstance) -> Result<ExactSolution> {
    solve_enumeration_capped(instance, DEFAULT_ENUMERATION_CAP)
}

/// Evaluate every `sigma` in lexicographic order and keep the first
/// maximiser.
pub fn solve_enumeration_capped(instance: &RobustInstance, cap: u64) -> Result<ExactSolution> {
    let candidates = candidate_count(instance);
    if candidates > cap as f64 {
        return Err(Error::EnumerationCap { candidates, cap });
    }
    let (n, horizon) = (instance.n_paths(), instance.horizon());
    let mut current = vec![1usize; n];
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut count = 0u64;
    loop {
        count += 1;
        let sigma = SigmaPolicy::new(current.clone(), horizon)?;
        let value = ip_objective(instance, &sigma)?;
        if best.as_ref().is_none_or(|(_, v)| value > *v) {
            best = Some((current.clone(), value));
        }
        // Odometer step, last coordinate fastest.
        let mut k = n;
        loop {
            if k == 0 {
                let (sigma, value) = best.expect("at least one candidate");
                return Ok(ExactSolution {
                    sigma: SigmaPolicy::new(sigma, horizon)?,
                    value,
                    proved_optimal: true,
                    nodes_explored: count,
                });
            }
            k -= 1;
            if current[k] < horizon {
                current[k] += 1;
                break;
            }
            current[k] = 1;
        }
    }
}

/// Depth-first branch-and-bound over `sigma`, warm-started from the
/// closure heuristic. `budget` caps the number of bound evaluations.
pub fn solve_bnb(instance: &RobustInstance, budget: u64) -> Result<ExactSolution> {
    let heuristic = solve_heuristic(instance)?;
    let mut search = Search {
        instance,
        order: branching_order(instance),
        fixed: vec![None; instance.n_paths()],
        best_sigma: heuristic.sigma.as_slice().to_vec(),
        best_value: heuristic.ip_value,
        nodes: 0,
        budget,
    };
    let completed = search.descend(0);
    let sigma = SigmaPolicy::new(search.best_sigma, instance.horizon())?;
    let value = ip_objective(instance, &sigma)?;
    Ok(ExactSolution {
        sigma,
        value,
        proved_optimal: completed,
        nodes_explored: search.nodes,
    })
}

/// Paths by decreasing best reward, ties by index.
fn branching_order(instance: &RobustInstance) -> Vec<usize> {
    let mut order: Vec<usize> = (0..instance.n_paths()).collect();
    order.sort_by(|&a, &b| {
        let ga = instance.reward(a, instance.t_star(a));
        let gb = instance.reward(b, instance.t_star(b));
        gb.total_cmp(&ga).then(a.cmp(&b))
    });
    order
}

struct Search<'a> {
    instance: &'a RobustInstance,
    order: Vec<usize>,
    fixed: Vec<Option<usize>>,
    best_sigma: Vec<usize>,
    best_value: f64,
    nodes: u64,
    budget: u64,
}

impl Search<'_> {
    /// Returns false once the budget runs out.
    fn descend(&mut self, depth: usize) -> bool {
        if self.nodes >= self.budget {
            return false;
        }
        self.nodes += 1;
        let bound = upper_bound(self.instance, &self.fixed);
        if bound <= self.best_value + PRUNE_TOLERANCE {
            return true;
        }
        if depth == self.order.len() {
            // Every path fixed: the bound is the objective itself.
            self.best_value = bound;
            self.best_sigma = self.fixed.iter().map(|s| s.expect("fixed")).collect();
            return true;
        }
        let i = self.order[depth];
        let mut periods: Vec<usize> = (1..=self.instance.horizon()).collect();
        periods.sort_by(|&a, &b| {
            self.instance
                .reward(i, b)
                .total_cmp(&self.instance.reward(i, a))
                .then(a.cmp(&b))
        });
        for t in periods {
            self.fixed[i] = Some(t);
            let completed = self.descend(depth + 1);
            self.fixed[i] = None;
            if !completed {
                return false;
            }
        }
        true
    }
}

/// Optimistic objective given the paths fixed so far.
///
/// A period `t` of path `i` is certainly in its inner minimum when some
/// fixed `j` with `sigma^j = t` has a box meeting that of `i` at `t`. Unfixed
/// paths may add further periods, which can only lower a minimum, so
/// ignoring them gives an upper bound. An unfixed path takes its best
/// stopping period under that optimistic reading.
pub fn upper_bound(instance: &RobustInstance, fixed: &[Option<usize>]) -> f64 {
    let (n, horizon) = (instance.n_paths(), instance.horizon());
    let mut stoppers: Vec<Vec<usize>> = vec![Vec::new(); horizon + 1];
    for (j, s) in fixed.iter().enumerate() {
        if let Some(t) = s {
            stoppers[*t].push(j);
        }
    }
    let certain = |i: usize, t: usize| stoppers[t].iter().any(|&j| instance.intersects(i, j, t));
    let mut total = 0.0;
    for i in 0..n {
        let g = |t: usize| instance.reward(i, t);
        total += match fixed[i] {
            Some(s) => (1..s)
                .filter(|&t| certain(i, t))
                .map(g)
                .fold(g(s), f64::min),
            None => {
                let mut prefix = f64::INFINITY;
                let mut best = 0.0f64;
                for s in 1..=horizon {
                    best = best.max(prefix.min(g(s)));
                    if certain(i, s) {
                        prefix = prefix.min(g(s));
                    }
                }
                best
            }
        };
    }
    total / n as f64
}

/// Zero-one stopping indicators `b[i][t - 1]`.
pub type StopIndicators = Vec<Vec<bool>>;

/// `sigma^i = min{ first t with b^i_t = 1, T }`.
pub fn sigma_from_indicators(b: &StopIndicators, horizon: usize) -> Result<SigmaPolicy> {
    let sigma = b
        .iter()
        .map(|row| row.iter().position(|&x| x).map_or(horizon, |t0| t0 + 1))
        .collect();
    SigmaPolicy::new(sigma, horizon)
}

/// Indicators of a policy: `b^i_t = 1` iff `sigma^i = t`.
pub fn indicators_from_sigma(sigma: &SigmaPolicy, horizon: usize) -> StopIndicators {
    sigma
        .as_slice()
        .iter()
        .map(|&s| (1..=horizon).map(|t| t == s).collect())
        .collect()
}

fn check_indicators(instance: &RobustInstance, b: &StopIndicators) -> Result<()> {
    if b.len() != instance.n_paths() || b.iter().any(|r| r.len() != instance.horizon()) {
        return Err(Error::Shape(format!(
            "indicators must be {} x {}",
            instance.n_paths(),
            instance.horizon()
        )));
    }
    Ok(())
}

/// Smallest feasible level variables for fixed `b`, as `w[i][t - 1][l - 1]`.
///
/// `w^i_{t,l} = 1` exactly when some constraint forces it: `b^i_{t-1}` at
/// level 1, a stopping path whose box meets that of `i` at level `L^i_t`,
/// and closure upward in `l` and forward in `t`.
pub fn minimal_completion(instance: &RobustInstance, b: &StopIndicators) -> Result<Vec<Vec<Vec<bool>>>> {
    check_indicators(instance, b)?;
    let (n, horizon) = (instance.n_paths(), instance.horizon());
    Ok((0..n)
        .map(|i| {
            let levels = instance.kappa(i).len();
            let mut lowest = usize::MAX;
            (1..=horizon)
                .map(|t| {
                    if t > 1 && b[i][t - 2] {
                        lowest = lowest.min(1);
                    }
                    if (0..n).any(|j| b[j][t - 1] && instance.intersects(i, j, t)) {
                        lowest = lowest.min(instance.kappa(i).level(t));
                    }
                    (1..=levels).map(|l| l >= lowest).collect()
                })
                .collect()
        })
        .collect())
}

/// Bilinear objective `(1/N) sum_{i,t} sum_{l < L^i_t} dkappa b (1 - w)`.
pub fn bilinear_objective(
    instance: &RobustInstance,
    b: &StopIndicators,
    w: &[Vec<Vec<bool>>],
) -> Result<f64> {
    check_indicators(instance, b)?;
    let mut total = 0.0;
    for i in 0..instance.n_paths() {
        let k = instance.kappa(i);
        for t in 1..=instance.horizon() {
            if !b[i][t - 1] {
                continue;
            }
            for l in 1..k.level(t) {
                if !w[i][t - 1][l - 1] {
                    total += k.kappa(l + 1) - k.kappa(l);
                }
            }
        }
    }
    Ok(total / instance.n_paths() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MilpOptions {
    /// Emit the three strengthening equality families. They can cut off
    /// every optimal (even every feasible) solution when some reward is
    /// zero, because a level-1 cover constraint then forces `w^i_{t,1} = 1`.
    pub valid_equalities: bool,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self {
            valid_equalities: true,
        }
    }
}

/// Write the linearised bilinear model in CPLEX LP text format.
///
/// Variables are `b_i_t` (binary), `w_i_t_l` and `f_i_t_l` (continuous,
/// free), all indices 1-based.
pub fn export_milp<W: Write>(instance: &RobustInstance, sink: &mut W) -> Result<()> {
    export_milp_with(instance, MilpOptions::default(), sink)
}

pub fn export_milp_with<W: Write>(
    instance: &RobustInstance,
    options: MilpOptions,
    sink: &mut W,
) -> Result<()> {
    let (n, horizon) = (instance.n_paths(), instance.horizon());
    let scale = 1.0 / n as f64;
    let gap = |i: usize, l: usize| {
        let k = instance.kappa(i);
        k.kappa(l + 1) - k.kappa(l)
    };

    writeln!(sink, "\\ robust optimal stopping, {n} paths, {horizon} periods")?;
    writeln!(sink, "Maximize")?;
    write!(sink, " obj:")?;
    let mut any = false;
    for i in 0..n {
        for t in 1..=horizon {
            for l in 1..instance.kappa(i).level(t) {
                write!(sink, "\n   + {:?} f_{}_{t}_{l}", gap(i, l) * scale, i + 1)?;
                any = true;
            }
        }
    }
    if !any {
        write!(sink, " 0 b_1_1")?;
    }
    writeln!(sink)?;

    writeln!(sink, "Subject To")?;
    for i in 0..n {
        let p = i + 1;
        let levels = instance.kappa(i).len();
        for t in 1..=horizon {
            for l in 1..instance.kappa(i).level(t) {
                writeln!(sink, " fb_{p}_{t}_{l}: f_{p}_{t}_{l} - b_{p}_{t} <= 0")?;
                writeln!(sink, " fw_{p}_{t}_{l}: f_{p}_{t}_{l} + w_{p}_{t}_{l} <= 1")?;
            }
        }
        for t in 1..=horizon {
            for l in 1..=levels {
                if t < horizon {
                    writeln!(sink, " wt_{p}_{t}_{l}: w_{p}_{t}_{l} - w_{p}_{}_{l} <= 0", t + 1)?;
                }
                if l < levels {
                    writeln!(sink, " wl_{p}_{t}_{l}: w_{p}_{t}_{l} - w_{p}_{t}_{} <= 0", l + 1)?;
                }
            }
        }
        for t in 1..horizon {
            writeln!(sink, " bw_{p}_{t}: b_{p}_{t} - w_{p}_{}_1 <= 0", t + 1)?;
        }
        for t in 1..=horizon {
            let l = instance.kappa(i).level(t);
            for j in 0..n {
                if instance.intersects(i, j, t) {
                    writeln!(
                        sink,
                        " cv_{p}_{}_{t}: b_{}_{t} - w_{p}_{t}_{l} <= 0",
                        j + 1,
                        j + 1
                    )?;
                }
            }
        }
        if options.valid_equalities {
            writeln!(sink, " v0_{p}: w_{p}_1_1 = 0")?;
            for t in 1..horizon {
                writeln!(sink, " v1_{p}_{t}: b_{p}_{t} + w_{p}_{t}_1 - w_{p}_{}_1 = 0", t + 1)?;
            }
            writeln!(sink, " v2_{p}: b_{p}_{horizon} + w_{p}_{horizon}_1 = 1")?;
        }
    }

    writeln!(sink, "Bounds")?;
    for i in 0..n {
        let p = i + 1;
        for t in 1..=horizon {
            for l in 1..=instance.kappa(i).len() {
                writeln!(sink, " w_{p}_{t}_{l} free")?;
            }
            for l in 1..instance.kappa(i).level(t) {
                writeln!(sink, " f_{p}_{t}_{l} free")?;
            }
        }
    }
    writeln!(sink, "Binaries")?;
    for i in 0..n {
        for t in 1..=horizon {
            writeln!(sink, " b_{}_{t}", i + 1)?;
        }
    }
    writeln!(sink, "End")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::two_path;
    use crate::types::{RewardMatrix, SamplePathSet};

    #[test]
    fn two_path_enumeration_table() {
        let inst = two_path();
        let mut values = Vec::new();
        for a in 1..=3 {
            for b in 1..=3 {
                let s = SigmaPolicy::new(vec![a, b], 3).unwrap();
                values.push(ip_objective(&inst, &s).unwrap());
            }
        }
        assert_eq!(values, vec![5.5, 6.0, 5.5, 5.0, 5.5, 5.0, 4.5, 5.0, 4.5]);
        let sol = solve_enumeration(&inst).unwrap();
        assert_eq!(sol.sigma.as_slice(), &[1, 2]);
        assert_eq!(sol.value, 6.0);
        assert!(sol.proved_optimal);
        assert_eq!(sol.nodes_explored, 9);
    }

    #[test]
    fn two_path_bnb_proves_at_root() {
        let inst = two_path();
        assert_eq!(upper_bound(&inst, &[None, None]), 6.0);
        let sol = solve_bnb(&inst, u64::MAX).unwrap();
        assert_eq!(sol.sigma.as_slice(), &[1, 2]);
        assert_eq!(sol.value, 6.0);
        assert!(sol.proved_optimal);
        assert_eq!(sol.nodes_explored, 1);
    }

    #[test]
    fn zero_budget_returns_incumbent() {
        let inst = two_path();
        let sol = solve_bnb(&inst, 0).unwrap();
        assert!(!sol.proved_optimal);
        assert_eq!(sol.nodes_explored, 0);
        assert_eq!(sol.value, 6.0);
    }

    #[test]
    fn enumeration_cap_refuses() {
        let inst = two_path();
        match solve_enumeration_capped(&inst, 8) {
            Err(Error::EnumerationCap { candidates, cap }) => {
                assert_eq!(candidates, 9.0);
                assert_eq!(cap, 8);
            }
            other => panic!("expected refusal, got {other:?}"),
        }
    }

    #[test]
    fn single_path_takes_its_best_period() {
        let paths = SamplePathSet::from_rows_1d(&[vec![1.0, 4.0, 2.0]]).unwrap();
        let g = RewardMatrix::from_rows(&[vec![1.0, 4.0, 2.0]]).unwrap();
        let inst = RobustInstance::build(&paths, g, 0.0).unwrap();
        let sol = solve_enumeration(&inst).unwrap();
        assert_eq!(sol.sigma.as_slice(), &[2]);
        assert_eq!(sol.value, 4.0);
    }

    #[test]
    fn completion_of_policy_matches_objective() {
        let inst = two_path();
        for a in 1..=3 {
            for b in 1..=3 {
                let s = SigmaPolicy::new(vec![a, b], 3).unwrap();
                let ind = indicators_from_sigma(&s, 3);
                let w = minimal_completion(&inst, &ind).unwrap();
                let bp = bilinear_objective(&inst, &ind, &w).unwrap();
                assert_eq!(bp, ip_objective(&inst, &s).unwrap(), "sigma {s}");
            }
        }
    }

    #[test]
    fn sigma_from_indicators_defaults_to_horizon() {
        let b = vec![vec![false, true, true], vec![false, false, false]];
        let s = sigma_from_indicators(&b, 3).unwrap();
        assert_eq!(s.as_slice(), &[2, 3]);
    }

    fn export(inst: &RobustInstance) -> String {
        let mut out = Vec::new();
        export_milp(inst, &mut out).unwrap();
        String::from_utf8(out).unwrap()
    }

    #[test]
    fn two_path_export_counts() {
        let text = export(&two_path());
        let bounds = text.split("Bounds").nth(1).unwrap();
        let count = |prefix: &str| bounds.lines().filter(|l| l.trim_start().starts_with(prefix)).count();
        assert_eq!(count("w_"), 21);
        assert_eq!(count("f_"), 10);
        assert_eq!(count("b_"), 6);
        assert!(text.contains(" v0_1: w_1_1_1 = 0"));
        assert!(text.contains(" v2_2: b_2_3 + w_2_3_1 = 1"));
        assert!(text.contains(" cv_1_2_2: b_2_2 - w_1_2_3 <= 0"));
        assert!(text.trim_end().ends_with("End"));
    }

    #[test]
    fn equalities_can_be_left_out() {
        let mut out = Vec::new();
        export_milp_with(&two_path(), MilpOptions { valid_equalities: false }, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(!text.contains(" v0_"));
        assert!(text.contains(" cv_1_2_2: b_2_2 - w_1_2_3 <= 0"));
    }

    #[test]
    fn export_is_deterministic() {
        let inst = two_path();
        assert_eq!(export(&inst), export(&inst));
    }
}
