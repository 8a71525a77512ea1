//! Objective of a sigma-policy, its materialized stopping rule, and
//! out-of-sample evaluation.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::instance::RobustInstance;
use crate::types::{MeanEstimate, RewardMatrix, SamplePathSet, SigmaPolicy};

fn check_shape(instance: &RobustInstance, policy: &SigmaPolicy) -> Result<()> {
    if policy.len() != instance.n_paths() {
        return Err(Error::Shape(format!(
            "policy has {} entries, instance has {} paths",
            policy.len(),
            instance.n_paths()
        )));
    }
    if let Some(&s) = policy.as_slice().iter().find(|&&s| s > instance.horizon()) {
        return Err(Error::Shape(format!(
            "sigma value {s} exceeds horizon {}",
            instance.horizon()
        )));
    }
    Ok(())
}

/// Bitmask per period of the paths `j` with `sigma[j] = t`.
fn stop_masks(instance: &RobustInstance, policy: &SigmaPolicy) -> Vec<Vec<u64>> {
    let words = instance.table().words_per_row();
    let mut masks = vec![vec![0u64; words]; instance.horizon()];
    for (j, &s) in policy.as_slice().iter().enumerate() {
        masks[s - 1][j / 64] |= 1u64 << (j % 64);
    }
    masks
}

fn inner_min_with_masks(
    instance: &RobustInstance,
    policy: &SigmaPolicy,
    masks: &[Vec<u64>],
    i: usize,
) -> f64 {
    let mut best = f64::INFINITY;
    for t in 1..=policy[i] {
        let row = instance.table().row(i, t);
        let hit = row.iter().zip(&masks[t - 1]).any(|(a, b)| a & b != 0);
        if hit {
            best = best.min(instance.reward(i, t));
        }
    }
    debug_assert!(best.is_finite(), "t = sigma[i] with j = i always qualifies");
    best
}

/// Path `i`'s term of the objective: the smallest reward over periods
/// `t <= sigma[i]` at which some path `j` with `sigma[j] = t` has a box
/// meeting path `i`'s box.
pub fn inner_min(instance: &RobustInstance, policy: &SigmaPolicy, i: usize) -> Result<f64> {
    check_shape(instance, policy)?;
    let masks = stop_masks(instance, policy);
    Ok(inner_min_with_masks(instance, policy, &masks, i))
}

/// Per-path inner minima; the objective is their mean.
pub fn inner_minima(instance: &RobustInstance, policy: &SigmaPolicy) -> Result<Vec<f64>> {
    check_shape(instance, policy)?;
    let masks = stop_masks(instance, policy);
    Ok((0..instance.n_paths())
        .into_par_iter()
        .map(|i| inner_min_with_masks(instance, policy, &masks, i))
        .collect())
}

/// Robust objective value of the policy induced by `policy`.
pub fn ip_objective(instance: &RobustInstance, policy: &SigmaPolicy) -> Result<f64> {
    let terms = inner_minima(instance, policy)?;
    Ok(terms.iter().sum::<f64>() / instance.n_paths() as f64)
}

#[derive(Debug, Clone, PartialEq)]
struct PeriodRegion {
    path_ids: Vec<usize>,
    /// Centers flattened `len x dim`, in `path_ids` order.
    centers: Vec<f64>,
    /// For `dim == 1`: centers sorted ascending, for logarithmic lookups.
    sorted: Vec<f64>,
}

/// Markovian stopping rule whose period-`t` stopping region is the union of
/// the sup-norm boxes of radius `epsilon` around `x^i_t` for every path `i`
/// assigned `sigma[i] = t`.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingRule {
    epsilon: f64,
    dim: usize,
    periods: Vec<PeriodRegion>,
}

impl StoppingRule {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn horizon(&self) -> usize {
        self.periods.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(path id, center)` pairs defining the period-`t` region.
    pub fn centers(&self, t: usize) -> impl Iterator<Item = (usize, &[f64])> {
        let region = &self.periods[t - 1];
        region
            .path_ids
            .iter()
            .copied()
            .zip(region.centers.chunks_exact(self.dim))
    }

    /// Whether the rule stops at period `t` on state `y`.
    pub fn stop(&self, t: usize, y: &[f64]) -> bool {
        let region = &self.periods[t - 1];
        if self.dim == 1 {
            let y = y[0];
            let sorted = &region.sorted;
            let k = sorted.partition_point(|&c| c < y);
            return (k < sorted.len() && (sorted[k] - y).abs() <= self.epsilon)
                || (k > 0 && (sorted[k - 1] - y).abs() <= self.epsilon);
        }
        region
            .centers
            .chunks_exact(self.dim)
            .any(|c| c.iter().zip(y).all(|(a, b)| (a - b).abs() <= self.epsilon))
    }
}

pub fn materialize_policy(instance: &RobustInstance, policy: &SigmaPolicy) -> Result<StoppingRule> {
    check_shape(instance, policy)?;
    let dim = instance.dim();
    let mut periods: Vec<PeriodRegion> = (0..instance.horizon())
        .map(|_| PeriodRegion {
            path_ids: Vec::new(),
            centers: Vec::new(),
            sorted: Vec::new(),
        })
        .collect();
    for (i, &s) in policy.as_slice().iter().enumerate() {
        let region = &mut periods[s - 1];
        region.path_ids.push(i);
        region.centers.extend_from_slice(instance.state(i, s));
    }
    if dim == 1 {
        for region in &mut periods {
            region.sorted = region.centers.clone();
            region.sorted.sort_by(f64::total_cmp);
        }
    }
    Ok(StoppingRule {
        epsilon: instance.epsilon(),
        dim,
        periods,
    })
}

/// First period at which `rule` stops on `path` (a `T x d` block), or `None`
/// if it never stops. Periods are 1-based.
pub fn apply_policy(rule: &StoppingRule, path: &[f64]) -> Option<usize> {
    path.chunks_exact(rule.dim)
        .take(rule.horizon())
        .enumerate()
        .find(|(t0, y)| rule.stop(t0 + 1, y))
        .map(|(t0, _)| t0 + 1)
}

/// Reward realised on each test path (`0` for paths that never stop).
pub fn realized_rewards(
    rule: &StoppingRule,
    test: &SamplePathSet,
    rewards: &RewardMatrix,
) -> Result<Vec<f64>> {
    if test.n_paths() != rewards.n_paths() || test.horizon() != rewards.horizon() {
        return Err(Error::Shape(
            "test rewards do not correspond to the test paths".into(),
        ));
    }
    if test.horizon() != rule.horizon() || test.state_dim() != rule.dim() {
        return Err(Error::Shape(format!(
            "rule is {} periods x {} dims, test paths are {} x {}",
            rule.horizon(),
            rule.dim(),
            test.horizon(),
            test.state_dim()
        )));
    }
    Ok((0..test.n_paths())
        .into_par_iter()
        .map(|i| match apply_policy(rule, test.path(i)) {
            Some(t) => rewards.get(i, t),
            None => 0.0,
        })
        .collect())
}

pub fn evaluate_policy(
    rule: &StoppingRule,
    test: &SamplePathSet,
    rewards: &RewardMatrix,
) -> Result<MeanEstimate> {
    MeanEstimate::from_samples(&realized_rewards(rule, test, rewards)?)
}
