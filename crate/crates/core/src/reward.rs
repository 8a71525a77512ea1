//! Reward families and the precomputed reward matrix.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::types::{RewardMatrix, SamplePathSet};

/// Discretely monitored knock-out call on the maximum of a basket.
///
/// Exercise opportunity `t` sits at calendar time `lambda * t` with
/// `lambda = years / horizon`; the barrier at `t` is
/// `barrier_base * exp(barrier_growth * lambda * t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierCall {
    pub rate: f64,
    pub strike: f64,
    pub barrier_base: f64,
    pub barrier_growth: f64,
    pub years: f64,
}

impl BarrierCall {
    pub fn validate(&self) -> Result<()> {
        if !(self.years > 0.0) {
            return Err(Error::InvalidReward("years must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.rate) {
            return Err(Error::InvalidReward("rate must lie in [0, 1)".into()));
        }
        if !(self.strike >= 0.0) || !(self.barrier_base > 0.0) || !self.barrier_growth.is_finite()
        {
            return Err(Error::InvalidReward(
                "strike must be >= 0, barrier base > 0, growth finite".into(),
            ));
        }
        Ok(())
    }

    pub fn barrier(&self, t: usize, horizon: usize) -> f64 {
        let lambda = self.years / horizon as f64;
        self.barrier_base * (self.barrier_growth * lambda * t as f64).exp()
    }

    pub fn discount(&self, t: usize, horizon: usize) -> f64 {
        let lambda = self.years / horizon as f64;
        (-self.rate * lambda * t as f64).exp()
    }
}

/// In-process reward hook: `(t, path)` where `path` is the `T x d` state block.
pub type RewardFn = Arc<dyn Fn(usize, &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum RewardSpec {
    /// `g(t, x) = x_t`; for `d > 1` the largest coordinate of `x_t`.
    Identity,
    /// Knock-out call evaluated on the raw asset paths.
    BarrierCall(BarrierCall),
    /// A matrix supplied by the caller (e.g. loaded from CSV).
    Table(RewardMatrix),
    Custom(RewardFn),
}

impl fmt::Debug for RewardSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RewardSpec::Identity => write!(f, "Identity"),
            RewardSpec::BarrierCall(b) => f.debug_tuple("BarrierCall").field(b).finish(),
            RewardSpec::Table(m) => write!(f, "Table({}x{})", m.n_paths(), m.horizon()),
            RewardSpec::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

fn max_coord(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Knock-out flags `q[i][t]`: true once the basket maximum exceeded the
/// barrier at some `s <= t`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnockoutMatrix {
    horizon: usize,
    flags: Vec<bool>,
}

impl KnockoutMatrix {
    pub fn row(&self, i: usize) -> &[bool] {
        &self.flags[i * self.horizon..(i + 1) * self.horizon]
    }

    pub fn get(&self, i: usize, t: usize) -> bool {
        self.flags[i * self.horizon + t - 1]
    }
}

fn raw_or_error(paths: &SamplePathSet) -> Result<&crate::types::RawPaths> {
    paths.raw().ok_or_else(|| {
        Error::Configuration("barrier reward needs raw asset paths, none were supplied".into())
    })
}

pub fn knockout_matrix(paths: &SamplePathSet, spec: &BarrierCall) -> Result<KnockoutMatrix> {
    raw_or_error(paths)?;
    let horizon = paths.horizon();
    let mut flags = Vec::with_capacity(paths.n_paths() * horizon);
    for i in 0..paths.n_paths() {
        let mut knocked = false;
        for t in 1..=horizon {
            let top = max_coord(paths.raw_state(i, t).expect("raw checked"));
            knocked |= top > spec.barrier(t, horizon);
            flags.push(knocked);
        }
    }
    Ok(KnockoutMatrix { horizon, flags })
}

/// Evaluate `g(t, x^i)` for every path and period.
pub fn reward_matrix(paths: &SamplePathSet, spec: &RewardSpec) -> Result<RewardMatrix> {
    let (n, horizon) = (paths.n_paths(), paths.horizon());
    let values = match spec {
        RewardSpec::Identity => (0..n)
            .flat_map(|i| (1..=horizon).map(move |t| (i, t)))
            .map(|(i, t)| max_coord(paths.state(i, t)))
            .collect(),
        RewardSpec::BarrierCall(call) => {
            call.validate()?;
            let ko = knockout_matrix(paths, call)?;
            let mut values = Vec::with_capacity(n * horizon);
            for i in 0..n {
                for t in 1..=horizon {
                    let v = if ko.get(i, t) {
                        0.0
                    } else {
                        let top = max_coord(paths.raw_state(i, t).expect("raw checked"));
                        call.discount(t, horizon) * (top - call.strike).max(0.0)
                    };
                    values.push(v);
                }
            }
            values
        }
        RewardSpec::Table(table) => {
            if table.n_paths() != n || table.horizon() != horizon {
                return Err(Error::Shape(format!(
                    "reward table is {}x{}, paths are {n}x{horizon}",
                    table.n_paths(),
                    table.horizon()
                )));
            }
            return Ok(table.clone());
        }
        RewardSpec::Custom(hook) => (0..n)
            .flat_map(|i| (1..=horizon).map(move |t| (i, t)))
            .map(|(i, t)| hook(t, paths.path(i)))
            .collect(),
    };
    RewardMatrix::new(n, horizon, values)
}
