//! Domain types shared by every solver.
//!
//! Conventions used throughout the crate: path indices are 0-based
//! (`0..n_paths`), periods are 1-based (`1..=horizon`) wherever they appear in
//! a public signature, matching the values a [`SigmaPolicy`] stores.

use crate::error::{Error, Result};

/// Full asset paths kept alongside the projected states (e.g. every asset of a
/// GBM basket when the solver only sees the running maximum).
#[derive(Debug, Clone, PartialEq)]
pub struct RawPaths {
    pub dim: usize,
    /// Row-major `n_paths x horizon x dim`.
    pub values: Vec<f64>,
}

/// `N` simulated paths of `T` projected states in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePathSet {
    n_paths: usize,
    horizon: usize,
    state_dim: usize,
    states: Vec<f64>,
    raw: Option<RawPaths>,
    pub seed: u64,
    pub generator_tag: String,
}

impl SamplePathSet {
    pub fn new(
        n_paths: usize,
        horizon: usize,
        state_dim: usize,
        states: Vec<f64>,
        seed: u64,
        generator_tag: impl Into<String>,
    ) -> Result<Self> {
        if n_paths == 0 || horizon == 0 || state_dim == 0 {
            return Err(Error::Shape(format!(
                "path set needs n_paths, horizon and state_dim >= 1 (got {n_paths}, {horizon}, {state_dim})"
            )));
        }
        if states.len() != n_paths * horizon * state_dim {
            return Err(Error::Shape(format!(
                "expected {} state values, got {}",
                n_paths * horizon * state_dim,
                states.len()
            )));
        }
        if let Some(pos) = states.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite state value at flat index {pos}"
            )));
        }
        Ok(Self {
            n_paths,
            horizon,
            state_dim,
            states,
            raw: None,
            seed,
            generator_tag: generator_tag.into(),
        })
    }

    /// Convenience constructor for one-dimensional paths given row by row.
    pub fn from_rows_1d(rows: &[Vec<f64>]) -> Result<Self> {
        let horizon = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != horizon) {
            return Err(Error::Shape("ragged path rows".into()));
        }
        let states = rows.iter().flatten().copied().collect();
        Self::new(rows.len(), horizon, 1, states, 0, "table")
    }

    pub fn with_raw(mut self, raw: RawPaths) -> Result<Self> {
        if raw.dim == 0 || raw.values.len() != self.n_paths * self.horizon * raw.dim {
            return Err(Error::Shape(format!(
                "raw paths must hold n_paths x horizon x dim = {} x {} x {} values",
                self.n_paths, self.horizon, raw.dim
            )));
        }
        self.raw = Some(raw);
        Ok(self)
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn raw(&self) -> Option<&RawPaths> {
        self.raw.as_ref()
    }

    /// The `T x d` block of path `i`.
    pub fn path(&self, i: usize) -> &[f64] {
        let len = self.horizon * self.state_dim;
        &self.states[i * len..(i + 1) * len]
    }

    /// State `x^i_t` for a 1-based period `t`.
    pub fn state(&self, i: usize, t: usize) -> &[f64] {
        let d = self.state_dim;
        let start = (i * self.horizon + (t - 1)) * d;
        &self.states[start..start + d]
    }

    /// Raw asset vector of path `i` at 1-based period `t`, if raw paths exist.
    pub fn raw_state(&self, i: usize, t: usize) -> Option<&[f64]> {
        self.raw.as_ref().map(|raw| {
            let start = (i * self.horizon + (t - 1)) * raw.dim;
            &raw.values[start..start + raw.dim]
        })
    }

    pub fn raw_path(&self, i: usize) -> Option<&[f64]> {
        self.raw.as_ref().map(|raw| {
            let len = self.horizon * raw.dim;
            &raw.values[i * len..(i + 1) * len]
        })
    }
}

/// `G[i][t] = g(t, x^i)`, the discounted reward of stopping path `i` at `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardMatrix {
    n_paths: usize,
    horizon: usize,
    values: Vec<f64>,
}

impl RewardMatrix {
    pub fn new(n_paths: usize, horizon: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_paths * horizon {
            return Err(Error::Shape(format!(
                "reward matrix expects {} values, got {}",
                n_paths * horizon,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidReward(format!(
                "reward {} at path {}, period {} is negative or non-finite",
                values[pos],
                pos / horizon.max(1),
                pos % horizon.max(1) + 1
            )));
        }
        // -0.0 and 0.0 must be the same kappa level.
        let values = values.into_iter().map(|v| v + 0.0).collect();
        Ok(Self {
            n_paths,
            horizon,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let horizon = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != horizon) {
            return Err(Error::Shape("ragged reward rows".into()));
        }
        Self::new(rows.len(), horizon, rows.iter().flatten().copied().collect())
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Reward of path `i` at 1-based period `t`.
    #[inline]
    pub fn get(&self, i: usize, t: usize) -> f64 {
        self.values[i * self.horizon + t - 1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.horizon..(i + 1) * self.horizon]
    }
}

/// One stopping period per training path; `sigma[i]` is in `1..=horizon`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SigmaPolicy {
    sigma: Vec<usize>,
}

impl SigmaPolicy {
    pub fn new(sigma: Vec<usize>, horizon: usize) -> Result<Self> {
        if let Some((i, s)) = sigma
            .iter()
            .enumerate()
            .find(|(_, &s)| s == 0 || s > horizon)
        {
            return Err(Error::InvalidParameter(format!(
                "sigma[{i}] = {s} is outside 1..={horizon}"
            )));
        }
        Ok(Self { sigma })
    }

    pub fn constant(n: usize, period: usize, horizon: usize) -> Result<Self> {
        Self::new(vec![period; n], horizon)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.sigma
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.sigma
    }
}

impl std::ops::Index<usize> for SigmaPolicy {
    type Output = usize;

    fn index(&self, i: usize) -> &usize {
        &self.sigma[i]
    }
}

impl std::fmt::Display for SigmaPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (k, s) in self.sigma.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, ")")
    }
}

/// Sample mean with its standard error `s / sqrt(n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return Err(Error::EmptyTestSet);
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let ss: f64 = samples.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self { mean, std_error, n })
    }
}
