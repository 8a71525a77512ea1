//! The sampled robust problem: box centers, rewards, the radius `epsilon`,
//! and the tables every solver reads (pairwise box intersections, per-path
//! reward levels, per-path argmax periods).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{RewardMatrix, SamplePathSet};

/// Closed sup-norm boxes of radius `epsilon` around `a` and `b` meet.
#[inline]
pub fn boxes_intersect(a: &[f64], b: &[f64], epsilon: f64) -> bool {
    let reach = 2.0 * epsilon;
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= reach)
}

/// Bit-packed `intersect[t][i][j]`.
#[derive(Debug, Clone)]
pub struct IntersectionTable {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl IntersectionTable {
    fn build(states: &[f64], n: usize, horizon: usize, dim: usize, epsilon: f64) -> Self {
        let words = n.div_ceil(64);
        let mut bits = vec![0u64; horizon * n * words];
        let state = |i: usize, t0: usize| {
            let start = (i * horizon + t0) * dim;
            &states[start..start + dim]
        };
        bits.par_chunks_mut(n * words)
            .enumerate()
            .for_each(|(t0, block)| {
                let mut column: Vec<f64> = Vec::with_capacity(n * dim);
                for i in 0..n {
                    column.extend_from_slice(state(i, t0));
                }
                for i in 0..n {
                    let xi = &column[i * dim..(i + 1) * dim];
                    let row = &mut block[i * words..(i + 1) * words];
                    for j in 0..n {
                        if boxes_intersect(xi, &column[j * dim..(j + 1) * dim], epsilon) {
                            row[j / 64] |= 1u64 << (j % 64);
                        }
                    }
                }
            });
        Self { n, words, bits }
    }

    /// Row of path `i` at 1-based period `t`, one bit per path `j`.
    #[inline]
    pub fn row(&self, i: usize, t: usize) -> &[u64] {
        let start = ((t - 1) * self.n + i) * self.words;
        &self.bits[start..start + self.words]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, t: usize) -> bool {
        self.row(i, t)[j / 64] >> (j % 64) & 1 == 1
    }

    pub fn words_per_row(&self) -> usize {
        self.words
    }
}

/// Distinct values of `{G[i][1], ..., G[i][T]} ∪ {0}` in increasing order,
/// and the level index of every period.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaTable {
    levels: Vec<f64>,
    level_of: Vec<usize>,
}

impl KappaTable {
    pub fn from_rewards(row: &[f64]) -> Self {
        let mut levels: Vec<f64> = row.iter().copied().chain(std::iter::once(0.0)).collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup_by(|a, b| a.to_bits() == b.to_bits());
        let level_of = row
            .iter()
            .map(|g| {
                let pos = levels.partition_point(|k| k < g);
                debug_assert_eq!(levels[pos].to_bits(), g.to_bits());
                pos + 1
            })
            .collect();
        Self { levels, level_of }
    }

    /// Number of levels `|K^i|`.
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// `kappa_l` for a 1-based level `l`.
    #[inline]
    pub fn kappa(&self, l: usize) -> f64 {
        self.levels[l - 1]
    }

    /// `L_t` (1-based) for a 1-based period `t`.
    #[inline]
    pub fn level(&self, t: usize) -> usize {
        self.level_of[t - 1]
    }

    pub fn level_of(&self) -> &[usize] {
        &self.level_of
    }
}

#[derive(Debug, Clone)]
pub struct RobustInstance {
    n: usize,
    horizon: usize,
    dim: usize,
    states: Vec<f64>,
    rewards: RewardMatrix,
    epsilon: f64,
    intersect: IntersectionTable,
    kappa: Vec<KappaTable>,
    t_star: Vec<usize>,
}

impl RobustInstance {
    pub fn build(paths: &SamplePathSet, rewards: RewardMatrix, epsilon: f64) -> Result<Self> {
        Self::from_parts(
            paths.n_paths(),
            paths.horizon(),
            paths.state_dim(),
            paths.states().to_vec(),
            rewards,
            epsilon,
        )
    }

    pub fn from_parts(
        n: usize,
        horizon: usize,
        dim: usize,
        states: Vec<f64>,
        rewards: RewardMatrix,
        epsilon: f64,
    ) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be finite and >= 0, got {epsilon}"
            )));
        }
        if n == 0 || horizon == 0 || dim == 0 || states.len() != n * horizon * dim {
            return Err(Error::Shape(format!(
                "states must be {n} x {horizon} x {dim} with all sizes >= 1"
            )));
        }
        if rewards.n_paths() != n || rewards.horizon() != horizon {
            return Err(Error::Shape(format!(
                "rewards are {}x{}, states are {n}x{horizon}",
                rewards.n_paths(),
                rewards.horizon()
            )));
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite state".into()));
        }
        let intersect = IntersectionTable::build(&states, n, horizon, dim, epsilon);
        let kappa: Vec<KappaTable> = (0..n)
            .map(|i| KappaTable::from_rewards(rewards.row(i)))
            .collect();
        let t_star = (0..n)
            .map(|i| {
                let row = rewards.row(i);
                let mut best = 0;
                for (t0, &g) in row.iter().enumerate() {
                    if g > row[best] {
                        best = t0;
                    }
                }
                best + 1
            })
            .collect();
        Ok(Self {
            n,
            horizon,
            dim,
            states,
            rewards,
            epsilon,
            intersect,
            kappa,
            t_star,
        })
    }

    pub fn n_paths(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn rewards(&self) -> &RewardMatrix {
        &self.rewards
    }

    /// Box center `x^i_t` (1-based `t`).
    #[inline]
    pub fn state(&self, i: usize, t: usize) -> &[f64] {
        let start = (i * self.horizon + t - 1) * self.dim;
        &self.states[start..start + self.dim]
    }

    #[inline]
    pub fn reward(&self, i: usize, t: usize) -> f64 {
        self.rewards.get(i, t)
    }

    pub fn table(&self) -> &IntersectionTable {
        &self.intersect
    }

    /// Whether `U^i_t` and `U^j_t` intersect. Panics on out-of-range indices.
    pub fn intersects(&self, i: usize, j: usize, t: usize) -> bool {
        assert!(i < self.n && j < self.n, "path index out of range");
        assert!((1..=self.horizon).contains(&t), "period out of range");
        self.intersect.get(i, j, t)
    }

    /// Checked variant of [`intersects`](Self::intersects).
    pub fn try_intersects(&self, i: usize, j: usize, t: usize) -> Result<bool> {
        if i >= self.n || j >= self.n || !(1..=self.horizon).contains(&t) {
            return Err(Error::InvalidParameter(format!(
                "index ({i}, {j}, {t}) out of range for {} paths and {} periods",
                self.n, self.horizon
            )));
        }
        Ok(self.intersect.get(i, j, t))
    }

    pub fn kappa(&self, i: usize) -> &KappaTable {
        &self.kappa[i]
    }

    /// `T^i`: the earliest period at which path `i` attains its largest reward.
    pub fn t_star(&self, i: usize) -> usize {
        self.t_star[i]
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::from_parts(
            self.n,
            self.horizon,
            self.dim,
            self.states.clone(),
            self.rewards.clone(),
            epsilon,
        )
    }
}
