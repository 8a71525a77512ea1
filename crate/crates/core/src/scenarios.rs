//! Seeded path generators.
//!
//! Path `i` of a draw with seed `s` comes from its own ChaCha stream, so
//! output does not depend on thread count or generation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::reward::{reward_matrix, BarrierCall, RewardSpec};
use crate::types::{RawPaths, RewardMatrix, SamplePathSet};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for an independent sub-experiment (training, validation, test, ...).
pub fn derive_seed(seed: u64, role: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ role.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

/// Generator for path `index` under `seed`.
pub fn path_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one path".into()));
    }
    Ok(())
}

fn generate<F>(n: usize, width: usize, seed: u64, fill: F) -> Vec<f64>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync,
{
    let mut out = vec![0.0; n * width];
    out.par_chunks_mut(width).enumerate().for_each(|(i, row)| {
        let mut rng = path_rng(seed, i);
        fill(&mut rng, row);
    });
    out
}

/// Uniform noise plus an unobserved bump of height `2 theta / T` on
/// `theta..=theta + delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpParams {
    pub horizon: usize,
    pub delta: usize,
    pub seed: u64,
}

impl BumpParams {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 || self.delta == 0 || self.delta >= self.horizon {
            return Err(Error::InvalidParameter(format!(
                "bump duration must satisfy 1 <= delta <= T - 1 (T = {}, delta = {})",
                self.horizon, self.delta
            )));
        }
        Ok(())
    }
}

pub fn simulate_bump(params: &BumpParams, n: usize) -> Result<SamplePathSet> {
    params.validate()?;
    check_count(n)?;
    let (horizon, delta) = (params.horizon, params.delta);
    let states = generate(n, horizon, params.seed, |rng, row| {
        let theta = rng.random_range(1..=horizon - delta);
        let height = 2.0 * theta as f64 / horizon as f64;
        for (t0, x) in row.iter_mut().enumerate() {
            let t = t0 + 1;
            let u: f64 = rng.random();
            *x = if (theta..=theta + delta).contains(&t) { u + height } else { u };
        }
    });
    SamplePathSet::new(n, horizon, 1, states, params.seed, "bump")
}

/// How the Brownian term enters the exponent of the asset price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GbmScaling {
    /// `sigma * lambda * W_t`.
    #[default]
    Printed,
    /// `sigma * sqrt(lambda) * W_t`.
    Textbook,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbmBarrierParams {
    pub assets: usize,
    pub horizon: usize,
    pub years: f64,
    pub rate: f64,
    pub strike: f64,
    pub barrier_base: f64,
    pub barrier_growth: f64,
    pub initial_price: f64,
    pub volatilities: Vec<f64>,
    /// Row-major `assets x assets`; `None` means independent assets.
    pub correlation: Option<Vec<f64>>,
    pub scaling: GbmScaling,
    pub seed: u64,
}

impl GbmBarrierParams {
    pub fn payoff(&self) -> BarrierCall {
        BarrierCall {
            rate: self.rate,
            strike: self.strike,
            barrier_base: self.barrier_base,
            barrier_growth: self.barrier_growth,
            years: self.years,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.assets == 0 || self.horizon == 0 {
            return Err(Error::InvalidParameter("need at least one asset and one period".into()));
        }
        if self.volatilities.len() != self.assets {
            return Err(Error::InvalidParameter(format!(
                "{} volatilities given for {} assets",
                self.volatilities.len(),
                self.assets
            )));
        }
        if self.volatilities.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter("volatilities must be finite and >= 0".into()));
        }
        if !(self.initial_price > 0.0) || !self.initial_price.is_finite() {
            return Err(Error::InvalidParameter("initial price must be positive".into()));
        }
        self.payoff().validate()
    }
}

/// Lower-triangular `L` with `L L' = rho` for a symmetric positive
/// semidefinite correlation matrix. Zero pivots are allowed.
pub fn correlation_factor(rho: &[f64], d: usize) -> Result<Vec<f64>> {
    const TOL: f64 = 1e-10;
    if rho.len() != d * d {
        return Err(Error::Shape(format!("correlation must be {d}x{d}")));
    }
    for a in 0..d {
        if (rho[a * d + a] - 1.0).abs() > TOL {
            return Err(Error::Factorization("correlation diagonal must be 1".into()));
        }
        for b in 0..a {
            if (rho[a * d + b] - rho[b * d + a]).abs() > TOL {
                return Err(Error::Factorization("correlation must be symmetric".into()));
            }
        }
    }
    let mut l = vec![0.0f64; d * d];
    for j in 0..d {
        let pivot = rho[j * d + j] - (0..j).map(|k| l[j * d + k].powi(2)).sum::<f64>();
        if pivot < -TOL {
            return Err(Error::Factorization("correlation is not positive semidefinite".into()));
        }
        let diag = pivot.max(0.0).sqrt();
        l[j * d + j] = diag;
        for i in j + 1..d {
            let r = rho[i * d + j] - (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum::<f64>();
            if diag > TOL {
                l[i * d + j] = r / diag;
            } else if r.abs() > 1e-8 {
                return Err(Error::Factorization("correlation is not positive semidefinite".into()));
            }
        }
    }
    Ok(l)
}

/// Basket paths projected to their running coordinate maximum, with the
/// knock-out call rewards computed from the full basket.
pub fn simulate_gbm_barrier(
    params: &GbmBarrierParams,
    n: usize,
) -> Result<(SamplePathSet, RewardMatrix)> {
    params.validate()?;
    check_count(n)?;
    let (d, horizon) = (params.assets, params.horizon);
    let factor = match &params.correlation {
        Some(rho) => Some(correlation_factor(rho, d)?),
        None => None,
    };
    let lambda = params.years / horizon as f64;
    let shock_scale = match params.scaling {
        GbmScaling::Printed => lambda,
        GbmScaling::Textbook => lambda.sqrt(),
    };
    let raw = generate(n, horizon * d, params.seed, |rng, row| {
        let mut w = vec![0.0; d];
        let mut z = vec![0.0; d];
        for t0 in 0..horizon {
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            for a in 0..d {
                w[a] += match &factor {
                    Some(l) => (0..=a).map(|k| l[a * d + k] * z[k]).sum::<f64>(),
                    None => z[a],
                };
                let sigma = params.volatilities[a];
                let t = (t0 + 1) as f64;
                let drift = (params.rate - 0.5 * sigma * sigma) * lambda * t;
                row[t0 * d + a] = params.initial_price * (drift + sigma * shock_scale * w[a]).exp();
            }
        }
    });
    let states = raw
        .chunks_exact(d)
        .map(|x| x.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let paths = SamplePathSet::new(n, horizon, 1, states, params.seed, "gbm")?
        .with_raw(RawPaths { dim: d, values: raw })?;
    let rewards = reward_matrix(&paths, &RewardSpec::BarrierCall(params.payoff()))?;
    Ok((paths, rewards))
}

/// Two-atom process: `(3, 2, 1)` with probability 2/3, else `(1, 2, 3)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThreePointParams {
    pub seed: u64,
}

pub fn simulate_threepoint(params: &ThreePointParams, n: usize) -> Result<SamplePathSet> {
    check_count(n)?;
    let states = generate(n, 3, params.seed, |rng, row| {
        let falling = rng.random_range(0..3u32) < 2;
        row.copy_from_slice(if falling { &[3.0, 2.0, 1.0] } else { &[1.0, 2.0, 3.0] });
    });
    SamplePathSet::new(n, 3, 1, states, params.seed, "threepoint")
}

/// Independent `Uniform[0, 1]` states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniformParams {
    pub horizon: usize,
    pub seed: u64,
}

pub fn simulate_uniform(params: &UniformParams, n: usize) -> Result<SamplePathSet> {
    check_count(n)?;
    if params.horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be >= 1".into()));
    }
    let states = generate(n, params.horizon, params.seed, |rng, row| {
        for x in row.iter_mut() {
            *x = rng.random();
        }
    });
    SamplePathSet::new(n, params.horizon, 1, states, params.seed, "uniform")
}
