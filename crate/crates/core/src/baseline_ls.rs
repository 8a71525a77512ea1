//! Least-squares regression baseline (Longstaff-Schwartz).
//!
//! Continuation values are regressed on features of the current period
//! only, so the fitted rule is Markovian in `(t, x_t, q_t)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::reward::KnockoutMatrix;
use crate::types::{MeanEstimate, RewardMatrix, SamplePathSet};

pub const MAX_LAGUERRE_DEGREE: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisFamily {
    /// Constant 1.
    One,
    /// Asset prices at `t` (raw coordinates when present, else the state).
    Prices,
    /// Prices times the alive indicator `1 - q_t`.
    PricesKo,
    /// Knock-out indicator `q_t`.
    KoInd,
    /// Largest coordinate of the state.
    MaxPrice,
    /// The reward `G[i][t]`.
    Payoff,
    /// Laguerre polynomials `L_1 .. L_k` of the largest state coordinate.
    Laguerre(usize),
}

impl fmt::Display for BasisFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisFamily::One => write!(f, "one"),
            BasisFamily::Prices => write!(f, "prices"),
            BasisFamily::PricesKo => write!(f, "pricesKO"),
            BasisFamily::KoInd => write!(f, "KOind"),
            BasisFamily::MaxPrice => write!(f, "maxprice"),
            BasisFamily::Payoff => write!(f, "payoff"),
            BasisFamily::Laguerre(k) => write!(f, "laguerre({k})"),
        }
    }
}

impl FromStr for BasisFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Ok(match lower.as_str() {
            "one" => BasisFamily::One,
            "prices" => BasisFamily::Prices,
            "pricesko" => BasisFamily::PricesKo,
            "koind" => BasisFamily::KoInd,
            "maxprice" => BasisFamily::MaxPrice,
            "payoff" => BasisFamily::Payoff,
            _ => {
                let degree = lower
                    .strip_prefix("laguerre(")
                    .and_then(|r| r.strip_suffix(')'))
                    .or_else(|| lower.strip_prefix("laguerre"))
                    .and_then(|k| k.trim_start_matches(['-', ' ']).parse::<usize>().ok())
                    .ok_or_else(|| Error::Parse(format!("unknown basis family '{s}'")))?;
                BasisFamily::Laguerre(degree)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisSpec {
    families: Vec<BasisFamily>,
}

impl BasisSpec {
    pub fn new(families: Vec<BasisFamily>) -> Result<Self> {
        if families.is_empty() {
            return Err(Error::InvalidParameter("select at least one basis family".into()));
        }
        for f in &families {
            if let BasisFamily::Laguerre(k) = f {
                if *k == 0 || *k > MAX_LAGUERRE_DEGREE {
                    return Err(Error::InvalidParameter(format!(
                        "laguerre degree must be in 1..={MAX_LAGUERRE_DEGREE}, got {k}"
                    )));
                }
            }
        }
        Ok(Self { families })
    }

    /// Comma-separated list such as `one,prices,laguerre(2)`.
    pub fn parse(list: &str) -> Result<Self> {
        let mut families = Vec::new();
        let mut depth = 0;
        let mut start = 0;
        for (k, c) in list.char_indices() {
            match c {
                '(' => depth += 1,
                ')' => depth -= 1,
                ',' if depth == 0 => {
                    families.push(list[start..k].parse()?);
                    start = k + 1;
                }
                _ => {}
            }
        }
        if !list[start..].trim().is_empty() {
            families.push(list[start..].parse()?);
        }
        Self::new(families)
    }

    pub fn families(&self) -> &[BasisFamily] {
        &self.families
    }

    pub fn needs_knockout(&self) -> bool {
        self.families
            .iter()
            .any(|f| matches!(f, BasisFamily::PricesKo | BasisFamily::KoInd))
    }

    /// Number of regressors for paths whose price vector has `prices`
    /// coordinates.
    pub fn dimension(&self, prices: usize) -> usize {
        self.families
            .iter()
            .map(|f| match f {
                BasisFamily::Prices | BasisFamily::PricesKo => prices,
                BasisFamily::Laguerre(k) => *k,
                _ => 1,
            })
            .sum()
    }
}

impl fmt::Display for BasisSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.families.iter().map(ToString::to_string).collect();
        write!(f, "{}", names.join(","))
    }
}

/// `L_1(x) .. L_k(x)` by the three-term recurrence.
pub fn laguerre(k: usize, x: f64, out: &mut Vec<f64>) {
    let (mut prev, mut cur) = (1.0, 1.0 - x);
    for n in 1..=k {
        out.push(cur);
        let next = ((2 * n + 1) as f64 - x) * cur / (n + 1) as f64 - n as f64 * prev / (n + 1) as f64;
        prev = cur;
        cur = next;
    }
}

/// What the rule sees of one path at one period.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub state: &'a [f64],
    pub prices: &'a [f64],
    pub knocked_out: bool,
    pub reward: f64,
}

fn features(basis: &BasisSpec, obs: &Observation<'_>, out: &mut Vec<f64>) {
    out.clear();
    let top = obs.state.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let alive = if obs.knocked_out { 0.0 } else { 1.0 };
    for family in basis.families() {
        match family {
            BasisFamily::One => out.push(1.0),
            BasisFamily::Prices => out.extend_from_slice(obs.prices),
            BasisFamily::PricesKo => out.extend(obs.prices.iter().map(|p| p * alive)),
            BasisFamily::KoInd => out.push(1.0 - alive),
            BasisFamily::MaxPrice => out.push(top),
            BasisFamily::Payoff => out.push(obs.reward),
            BasisFamily::Laguerre(k) => laguerre(*k, top, out),
        }
    }
}

/// Training or test data for the regression rule.
#[derive(Debug, Clone, Copy)]
pub struct LsData<'a> {
    pub paths: &'a SamplePathSet,
    pub rewards: &'a RewardMatrix,
    pub knockout: Option<&'a KnockoutMatrix>,
}

impl<'a> LsData<'a> {
    pub fn new(
        paths: &'a SamplePathSet,
        rewards: &'a RewardMatrix,
        knockout: Option<&'a KnockoutMatrix>,
    ) -> Result<Self> {
        if rewards.n_paths() != paths.n_paths() || rewards.horizon() != paths.horizon() {
            return Err(Error::Shape(format!(
                "rewards are {}x{}, paths are {}x{}",
                rewards.n_paths(),
                rewards.horizon(),
                paths.n_paths(),
                paths.horizon()
            )));
        }
        Ok(Self {
            paths,
            rewards,
            knockout,
        })
    }

    fn price_dim(&self) -> usize {
        self.paths.raw().map_or(self.paths.state_dim(), |r| r.dim)
    }

    fn observe(&self, i: usize, t: usize) -> Observation<'a> {
        let state = self.paths.state(i, t);
        Observation {
            state,
            prices: self.paths.raw_state(i, t).unwrap_or(state),
            knocked_out: self.knockout.is_some_and(|k| k.get(i, t)),
            reward: self.rewards.get(i, t),
        }
    }

    fn check_basis(&self, basis: &BasisSpec) -> Result<()> {
        if basis.needs_knockout() && self.knockout.is_none() {
            return Err(Error::Configuration(format!(
                "basis '{basis}' uses knock-out features but no knock-out data was supplied"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsPolicy {
    basis: BasisSpec,
    horizon: usize,
    /// Continuation coefficients for `t = 1 .. T-1`.
    coefficients: Vec<Vec<f64>>,
}

impl LsPolicy {
    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn coefficients(&self, t: usize) -> &[f64] {
        &self.coefficients[t - 1]
    }

    fn continuation(&self, t: usize, obs: &Observation<'_>, buf: &mut Vec<f64>) -> f64 {
        features(&self.basis, obs, buf);
        buf.iter().zip(&self.coefficients[t - 1]).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LsOptions {
    /// Regress and decide only on paths with a positive reward.
    pub in_the_money_only: bool,
}

/// Solve `(X'X + ridge I) beta = X'y`; the ridge is only added when the
/// plain system is numerically singular.
fn least_squares(gram: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    let p = gram.nrows();
    let trace = gram.trace();
    let max_diag = (0..p).map(|k| gram[(k, k)]).fold(0.0, f64::max);
    let well_posed = |l: &DMatrix<f64>| (0..p).all(|k| l[(k, k)].powi(2) > 1e-12 * max_diag);
    if let Some(chol) = gram.clone().cholesky() {
        if well_posed(&chol.l()) {
            return Ok(chol.solve(&rhs));
        }
    }
    let ridge = 1e-8 * trace / p as f64;
    if !(ridge > 0.0) {
        return Err(Error::Fitting("design matrix is identically zero".into()));
    }
    let shifted = gram + DMatrix::identity(p, p) * ridge;
    let chol = shifted
        .cholesky()
        .ok_or_else(|| Error::Fitting("design matrix is singular even after ridge".into()))?;
    let beta = chol.solve(&rhs);
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Fitting("non-finite regression coefficients".into()));
    }
    Ok(beta)
}

pub fn fit_ls(data: &LsData<'_>, basis: &BasisSpec, options: LsOptions) -> Result<LsPolicy> {
    data.check_basis(basis)?;
    let (n, horizon) = (data.paths.n_paths(), data.paths.horizon());
    let p = basis.dimension(data.price_dim());
    if n <= p {
        return Err(Error::Fitting(format!(
            "{n} training paths cannot fit {p} regressors"
        )));
    }
    let mut cash: Vec<f64> = (0..n).map(|i| data.rewards.get(i, horizon)).collect();
    let mut coefficients = vec![Vec::new(); horizon.saturating_sub(1)];
    for t in (1..horizon).rev() {
        let used = |i: usize| !options.in_the_money_only || data.rewards.get(i, t) > 0.0;
        let (gram, rhs) = (0..n)
            .into_par_iter()
            .filter(|&i| used(i))
            .fold(
                || (DMatrix::<f64>::zeros(p, p), DVector::<f64>::zeros(p), Vec::with_capacity(p)),
                |(mut gram, mut rhs, mut buf), i| {
                    features(basis, &data.observe(i, t), &mut buf);
                    for a in 0..p {
                        rhs[a] += buf[a] * cash[i];
                        for b in 0..=a {
                            gram[(a, b)] += buf[a] * buf[b];
                        }
                    }
                    (gram, rhs, buf)
                },
            )
            .map(|(g, r, _)| (g, r))
            .reduce(
                || (DMatrix::zeros(p, p), DVector::zeros(p)),
                |(g1, r1), (g2, r2)| (g1 + g2, r1 + r2),
            );
        let mut gram = gram;
        for a in 0..p {
            for b in 0..a {
                gram[(b, a)] = gram[(a, b)];
            }
        }
        let beta = if rhs.iter().all(|&v| v == 0.0) && gram.iter().all(|&v| v == 0.0) {
            DVector::zeros(p)
        } else {
            least_squares(gram, rhs)?
        };
        let beta: Vec<f64> = beta.iter().copied().collect();
        cash.par_iter_mut().enumerate().for_each(|(i, c)| {
            if !used(i) {
                return;
            }
            let obs = data.observe(i, t);
            let mut buf = Vec::with_capacity(p);
            features(basis, &obs, &mut buf);
            let fit: f64 = buf.iter().zip(&beta).map(|(a, b)| a * b).sum();
            if obs.reward >= fit {
                *c = obs.reward;
            }
        });
        coefficients[t - 1] = beta;
    }
    Ok(LsPolicy {
        basis: basis.clone(),
        horizon,
        coefficients,
    })
}

/// First period whose reward reaches the fitted continuation; `T` if none.
pub fn apply_ls<'a>(
    policy: &LsPolicy,
    observations: impl IntoIterator<Item = Observation<'a>>,
    options: LsOptions,
) -> usize {
    let mut buf = Vec::new();
    for (t0, obs) in observations.into_iter().enumerate().take(policy.horizon - 1) {
        let t = t0 + 1;
        if options.in_the_money_only && obs.reward <= 0.0 {
            continue;
        }
        if obs.reward >= policy.continuation(t, &obs, &mut buf) {
            return t;
        }
    }
    policy.horizon
}

/// Stopping period of every path in `data`.
pub fn stopping_times(policy: &LsPolicy, data: &LsData<'_>, options: LsOptions) -> Result<Vec<usize>> {
    data.check_basis(&policy.basis)?;
    if data.paths.horizon() != policy.horizon {
        return Err(Error::Shape(format!(
            "policy has {} periods, data has {}",
            policy.horizon,
            data.paths.horizon()
        )));
    }
    Ok((0..data.paths.n_paths())
        .into_par_iter()
        .map(|i| apply_ls(policy, (1..=policy.horizon).map(|t| data.observe(i, t)), options))
        .collect())
}

pub fn evaluate_ls(policy: &LsPolicy, data: &LsData<'_>, options: LsOptions) -> Result<MeanEstimate> {
    let stops = stopping_times(policy, data, options)?;
    let realized: Vec<f64> = stops
        .iter()
        .enumerate()
        .map(|(i, &t)| data.rewards.get(i, t))
        .collect();
    MeanEstimate::from_samples(&realized)
}
