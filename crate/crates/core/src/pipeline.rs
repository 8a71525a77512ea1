//! Training-size schedule, epsilon validation and test estimation.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::baseline_ls::{evaluate_ls, fit_ls, BasisSpec, LsData, LsOptions};
use crate::error::{Error, Result};
use crate::exact::{solve_bnb, solve_enumeration};
use crate::heuristic::solve_heuristic;
use crate::instance::RobustInstance;
use crate::policy::{evaluate_policy, materialize_policy, StoppingRule};
use crate::reward::{knockout_matrix, reward_matrix, KnockoutMatrix, RewardSpec};
use crate::scenarios::{
    derive_seed, simulate_bump, simulate_gbm_barrier, simulate_threepoint, simulate_uniform,
    BumpParams, GbmBarrierParams, ThreePointParams, UniformParams,
};
use crate::types::{MeanEstimate, RewardMatrix, SamplePathSet, SigmaPolicy};

pub const ROLE_VALIDATION: u64 = 1;
pub const ROLE_TEST: u64 = 2;
pub const ROLE_BASELINE: u64 = 3;
/// Training set `k` (0-based position in the size schedule) uses role
/// `ROLE_TRAINING + k`.
pub const ROLE_TRAINING: u64 = 100;

#[derive(Debug, Clone, PartialEq)]
pub enum ProcessSpec {
    Bump { horizon: usize, delta: usize },
    /// The `seed` field of the parameters is ignored; roles supply seeds.
    Gbm(GbmBarrierParams),
    ThreePoint,
    Uniform { horizon: usize },
}

/// Simulated paths with their rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub paths: SamplePathSet,
    pub rewards: RewardMatrix,
    pub knockout: Option<KnockoutMatrix>,
}

impl Sample {
    pub fn ls_data(&self) -> Result<LsData<'_>> {
        LsData::new(&self.paths, &self.rewards, self.knockout.as_ref())
    }
}

impl ProcessSpec {
    pub fn horizon(&self) -> usize {
        match self {
            ProcessSpec::Bump { horizon, .. } | ProcessSpec::Uniform { horizon } => *horizon,
            ProcessSpec::Gbm(p) => p.horizon,
            ProcessSpec::ThreePoint => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProcessSpec::Bump { .. } => "bump",
            ProcessSpec::Gbm(_) => "gbm",
            ProcessSpec::ThreePoint => "threepoint",
            ProcessSpec::Uniform { .. } => "uniform",
        }
    }

    pub fn simulate(&self, seed: u64, n: usize) -> Result<Sample> {
        let identity = |paths: SamplePathSet| -> Result<Sample> {
            let rewards = reward_matrix(&paths, &RewardSpec::Identity)?;
            Ok(Sample {
                paths,
                rewards,
                knockout: None,
            })
        };
        match self {
            ProcessSpec::Bump { horizon, delta } => identity(simulate_bump(
                &BumpParams {
                    horizon: *horizon,
                    delta: *delta,
                    seed,
                },
                n,
            )?),
            ProcessSpec::ThreePoint => identity(simulate_threepoint(&ThreePointParams { seed }, n)?),
            ProcessSpec::Uniform { horizon } => identity(simulate_uniform(
                &UniformParams {
                    horizon: *horizon,
                    seed,
                },
                n,
            )?),
            ProcessSpec::Gbm(params) => {
                let params = GbmBarrierParams {
                    seed,
                    ..params.clone()
                };
                let (paths, rewards) = simulate_gbm_barrier(&params, n)?;
                let knockout = Some(knockout_matrix(&paths, &params.payoff())?);
                Ok(Sample {
                    paths,
                    rewards,
                    knockout,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverChoice {
    Heuristic,
    BranchAndBound,
    Enumeration,
}

impl fmt::Display for SolverChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverChoice::Heuristic => "heuristic",
            SolverChoice::BranchAndBound => "bnb",
            SolverChoice::Enumeration => "enum",
        })
    }
}

impl FromStr for SolverChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heuristic" => Ok(SolverChoice::Heuristic),
            "bnb" => Ok(SolverChoice::BranchAndBound),
            "enum" | "enumeration" => Ok(SolverChoice::Enumeration),
            other => Err(Error::Parse(format!(
                "unknown solver '{other}' (expected heuristic, bnb or enum)"
            ))),
        }
    }
}

/// Solution of the robust problem by the chosen method.
#[derive(Debug, Clone, PartialEq)]
pub struct Solved {
    pub sigma: SigmaPolicy,
    /// Surrogate value for the heuristic, optimum for the exact solvers.
    pub objective: f64,
    /// Robust objective of `sigma`.
    pub policy_value: f64,
    pub proved_optimal: bool,
}

pub fn solve(instance: &RobustInstance, solver: SolverChoice, node_budget: u64) -> Result<Solved> {
    Ok(match solver {
        SolverChoice::Heuristic => {
            let h = solve_heuristic(instance)?;
            Solved {
                sigma: h.sigma,
                objective: h.hbar_value,
                policy_value: h.ip_value,
                proved_optimal: false,
            }
        }
        SolverChoice::BranchAndBound | SolverChoice::Enumeration => {
            let e = if solver == SolverChoice::Enumeration {
                solve_enumeration(instance)?
            } else {
                solve_bnb(instance, node_budget)?
            };
            Solved {
                sigma: e.sigma,
                objective: e.value,
                policy_value: e.value,
                proved_optimal: e.proved_optimal,
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub basis: BasisSpec,
    pub options: LsOptions,
    pub training_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub process: ProcessSpec,
    /// Strictly increasing.
    pub training_sizes: Vec<usize>,
    pub validation_size: usize,
    pub test_size: usize,
    pub epsilons: Vec<f64>,
    pub budget_seconds: f64,
    pub solver: SolverChoice,
    /// Node limit for branch-and-bound.
    pub node_budget: u64,
    pub seed: u64,
    pub baseline: Option<BaselineConfig>,
}

impl PipelineConfig {
    pub fn new(process: ProcessSpec, training_sizes: Vec<usize>, epsilons: Vec<f64>) -> Self {
        Self {
            process,
            training_sizes,
            validation_size: 1_000,
            test_size: 100_000,
            epsilons,
            budget_seconds: f64::INFINITY,
            solver: SolverChoice::Heuristic,
            node_budget: u64::MAX,
            seed: 0,
            baseline: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.training_sizes.is_empty() || self.epsilons.is_empty() {
            return Err(Error::Configuration("training sizes and epsilon grid must be non-empty".into()));
        }
        if self.training_sizes.windows(2).any(|w| w[0] >= w[1]) || self.training_sizes[0] == 0 {
            return Err(Error::Configuration("training sizes must be positive and strictly increasing".into()));
        }
        if self.validation_size == 0 || self.test_size == 0 {
            return Err(Error::Configuration("validation and test sizes must be >= 1".into()));
        }
        if self.epsilons.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
            return Err(Error::Configuration("epsilons must be finite and >= 0".into()));
        }
        if !(self.budget_seconds >= 0.0) {
            return Err(Error::Configuration("budget must be >= 0 seconds".into()));
        }
        if let Some(b) = &self.baseline {
            if b.training_size == 0 {
                return Err(Error::Configuration("baseline training size must be >= 1".into()));
            }
        }
        Ok(())
    }

    /// Epsilon grid sorted ascending without duplicates.
    fn grid(&self) -> Vec<f64> {
        let mut g = self.epsilons.clone();
        g.sort_by(f64::total_cmp);
        g.dedup();
        g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRow {
    pub n: usize,
    pub epsilon: f64,
    pub solver: SolverChoice,
    pub objective: f64,
    pub policy_value: f64,
    pub validation: MeanEstimate,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChosenPolicy {
    pub n: usize,
    pub epsilon: f64,
    pub sigma: SigmaPolicy,
    pub rule: StoppingRule,
    pub test: MeanEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub basis: String,
    pub training_size: usize,
    pub test: MeanEstimate,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineReport {
    pub rows: Vec<PipelineRow>,
    pub chosen: Option<ChosenPolicy>,
    pub baseline: Option<BaselineResult>,
    pub seconds: f64,
}

impl PipelineReport {
    /// Validation-best epsilon per training size (ties to the smallest).
    pub fn epsilon_curve(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = Vec::new();
        for (n, row) in self.best_rows() {
            out.push((n, row.epsilon));
        }
        out
    }

    fn best_rows(&self) -> Vec<(usize, &PipelineRow)> {
        let mut out: Vec<(usize, &PipelineRow)> = Vec::new();
        for row in &self.rows {
            match out.last_mut() {
                Some((n, best)) if *n == row.n => {
                    if better(row, best) {
                        *best = row;
                    }
                }
                _ => out.push((row.n, row)),
            }
        }
        out
    }

    /// Plain-text summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for (n, row) in self.best_rows() {
            s.push_str(&format!(
                "N={n} best epsilon={:?} validation={:.4} ({:.4})\n",
                row.epsilon, row.validation.mean, row.validation.std_error
            ));
        }
        if let Some(c) = &self.chosen {
            s.push_str(&format!(
                "chosen N={} epsilon={:?} test={:.4} ({:.4})\n",
                c.n, c.epsilon, c.test.mean, c.test.std_error
            ));
        }
        if let Some(b) = &self.baseline {
            s.push_str(&format!(
                "baseline ls[{}] N={} test={:.4} ({:.4})\n",
                b.basis, b.training_size, b.test.mean, b.test.std_error
            ));
        }
        s
    }
}

fn better(candidate: &PipelineRow, incumbent: &PipelineRow) -> bool {
    candidate.validation.mean > incumbent.validation.mean
        || (candidate.validation.mean == incumbent.validation.mean && candidate.epsilon < incumbent.epsilon)
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineReport> {
    config.validate()?;
    let started = Instant::now();
    let grid = config.grid();
    let validation = config
        .process
        .simulate(derive_seed(config.seed, ROLE_VALIDATION), config.validation_size)?;
    let test = config
        .process
        .simulate(derive_seed(config.seed, ROLE_TEST), config.test_size)?;

    let clock = Instant::now();
    let mut report = PipelineReport::default();
    let mut best: Option<(usize, f64, SigmaPolicy, StoppingRule)> = None;
    for (k, &n) in config.training_sizes.iter().enumerate() {
        if clock.elapsed().as_secs_f64() >= config.budget_seconds {
            break;
        }
        let training = config
            .process
            .simulate(derive_seed(config.seed, ROLE_TRAINING + k as u64), n)?;
        let sweep: Vec<(PipelineRow, SigmaPolicy, StoppingRule)> = grid
            .par_iter()
            .map(|&epsilon| -> Result<_> {
                let t0 = Instant::now();
                let instance = RobustInstance::build(&training.paths, training.rewards.clone(), epsilon)?;
                let solved = solve(&instance, config.solver, config.node_budget)?;
                let seconds = t0.elapsed().as_secs_f64();
                let rule = materialize_policy(&instance, &solved.sigma)?;
                let score = evaluate_policy(&rule, &validation.paths, &validation.rewards)?;
                let row = PipelineRow {
                    n,
                    epsilon,
                    solver: config.solver,
                    objective: solved.objective,
                    policy_value: solved.policy_value,
                    validation: score,
                    seconds,
                };
                Ok((row, solved.sigma, rule))
            })
            .collect::<Result<_>>()?;
        let mut winner: Option<usize> = None;
        for (idx, (row, _, _)) in sweep.iter().enumerate() {
            if winner.is_none_or(|w| better(row, &sweep[w].0)) {
                winner = Some(idx);
            }
        }
        let mut sweep = sweep;
        let (row, sigma, rule) = sweep.swap_remove(winner.expect("grid is non-empty"));
        best = Some((n, row.epsilon, sigma, rule));
        // Restore grid order for the report.
        let mut rows: Vec<PipelineRow> = sweep.into_iter().map(|(r, _, _)| r).collect();
        rows.push(row);
        rows.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
        report.rows.extend(rows);
    }

    let Some((n, epsilon, sigma, rule)) = best else {
        report.seconds = started.elapsed().as_secs_f64();
        return Err(Error::BudgetExhausted(Box::new(report)));
    };
    let test_estimate = evaluate_policy(&rule, &test.paths, &test.rewards)?;
    report.chosen = Some(ChosenPolicy {
        n,
        epsilon,
        sigma,
        rule,
        test: test_estimate,
    });

    if let Some(b) = &config.baseline {
        let t0 = Instant::now();
        let training = config
            .process
            .simulate(derive_seed(config.seed, ROLE_BASELINE), b.training_size)?;
        let policy = fit_ls(&training.ls_data()?, &b.basis, b.options)?;
        let estimate = evaluate_ls(&policy, &test.ls_data()?, b.options)?;
        report.baseline = Some(BaselineResult {
            basis: b.basis.to_string(),
            training_size: b.training_size,
            test: estimate,
            seconds: t0.elapsed().as_secs_f64(),
        });
    }
    report.seconds = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Validation-best epsilon for each training size of `config`.
pub fn best_epsilon_curve(config: &PipelineConfig) -> Result<Vec<(usize, f64)>> {
    Ok(run_pipeline(config)?.epsilon_curve())
}
