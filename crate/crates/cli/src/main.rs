use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rostop_core::config::Config;
use rostop_core::exact::{export_milp_with, solve_bnb, MilpOptions, solve_enumeration_capped, DEFAULT_ENUMERATION_CAP};
use rostop_core::heuristic::solve_heuristic;
use rostop_core::io;
use rostop_core::pipeline::{run_pipeline, SolverChoice};
use rostop_core::policy::{apply_policy, materialize_policy};
use rostop_core::reward::{reward_matrix, RewardSpec};
use rostop_core::selftest::run_selftest;
use rostop_core::{Error, Result, RobustInstance};

#[derive(Debug, Parser)]
#[command(name = "rostop", version, about = "Robust optimal stopping from simulated sample paths")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "ROSTOP_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate sample paths to CSV.
    Simulate {
        #[arg(long, value_parser = ["bump", "gbm", "threepoint", "uniform"])]
        process: String,
        /// key = value parameter file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the reward matrix.
        #[arg(long)]
        rewards_out: Option<PathBuf>,
    },
    /// Build a robust instance from paths and rewards.
    Build {
        #[arg(long)]
        paths: PathBuf,
        /// Reward table; the identity reward is used when omitted.
        #[arg(long)]
        rewards: Option<PathBuf>,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve an instance and write the policy.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_parser = ["heuristic", "bnb", "enum"], default_value = "heuristic")]
        method: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Branch-and-bound node limit.
        #[arg(long, default_value_t = u64::MAX)]
        node_budget: u64,
        /// Largest number of policies enumeration may visit.
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        enumeration_cap: u64,
    },
    /// Evaluate a policy on test paths.
    Evaluate {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        sigma: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Rewards of the test paths; the identity reward is used when omitted.
        #[arg(long)]
        test_rewards: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the train / validate / test pipeline.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Best epsilon per training size, for plotting.
        #[arg(long)]
        curve_out: Option<PathBuf>,
    },
    /// Write the linearised exact model in LP format.
    ExportMilp {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Leave out the strengthening equalities, which are not valid when
        /// some reward is zero.
        #[arg(long)]
        without_valid_equalities: bool,
    },
    /// Run randomised consistency checks.
    Selftest {
        #[arg(long, default_value_t = 200)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(io_context(e, path)))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(io_context(e, path)))
}

fn io_context(e: std::io::Error, path: &Path) -> std::io::Error {
    std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))
}

fn load_instance(path: &Path) -> Result<RobustInstance> {
    io::read_instance(open(path)?)
}

fn run(command: Command) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match command {
        Command::Simulate {
            process,
            config,
            n,
            seed,
            out: path,
            rewards_out,
        } => {
            let cfg = match config {
                Some(p) => Config::parse(&std::fs::read_to_string(&p).map_err(|e| Error::Io(io_context(e, &p)))?)?,
                None => Config::default(),
            };
            let sample = cfg.process(Some(&process))?.simulate(seed, n)?;
            io::write_paths(&sample.paths, create(&path)?)?;
            if let Some(r) = rewards_out {
                io::write_rewards(&sample.rewards, create(&r)?)?;
            }
        }
        Command::Build {
            paths,
            rewards,
            epsilon,
            out: path,
        } => {
            let paths = io::read_paths(open(&paths)?)?;
            let g = match rewards {
                Some(r) => reward_matrix(&paths, &RewardSpec::Table(io::read_rewards(open(&r)?)?))?,
                None => reward_matrix(&paths, &RewardSpec::Identity)?,
            };
            let instance = RobustInstance::build(&paths, g, epsilon)?;
            io::write_instance(&instance, create(&path)?)?;
        }
        Command::Solve {
            instance,
            method,
            out: path,
            node_budget,
            enumeration_cap,
        } => {
            let instance = load_instance(&instance)?;
            let started = Instant::now();
            let (sigma, objective) = match method.parse::<SolverChoice>()? {
                SolverChoice::Heuristic => {
                    let h = solve_heuristic(&instance)?;
                    (h.sigma, h.hbar_value)
                }
                SolverChoice::BranchAndBound => {
                    let e = solve_bnb(&instance, node_budget)?;
                    (e.sigma, e.value)
                }
                SolverChoice::Enumeration => {
                    let e = solve_enumeration_capped(&instance, enumeration_cap)?;
                    (e.sigma, e.value)
                }
            };
            let seconds = started.elapsed().as_secs_f64();
            if let Some(p) = path {
                io::write_sigma(&sigma, create(&p)?)?;
            }
            writeln!(out, "sigma={sigma} objective={objective:?} seconds={seconds:.6}")?;
        }
        Command::Evaluate {
            instance,
            sigma,
            test,
            test_rewards,
            out: path,
        } => {
            let instance = load_instance(&instance)?;
            let sigma = io::read_sigma(open(&sigma)?, instance.horizon())?;
            let rule = materialize_policy(&instance, &sigma)?;
            let test = io::read_paths(open(&test)?)?;
            let g = match test_rewards {
                Some(r) => reward_matrix(&test, &RewardSpec::Table(io::read_rewards(open(&r)?)?))?,
                None => reward_matrix(&test, &RewardSpec::Identity)?,
            };
            if test.horizon() != rule.horizon() || test.state_dim() != rule.dim() {
                return Err(Error::Shape(format!(
                    "policy is {} periods x {} dims, test paths are {} x {}",
                    rule.horizon(),
                    rule.dim(),
                    test.horizon(),
                    test.state_dim()
                )));
            }
            let stops: Vec<Option<usize>> = (0..test.n_paths()).map(|i| apply_policy(&rule, test.path(i))).collect();
            let realized: Vec<f64> = stops
                .iter()
                .enumerate()
                .map(|(i, s)| s.map_or(0.0, |t| g.get(i, t)))
                .collect();
            let estimate = rostop_core::MeanEstimate::from_samples(&realized)?;
            if let Some(p) = path {
                io::write_evaluation(&stops, &realized, create(&p)?)?;
            }
            writeln!(
                out,
                "mean={:?} std_error={:?} n={}",
                estimate.mean, estimate.std_error, estimate.n
            )?;
        }
        Command::Pipeline {
            config,
            out: path,
            curve_out,
        } => {
            let text = std::fs::read_to_string(&config).map_err(|e| Error::Io(io_context(e, &config)))?;
            let cfg = Config::parse(&text)?.pipeline()?;
            let report = match run_pipeline(&cfg) {
                Err(Error::BudgetExhausted(partial)) => {
                    io::write_report(&partial, create(&path)?)?;
                    return Err(Error::BudgetExhausted(partial));
                }
                other => other?,
            };
            io::write_report(&report, create(&path)?)?;
            if let Some(c) = curve_out {
                io::write_curve(&report, create(&c)?)?;
            }
            write!(out, "{}", report.summary())?;
        }
        Command::ExportMilp {
            instance,
            out: path,
            without_valid_equalities,
        } => {
            let instance = load_instance(&instance)?;
            let mut sink = create(&path)?;
            let options = MilpOptions {
                valid_equalities: !without_valid_equalities,
            };
            export_milp_with(&instance, options, &mut sink)?;
            sink.flush()?;
        }
        Command::Selftest { cases, seed } => {
            let results = run_selftest(seed, cases)?;
            let mut failed = 0;
            for r in &results {
                let status = if r.passed() { "PASS" } else { "FAIL" };
                writeln!(out, "{status} {} ({} cases, {} failures)", r.name, r.cases, r.failures)?;
                if let Some(msg) = &r.first_failure {
                    writeln!(out, "     first failure: {msg}")?;
                }
                failed += usize::from(!r.passed());
            }
            if failed > 0 {
                return Err(Error::InvalidParameter(format!("{failed} selftest checks failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error[usage]: cannot configure {threads} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {message}", e.kind());
            match e {
                Error::EnumerationCap { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
