//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are skipped. Lists are
//! comma-separated; an epsilon grid may also be written `start:stop:step`.
//!
//! | key | meaning |
//! |---|---|
//! | `process` | `bump`, `gbm`, `threepoint` or `uniform` |
//! | `horizon` | number of periods `T` (bump, gbm, uniform) |
//! | `delta` | bump duration |
//! | `assets`, `years`, `rate`, `strike`, `barrier_base`, `barrier_growth`, `initial_price` | barrier option |
//! | `volatility` | one value for every asset, or one per asset |
//! | `correlation` | common pairwise correlation (default 0) |
//! | `gbm_scaling` | `printed` (`sigma lambda W`) or `textbook` (`sigma sqrt(lambda) W`) |
//! | `training_sizes`, `validation_size`, `test_size` | sample sizes |
//! | `epsilons` | robustness grid |
//! | `budget_seconds` | wall-clock budget for the training loop |
//! | `solver` | `heuristic`, `bnb` or `enum` |
//! | `node_budget` | branch-and-bound node limit |
//! | `seed` | master seed |
//! | `ls_basis`, `ls_training_size`, `ls_itm` | optional regression baseline |

use std::collections::BTreeMap;

use crate::baseline_ls::{BasisSpec, LsOptions};
use crate::error::{Error, Result};
use crate::pipeline::{BaselineConfig, PipelineConfig, ProcessSpec};
use crate::scenarios::{GbmBarrierParams, GbmScaling};

pub const KNOWN_KEYS: &[&str] = &[
    "process",
    "horizon",
    "delta",
    "assets",
    "years",
    "rate",
    "strike",
    "barrier_base",
    "barrier_growth",
    "initial_price",
    "volatility",
    "correlation",
    "gbm_scaling",
    "training_sizes",
    "validation_size",
    "test_size",
    "epsilons",
    "budget_seconds",
    "solver",
    "node_budget",
    "seed",
    "ls_basis",
    "ls_training_size",
    "ls_itm",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Configuration(format!("line {}: expected key = value", k + 1)))?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Configuration(format!("line {}: unknown key '{key}'", k + 1)));
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(Error::Configuration(format!("line {}: duplicate key '{key}'", k + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::Configuration(format!("unknown key '{key}'")));
        }
        self.entries.insert(key.to_string(), value.into());
        Ok(())
    }

    fn typed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Configuration(format!("cannot parse {key} = '{v}'")))
            })
            .transpose()
    }

    fn required<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.typed(key)?
            .ok_or_else(|| Error::Configuration(format!("missing key '{key}'")))
    }

    fn or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.typed(key)?.unwrap_or(default))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|x| {
                        x.trim()
                            .parse()
                            .map_err(|_| Error::Configuration(format!("cannot parse {key} entry '{x}'")))
                    })
                    .collect()
            })
            .transpose()
    }

    /// The process named by `name`, or by the `process` key.
    pub fn process(&self, name: Option<&str>) -> Result<ProcessSpec> {
        let name = name
            .or(self.get("process"))
            .ok_or_else(|| Error::Configuration("missing key 'process'".into()))?;
        Ok(match name {
            "bump" => ProcessSpec::Bump {
                horizon: self.required("horizon")?,
                delta: self.required("delta")?,
            },
            "threepoint" => ProcessSpec::ThreePoint,
            "uniform" => ProcessSpec::Uniform {
                horizon: self.required("horizon")?,
            },
            "gbm" => {
                let assets: usize = self.required("assets")?;
                let vols: Vec<f64> = self
                    .list("volatility")?
                    .ok_or_else(|| Error::Configuration("missing key 'volatility'".into()))?;
                let volatilities = match vols.len() {
                    1 => vec![vols[0]; assets],
                    k if k == assets => vols,
                    k => {
                        return Err(Error::Configuration(format!(
                            "volatility lists {k} values for {assets} assets"
                        )))
                    }
                };
                let rho: f64 = self.or("correlation", 0.0)?;
                let correlation = (rho != 0.0).then(|| {
                    (0..assets * assets)
                        .map(|k| if k / assets == k % assets { 1.0 } else { rho })
                        .collect()
                });
                let scaling = match self.get("gbm_scaling").unwrap_or("printed") {
                    "printed" => GbmScaling::Printed,
                    "textbook" => GbmScaling::Textbook,
                    other => {
                        return Err(Error::Configuration(format!(
                            "gbm_scaling must be printed or textbook, got '{other}'"
                        )))
                    }
                };
                ProcessSpec::Gbm(GbmBarrierParams {
                    assets,
                    horizon: self.required("horizon")?,
                    years: self.required("years")?,
                    rate: self.required("rate")?,
                    strike: self.required("strike")?,
                    barrier_base: self.required("barrier_base")?,
                    barrier_growth: self.required("barrier_growth")?,
                    initial_price: self.required("initial_price")?,
                    volatilities,
                    correlation,
                    scaling,
                    seed: 0,
                })
            }
            other => {
                return Err(Error::Configuration(format!(
                    "unknown process '{other}' (expected bump, gbm, threepoint or uniform)"
                )))
            }
        })
    }

    pub fn epsilons(&self) -> Result<Vec<f64>> {
        let raw = self
            .get("epsilons")
            .ok_or_else(|| Error::Configuration("missing key 'epsilons'".into()))?;
        if raw.contains(':') {
            let parts: Vec<f64> = raw
                .split(':')
                .map(|x| x.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Configuration(format!("cannot parse epsilons = '{raw}'")))?;
            let [start, stop, step] = parts[..] else {
                return Err(Error::Configuration("epsilon range must be start:stop:step".into()));
            };
            if !(step > 0.0) || stop < start {
                return Err(Error::Configuration("epsilon range needs step > 0 and stop >= start".into()));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize;
            // Round to the step's decimal precision so 0.07 stays 0.07.
            return Ok((0..=count)
                .map(|k| {
                    let v = start + k as f64 * step;
                    (v * 1e12).round() / 1e12
                })
                .collect());
        }
        Ok(self.list("epsilons")?.unwrap_or_default())
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        let process = self.process(None)?;
        let training_sizes = self
            .list("training_sizes")?
            .ok_or_else(|| Error::Configuration("missing key 'training_sizes'".into()))?;
        let defaults = PipelineConfig::new(process.clone(), Vec::new(), Vec::new());
        let baseline = match self.get("ls_basis") {
            Some(list) => Some(BaselineConfig {
                basis: BasisSpec::parse(list)?,
                options: LsOptions {
                    in_the_money_only: self.or("ls_itm", false)?,
                },
                training_size: self.or("ls_training_size", training_sizes.last().copied().unwrap_or(1))?,
            }),
            None => None,
        };
        let config = PipelineConfig {
            process,
            training_sizes,
            validation_size: self.or("validation_size", defaults.validation_size)?,
            test_size: self.or("test_size", defaults.test_size)?,
            epsilons: self.epsilons()?,
            budget_seconds: self.or("budget_seconds", defaults.budget_seconds)?,
            solver: self.or("solver", defaults.solver)?,
            node_budget: self.or("node_budget", defaults.node_budget)?,
            seed: self.or("seed", defaults.seed)?,
            baseline,
        };
        config.validate()?;
        Ok(config)
    }
}
