//! Run configuration: flat `key = value` text, overridable key by key.
//!
//! Blank lines and lines starting with `#` are ignored. List values are
//! comma-separated. Command-line flags are applied after the file through
//! [`RunConfig::set`], so they take precedence.

use std::path::{Path, PathBuf};

use crate::capital::DEFAULT_INNER_DRAWS;
use crate::error::{Error, Result};
use crate::mcmc::{ChainConfig, PriorSpec};
use crate::model::{ModelParams, Portfolio, RecoveryLink, PARAM_NAMES};
use crate::simulate::DEFAULT_LOSS_DRAWS;

/// Portfolio whose capital is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioSpec {
    /// Loan count for the finite-portfolio quantile distribution.
    pub j: usize,
    /// Explicit exposures; when present an extra portfolio with these
    /// weights is evaluated alongside the equal-weight ones.
    pub weights: Option<Vec<f64>>,
    pub link: RecoveryLink,
    pub floor_loss: bool,
}

impl PortfolioSpec {
    pub fn equal(&self, j: usize) -> Result<Portfolio> {
        Portfolio::equal(j, self.link, self.floor_loss)
    }

    pub fn weighted(&self) -> Result<Option<Portfolio>> {
        self.weights
            .as_ref()
            .map(|w| Portfolio::from_exposures(w, self.link, self.floor_loss))
            .transpose()
    }
}

/// Quantile levels, draw counts and portfolio sizes for capital estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct CapitalSpec {
    pub q_levels: Vec<f64>,
    /// Loss draws per quantile estimate.
    pub n_draws: usize,
    /// Portfolio sizes; `None` is the infinitely granular portfolio.
    pub j_list: Vec<Option<usize>>,
    /// Level of the stressed PD, LGD and EC summaries.
    pub alpha: f64,
    pub inner_draws: usize,
    /// Posterior draws used for the finite-portfolio quantile distribution;
    /// zero skips it.
    pub finite_draws: usize,
    /// Capital the EC distribution is compared against. When unset, the
    /// estimate from the data file is used, or failing that the capital at
    /// the posterior mean.
    pub reference_ec: Option<f64>,
}

/// Inputs of the `simulate` subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSpec {
    pub params: ModelParams,
    pub firm_counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    /// Chain file read by `capital` and `summarize`; defaults to
    /// `<out>/chain.csv`.
    pub chain: Option<PathBuf>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub prior: PriorSpec,
    pub chain_config: ChainConfig,
    pub portfolio: PortfolioSpec,
    pub capital: CapitalSpec,
    pub simulate: SimulateSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            out: PathBuf::from("out"),
            chain: None,
            seed: 0,
            threads: None,
            prior: PriorSpec::default(),
            chain_config: ChainConfig::default(),
            portfolio: PortfolioSpec {
                j: 5350,
                weights: None,
                link: RecoveryLink::Identity,
                floor_loss: false,
            },
            capital: CapitalSpec {
                q_levels: vec![0.999],
                n_draws: DEFAULT_LOSS_DRAWS,
                j_list: vec![Some(50), Some(500), Some(5350), None],
                alpha: 0.999,
                inner_draws: DEFAULT_INNER_DRAWS,
                finite_draws: 0,
                reference_ec: None,
            },
            simulate: SimulateSpec {
                params: ModelParams {
                    p: 0.0133,
                    rho: 0.0623,
                    mu: 0.456,
                    sigma: 0.457,
                    omega: 0.032,
                },
                firm_counts: vec![5350; 18],
            },
        }
    }
}

fn bad(key: &str, value: &str, why: &str) -> Error {
    Error::Config(format!("{key} = '{value}': {why}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| bad(key, value, "not a valid number"))
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

impl RunConfig {
    /// Defaults overridden by the settings in `path`.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("config line {}: expected key = value", i + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    /// Apply one setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some(name) = key.strip_prefix("prior_") {
            let k = PARAM_NAMES
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| Error::Config(format!("unknown key '{key}'")))?;
            let b: Vec<f64> = list(key, value)?;
            if b.len() != 2 {
                return Err(bad(key, value, "expected lower,upper"));
            }
            let mut bounds = self.prior.bounds;
            bounds[k] = (b[0], b[1]);
            self.prior = PriorSpec::new(bounds)?;
            return Ok(());
        }
        match key {
            "data" => self.data = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            "chain" => self.chain = Some(PathBuf::from(value)),
            "seed" => self.seed = num(key, value)?,
            "threads" => {
                let t: usize = num(key, value)?;
                if t == 0 {
                    return Err(bad(key, value, "must be at least 1"));
                }
                self.threads = Some(t);
            }
            "burn_in" => self.chain_config.burn_in = num(key, value)?,
            "samples" => self.chain_config.samples = num(key, value)?,
            "tune_iters" => self.chain_config.tune_iters = num(key, value)?,
            "target_accept" => self.chain_config.target_accept = num(key, value)?,
            "thin" => self.chain_config.thin = num(key, value)?,
            "rw_sd" => self.chain_config.initial_rw_sd = Some(list(key, value)?),
            "hastings_correction" => self.chain_config.hastings_correction = boolean(key, value)?,
            "portfolio_j" => self.portfolio.j = num(key, value)?,
            "weights" => self.portfolio.weights = Some(list(key, value)?),
            "link" => self.portfolio.link = value.parse()?,
            "floor_loss" => self.portfolio.floor_loss = boolean(key, value)?,
            "q_levels" => self.capital.q_levels = list(key, value)?,
            "n_draws" => self.capital.n_draws = num(key, value)?,
            "j_list" => {
                self.capital.j_list = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| match s {
                        "inf" => Ok(None),
                        _ => num(key, s).map(Some),
                    })
                    .collect::<Result<_>>()?
            }
            "alpha" => self.capital.alpha = num(key, value)?,
            "inner_draws" => self.capital.inner_draws = num(key, value)?,
            "finite_draws" => self.capital.finite_draws = num(key, value)?,
            "reference_ec" => self.capital.reference_ec = Some(num(key, value)?),
            "true_params" => {
                let v: Vec<f64> = list(key, value)?;
                let arr: [f64; 5] = v
                    .try_into()
                    .map_err(|_| bad(key, value, "expected p,rho,mu,sigma,omega"))?;
                self.simulate.params = ModelParams::from_array(arr)?;
            }
            "firm_counts" => self.simulate.firm_counts = list(key, value)?,
            "periods" => {
                let t: usize = num(key, value)?;
                let j = self.simulate.firm_counts.first().copied().unwrap_or(5350);
                self.simulate.firm_counts = vec![j; t];
            }
            "obligors" => {
                let j: u64 = num(key, value)?;
                self.simulate.firm_counts.iter_mut().for_each(|c| *c = j);
            }
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Cross-field checks run once all overrides are in.
    pub fn validate(&self) -> Result<()> {
        self.chain_config.validate()?;
        self.simulate.params.validate()?;
        if self.simulate.firm_counts.is_empty() || self.simulate.firm_counts.contains(&0) {
            return Err(Error::Config(
                "firm_counts must be non-empty and positive".into(),
            ));
        }
        let level_ok = |q: f64| q > 0.0 && q < 1.0;
        if self.capital.q_levels.is_empty() || !self.capital.q_levels.iter().all(|q| level_ok(*q)) {
            return Err(Error::Config(
                "q_levels must be non-empty and inside (0, 1)".into(),
            ));
        }
        if !level_ok(self.capital.alpha) {
            return Err(Error::Config("alpha must lie inside (0, 1)".into()));
        }
        if self.capital.j_list.is_empty() || self.capital.j_list.contains(&Some(0)) {
            return Err(Error::Config(
                "j_list must be non-empty with positive sizes".into(),
            ));
        }
        if self.capital.n_draws == 0 || self.capital.inner_draws == 0 || self.portfolio.j == 0 {
            return Err(Error::Config(
                "draw counts and portfolio_j must be positive".into(),
            ));
        }
        if let Some(r) = self.capital.reference_ec {
            if !(r.is_finite() && r != 0.0) {
                return Err(Error::Config(
                    "reference_ec must be finite and non-zero".into(),
                ));
            }
        }
        self.portfolio.weighted()?;
        Ok(())
    }

    /// Chain file for `capital` and `summarize`.
    pub fn chain_path(&self) -> PathBuf {
        self.chain
            .clone()
            .unwrap_or_else(|| self.out.join("chain.csv"))
    }

    pub fn data_path(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| Error::Config("no data file given (use --data or data = ...)".into()))
    }
}
