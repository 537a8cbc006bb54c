//! Monte Carlo portfolio losses and synthetic yearly datasets.
//!
//! Draw `i` of a loss simulation uses its own random stream, so the sample is
//! a function of `(seed, n)` alone whatever the size of the thread pool.
//!
//! Given the factor `X`, defaults are independent Bernoulli(`Λ(X)`) events and
//! recoveries are independent of defaults. The default count is therefore
//! drawn directly as `Binomial(J, Λ(X))` and only defaulted loans get a
//! recovery. With the identity link, no floor and equal weights, the summed
//! loss of the `D` defaulters is exactly `N(D(1−m), D·s²)` and is drawn in one
//! step. [`simulate_losses_borrowerwise`] keeps the literal per-borrower
//! construction for cross-checking.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::likelihood::{PeriodRecord, YearlyObservations};
use crate::model::{LatentPath, ModelParams, Portfolio, RecoveryLink};
use crate::rng::{self, tags, StreamRng};
use crate::stats;

/// Default number of loss draws for a 0.999 quantile.
pub const DEFAULT_LOSS_DRAWS: usize = 1_000_000;

/// Simulated portfolio loss rates.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSample {
    pub losses: Vec<f64>,
    pub seed: u64,
    pub n: usize,
}

impl LossSample {
    pub fn quantile(&self, q: f64) -> Result<f64> {
        empirical_quantile(self, q)
    }

    /// Quantile with its distribution-free standard error.
    pub fn quantile_estimate(&self, q: f64) -> Result<QuantileEstimate> {
        QuantileEstimate::from_values(&self.losses, q)
    }
}

/// Order-statistic quantile of a Monte Carlo sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
}

impl QuantileEstimate {
    pub fn from_values(values: &[f64], q: f64) -> Result<Self> {
        stats::order_statistic_quantile(values, q)?;
        let mut sorted = values.to_vec();
        sorted.sort_unstable_by(f64::total_cmp);
        Ok(Self {
            value: stats::sorted_quantile(&sorted, q),
            std_error: stats::quantile_standard_error(&sorted, q),
            n: values.len(),
        })
    }
}

/// `⌈q·n⌉`-th order statistic of the simulated losses.
pub fn empirical_quantile(sample: &LossSample, q: f64) -> Result<f64> {
    stats::order_statistic_quantile(&sample.losses, q)
}

fn check_draws(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "n",
            value: 0.0,
            reason: "at least one draw is required",
        });
    }
    Ok(())
}

/// `n` independent portfolio loss rates under `params`.
pub fn simulate_losses(
    params: &ModelParams,
    portfolio: &Portfolio,
    n: usize,
    seed: u64,
) -> Result<LossSample> {
    params.validate()?;
    check_draws(n)?;
    let stream_seed = rng::derive_seed(seed, tags::LOSSES);
    let losses = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::substream(stream_seed, i);
            portfolio_loss(params, portfolio, &mut rng)
        })
        .collect();
    Ok(LossSample { losses, seed, n })
}

/// One loss draw: a fresh factor followed by the conditional loss.
pub fn portfolio_loss<R: Rng + ?Sized>(
    params: &ModelParams,
    portfolio: &Portfolio,
    rng: &mut R,
) -> f64 {
    let x: f64 = rng.sample(StandardNormal);
    conditional_portfolio_loss(params, portfolio, x, rng)
}

/// One loss draw given the factor value `x`.
pub fn conditional_portfolio_loss<R: Rng + ?Sized>(
    params: &ModelParams,
    portfolio: &Portfolio,
    x: f64,
    rng: &mut R,
) -> f64 {
    let j = portfolio.len();
    let lambda = params.conditional_default_prob(x);
    let defaults = draw_binomial(j as u64, lambda, rng) as usize;
    if defaults == 0 {
        return 0.0;
    }
    let mean = params.conditional_recovery_mean(x);
    let sd = params.idiosyncratic_recovery_sd();
    let loan_loss = |rng: &mut R| {
        let z: f64 = rng.sample(StandardNormal);
        portfolio.loan_loss(portfolio.link.apply_unchecked(mean + sd * z))
    };

    if portfolio.has_equal_weights() {
        let w = portfolio.weights()[0];
        if portfolio.link == RecoveryLink::Identity && !portfolio.floor_loss {
            let d = defaults as f64;
            let z: f64 = rng.sample(StandardNormal);
            return w * (d * (1.0 - mean) + d.sqrt() * sd * z);
        }
        let total: f64 = (0..defaults).map(|_| loan_loss(rng)).sum();
        return w * total;
    }
    // exchangeable borrowers: which loans default is a uniform subset
    let weights = portfolio.weights();
    let mut chosen = index::sample(rng, j, defaults).into_vec();
    chosen.sort_unstable();
    chosen
        .into_iter()
        .map(|k| weights[k] * loan_loss(rng))
        .sum()
}

fn draw_binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if !(p > 0.0) {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p)
        .expect("probability checked to lie in (0, 1)")
        .sample(rng)
}

/// Default indicator and recovery of one borrower given the factor.
pub fn simulate_borrower<R: Rng + ?Sized>(
    params: &ModelParams,
    link: RecoveryLink,
    x: f64,
    rng: &mut R,
) -> (bool, f64) {
    let zc: f64 = rng.sample(StandardNormal);
    let z: f64 = rng.sample(StandardNormal);
    let condition = params.rho.sqrt() * x + (1.0 - params.rho).sqrt() * zc;
    let defaulted = condition < params.gamma();
    let v = params.conditional_recovery_mean(x) + params.idiosyncratic_recovery_sd() * z;
    (defaulted, link.apply_unchecked(v))
}

/// Loss simulation that draws every borrower's condition and recovery.
///
/// Equal in distribution to [`simulate_losses`] but `O(J)` per draw.
pub fn simulate_losses_borrowerwise(
    params: &ModelParams,
    portfolio: &Portfolio,
    n: usize,
    seed: u64,
) -> Result<LossSample> {
    params.validate()?;
    check_draws(n)?;
    let stream_seed = rng::derive_seed(seed, tags::LOSSES);
    let losses = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::substream(stream_seed, i);
            let x: f64 = rng.sample(StandardNormal);
            portfolio
                .weights()
                .iter()
                .map(|w| {
                    let (defaulted, r) = simulate_borrower(params, portfolio.link, x, &mut rng);
                    if defaulted {
                        w * portfolio.loan_loss(r)
                    } else {
                        0.0
                    }
                })
                .sum()
        })
        .collect();
    Ok(LossSample { losses, seed, n })
}

/// Simulated yearly data with the factor path that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub observations: YearlyObservations,
    pub true_params: ModelParams,
    pub true_latent: LatentPath,
}

/// First year label of simulated datasets.
pub const FIRST_SYNTHETIC_YEAR: i32 = 1;

/// One period per entry of `firm_counts`: `Xₜ ~ N(0,1)`,
/// `dₜ ~ Binomial(Jₜ, Λ(Xₜ))` and, when `dₜ ≥ 1`,
/// `r̄ₜ ~ N(μ + σ√ω·Xₜ, σ²(1−ω)/dₜ)`.
pub fn simulate_dataset(
    params: &ModelParams,
    firm_counts: &[u64],
    seed: u64,
) -> Result<SyntheticDataset> {
    params.validate()?;
    if firm_counts.is_empty() {
        return Err(Error::InvalidParameter {
            name: "periods",
            value: 0.0,
            reason: "at least one period is required",
        });
    }
    if firm_counts.contains(&0) {
        return Err(Error::InvalidParameter {
            name: "obligors",
            value: 0.0,
            reason: "every period needs at least one obligor",
        });
    }
    let stream_seed = rng::derive_seed(seed, tags::DATASET);
    let mut latent = Vec::with_capacity(firm_counts.len());
    let mut records = Vec::with_capacity(firm_counts.len());
    for (t, &j) in firm_counts.iter().enumerate() {
        let mut rng: StreamRng = rng::substream(stream_seed, t as u64);
        let x: f64 = rng.sample(StandardNormal);
        let defaults = draw_binomial(j, params.conditional_default_prob(x), &mut rng);
        let avg_recovery = (defaults > 0).then(|| {
            let z: f64 = rng.sample(StandardNormal);
            params.conditional_recovery_mean(x)
                + params.idiosyncratic_recovery_sd() / (defaults as f64).sqrt() * z
        });
        latent.push(x);
        records.push(PeriodRecord {
            year: FIRST_SYNTHETIC_YEAR + t as i32,
            obligors: j,
            defaults,
            avg_recovery,
        });
    }
    Ok(SyntheticDataset {
        observations: YearlyObservations::new(records)?,
        true_params: *params,
        true_latent: LatentPath::new(latent)?,
    })
}
