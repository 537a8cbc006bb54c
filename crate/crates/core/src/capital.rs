//! Capital estimates with and without parameter uncertainty.
//!
//! * [`quantile_given_params`]: loss quantile at a fixed parameter vector.
//! * [`full_predictive_quantile`]: loss quantile when every loss draw first
//!   picks a posterior draw, so parameter uncertainty widens the tail.
//! * [`quantile_distribution`]: the limiting-portfolio quantile evaluated at
//!   every posterior draw, giving the posterior distribution of capital.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mcmc::{summarize_values, PosteriorSummary};
use crate::model::{stressed_factor, ModelParams, Portfolio, StressedLoss};
use crate::rng::{self, tags};
use crate::simulate::{portfolio_loss, simulate_losses, LossSample, QuantileEstimate};

/// Inner-loop draws per posterior draw for finite-portfolio quantile
/// distributions.
pub const DEFAULT_INNER_DRAWS: usize = 200_000;
/// Expected number of tail exceedances a predictive quantile needs.
pub const MIN_TAIL_EXCEEDANCES: f64 = 100.0;

/// Portfolio used when simulating losses.
#[derive(Debug, Clone, PartialEq)]
pub enum PortfolioModel {
    Granular(Portfolio),
    /// Infinitely granular portfolio: the loss is `Λ(X)·S(X)`.
    Limiting {
        floor_loss: bool,
    },
}

impl PortfolioModel {
    /// `J` as printed in reports; `inf` for the limiting portfolio.
    pub fn label(&self) -> String {
        match self {
            PortfolioModel::Granular(p) => p.len().to_string(),
            PortfolioModel::Limiting { .. } => "inf".into(),
        }
    }

    fn loss<R: Rng + ?Sized>(&self, params: &ModelParams, rng: &mut R) -> f64 {
        match self {
            PortfolioModel::Granular(portfolio) => portfolio_loss(params, portfolio, rng),
            PortfolioModel::Limiting { floor_loss } => {
                let x: f64 = rng.sample(StandardNormal);
                limiting_loss(params, x, *floor_loss)
            }
        }
    }
}

fn limiting_loss(params: &ModelParams, x: f64, floor_loss: bool) -> f64 {
    let s = params.conditional_loss_rate(x);
    params.conditional_default_prob(x) * if floor_loss { s.max(0.0) } else { s }
}

/// Empirical `q`-quantile of simulated losses at fixed parameters.
pub fn quantile_given_params(
    params: &ModelParams,
    portfolio: &Portfolio,
    q: f64,
    n: usize,
    seed: u64,
) -> Result<QuantileEstimate> {
    simulate_losses(params, portfolio, n, seed)?.quantile_estimate(q)
}

fn check_posterior(draws: &[ModelParams]) -> Result<()> {
    if draws.is_empty() {
        return Err(Error::InsufficientData("posterior sample is empty".into()));
    }
    Ok(())
}

/// Loss draws from the full predictive distribution: each draw picks a
/// posterior parameter vector uniformly with replacement, then simulates one
/// loss under it.
pub fn full_predictive_losses(
    draws: &[ModelParams],
    model: &PortfolioModel,
    n: usize,
    seed: u64,
) -> Result<LossSample> {
    check_posterior(draws)?;
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "n",
            value: 0.0,
            reason: "at least one draw is required",
        });
    }
    let stream_seed = rng::derive_seed(seed, tags::PREDICTIVE);
    let losses = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::substream(stream_seed, i);
            let theta = &draws[rng.random_range(0..draws.len())];
            model.loss(theta, &mut rng)
        })
        .collect();
    Ok(LossSample { losses, seed, n })
}

/// `q`-quantile of the full predictive loss distribution.
pub fn full_predictive_quantile(
    draws: &[ModelParams],
    model: &PortfolioModel,
    q: f64,
    n: usize,
    seed: u64,
) -> Result<QuantileEstimate> {
    if (n as f64) * (1.0 - q) < MIN_TAIL_EXCEEDANCES {
        return Err(Error::InvalidParameter {
            name: "n",
            value: n as f64,
            reason: "too few draws for the requested quantile level (need n(1-q) >= 100)",
        });
    }
    full_predictive_losses(draws, model, n, seed)?.quantile_estimate(q)
}

/// Limiting-portfolio `α`-quantile `Λ(Φ⁻¹(1−α))·S(Φ⁻¹(1−α))` at every
/// posterior draw.
pub fn quantile_distribution(
    draws: &[ModelParams],
    alpha: f64,
    floor_loss: bool,
) -> Result<Vec<f64>> {
    Ok(stressed_losses(draws, alpha, floor_loss)?
        .into_iter()
        .map(|s| s.ec)
        .collect())
}

/// Finite-portfolio variant of [`quantile_distribution`]: a Monte Carlo
/// quantile with `n_inner` loss draws per posterior draw, each with its own
/// seed.
pub fn quantile_distribution_finite(
    draws: &[ModelParams],
    portfolio: &Portfolio,
    alpha: f64,
    n_inner: usize,
    seed: u64,
) -> Result<Vec<QuantileEstimate>> {
    check_posterior(draws)?;
    let base = rng::derive_seed(seed, tags::QUANTILE_DISTRIBUTION);
    draws
        .iter()
        .enumerate()
        .map(|(i, theta)| {
            let draw_seed = rng::derive_seed(base, &i.to_string());
            quantile_given_params(theta, portfolio, alpha, n_inner, draw_seed)
        })
        .collect()
}

fn stressed_losses(
    draws: &[ModelParams],
    alpha: f64,
    floor_loss: bool,
) -> Result<Vec<StressedLoss>> {
    check_posterior(draws)?;
    let x = stressed_factor(alpha)?;
    Ok(draws
        .iter()
        .map(|theta| {
            let pd = theta.conditional_default_prob(x);
            let lgd = theta.conditional_loss_rate(x);
            let s = StressedLoss {
                pd,
                lgd,
                ec: pd * lgd,
            };
            if floor_loss {
                s.floored()
            } else {
                s
            }
        })
        .collect())
}

/// Relative differences `100·(v/reference − 1)` of summary statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeDifference {
    pub mode: f64,
    pub mean: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
}

pub fn relative_difference_percent(value: f64, reference: f64) -> f64 {
    100.0 * (value / reference - 1.0)
}

/// Posterior summaries of stressed PD, LGD and EC.
#[derive(Debug, Clone, PartialEq)]
pub struct StressedSummaries {
    pub pd: PosteriorSummary,
    pub lgd: PosteriorSummary,
    pub ec: PosteriorSummary,
    /// EC statistics relative to the reference capital.
    pub delta_ec: RelativeDifference,
    pub reference_ec: f64,
    /// Per-draw EC values in draw order.
    pub ec_samples: Vec<f64>,
}

pub fn stressed_summaries(
    draws: &[ModelParams],
    alpha: f64,
    reference_ec: f64,
    floor_loss: bool,
) -> Result<StressedSummaries> {
    if !(reference_ec.is_finite() && reference_ec != 0.0) {
        return Err(Error::InvalidParameter {
            name: "reference_ec",
            value: reference_ec,
            reason: "reference capital must be finite and non-zero",
        });
    }
    let stressed = stressed_losses(draws, alpha, floor_loss)?;
    let pd = summarize_values(&stressed.iter().map(|s| s.pd).collect::<Vec<_>>())?;
    let lgd = summarize_values(&stressed.iter().map(|s| s.lgd).collect::<Vec<_>>())?;
    let ec_samples: Vec<f64> = stressed.iter().map(|s| s.ec).collect();
    let ec = summarize_values(&ec_samples)?;
    let rel = |v| relative_difference_percent(v, reference_ec);
    Ok(StressedSummaries {
        pd,
        lgd,
        delta_ec: RelativeDifference {
            mode: rel(ec.mode),
            mean: rel(ec.mean),
            q25: rel(ec.q25),
            q50: rel(ec.q50),
            q75: rel(ec.q75),
        },
        ec,
        reference_ec,
        ec_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RecoveryLink;
    use crate::normal;
    use crate::stats::{order_statistic_quantile, quantile_standard_error};

    fn theta() -> ModelParams {
        ModelParams::new(0.0133, 0.0623, 0.456, 0.457, 0.032).unwrap()
    }

    #[test]
    fn no_defaults_no_capital() {
        let p = ModelParams::new(1e-300, 0.1, 0.4, 0.2, 0.1).unwrap();
        let pf = Portfolio::equal(100, RecoveryLink::Identity, false).unwrap();
        assert_eq!(
            quantile_given_params(&p, &pf, 0.999, 10_000, 1)
                .unwrap()
                .value,
            0.0
        );
    }

    #[test]
    fn single_loan_matches_direct_simulation() {
        // one loan, floored identity recoveries, against a hand-rolled simulation
        let p = ModelParams::new(0.05, 0.2, 0.4, 0.3, 0.3).unwrap();
        let pf = Portfolio::equal(1, RecoveryLink::Identity, true).unwrap();
        let q = 0.99;
        let ours = quantile_given_params(&p, &pf, q, 2_000_000, 7).unwrap();
        let mut rng = rng::substream(123_456, 0);
        let mut direct: Vec<f64> = (0..10_000_000)
            .map(|_| {
                let x: f64 = rng.sample(StandardNormal);
                let zc: f64 = rng.sample(StandardNormal);
                let z: f64 = rng.sample(StandardNormal);
                let c = p.rho.sqrt() * x + (1.0 - p.rho).sqrt() * zc;
                if c < normal::quantile(p.p) {
                    let r =
                        p.mu + p.sigma * p.omega.sqrt() * x + p.sigma * (1.0 - p.omega).sqrt() * z;
                    (1.0 - r).max(0.0)
                } else {
                    0.0
                }
            })
            .collect();
        direct.sort_unstable_by(f64::total_cmp);
        let dq = order_statistic_quantile(&direct, q).unwrap();
        let se = (ours.std_error.powi(2) + quantile_standard_error(&direct, q).powi(2)).sqrt();
        assert!(
            (ours.value - dq).abs() < 3.0 * se,
            "{} vs {dq} (se {se})",
            ours.value
        );
    }

    #[test]
    fn single_atom_posterior_collapses_to_point_quantile() {
        let pf = Portfolio::equal(500, RecoveryLink::Identity, false).unwrap();
        let model = PortfolioModel::Granular(pf.clone());
        let n = 400_000;
        let point = quantile_given_params(&theta(), &pf, 0.999, n, 3).unwrap();
        let pred = full_predictive_quantile(&[theta(); 4], &model, 0.999, n, 4).unwrap();
        let se = (point.std_error.powi(2) + pred.std_error.powi(2)).sqrt();
        assert!(
            (point.value - pred.value).abs() < 2.0 * se,
            "{point:?} {pred:?}"
        );
    }

    #[test]
    fn predictive_quantile_needs_enough_draws() {
        let model = PortfolioModel::Limiting { floor_loss: false };
        assert!(full_predictive_quantile(&[theta()], &model, 0.999, 50_000, 1).is_err());
        assert!(full_predictive_quantile(&[], &model, 0.9, 50_000, 1).is_err());
    }

    #[test]
    fn two_point_posterior_gives_two_values() {
        let a = theta();
        let b = ModelParams::new(0.02, 0.1, 0.4, 0.3, 0.1).unwrap();
        let draws = vec![a, b, a, a, b];
        let v = quantile_distribution(&draws, 0.999, false).unwrap();
        let qa = a.analytic_limit_quantile(0.999).unwrap();
        let qb = b.analytic_limit_quantile(0.999).unwrap();
        assert_eq!(v, vec![qa, qb, qa, qa, qb]);
    }

    #[test]
    fn constant_posterior_has_no_relative_difference() {
        let reference = theta().analytic_limit_quantile(0.999).unwrap();
        let s = stressed_summaries(&vec![theta(); 1000], 0.999, reference, false).unwrap();
        let d = s.delta_ec;
        for v in [d.mode, d.mean, d.q25, d.q50, d.q75] {
            assert_eq!(v, 0.0);
        }
        assert_eq!(s.ec.mean, reference);
    }

    #[test]
    fn floor_applies_to_negative_loss_rates() {
        // μ > 1 makes S(x) negative at the stressed factor
        let p = ModelParams::new(0.02, 0.1, 1.2, 0.01, 0.0).unwrap();
        assert!(quantile_distribution(&[p], 0.999, false).unwrap()[0] < 0.0);
        assert_eq!(quantile_distribution(&[p], 0.999, true).unwrap()[0], 0.0);
    }

    #[test]
    fn finite_quantile_distribution_is_reproducible() {
        let pf = Portfolio::equal(200, RecoveryLink::Identity, false).unwrap();
        let draws = vec![theta(), ModelParams::new(0.02, 0.1, 0.4, 0.3, 0.1).unwrap()];
        let a = quantile_distribution_finite(&draws, &pf, 0.99, 20_000, 5).unwrap();
        let b = quantile_distribution_finite(&draws, &pf, 0.99, 20_000, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].value, a[1].value);
    }
}
