//! Two-stage approximate maximum likelihood ("feasible" MLE).
//!
//! Stage one fits `(p, ρ)` in closed form from the probit default rates and
//! backs out the factor path. Stage two fixes `σ` at the historical
//! volatility of the average recoveries and maximises the recovery
//! likelihood over `(μ, ω)` given that path.

use crate::error::{Error, Result};
use crate::likelihood::{log_likelihood_recovery_approx, YearlyObservations};
use crate::model::{LatentPath, ModelParams, StressedLoss};
use crate::normal;
use crate::optimize::brent_minimize;

/// Upper end of the `ω` search interval.
pub const OMEGA_UPPER: f64 = 1.0 - 1e-6;
/// Number of sub-intervals searched independently for `ω`.
pub const OMEGA_MULTISTARTS: usize = 16;
/// Likelihood gap within which two `ω` optima count as tied.
const TIE_TOLERANCE: f64 = 1e-12;
/// Capital level used by the point report.
pub const CAPITAL_LEVEL: f64 = 0.999;

/// Closed-form fit of the default process.
#[derive(Debug, Clone, PartialEq)]
pub struct DefaultFit {
    pub p: f64,
    pub rho: f64,
    /// Probit default rates `δₜ`.
    pub delta: Vec<f64>,
    pub delta_bar: f64,
    /// `Σ(δₜ − δ̄)²/T`.
    pub delta_var: f64,
}

/// `ρ̂ = σ_δ²/(1+σ_δ²)` and `p̂ = Φ(δ̄/√(1+σ_δ²))` from the observed rates.
pub fn fit_default_closed_form(data: &YearlyObservations) -> Result<DefaultFit> {
    fit_default_from_probit(data.probit_default_rates()?)
}

/// As [`fit_default_closed_form`] for precomputed probit rates.
pub fn fit_default_from_probit(delta: Vec<f64>) -> Result<DefaultFit> {
    if delta.is_empty() {
        return Err(Error::InsufficientData("no default rates".into()));
    }
    let t = delta.len() as f64;
    let delta_bar = delta.iter().sum::<f64>() / t;
    let delta_var = delta.iter().map(|d| (d - delta_bar).powi(2)).sum::<f64>() / t;
    Ok(DefaultFit {
        p: normal::cdf(delta_bar / (1.0 + delta_var).sqrt()),
        rho: delta_var / (1.0 + delta_var),
        delta,
        delta_bar,
        delta_var,
    })
}

/// `x̂ₜ = (γ̂ − √(1−ρ̂)·δₜ)/√ρ̂`.
pub fn backout_latent(p: f64, rho: f64, delta: &[f64]) -> Result<LatentPath> {
    if rho == 0.0 {
        return Err(Error::LatentUnidentified);
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter {
            name: "p",
            value: p,
            reason: "must lie in (0, 1)",
        });
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidParameter {
            name: "rho",
            value: rho,
            reason: "must lie in (0, 1)",
        });
    }
    let gamma = normal::quantile(p);
    let (a, b) = ((1.0 - rho).sqrt(), rho.sqrt());
    LatentPath::new(delta.iter().map(|d| (gamma - a * d) / b).collect())
}

/// Second-stage fit of the recovery process.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryFit {
    pub mu: f64,
    /// Historical volatility of the yearly average recoveries.
    pub sigma_hist: f64,
    pub omega: f64,
    pub log_likelihood: f64,
    /// The best `ω` sits at the upper end of the search interval.
    pub omega_at_upper_bound: bool,
}

impl RecoveryFit {
    pub fn warning(&self) -> Option<String> {
        self.omega_at_upper_bound.then(|| {
            format!("recovery correlation estimate sits at the search boundary ω = {OMEGA_UPPER}")
        })
    }
}

/// `σ_h` = sample standard deviation of `r̄ₜ`; `(μ̂, ω̂)` maximise the
/// recovery likelihood with `σ = σ_h` and `xₜ = x̂ₜ`.
///
/// For fixed `ω` the optimal `μ` is the default-weighted mean of
/// `r̄ₜ − σ√ω·x̂ₜ`, so the search is over the profile likelihood in `ω`,
/// split into equal sub-intervals each searched with Brent's method.
pub fn fit_recovery_feasible(
    data: &YearlyObservations,
    latent_hat: &LatentPath,
) -> Result<RecoveryFit> {
    if latent_hat.len() != data.len() {
        return Err(Error::LengthMismatch {
            expected: data.len(),
            found: latent_hat.len(),
        });
    }
    let observed: Vec<(f64, f64, f64)> = data
        .records()
        .iter()
        .zip(latent_hat.as_slice())
        .filter_map(|(r, x)| r.avg_recovery.map(|rbar| (r.defaults as f64, rbar, *x)))
        .collect();
    if observed.len() < 2 {
        return Err(Error::InsufficientData(
            "historical recovery volatility needs at least two periods with defaults".into(),
        ));
    }
    let n = observed.len() as f64;
    let rbar_mean = observed.iter().map(|o| o.1).sum::<f64>() / n;
    let sigma_hist = (observed
        .iter()
        .map(|o| (o.1 - rbar_mean).powi(2))
        .sum::<f64>()
        / (n - 1.0))
        .sqrt();
    // equal averages can leave a rounding-level residue instead of zero
    if !(sigma_hist > 4.0 * f64::EPSILON * rbar_mean.abs().max(1.0)) {
        return Err(Error::DegenerateDensity(
            "average recoveries have zero historical volatility".into(),
        ));
    }

    let total_defaults: f64 = observed.iter().map(|o| o.0).sum();
    let mu_given_omega = |omega: f64| {
        let loading = sigma_hist * omega.sqrt();
        observed
            .iter()
            .map(|(d, r, x)| d * (r - loading * x))
            .sum::<f64>()
            / total_defaults
    };
    let profile = |omega: f64| -> f64 {
        log_likelihood_recovery_approx(mu_given_omega(omega), sigma_hist, omega, latent_hat, data)
            .unwrap_or(f64::NEG_INFINITY)
    };

    let width = OMEGA_UPPER / OMEGA_MULTISTARTS as f64;
    let mut best_omega = 0.0;
    let mut best_value = profile(0.0);
    for k in 0..OMEGA_MULTISTARTS {
        let lo = k as f64 * width;
        let hi = if k + 1 == OMEGA_MULTISTARTS {
            OMEGA_UPPER
        } else {
            (k + 1) as f64 * width
        };
        let m = brent_minimize(|w| -profile(w), lo, hi, 1e-11);
        let value = -m.value;
        // candidates arrive in increasing ω, so ties keep the lower one
        if value > best_value + TIE_TOLERANCE {
            best_value = value;
            best_omega = m.x;
        }
    }
    Ok(RecoveryFit {
        mu: mu_given_omega(best_omega),
        sigma_hist,
        omega: best_omega,
        log_likelihood: best_value,
        omega_at_upper_bound: best_omega >= OMEGA_UPPER - 1e-9,
    })
}

/// Complete two-stage fit.
#[derive(Debug, Clone, PartialEq)]
pub struct MleFit {
    pub params: ModelParams,
    pub latent_hat: LatentPath,
    pub delta: Vec<f64>,
    pub delta_bar: f64,
    pub delta_var: f64,
    pub sigma_hist: f64,
    pub omega_at_upper_bound: bool,
}

pub fn fit_mle(data: &YearlyObservations) -> Result<MleFit> {
    let default_fit = fit_default_closed_form(data)?;
    let latent_hat = backout_latent(default_fit.p, default_fit.rho, &default_fit.delta)?;
    let recovery = fit_recovery_feasible(data, &latent_hat)?;
    Ok(MleFit {
        params: ModelParams::new(
            default_fit.p,
            default_fit.rho,
            recovery.mu,
            recovery.sigma_hist,
            recovery.omega,
        )?,
        latent_hat,
        delta: default_fit.delta,
        delta_bar: default_fit.delta_bar,
        delta_var: default_fit.delta_var,
        sigma_hist: recovery.sigma_hist,
        omega_at_upper_bound: recovery.omega_at_upper_bound,
    })
}

/// Stressed PD, LGD and EC at the 0.999 level for the fitted parameters.
pub fn mle_capital_report(fit: &MleFit) -> Result<StressedLoss> {
    fit.params.stressed(CAPITAL_LEVEL)
}
