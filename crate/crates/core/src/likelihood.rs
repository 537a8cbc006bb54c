//! Likelihoods of yearly default counts and average recoveries.
//!
//! Three families live here:
//! * the latent-augmented likelihood, where each period's factor `xₜ` is part
//!   of the state and every term is evaluated in log space;
//! * the marginal likelihood, which integrates each `xₜ` out against its
//!   standard-normal prior by Gauss–Hermite quadrature;
//! * the approximate per-process likelihoods used by the two-stage
//!   maximum-likelihood procedure (probit default rates, and average
//!   recoveries given a factor path).

use std::collections::HashSet;

use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::model::{LatentPath, ModelParams};
use crate::normal::{self, LN_SQRT_2PI};
use crate::optimize;
use crate::quadrature::GaussHermite;
use crate::stats::log_sum_exp;

/// One period of observed data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodRecord {
    pub year: i32,
    /// Number of obligors `Jₜ`.
    pub obligors: u64,
    /// Number of defaults `dₜ`.
    pub defaults: u64,
    /// Average recovery `r̄ₜ`; absent exactly when there were no defaults.
    pub avg_recovery: Option<f64>,
}

impl PeriodRecord {
    pub fn default_rate(&self) -> f64 {
        self.defaults as f64 / self.obligors as f64
    }

    fn validate(&self) -> Result<()> {
        let year = self.year;
        if self.obligors == 0 {
            return Err(Error::InvalidData(format!(
                "year {year}: obligor count is zero"
            )));
        }
        if self.defaults > self.obligors {
            return Err(Error::InvalidData(format!(
                "year {year}: {} defaults exceed {} obligors",
                self.defaults, self.obligors
            )));
        }
        match (self.defaults, self.avg_recovery) {
            (0, Some(_)) => Err(Error::InvalidData(format!(
                "year {year}: average recovery given without any defaults"
            ))),
            (d, None) if d > 0 => Err(Error::InvalidData(format!(
                "year {year}: average recovery missing for {d} defaults"
            ))),
            (_, Some(r)) if !r.is_finite() => Err(Error::InvalidData(format!(
                "year {year}: average recovery is not finite"
            ))),
            _ => Ok(()),
        }
    }
}

/// Validated per-period observations `(Jₜ, dₜ, r̄ₜ)`, `t = 1..T`.
#[derive(Debug, Clone, PartialEq)]
pub struct YearlyObservations {
    records: Vec<PeriodRecord>,
}

impl YearlyObservations {
    pub fn new(records: Vec<PeriodRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InsufficientData("dataset has no periods".into()));
        }
        let mut years = HashSet::new();
        for r in &records {
            r.validate()?;
            if !years.insert(r.year) {
                return Err(Error::InvalidData(format!("duplicate year {}", r.year)));
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[PeriodRecord] {
        &self.records
    }

    /// Number of periods `T`.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn default_rates(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(PeriodRecord::default_rate)
            .collect()
    }

    /// Probit-transformed default rates `δₜ = Φ⁻¹(ψₜ)`.
    pub fn probit_default_rates(&self) -> Result<Vec<f64>> {
        self.records
            .iter()
            .enumerate()
            .map(|(t, r)| {
                if r.defaults == 0 || r.defaults == r.obligors {
                    Err(Error::TransformUndefined {
                        period: t + 1,
                        rate: r.default_rate(),
                    })
                } else {
                    Ok(normal::quantile(r.default_rate()))
                }
            })
            .collect()
    }
}

/// Parameters together with the factor path: the sampler's state.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub params: ModelParams,
    pub latent: LatentPath,
}

impl AugmentedState {
    pub fn new(params: ModelParams, latent: LatentPath) -> Result<Self> {
        params.validate()?;
        LatentPath::new(latent.0.clone())?;
        Ok(Self { params, latent })
    }
}

/// Conditional density used for the default count given the factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DefaultDensity {
    /// `N(JΛ, JΛ(1−Λ))` evaluated at `dₜ`, no continuity correction.
    #[default]
    NormalApprox,
    /// Exact `Binomial(J, Λ)` mass.
    Binomial,
}

/// Parameter-only quantities hoisted out of the per-period loop.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ParamTerms {
    gamma: f64,
    sqrt_rho: f64,
    sqrt_one_minus_rho: f64,
    mu: f64,
    systematic_recovery: f64,
    idiosyncratic_var: f64,
}

impl ParamTerms {
    pub(crate) fn new(params: &ModelParams) -> Self {
        Self {
            gamma: params.gamma(),
            sqrt_rho: params.rho.sqrt(),
            sqrt_one_minus_rho: (1.0 - params.rho).sqrt(),
            mu: params.mu,
            systematic_recovery: params.sigma * params.omega.sqrt(),
            idiosyncratic_var: params.sigma * params.sigma * (1.0 - params.omega),
        }
    }

    pub(crate) fn default_log_density(
        &self,
        x: f64,
        rec: &PeriodRecord,
        density: DefaultDensity,
    ) -> f64 {
        let index = (self.gamma - self.sqrt_rho * x) / self.sqrt_one_minus_rho;
        let lambda = normal::cdf(index);
        let survival = normal::sf(index);
        let j = rec.obligors as f64;
        let d = rec.defaults as f64;
        match density {
            DefaultDensity::NormalApprox => {
                let var = j * lambda * survival;
                if !(var > 0.0) {
                    return f64::NEG_INFINITY;
                }
                let dev = d - j * lambda;
                -LN_SQRT_2PI - 0.5 * var.ln() - dev * dev / (2.0 * var)
            }
            DefaultDensity::Binomial => {
                ln_binomial(rec.obligors, rec.defaults)
                    + x_ln_y(d, lambda)
                    + x_ln_y(j - d, survival)
            }
        }
    }

    pub(crate) fn recovery_log_density(&self, x: f64, rec: &PeriodRecord) -> Result<f64> {
        let Some(r) = rec.avg_recovery else {
            return Ok(0.0);
        };
        if rec.defaults == 0 {
            return Ok(0.0);
        }
        let var = self.idiosyncratic_var / rec.defaults as f64;
        if !(var > 0.0) {
            return Err(Error::DegenerateDensity(format!(
                "year {}: recovery variance σ²(1−ω)/d is zero",
                rec.year
            )));
        }
        let dev = r - self.mu - self.systematic_recovery * x;
        Ok(-LN_SQRT_2PI - 0.5 * var.ln() - dev * dev / (2.0 * var))
    }

    pub(crate) fn period(
        &self,
        x: f64,
        rec: &PeriodRecord,
        density: DefaultDensity,
    ) -> Result<f64> {
        Ok(self.default_log_density(x, rec, density) + self.recovery_log_density(x, rec)?)
    }
}

/// `x·ln y` with the convention `0·ln 0 = 0`.
fn x_ln_y(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// `ln f(dₜ | xₜ) + ln f(r̄ₜ | dₜ, xₜ)` with the normal-approximation default
/// term. Periods without defaults contribute the default term only.
pub fn log_joint_density_period(
    params: &ModelParams,
    x: f64,
    record: &PeriodRecord,
) -> Result<f64> {
    log_joint_density_period_with(params, x, record, DefaultDensity::NormalApprox)
}

pub fn log_joint_density_period_with(
    params: &ModelParams,
    x: f64,
    record: &PeriodRecord,
    density: DefaultDensity,
) -> Result<f64> {
    ParamTerms::new(params).period(x, record, density)
}

/// Latent-augmented log-likelihood, summed over periods in ascending order.
pub fn log_likelihood_augmented(state: &AugmentedState, data: &YearlyObservations) -> Result<f64> {
    log_likelihood_augmented_with(state, data, DefaultDensity::NormalApprox)
}

pub fn log_likelihood_augmented_with(
    state: &AugmentedState,
    data: &YearlyObservations,
    density: DefaultDensity,
) -> Result<f64> {
    if state.latent.len() != data.len() {
        return Err(Error::LengthMismatch {
            expected: data.len(),
            found: state.latent.len(),
        });
    }
    let terms = ParamTerms::new(&state.params);
    let mut total = 0.0;
    for (x, rec) in state.latent.as_slice().iter().zip(data.records()) {
        total += terms.period(*x, rec, density)?;
    }
    Ok(total)
}

/// Default quadrature size for the marginal likelihood.
pub const DEFAULT_QUADRATURE_NODES: usize = 64;
/// Largest acceptable change when the node count is doubled.
pub const QUADRATURE_TOLERANCE: f64 = 1e-6;

/// Marginal log-likelihood together with its node-doubling check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalLogLikelihood {
    pub value: f64,
    pub nodes: usize,
    /// `|ℓ(2·nodes) − ℓ(nodes)|`.
    pub doubling_change: f64,
}

impl MarginalLogLikelihood {
    pub fn converged(&self) -> bool {
        self.doubling_change <= QUADRATURE_TOLERANCE
    }

    pub fn warning(&self) -> Option<String> {
        (!self.converged()).then(|| {
            format!(
                "marginal likelihood changed by {:.3e} when doubling {} quadrature nodes",
                self.doubling_change, self.nodes
            )
        })
    }
}

/// `Σₜ ln ∫ f(dₜ|x) f(r̄ₜ|dₜ,x) φ(x) dx` by Gauss–Hermite quadrature, checked
/// against a rule with twice as many nodes.
pub fn log_likelihood_marginal(
    params: &ModelParams,
    data: &YearlyObservations,
    nodes: usize,
) -> Result<MarginalLogLikelihood> {
    if nodes < 8 {
        return Err(Error::InvalidParameter {
            name: "nodes",
            value: nodes as f64,
            reason: "marginal likelihood needs at least 8 quadrature nodes",
        });
    }
    let value = log_likelihood_marginal_fixed(params, data, &GaussHermite::new(nodes)?)?;
    let doubled = log_likelihood_marginal_fixed(params, data, &GaussHermite::new(2 * nodes)?)?;
    let doubling_change = if value == doubled {
        0.0
    } else {
        (doubled - value).abs()
    };
    Ok(MarginalLogLikelihood {
        value,
        nodes,
        doubling_change,
    })
}

/// Marginal log-likelihood with a single fixed rule.
///
/// Each period's integrand is re-centred at its mode and scaled by its
/// curvature before the rule is applied, and the node contributions are
/// combined with log-sum-exp so nothing underflows even when the default
/// count pins `x` down tightly.
pub fn log_likelihood_marginal_fixed(
    params: &ModelParams,
    data: &YearlyObservations,
    rule: &GaussHermite,
) -> Result<f64> {
    let terms = ParamTerms::new(params);
    let mut total = 0.0;
    for rec in data.records() {
        total += log_marginal_period(&terms, rec, rule)?;
    }
    Ok(total)
}

fn log_marginal_period(terms: &ParamTerms, rec: &PeriodRecord, rule: &GaussHermite) -> Result<f64> {
    let integrand = |x: f64| -> Result<f64> {
        Ok(terms.period(x, rec, DefaultDensity::NormalApprox)? + normal::ln_pdf(x))
    };
    // propagate the degenerate-variance error once, up front
    integrand(0.0)?;
    let g = |x: f64| integrand(x).unwrap_or(f64::NEG_INFINITY);

    const GRID_HALF_WIDTH: f64 = 10.0;
    const GRID_STEP: f64 = 0.05;
    let steps = (2.0 * GRID_HALF_WIDTH / GRID_STEP).round() as usize;
    let (mut best_x, mut best_g) = (0.0, f64::NEG_INFINITY);
    for i in 0..=steps {
        let x = -GRID_HALF_WIDTH + i as f64 * GRID_STEP;
        let v = g(x);
        if v > best_g {
            best_g = v;
            best_x = x;
        }
    }
    if best_g == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let mode = optimize::brent_minimize(|x| -g(x), best_x - GRID_STEP, best_x + GRID_STEP, 1e-10).x;

    let h = 1e-4;
    let curvature = (g(mode + h) - 2.0 * g(mode) + g(mode - h)) / (h * h);
    let scale = if curvature < 0.0 && curvature.is_finite() {
        (-curvature).sqrt().recip()
    } else {
        1.0
    };

    let root2_scale = std::f64::consts::SQRT_2 * scale;
    let contributions: Vec<f64> = rule
        .nodes
        .iter()
        .zip(&rule.ln_weights)
        .map(|(u, lw)| lw + g(mode + root2_scale * u) + u * u)
        .collect();
    Ok(root2_scale.ln() + log_sum_exp(&contributions))
}

/// Log-likelihood of the probit default rates under the large-portfolio
/// approximation, as a function of `(p, ρ)`:
/// `Σₜ ½ln((1−ρ)/ρ) − (γ² + (1−2ρ)δₜ² − 2√(1−ρ)γδₜ)/(2ρ)`.
pub fn log_likelihood_default_approx(p: f64, rho: f64, data: &YearlyObservations) -> Result<f64> {
    let delta = data.probit_default_rates()?;
    log_likelihood_default_approx_probit(p, rho, &delta)
}

/// As [`log_likelihood_default_approx`] for precomputed `δₜ`.
pub fn log_likelihood_default_approx_probit(p: f64, rho: f64, delta: &[f64]) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter {
            name: "p",
            value: p,
            reason: "must lie in (0, 1)",
        });
    }
    if rho == 0.0 {
        return Err(Error::DegenerateDensity(
            "default-rate density is degenerate at zero asset correlation".into(),
        ));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidParameter {
            name: "rho",
            value: rho,
            reason: "must lie in (0, 1)",
        });
    }
    let gamma = normal::quantile(p);
    let log_scale = 0.5 * ((1.0 - rho) / rho).ln();
    let cross = 2.0 * (1.0 - rho).sqrt() * gamma;
    Ok(delta
        .iter()
        .map(|d| log_scale - (gamma * gamma + (1.0 - 2.0 * rho) * d * d - cross * d) / (2.0 * rho))
        .sum())
}

/// Log-likelihood of the average recoveries given a factor path:
/// `Σₜ ½ln(dₜ/(2πσ²(1−ω))) − dₜ(r̄ₜ − μ − σ√ω·xₜ)²/(2σ²(1−ω))`, over periods
/// with at least one default.
pub fn log_likelihood_recovery_approx(
    mu: f64,
    sigma: f64,
    omega: f64,
    latent: &LatentPath,
    data: &YearlyObservations,
) -> Result<f64> {
    if latent.len() != data.len() {
        return Err(Error::LengthMismatch {
            expected: data.len(),
            found: latent.len(),
        });
    }
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::InvalidParameter {
            name: "omega",
            value: omega,
            reason: "must lie in [0, 1)",
        });
    }
    let var = sigma * sigma * (1.0 - omega);
    if !(sigma > 0.0) || !(var > 0.0) {
        return Err(Error::DegenerateDensity(format!(
            "recovery variance σ²(1−ω) is zero (σ = {sigma}, ω = {omega})"
        )));
    }
    let loading = sigma * omega.sqrt();
    let mut total = 0.0;
    for (x, rec) in latent.as_slice().iter().zip(data.records()) {
        if let (Some(r), d) = (rec.avg_recovery, rec.defaults) {
            let d = d as f64;
            let dev = r - mu - loading * x;
            total +=
                0.5 * (d / (2.0 * std::f64::consts::PI * var)).ln() - d * dev * dev / (2.0 * var);
        }
    }
    Ok(total)
}
