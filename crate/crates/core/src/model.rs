//! Parameters, portfolios and the closed-form conditional quantities of the
//! one-factor default/recovery model.
//!
//! A borrower defaults when its latent condition `√ρ·X + √(1−ρ)·Zᶜ` falls
//! below `Φ⁻¹(p)`; its recovery is a link function applied to
//! `μ + σ√ω·X + σ√(1−ω)·Z`. Everything here is a pure function of its inputs.

use crate::error::{Error, Result};
use crate::normal;
use crate::stats::compensated_sum;

/// The five model parameters `(p, ρ, μ, σ, ω)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Unconditional probability of default per period.
    pub p: f64,
    /// Asset correlation.
    pub rho: f64,
    /// Mean recovery.
    pub mu: f64,
    /// Recovery volatility.
    pub sigma: f64,
    /// Share of recovery variance driven by the systematic factor.
    pub omega: f64,
}

pub const PARAM_NAMES: [&str; 5] = ["p", "rho", "mu", "sigma", "omega"];

impl ModelParams {
    pub fn new(p: f64, rho: f64, mu: f64, sigma: f64, omega: f64) -> Result<Self> {
        let params = Self {
            p,
            rho,
            mu,
            sigma,
            omega,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn from_array(values: [f64; 5]) -> Result<Self> {
        Self::new(values[0], values[1], values[2], values[3], values[4])
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.p, self.rho, self.mu, self.sigma, self.omega]
    }

    pub fn validate(&self) -> Result<()> {
        let checks: [(&'static str, f64, bool, &'static str); 5] = [
            (
                "p",
                self.p,
                self.p > 0.0 && self.p < 1.0,
                "must lie in (0, 1)",
            ),
            (
                "rho",
                self.rho,
                (0.0..1.0).contains(&self.rho),
                "must lie in [0, 1)",
            ),
            ("mu", self.mu, self.mu.is_finite(), "must be finite"),
            (
                "sigma",
                self.sigma,
                self.sigma > 0.0 && self.sigma.is_finite(),
                "must be positive",
            ),
            (
                "omega",
                self.omega,
                (0.0..=1.0).contains(&self.omega),
                "must lie in [0, 1]",
            ),
        ];
        for (name, value, ok, reason) in checks {
            if !ok {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason,
                });
            }
        }
        Ok(())
    }

    /// Default threshold `γ = Φ⁻¹(p)`.
    pub fn gamma(&self) -> f64 {
        normal::quantile(self.p)
    }

    /// Conditional default probability `Λ(x) = Φ[(γ − √ρ·x)/√(1−ρ)]`.
    pub fn conditional_default_prob(&self, x: f64) -> f64 {
        normal::cdf(self.default_index(x))
    }

    /// `1 − Λ(x)` without cancellation.
    pub fn conditional_survival_prob(&self, x: f64) -> f64 {
        normal::sf(self.default_index(x))
    }

    fn default_index(&self, x: f64) -> f64 {
        (self.gamma() - self.rho.sqrt() * x) / (1.0 - self.rho).sqrt()
    }

    /// Mean recovery given the factor, `μ + σ√ω·x`.
    pub fn conditional_recovery_mean(&self, x: f64) -> f64 {
        self.mu + self.sigma * self.omega.sqrt() * x
    }

    /// Idiosyncratic recovery volatility `σ√(1−ω)`.
    pub fn idiosyncratic_recovery_sd(&self) -> f64 {
        self.sigma * (1.0 - self.omega).sqrt()
    }

    /// Linear conditional loss rate `S(x) = 1 − μ − σ√ω·x`.
    pub fn conditional_loss_rate(&self, x: f64) -> f64 {
        1.0 - self.conditional_recovery_mean(x)
    }

    /// Limiting loss of an infinitely granular portfolio, `Λ(x)·S(x)`.
    pub fn limiting_loss(&self, x: f64) -> f64 {
        self.conditional_default_prob(x) * self.conditional_loss_rate(x)
    }

    /// `α`-quantile of the limiting loss, `L∞(Φ⁻¹(1−α))`.
    pub fn analytic_limit_quantile(&self, alpha: f64) -> Result<f64> {
        Ok(self.limiting_loss(stressed_factor(alpha)?))
    }

    /// Stressed PD, LGD and EC at level `alpha`.
    pub fn stressed(&self, alpha: f64) -> Result<StressedLoss> {
        let x = stressed_factor(alpha)?;
        let pd = self.conditional_default_prob(x);
        let lgd = self.conditional_loss_rate(x);
        Ok(StressedLoss {
            pd,
            lgd,
            ec: pd * lgd,
        })
    }
}

/// Factor value `Φ⁻¹(1−α)` at which the `α`-quantile of the limiting loss
/// is attained.
pub fn stressed_factor(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            value: alpha,
            reason: "quantile level must lie in (0, 1)",
        });
    }
    Ok(normal::quantile(1.0 - alpha))
}

/// Stressed default probability, loss given default and their product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StressedLoss {
    pub pd: f64,
    pub lgd: f64,
    pub ec: f64,
}

impl StressedLoss {
    /// Same quantities with a negative conditional loss rate floored at zero.
    pub fn floored(self) -> Self {
        let lgd = self.lgd.max(0.0);
        Self {
            pd: self.pd,
            lgd,
            ec: self.pd * lgd,
        }
    }
}

/// How the recovery driver `V` maps to a recovery rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecoveryLink {
    /// Normal recoveries, `R = V`.
    #[default]
    Identity,
    /// Logit-normal recoveries, `R = eⱽ/(1+eⱽ)`.
    Logit,
    /// Log-normal recoveries, `R = eⱽ`.
    Exp,
}

impl RecoveryLink {
    pub fn apply(self, v: f64) -> Result<f64> {
        let r = self.apply_unchecked(v);
        if r.is_finite() {
            Ok(r)
        } else {
            Err(Error::NumericRange(format!(
                "recovery link {self:?} overflows at v = {v}"
            )))
        }
    }

    /// Link without the overflow check; `Exp` returns +∞ past ~709.
    #[inline]
    pub fn apply_unchecked(self, v: f64) -> f64 {
        match self {
            RecoveryLink::Identity => v,
            RecoveryLink::Logit => {
                // split on sign so neither branch overflows
                if v >= 0.0 {
                    1.0 / (1.0 + (-v).exp())
                } else {
                    let e = v.exp();
                    e / (1.0 + e)
                }
            }
            RecoveryLink::Exp => v.exp(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RecoveryLink::Identity => "identity",
            RecoveryLink::Logit => "logit",
            RecoveryLink::Exp => "exp",
        }
    }
}

impl std::str::FromStr for RecoveryLink {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identity" | "normal" => Ok(RecoveryLink::Identity),
            "logit" | "logit-normal" => Ok(RecoveryLink::Logit),
            "exp" | "log-normal" | "lognormal" => Ok(RecoveryLink::Exp),
            other => Err(Error::Config(format!("unknown recovery link '{other}'"))),
        }
    }
}

/// Homogeneous loan portfolio: loan weights plus the recovery convention.
#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    weights: Vec<f64>,
    equal_weights: bool,
    pub link: RecoveryLink,
    /// Use `max(1−R, 0)` rather than `1−R` as the per-loan loss.
    pub floor_loss: bool,
}

impl Portfolio {
    pub fn new(weights: Vec<f64>, link: RecoveryLink, floor_loss: bool) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidPortfolio("portfolio has no loans".into()));
        }
        if let Some((j, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w >= 0.0))
        {
            return Err(Error::InvalidPortfolio(format!(
                "weight {w} of loan {j} is not a non-negative number"
            )));
        }
        let total = compensated_sum(weights.iter().copied());
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidPortfolio(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        let equal_weights = weights.iter().all(|&w| w == weights[0]);
        Ok(Self {
            weights,
            equal_weights,
            link,
            floor_loss,
        })
    }

    /// `j` loans of weight `1/j`.
    pub fn equal(j: usize, link: RecoveryLink, floor_loss: bool) -> Result<Self> {
        if j == 0 {
            return Err(Error::InvalidPortfolio("portfolio has no loans".into()));
        }
        Ok(Self {
            weights: vec![1.0 / j as f64; j],
            equal_weights: true,
            link,
            floor_loss,
        })
    }

    /// Weights proportional to the given loan amounts.
    pub fn from_exposures(amounts: &[f64], link: RecoveryLink, floor_loss: bool) -> Result<Self> {
        let total = compensated_sum(amounts.iter().copied());
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidPortfolio(
                "loan amounts must have a positive finite total".into(),
            ));
        }
        let mut weights: Vec<f64> = amounts.iter().map(|a| a / total).collect();
        // absorb the rounding residue so the weights sum to one
        let residue = 1.0 - compensated_sum(weights.iter().copied());
        if let Some(w) = weights.iter_mut().max_by(|a, b| a.total_cmp(b)) {
            *w += residue;
        }
        Self::new(weights, link, floor_loss)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn has_equal_weights(&self) -> bool {
        self.equal_weights
    }

    /// Per-loan loss for a realised recovery rate.
    #[inline]
    pub fn loan_loss(&self, recovery: f64) -> f64 {
        let loss = 1.0 - recovery;
        if self.floor_loss {
            loss.max(0.0)
        } else {
            loss
        }
    }
}

/// Systematic factor realisations `X₁..X_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPath(pub Vec<f64>);

impl LatentPath {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if let Some(t) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "latent factor at period {} is not finite",
                t + 1
            )));
        }
        Ok(Self(x))
    }

    pub fn zeros(t: usize) -> Self {
        Self(vec![0.0; t])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}
