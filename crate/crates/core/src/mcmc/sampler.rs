//! Single-component Metropolis–Hastings over `(p, ρ, μ, σ, ω, X₁..X_T)`.
//!
//! Parameter components are proposed from a Gaussian random walk truncated
//! to their prior bounds, which makes the proposal asymmetric; the acceptance
//! ratio carries the normalising-constant ratio `Z(current)/Z(proposed)`.
//! Factor components use an untruncated random walk. Proposal scales are
//! adapted during a tuning phase and then frozen.

use rand::Rng;

use crate::error::{Error, Result};
use crate::likelihood::{AugmentedState, DefaultDensity, ParamTerms, YearlyObservations};
use crate::model::{LatentPath, ModelParams, PARAM_NAMES};
use crate::normal;
use crate::rng::{self, tags, StreamRng};
use crate::stats::{self, normal_interval_mass};

/// Number of parameter components in the state vector.
pub const N_PARAMS: usize = 5;

/// Uniform priors on the five parameters; the factors are standard normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub bounds: [(f64, f64); N_PARAMS],
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            bounds: [(0.0, 1.0), (0.0, 1.0), (0.0, 1.0), (0.01, 1.0), (0.0, 1.0)],
        }
    }
}

impl PriorSpec {
    pub fn new(bounds: [(f64, f64); N_PARAMS]) -> Result<Self> {
        for (k, (a, b)) in bounds.iter().enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::Config(format!(
                    "prior bounds for {} must be finite with lower < upper, got ({a}, {b})",
                    PARAM_NAMES[k]
                )));
            }
        }
        Ok(Self { bounds })
    }

    /// Whether every parameter lies strictly inside its bounds.
    pub fn contains(&self, theta: &[f64]) -> bool {
        theta
            .iter()
            .zip(&self.bounds)
            .all(|(v, (a, b))| v > a && v < b)
    }

    /// `Σ_k ln(1/(b_k − a_k))`.
    pub fn log_normaliser(&self) -> f64 {
        -self.bounds.iter().map(|(a, b)| (b - a).ln()).sum::<f64>()
    }
}

/// Sampler settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub burn_in: usize,
    pub samples: usize,
    /// Sweeps spent adapting proposal scales; zero skips adaptation.
    pub tune_iters: usize,
    pub target_accept: f64,
    pub seed: u64,
    /// Starting proposal standard deviations, one per component; `None` uses
    /// [`default_rw_sd`].
    pub initial_rw_sd: Option<Vec<f64>>,
    /// Keep every `thin`-th sweep.
    pub thin: usize,
    /// Include the truncated-proposal normalisation ratio. Switching it off
    /// exists only to demonstrate the resulting bias.
    pub hastings_correction: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            burn_in: 20_000,
            samples: 100_000,
            tune_iters: 5_000,
            target_accept: 0.234,
            seed: 0,
            initial_rw_sd: None,
            thin: 1,
            hastings_correction: true,
        }
    }
}

/// Sweeps between proposal-scale adjustments.
pub const TUNE_BLOCK: usize = 100;
/// Shortest allowed tuning phase.
pub const MIN_TUNE_ITERS: usize = 500;
/// Acceptance band outside which the sampling phase is flagged.
pub const ACCEPTANCE_WARN_BAND: (f64, f64) = (0.10, 0.45);

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.tune_iters != 0 && self.tune_iters < MIN_TUNE_ITERS {
            return Err(Error::Config(format!(
                "tune_iters must be 0 or at least {MIN_TUNE_ITERS}"
            )));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config("target_accept must lie in (0, 1)".into()));
        }
        if let Some(sd) = &self.initial_rw_sd {
            if sd.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return Err(Error::Config(
                    "proposal standard deviations must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Starting proposal scales for `(p, ρ, μ, σ, ω)` followed by `t` factors.
pub fn default_rw_sd(t: usize) -> Vec<f64> {
    let mut sd = vec![0.005, 0.02, 0.05, 0.05, 0.05];
    sd.extend(std::iter::repeat_n(0.5, t));
    sd
}

/// An unnormalised log-density sampled one component at a time.
pub trait Target: Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, state: &[f64]) -> f64;

    /// The terms of the log-density that involve component `k`. Terms that do
    /// not involve `k` may be dropped: only differences in `k` are used.
    fn log_density_component(&self, state: &[f64], k: usize) -> f64 {
        let _ = k;
        self.log_density(state)
    }

    /// Interval the proposal for component `k` is truncated to, if any.
    fn proposal_bounds(&self, k: usize) -> Option<(f64, f64)> {
        let _ = k;
        None
    }
}

/// Bayes posterior of the augmented state for yearly default/recovery data.
#[derive(Debug, Clone)]
pub struct LgdPosterior<'a> {
    data: &'a YearlyObservations,
    prior: PriorSpec,
    density: DefaultDensity,
}

impl<'a> LgdPosterior<'a> {
    pub fn new(data: &'a YearlyObservations, prior: PriorSpec) -> Self {
        Self {
            data,
            prior,
            density: DefaultDensity::NormalApprox,
        }
    }

    pub fn with_default_density(mut self, density: DefaultDensity) -> Self {
        self.density = density;
        self
    }

    fn params(state: &[f64]) -> ModelParams {
        ModelParams {
            p: state[0],
            rho: state[1],
            mu: state[2],
            sigma: state[3],
            omega: state[4],
        }
    }

    fn default_terms(&self, terms: &ParamTerms, state: &[f64]) -> f64 {
        self.data
            .records()
            .iter()
            .zip(&state[N_PARAMS..])
            .map(|(rec, x)| terms.default_log_density(*x, rec, self.density))
            .sum()
    }

    fn recovery_terms(&self, terms: &ParamTerms, state: &[f64]) -> f64 {
        let mut total = 0.0;
        for (rec, x) in self.data.records().iter().zip(&state[N_PARAMS..]) {
            match terms.recovery_log_density(*x, rec) {
                Ok(v) => total += v,
                Err(_) => return f64::NEG_INFINITY,
            }
        }
        total
    }
}

impl Target for LgdPosterior<'_> {
    fn dim(&self) -> usize {
        N_PARAMS + self.data.len()
    }

    fn log_density(&self, state: &[f64]) -> f64 {
        if !self.prior.contains(&state[..N_PARAMS]) {
            return f64::NEG_INFINITY;
        }
        let terms = ParamTerms::new(&Self::params(state));
        let latent_prior: f64 = state[N_PARAMS..].iter().map(|x| normal::ln_pdf(*x)).sum();
        self.default_terms(&terms, state) + self.recovery_terms(&terms, state) + latent_prior
    }

    fn log_density_component(&self, state: &[f64], k: usize) -> f64 {
        if k < N_PARAMS {
            let (a, b) = self.prior.bounds[k];
            if !(state[k] > a && state[k] < b) {
                return f64::NEG_INFINITY;
            }
            let terms = ParamTerms::new(&Self::params(state));
            // (p, ρ) enter only the default terms, (μ, σ, ω) only the recovery terms
            if k < 2 {
                self.default_terms(&terms, state)
            } else {
                self.recovery_terms(&terms, state)
            }
        } else {
            let t = k - N_PARAMS;
            let rec = &self.data.records()[t];
            let x = state[k];
            let terms = ParamTerms::new(&Self::params(state));
            match terms.period(x, rec, self.density) {
                Ok(v) => v + normal::ln_pdf(x),
                Err(_) => f64::NEG_INFINITY,
            }
        }
    }

    fn proposal_bounds(&self, k: usize) -> Option<(f64, f64)> {
        (k < N_PARAMS).then(|| self.prior.bounds[k])
    }
}

/// Unnormalised log-posterior: augmented log-likelihood, standard-normal
/// factor prior and the uniform parameter prior; `−∞` outside the bounds.
pub fn log_posterior(
    state: &AugmentedState,
    data: &YearlyObservations,
    prior: &PriorSpec,
) -> Result<f64> {
    if state.latent.len() != data.len() {
        return Err(Error::LengthMismatch {
            expected: data.len(),
            found: state.latent.len(),
        });
    }
    let mut flat = state.params.to_array().to_vec();
    flat.extend_from_slice(state.latent.as_slice());
    let lp = LgdPosterior::new(data, *prior).log_density(&flat);
    Ok(if lp.is_finite() {
        lp + prior.log_normaliser()
    } else {
        lp
    })
}

/// `ln f_N(to; from, sd) − ln[F_N(b; from, sd) − F_N(a; from, sd)]`.
pub fn truncated_gaussian_proposal_logdensity(
    from: f64,
    to: f64,
    sd: f64,
    a: f64,
    b: f64,
) -> Result<f64> {
    if !(a < b) || !(sd > 0.0) {
        return Err(Error::InvalidParameter {
            name: "sd",
            value: sd,
            reason: "proposal needs sd > 0 and a window with lower < upper",
        });
    }
    if !(a..=b).contains(&to) {
        return Err(Error::InvalidParameter {
            name: "to",
            value: to,
            reason: "proposed value lies outside the truncation window",
        });
    }
    Ok(normal::ln_density(to, from, sd) - log_window_mass(from, sd, a, b)?)
}

fn log_window_mass(centre: f64, sd: f64, a: f64, b: f64) -> Result<f64> {
    let mass = normal_interval_mass(a, b, centre, sd);
    if !(mass > 0.0) {
        return Err(Error::ProposalDegenerate {
            sd,
            lower: a,
            upper: b,
        });
    }
    Ok(mass.ln())
}

/// Draw from `N(centre, sd²)` truncated to `[a, b]` by inversion, working on
/// whichever tail keeps the probabilities away from one.
pub fn sample_truncated_gaussian<R: Rng + ?Sized>(
    centre: f64,
    sd: f64,
    a: f64,
    b: f64,
    rng: &mut R,
) -> Result<f64> {
    let alpha = (a - centre) / sd;
    let beta = (b - centre) / sd;
    let u: f64 = rng.random();
    let z = if alpha > 0.0 {
        let (sa, sb) = (normal::sf(alpha), normal::sf(beta));
        if !(sa > sb) {
            return Err(Error::ProposalDegenerate {
                sd,
                lower: a,
                upper: b,
            });
        }
        -normal::quantile(sa - u * (sa - sb))
    } else {
        let (ca, cb) = (normal::cdf(alpha), normal::cdf(beta));
        if !(cb > ca) {
            return Err(Error::ProposalDegenerate {
                sd,
                lower: a,
                upper: b,
            });
        }
        normal::quantile(ca + u * (cb - ca))
    };
    Ok((centre + sd * z).clamp(a, b))
}

/// `min{1, exp(Δ log target + ln q(current|proposed) − ln q(proposed|current))}`.
pub fn acceptance_probability(
    log_target_current: f64,
    log_target_proposed: f64,
    log_q_forward: f64,
    log_q_backward: f64,
) -> f64 {
    if log_target_proposed == f64::NEG_INFINITY {
        return 0.0;
    }
    let log_ratio = log_target_proposed - log_target_current + log_q_backward - log_q_forward;
    if log_ratio.is_nan() {
        return 0.0;
    }
    log_ratio.exp().min(1.0)
}

/// One Metropolis–Hastings update of component `k`; returns whether the
/// proposal was accepted. `state` is updated in place.
pub fn mh_step_component<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    state: &mut [f64],
    k: usize,
    rw_sd: f64,
    hastings_correction: bool,
    rng: &mut R,
) -> Result<bool> {
    let current = state[k];
    let current_lp = target.log_density_component(state, k);
    let (proposed, log_q_ratio) = match target.proposal_bounds(k) {
        Some((a, b)) => {
            let y = sample_truncated_gaussian(current, rw_sd, a, b, rng)?;
            // the Gaussian kernels cancel; only the window masses remain
            let ratio = if hastings_correction {
                log_window_mass(current, rw_sd, a, b)? - log_window_mass(y, rw_sd, a, b)?
            } else {
                0.0
            };
            (y, ratio)
        }
        None => {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            (current + rw_sd * z, 0.0)
        }
    };
    state[k] = proposed;
    let proposed_lp = target.log_density_component(state, k);
    let accept_prob = acceptance_probability(current_lp, proposed_lp, 0.0, log_q_ratio);
    // the uniform is drawn unconditionally to keep the stream aligned
    let u: f64 = rng.random();
    let accepted = u < accept_prob;
    if !accepted {
        state[k] = current;
    }
    Ok(accepted)
}

fn sweep<T: Target + ?Sized>(
    target: &T,
    state: &mut [f64],
    components: &[usize],
    rw_sd: &[f64],
    hastings: bool,
    accepted: &mut [u64],
    rng: &mut StreamRng,
) -> Result<()> {
    for &k in components {
        if mh_step_component(target, state, k, rw_sd[k], hastings, rng)? {
            accepted[k] += 1;
        }
    }
    Ok(())
}

/// Adapt proposal scales: after every block of [`TUNE_BLOCK`] sweeps each
/// component's scale is multiplied by `exp(rate − target)` clipped to
/// `[0.5, 2]`. Returns the final scales; `state` is advanced in place.
pub fn tune_proposals<T: Target + ?Sized>(
    target: &T,
    state: &mut [f64],
    components: &[usize],
    initial_rw_sd: &[f64],
    config: &ChainConfig,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    if config.tune_iters < MIN_TUNE_ITERS {
        return Err(Error::Config(format!(
            "tuning needs at least {MIN_TUNE_ITERS} sweeps"
        )));
    }
    let mut rw_sd = initial_rw_sd.to_vec();
    let mut accepted = vec![0u64; target.dim()];
    for it in 1..=config.tune_iters {
        sweep(
            target,
            state,
            components,
            &rw_sd,
            config.hastings_correction,
            &mut accepted,
            rng,
        )?;
        if it % TUNE_BLOCK == 0 {
            for &k in components {
                let rate = accepted[k] as f64 / TUNE_BLOCK as f64;
                rw_sd[k] *= (rate - config.target_accept).exp().clamp(0.5, 2.0);
            }
            accepted.iter_mut().for_each(|a| *a = 0);
        }
    }
    Ok(rw_sd)
}

/// Stored draws and chain metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    /// Row-major `len × dim` matrix of stored states.
    pub draws: Vec<f64>,
    pub dim: usize,
    /// Sampling-phase sweep number of each stored row.
    pub iterations: Vec<u64>,
    /// Sampling-phase acceptance rate per component (NaN when not updated).
    pub acceptance_rates: Vec<f64>,
    pub tuned_rw_sd: Vec<f64>,
    pub seed: u64,
    pub thin: usize,
    pub warnings: Vec<String>,
}

impl PosteriorSamples {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    /// Number of factor components `T`.
    pub fn periods(&self) -> usize {
        self.dim.saturating_sub(N_PARAMS)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.draws[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.draws.chunks_exact(self.dim)
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows().map(|r| r[k]).collect()
    }

    /// Parameters of stored draw `i`, taken as-is from the chain.
    pub fn params(&self, i: usize) -> ModelParams {
        let r = self.row(i);
        ModelParams {
            p: r[0],
            rho: r[1],
            mu: r[2],
            sigma: r[3],
            omega: r[4],
        }
    }

    pub fn all_params(&self) -> Vec<ModelParams> {
        (0..self.len()).map(|i| self.params(i)).collect()
    }

    pub fn latent(&self, i: usize) -> LatentPath {
        LatentPath(self.row(i)[N_PARAMS..].to_vec())
    }

    /// Concatenate chains ordered by chain id, then iteration.
    pub fn pooled(mut chains: Vec<(u64, PosteriorSamples)>) -> Result<Self> {
        chains.sort_by_key(|(id, _)| *id);
        let mut iter = chains.into_iter();
        let (_, mut pooled) = iter
            .next()
            .ok_or_else(|| Error::InsufficientData("no chains to pool".into()))?;
        for (_, c) in iter {
            if c.dim != pooled.dim {
                return Err(Error::LengthMismatch {
                    expected: pooled.dim,
                    found: c.dim,
                });
            }
            pooled.draws.extend_from_slice(&c.draws);
            pooled.iterations.extend_from_slice(&c.iterations);
            pooled.warnings.extend(c.warnings);
        }
        Ok(pooled)
    }
}

/// Tune, burn in and sample `target` from `initial`, updating only the
/// listed components in the listed order each sweep.
pub fn run_sampler<T: Target + ?Sized>(
    target: &T,
    initial: Vec<f64>,
    components: &[usize],
    config: &ChainConfig,
    rng: &mut StreamRng,
) -> Result<PosteriorSamples> {
    config.validate()?;
    let dim = target.dim();
    if initial.len() != dim {
        return Err(Error::LengthMismatch {
            expected: dim,
            found: initial.len(),
        });
    }
    let rw_sd_start = match &config.initial_rw_sd {
        Some(sd) if sd.len() == dim => sd.clone(),
        Some(sd) => {
            return Err(Error::LengthMismatch {
                expected: dim,
                found: sd.len(),
            })
        }
        None => default_rw_sd(dim.saturating_sub(N_PARAMS))
            .into_iter()
            .chain(std::iter::repeat(0.5))
            .take(dim)
            .collect(),
    };
    let mut state = initial;
    let rw_sd = if config.tune_iters > 0 {
        tune_proposals(target, &mut state, components, &rw_sd_start, config, rng)?
    } else {
        rw_sd_start
    };

    let mut accepted = vec![0u64; dim];
    for _ in 0..config.burn_in {
        sweep(
            target,
            &mut state,
            components,
            &rw_sd,
            config.hastings_correction,
            &mut accepted,
            rng,
        )?;
    }

    accepted.iter_mut().for_each(|a| *a = 0);
    let mut draws = Vec::with_capacity(config.samples * dim);
    let mut iterations = Vec::with_capacity(config.samples);
    let total = config.samples * config.thin;
    for it in 1..=total {
        sweep(
            target,
            &mut state,
            components,
            &rw_sd,
            config.hastings_correction,
            &mut accepted,
            rng,
        )?;
        if it % config.thin == 0 {
            draws.extend_from_slice(&state);
            iterations.push(it as u64);
        }
    }

    let mut acceptance_rates = vec![f64::NAN; dim];
    let mut warnings = Vec::new();
    for &k in components {
        let rate = accepted[k] as f64 / total as f64;
        acceptance_rates[k] = rate;
        let (lo, hi) = ACCEPTANCE_WARN_BAND;
        if config.tune_iters > 0 && !(lo..=hi).contains(&rate) {
            warnings.push(format!(
                "component {} acceptance rate {rate:.3} outside [{lo}, {hi}] after tuning (proposal sd {:.3e})",
                component_name(k),
                rw_sd[k]
            ));
        }
    }
    Ok(PosteriorSamples {
        draws,
        dim,
        iterations,
        acceptance_rates,
        tuned_rw_sd: rw_sd,
        seed: config.seed,
        thin: config.thin,
        warnings,
    })
}

/// Column label of state component `k`.
pub fn component_name(k: usize) -> String {
    if k < N_PARAMS {
        PARAM_NAMES[k].to_string()
    } else {
        format!("x{}", k - N_PARAMS + 1)
    }
}

/// Random stream for chain `chain_id` under `seed`.
pub fn chain_rng(seed: u64, chain_id: u64) -> StreamRng {
    rng::substream(rng::derive_seed(seed, tags::MCMC), chain_id)
}

/// Uniform draws inside the prior bounds followed by `t` zeros.
pub fn initial_state<R: Rng + ?Sized>(prior: &PriorSpec, t: usize, rng: &mut R) -> Vec<f64> {
    let mut state: Vec<f64> = prior
        .bounds
        .iter()
        .map(|(a, b)| loop {
            let v = a + (b - a) * rng.random::<f64>();
            if v > *a && v < *b {
                break v;
            }
        })
        .collect();
    state.extend(std::iter::repeat_n(0.0, t));
    state
}

/// Full sampler for yearly data: uniform starting parameters, zero factors,
/// sweeps over `(p, ρ, μ, σ, ω, X₁..X_T)`.
pub fn run_chain(
    data: &YearlyObservations,
    prior: &PriorSpec,
    config: &ChainConfig,
) -> Result<PosteriorSamples> {
    if data.len() < 2 {
        return Err(Error::InsufficientData(
            "the sampler needs at least two periods".into(),
        ));
    }
    let mut rng = chain_rng(config.seed, 0);
    let initial = initial_state(prior, data.len(), &mut rng);
    let target = LgdPosterior::new(data, *prior);
    let components: Vec<usize> = (0..target.dim()).collect();
    run_sampler(&target, initial, &components, config, &mut rng)
}

/// Geweke-style check: first-half versus second-half means of each column,
/// in units of the combined batch-means standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct StationarityCheck {
    pub component: String,
    pub mean_difference: f64,
    pub standard_error: f64,
}

impl StationarityCheck {
    pub fn passes(&self) -> bool {
        !(self.mean_difference.abs() >= 3.0 * self.standard_error)
    }
}

pub fn stationarity_checks(
    samples: &PosteriorSamples,
    batches_per_half: usize,
) -> Vec<StationarityCheck> {
    let half = samples.len() / 2;
    (0..samples.dim)
        .map(|k| {
            let col = samples.column(k);
            let (first, second) = (&col[..half], &col[half..2 * half]);
            let se = (stats::batch_means_standard_error(first, batches_per_half).powi(2)
                + stats::batch_means_standard_error(second, batches_per_half).powi(2))
            .sqrt();
            StationarityCheck {
                component: component_name(k),
                mean_difference: stats::mean(first) - stats::mean(second),
                standard_error: se,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::{log_likelihood_augmented, PeriodRecord};
    use crate::simulate::simulate_dataset;

    struct Uniform01 {
        truncate: bool,
    }

    impl Target for Uniform01 {
        fn dim(&self) -> usize {
            1
        }
        fn log_density(&self, s: &[f64]) -> f64 {
            if s[0] > 0.0 && s[0] < 1.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
        fn proposal_bounds(&self, _k: usize) -> Option<(f64, f64)> {
            self.truncate.then_some((0.0, 1.0))
        }
    }

    fn toy_data() -> YearlyObservations {
        YearlyObservations::new(vec![
            PeriodRecord {
                year: 1,
                obligors: 500,
                defaults: 7,
                avg_recovery: Some(0.41),
            },
            PeriodRecord {
                year: 2,
                obligors: 520,
                defaults: 12,
                avg_recovery: Some(0.37),
            },
        ])
        .unwrap()
    }

    #[test]
    fn proposal_density_examples() {
        let plain =
            truncated_gaussian_proposal_logdensity(0.3, 0.5, 0.2, f64::NEG_INFINITY, f64::INFINITY)
                .unwrap();
        assert!((plain - normal::ln_density(0.5, 0.3, 0.2)).abs() < 1e-15);
        // mpmath: 1.3836471330926810389
        let v = truncated_gaussian_proposal_logdensity(0.5, 0.5, 0.1, 0.0, 1.0).unwrap();
        assert!((v - 1.383_647_133_092_681).abs() < 1e-12, "{v}");
        // mpmath: 0.6275929750780293353 and 0.28165946911833706728
        let fwd = truncated_gaussian_proposal_logdensity(0.05, 0.2, 0.1, 0.0, 1.0).unwrap();
        let back = truncated_gaussian_proposal_logdensity(0.2, 0.05, 0.1, 0.0, 1.0).unwrap();
        assert!((fwd - 0.627_592_975_078_029_3).abs() < 1e-12, "{fwd}");
        assert!((back - 0.281_659_469_118_337_07).abs() < 1e-12, "{back}");
        assert!(fwd != back);
    }

    #[test]
    fn degenerate_window_is_an_error() {
        assert!(matches!(
            truncated_gaussian_proposal_logdensity(-100.0, 0.5, 0.01, 0.0, 1.0),
            Err(Error::ProposalDegenerate { .. })
        ));
        assert!(truncated_gaussian_proposal_logdensity(0.5, 1.5, 0.1, 0.0, 1.0).is_err());
    }

    #[test]
    fn acceptance_edge_cases() {
        assert_eq!(acceptance_probability(-3.0, -3.0, 0.0, 0.0), 1.0);
        assert_eq!(
            acceptance_probability(-3.0, f64::NEG_INFINITY, 0.0, 0.0),
            0.0
        );
        assert!((acceptance_probability(0.0, -1.0, 0.0, 0.0) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn truncated_sampler_stays_in_window_and_matches_moments() {
        let mut rng = rng::substream(1, 0);
        let draws: Vec<f64> = (0..200_000)
            .map(|_| sample_truncated_gaussian(0.95, 0.2, 0.0, 1.0, &mut rng).unwrap())
            .collect();
        assert!(draws.iter().all(|d| (0.0..=1.0).contains(d)));
        // mean of N(0.95, 0.2²) truncated to [0, 1]
        let (a, b) = ((0.0 - 0.95) / 0.2, (1.0 - 0.95) / 0.2);
        let z = normal::cdf(b) - normal::cdf(a);
        let exact = 0.95 + 0.2 * (normal::pdf(a) - normal::pdf(b)) / z;
        let se = (stats::sample_variance(&draws) / draws.len() as f64).sqrt();
        assert!((stats::mean(&draws) - exact).abs() < 4.0 * se);
        // far upper-tail window
        let far = sample_truncated_gaussian(0.0, 0.1, 0.9, 1.0, &mut rng).unwrap();
        assert!((0.9..=1.0).contains(&far));
    }

    #[test]
    fn log_posterior_properties() {
        let data = toy_data();
        let prior = PriorSpec::default();
        let params = ModelParams::new(0.02, 0.1, 0.4, 0.2, 0.3).unwrap();
        let x1 = LatentPath::new(vec![0.2, -0.4]).unwrap();
        let x2 = LatentPath::new(vec![1.0, 0.5]).unwrap();
        let s1 = AugmentedState::new(params, x1.clone()).unwrap();
        let s2 = AugmentedState::new(params, x2.clone()).unwrap();
        let d_post =
            log_posterior(&s1, &data, &prior).unwrap() - log_posterior(&s2, &data, &prior).unwrap();
        let d_lik = log_likelihood_augmented(&s1, &data).unwrap()
            - log_likelihood_augmented(&s2, &data).unwrap();
        let d_prior: f64 = x1.0.iter().map(|x| normal::ln_pdf(*x)).sum::<f64>()
            - x2.0.iter().map(|x| normal::ln_pdf(*x)).sum::<f64>();
        assert!((d_post - d_lik - d_prior).abs() < 1e-10);

        let outside =
            AugmentedState::new(ModelParams::new(0.02, 0.1, 0.4, 0.005, 0.3).unwrap(), x1).unwrap();
        assert_eq!(
            log_posterior(&outside, &data, &prior).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn component_density_differences_match_full_density() {
        let data = simulate_dataset(
            &ModelParams::new(0.02, 0.08, 0.45, 0.3, 0.2).unwrap(),
            &[800; 6],
            3,
        )
        .unwrap()
        .observations;
        let target = LgdPosterior::new(&data, PriorSpec::default());
        let base = vec![0.02, 0.08, 0.45, 0.3, 0.2, 0.1, -0.5, 1.2, 0.0, -1.0, 0.4];
        for k in 0..target.dim() {
            let mut moved = base.clone();
            moved[k] += 0.01;
            let full = target.log_density(&moved) - target.log_density(&base);
            let part =
                target.log_density_component(&moved, k) - target.log_density_component(&base, k);
            assert!(
                (full - part).abs() < 1e-9,
                "component {k}: {full} vs {part}"
            );
        }
    }

    #[test]
    fn zero_length_chain_settings() {
        let data = toy_data();
        let config = ChainConfig {
            burn_in: 0,
            samples: 1,
            tune_iters: 0,
            seed: 5,
            ..ChainConfig::default()
        };
        let s = run_chain(&data, &PriorSpec::default(), &config).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.row(0).len(), 5 + 2);
    }

    #[test]
    fn chains_are_deterministic_and_stay_in_support() {
        let data = simulate_dataset(
            &ModelParams::new(0.02, 0.08, 0.45, 0.3, 0.2).unwrap(),
            &[2000; 8],
            9,
        )
        .unwrap()
        .observations;
        let config = ChainConfig {
            burn_in: 500,
            samples: 2000,
            tune_iters: 1000,
            seed: 77,
            ..ChainConfig::default()
        };
        let prior = PriorSpec::default();
        let a = run_chain(&data, &prior, &config).unwrap();
        let b = run_chain(&data, &prior, &config).unwrap();
        assert_eq!(a, b);
        for r in a.rows() {
            assert!(prior.contains(&r[..N_PARAMS]));
        }
    }

    #[test]
    fn tuning_moves_scale_in_the_right_direction() {
        let target = Uniform01 { truncate: false };
        let config = ChainConfig {
            tune_iters: 500,
            ..ChainConfig::default()
        };
        let mut rng = rng::substream(3, 0);
        let mut s = vec![0.5];
        let grown = tune_proposals(&target, &mut s, &[0], &[1e-4], &config, &mut rng).unwrap();
        assert!(grown[0] > 1e-4);
        let mut s = vec![0.5];
        let shrunk = tune_proposals(&target, &mut s, &[0], &[1e4], &config, &mut rng).unwrap();
        assert!(shrunk[0] < 1e4);
    }

    #[test]
    fn tuned_rate_on_uniform_target() {
        let target = Uniform01 { truncate: false };
        let config = ChainConfig {
            burn_in: 0,
            samples: 50_000,
            tune_iters: 5_000,
            initial_rw_sd: Some(vec![0.01]),
            ..ChainConfig::default()
        };
        let mut rng = rng::substream(4, 0);
        let s = run_sampler(&target, vec![0.5], &[0], &config, &mut rng).unwrap();
        let rate = s.acceptance_rates[0];
        assert!((0.18..=0.30).contains(&rate), "{rate}");
    }

    #[test]
    fn two_point_target_occupancy() {
        // symmetric two-well density on (0, 1) discretised to two halves
        struct TwoPoint;
        impl Target for TwoPoint {
            fn dim(&self) -> usize {
                1
            }
            fn log_density(&self, s: &[f64]) -> f64 {
                match s[0] {
                    v if v > 0.0 && v < 0.1 => 0.0,
                    v if v > 0.9 && v < 1.0 => 0.0,
                    v if v > 0.0 && v < 1.0 => -3.0,
                    _ => f64::NEG_INFINITY,
                }
            }
            fn proposal_bounds(&self, _k: usize) -> Option<(f64, f64)> {
                Some((0.0, 1.0))
            }
        }
        let config = ChainConfig {
            burn_in: 1000,
            samples: 400_000,
            tune_iters: 0,
            initial_rw_sd: Some(vec![0.5]),
            ..ChainConfig::default()
        };
        let mut rng = rng::substream(6, 0);
        let s = run_sampler(&TwoPoint, vec![0.05], &[0], &config, &mut rng).unwrap();
        let low = s.draws.iter().filter(|v| **v < 0.5).count() as f64 / s.len() as f64;
        assert!((low - 0.5).abs() < 0.01, "{low}");
    }

    #[test]
    fn pooling_orders_by_chain_id() {
        let mk = |v: f64| PosteriorSamples {
            draws: vec![v],
            dim: 1,
            iterations: vec![1],
            acceptance_rates: vec![0.2],
            tuned_rw_sd: vec![0.1],
            seed: 0,
            thin: 1,
            warnings: vec![],
        };
        let a = PosteriorSamples::pooled(vec![(2, mk(2.0)), (1, mk(1.0))]).unwrap();
        let b = PosteriorSamples::pooled(vec![(1, mk(1.0)), (2, mk(2.0))]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.draws, vec![1.0, 2.0]);
    }
}
