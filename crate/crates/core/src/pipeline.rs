//! Stage drivers behind the command-line subcommands. Each reads its inputs
//! from a [`RunConfig`] and writes its results under the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::capital::{
    full_predictive_losses, quantile_distribution_finite, stressed_summaries, PortfolioModel,
    StressedSummaries, MIN_TAIL_EXCEEDANCES,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{self, fmt_f64, SUMMARY_HEADER};
use crate::mcmc::{
    component_name, run_chain, stationarity_checks, summarize, summary::MIN_SUMMARY_DRAWS,
    PosteriorSamples, PosteriorSummary, N_PARAMS,
};
use crate::mle::{backout_latent, fit_default_closed_form, fit_mle, mle_capital_report, MleFit};
use crate::model::ModelParams;
use crate::rng::derive_seed;
use crate::simulate::{simulate_dataset, simulate_losses, QuantileEstimate, SyntheticDataset};
use crate::stats;

pub const DATASET_FILE: &str = "dataset.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const MLE_FILE: &str = "mle.csv";
pub const MLE_NOTE_FILE: &str = "mle_note.txt";
pub const CHAIN_FILE: &str = "chain.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.txt";
pub const CAPITAL_POINT_FILE: &str = "capital_point.csv";
pub const CAPITAL_PREDICTIVE_FILE: &str = "capital_predictive.csv";
pub const CAPITAL_DISTRIBUTION_FILE: &str = "capital_distribution.csv";
pub const CAPITAL_FINITE_FILE: &str = "capital_distribution_finite.csv";
pub const CAPITAL_REPORT_FILE: &str = "capital_report.csv";
pub const EC_SAMPLES_FILE: &str = "posterior_ec_samples.txt";
pub const PREDICTIVE_LIMIT_FILE: &str = "predictive_limit_losses.txt";

/// Batches per chain half in the stationarity check.
const STATIONARITY_BATCHES: usize = 20;

fn prepare_out(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out)?;
    Ok(())
}

/// Simulate a dataset and write it with its true parameters and factors.
pub fn run_simulate(cfg: &RunConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    prepare_out(cfg)?;
    let sim = simulate_dataset(&cfg.simulate.params, &cfg.simulate.firm_counts, cfg.seed)?;
    io::write_dataset(cfg.out.join(DATASET_FILE), &sim.observations)?;
    io::write_truth(cfg.out.join(TRUTH_FILE), &sim.true_params, &sim.true_latent)?;
    Ok(sim)
}

/// Two-stage fit of the data file. When the estimated asset correlation is
/// zero the factors cannot be backed out: `p` and `ρ` are still written,
/// with a note, and the error is returned.
pub fn run_fit_mle(cfg: &RunConfig) -> Result<MleFit> {
    cfg.validate()?;
    let data = io::load_dataset(cfg.data_path()?)?;
    prepare_out(cfg)?;
    let note_path = cfg.out.join(MLE_NOTE_FILE);
    let default_fit = fit_default_closed_form(&data)?;
    if let Err(e @ Error::LatentUnidentified) =
        backout_latent(default_fit.p, default_fit.rho, &default_fit.delta)
    {
        let mut row = [None; 8];
        row[0] = Some(default_fit.p);
        row[1] = Some(default_fit.rho);
        io::write_mle(cfg.out.join(MLE_FILE), &row)?;
        fs::write(
            &note_path,
            "estimated asset correlation is zero: the factor path is unidentified and the \
             recovery parameters and capital are not reported\n",
        )?;
        return Err(e);
    }
    let fit = fit_mle(&data)?;
    let stressed = mle_capital_report(&fit)?;
    io::write_mle(cfg.out.join(MLE_FILE), &io::mle_row(&fit.params, &stressed))?;
    if fit.omega_at_upper_bound {
        fs::write(
            &note_path,
            "recovery factor loading estimate sits at its upper bound; the recovery likelihood is \
             maximised at the boundary\n",
        )?;
    } else if note_path.exists() {
        fs::remove_file(&note_path)?;
    }
    Ok(fit)
}

fn summary_rows(samples: &PosteriorSamples) -> Result<Vec<(String, PosteriorSummary)>> {
    (0..samples.dim)
        .map(|k| Ok((component_name(k), summarize(samples, k)?)))
        .collect()
}

fn write_summary_file(path: &Path, samples: &PosteriorSamples) -> Result<bool> {
    if samples.len() < MIN_SUMMARY_DRAWS {
        io::write_summary(path, &[])?;
        return Ok(false);
    }
    io::write_summary(path, &summary_rows(samples)?)?;
    Ok(true)
}

fn diagnostics_text(cfg: &RunConfig, samples: &PosteriorSamples, summarized: bool) -> String {
    let c = &cfg.chain_config;
    let mut s = String::new();
    let _ = writeln!(s, "seed {}", cfg.seed);
    let _ = writeln!(
        s,
        "tune_iters {} burn_in {} samples {} thin {} target_accept {} stored_draws {}",
        c.tune_iters,
        c.burn_in,
        c.samples,
        c.thin,
        c.target_accept,
        samples.len()
    );
    let _ = writeln!(s, "\ncomponent acceptance_rate tuned_rw_sd");
    for k in 0..samples.dim {
        let _ = writeln!(
            s,
            "{} {} {}",
            component_name(k),
            fmt_f64(samples.acceptance_rates[k]),
            fmt_f64(samples.tuned_rw_sd[k])
        );
    }
    let _ = writeln!(
        s,
        "\nstationarity: first-half minus second-half mean, batch-means standard error"
    );
    if samples.len() >= 4 * STATIONARITY_BATCHES {
        for check in stationarity_checks(samples, STATIONARITY_BATCHES) {
            let _ = writeln!(
                s,
                "{} {} {} {}",
                check.component,
                fmt_f64(check.mean_difference),
                fmt_f64(check.standard_error),
                if check.passes() { "ok" } else { "FLAGGED" }
            );
        }
    } else {
        let _ = writeln!(s, "skipped: too few draws");
    }
    if !summarized {
        let _ = writeln!(
            s,
            "\nsummary skipped: fewer than {MIN_SUMMARY_DRAWS} stored draws"
        );
    }
    if !samples.warnings.is_empty() {
        let _ = writeln!(s, "\nwarnings");
        for w in &samples.warnings {
            let _ = writeln!(s, "{w}");
        }
    }
    s
}

/// Run the sampler on the data file and write draws, summaries and
/// diagnostics.
pub fn run_fit_mcmc(cfg: &RunConfig) -> Result<PosteriorSamples> {
    cfg.validate()?;
    let data = io::load_dataset(cfg.data_path()?)?;
    prepare_out(cfg)?;
    let mut chain_config = cfg.chain_config.clone();
    chain_config.seed = cfg.seed;
    let samples = run_chain(&data, &cfg.prior, &chain_config)?;
    io::write_chain(cfg.out.join(CHAIN_FILE), &samples)?;
    let summarized = write_summary_file(&cfg.out.join(SUMMARY_FILE), &samples)?;
    fs::write(
        cfg.out.join(DIAGNOSTICS_FILE),
        diagnostics_text(cfg, &samples, summarized),
    )?;
    Ok(samples)
}

/// Recompute `summary.csv` from an existing chain file.
pub fn run_summarize(cfg: &RunConfig) -> Result<Vec<(String, PosteriorSummary)>> {
    let samples = io::load_chain(cfg.chain_path())?;
    prepare_out(cfg)?;
    let rows = summary_rows(&samples)?;
    io::write_summary(cfg.out.join(SUMMARY_FILE), &rows)?;
    Ok(rows)
}

/// One row of a capital table.
#[derive(Debug, Clone, PartialEq)]
pub struct CapitalRow {
    pub estimator: String,
    pub j: String,
    pub q: f64,
    pub estimate: QuantileEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapitalReport {
    pub posterior_mean: ModelParams,
    pub point: Vec<CapitalRow>,
    pub predictive: Vec<CapitalRow>,
    pub stressed: StressedSummaries,
    /// Where the reference capital came from: `config`, `mle` or
    /// `posterior_mean`.
    pub reference_source: &'static str,
    pub finite: Vec<QuantileEstimate>,
}

fn portfolio_models(cfg: &RunConfig) -> Result<Vec<(String, PortfolioModel)>> {
    let mut models = Vec::new();
    for j in &cfg.capital.j_list {
        let model = match j {
            Some(j) => PortfolioModel::Granular(cfg.portfolio.equal(*j)?),
            None => PortfolioModel::Limiting {
                floor_loss: cfg.portfolio.floor_loss,
            },
        };
        models.push((model.label(), model));
    }
    if let Some(pf) = cfg.portfolio.weighted()? {
        models.push((
            format!("weighted-{}", pf.len()),
            PortfolioModel::Granular(pf),
        ));
    }
    Ok(models)
}

fn validated_draws(samples: &PosteriorSamples) -> Result<Vec<ModelParams>> {
    if samples.dim < N_PARAMS {
        return Err(Error::InvalidData(
            "chain has fewer than five parameter columns".into(),
        ));
    }
    let draws = samples.all_params();
    for (i, d) in draws.iter().enumerate() {
        d.validate()
            .map_err(|e| Error::InvalidData(format!("chain draw {}: {e}", i + 1)))?;
    }
    Ok(draws)
}

fn posterior_mean(draws: &[ModelParams]) -> Result<ModelParams> {
    let mut theta = [0.0; 5];
    for (k, t) in theta.iter_mut().enumerate() {
        *t = stats::compensated_sum(draws.iter().map(|d| d.to_array()[k])) / draws.len() as f64;
    }
    ModelParams::from_array(theta)
}

/// Point estimates at `params` for every level. Granular portfolios share
/// one loss sample across levels.
fn point_estimates(
    params: &ModelParams,
    model: &PortfolioModel,
    levels: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<QuantileEstimate>> {
    match model {
        PortfolioModel::Granular(pf) => {
            let sample = simulate_losses(params, pf, n, seed)?;
            levels
                .iter()
                .map(|q| sample.quantile_estimate(*q))
                .collect()
        }
        PortfolioModel::Limiting { floor_loss } => levels
            .iter()
            .map(|q| {
                let s = params.stressed(*q)?;
                Ok(QuantileEstimate {
                    value: if *floor_loss { s.floored().ec } else { s.ec },
                    std_error: 0.0,
                    n: 0,
                })
            })
            .collect(),
    }
}

fn capital_rows_table(rows: &[CapitalRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.estimator.clone(),
                r.j.clone(),
                fmt_f64(r.q),
                fmt_f64(r.estimate.value),
                fmt_f64(r.estimate.std_error),
                r.estimate.n.to_string(),
            ]
        })
        .collect()
}

/// Capital from a chain file: point estimates at the posterior mean (and at
/// the two-stage estimate when a data file is given), full predictive
/// quantiles per portfolio size, and the posterior distribution of stressed
/// PD, LGD and EC.
pub fn run_capital(cfg: &RunConfig, chain_path: &Path) -> Result<CapitalReport> {
    cfg.validate()?;
    let samples = io::load_chain(chain_path)?;
    let draws = validated_draws(&samples)?;
    prepare_out(cfg)?;
    let cap = &cfg.capital;
    let models = portfolio_models(cfg)?;
    let mean = posterior_mean(&draws)?;

    let mle_params = match &cfg.data {
        // with zero estimated correlation there is no two-stage estimate to report
        Some(path) => match fit_mle(&io::load_dataset(path)?) {
            Ok(fit) => Some(fit.params),
            Err(Error::LatentUnidentified) => None,
            Err(e) => return Err(e),
        },
        None => None,
    };
    let mut estimators = vec![("posterior_mean", mean)];
    if let Some(p) = mle_params {
        estimators.push(("mle", p));
    }

    // Every portfolio size reuses the same random stream, and each loss draw
    // starts with the factor, so differences across sizes are not swamped by
    // Monte Carlo noise.
    let point_seed = derive_seed(cfg.seed, "capital-point");
    let mut point = Vec::new();
    for (name, params) in &estimators {
        let seed = derive_seed(point_seed, name);
        for (label, model) in &models {
            let estimates = point_estimates(params, model, &cap.q_levels, cap.n_draws, seed)?;
            for (&q, estimate) in cap.q_levels.iter().zip(estimates) {
                point.push(CapitalRow {
                    estimator: name.to_string(),
                    j: label.clone(),
                    q,
                    estimate,
                });
            }
        }
    }

    for &q in &cap.q_levels {
        if (cap.n_draws as f64) * (1.0 - q) < MIN_TAIL_EXCEEDANCES {
            return Err(Error::Config(format!(
                "n_draws = {} is too small for q = {q} (need n(1-q) >= 100)",
                cap.n_draws
            )));
        }
    }
    let predictive_seed = derive_seed(cfg.seed, "capital-predictive");
    let mut predictive = Vec::new();
    let mut limit_losses = None;
    for (label, model) in &models {
        let sample = full_predictive_losses(&draws, model, cap.n_draws, predictive_seed)?;
        for &q in &cap.q_levels {
            predictive.push(CapitalRow {
                estimator: "predictive".into(),
                j: label.clone(),
                q,
                estimate: sample.quantile_estimate(q)?,
            });
        }
        if matches!(model, PortfolioModel::Limiting { .. }) {
            limit_losses = Some(sample.losses);
        }
    }
    let limit_losses = match limit_losses {
        Some(l) => l,
        None => {
            let model = PortfolioModel::Limiting {
                floor_loss: cfg.portfolio.floor_loss,
            };
            full_predictive_losses(&draws, &model, cap.n_draws, predictive_seed)?.losses
        }
    };

    let (reference_ec, reference_source) = match (cap.reference_ec, mle_params) {
        (Some(r), _) => (r, "config"),
        (None, Some(p)) => (
            reference_capital(&p, cap.alpha, cfg.portfolio.floor_loss)?,
            "mle",
        ),
        (None, None) => (
            reference_capital(&mean, cap.alpha, cfg.portfolio.floor_loss)?,
            "posterior_mean",
        ),
    };
    let stressed = stressed_summaries(&draws, cap.alpha, reference_ec, cfg.portfolio.floor_loss)?;

    let finite = if cap.finite_draws > 0 {
        let step = (draws.len() / cap.finite_draws).max(1);
        let subset: Vec<ModelParams> = draws
            .iter()
            .step_by(step)
            .take(cap.finite_draws)
            .copied()
            .collect();
        let pf = cfg.portfolio.equal(cfg.portfolio.j)?;
        let est = quantile_distribution_finite(&subset, &pf, cap.alpha, cap.inner_draws, cfg.seed)?;
        let rows: Vec<Vec<String>> = est
            .iter()
            .enumerate()
            .map(|(i, e)| {
                vec![
                    (i * step).to_string(),
                    fmt_f64(e.value),
                    fmt_f64(e.std_error),
                ]
            })
            .collect();
        io::write_table(
            cfg.out.join(CAPITAL_FINITE_FILE),
            &["draw", "value", "std_error"],
            &rows,
        )?;
        est
    } else {
        Vec::new()
    };

    let header = ["estimator", "J", "q", "value", "std_error", "n"];
    io::write_table(
        cfg.out.join(CAPITAL_POINT_FILE),
        &header,
        &capital_rows_table(&point),
    )?;
    io::write_table(
        cfg.out.join(CAPITAL_PREDICTIVE_FILE),
        &header,
        &capital_rows_table(&predictive),
    )?;
    io::write_table(
        cfg.out.join(CAPITAL_DISTRIBUTION_FILE),
        &SUMMARY_HEADER,
        &distribution_rows(&stressed),
    )?;
    io::write_table(
        cfg.out.join(CAPITAL_REPORT_FILE),
        &["quantity", "statistic", "value"],
        &report_rows(&mean, &point, &predictive, &stressed, reference_source),
    )?;
    io::write_values(cfg.out.join(EC_SAMPLES_FILE), &stressed.ec_samples)?;
    io::write_values(cfg.out.join(PREDICTIVE_LIMIT_FILE), &limit_losses)?;

    Ok(CapitalReport {
        posterior_mean: mean,
        point,
        predictive,
        stressed,
        reference_source,
        finite,
    })
}

fn reference_capital(params: &ModelParams, alpha: f64, floor_loss: bool) -> Result<f64> {
    let s = params.stressed(alpha)?;
    Ok(if floor_loss { s.floored().ec } else { s.ec })
}

fn distribution_rows(s: &StressedSummaries) -> Vec<Vec<String>> {
    let mut rows: Vec<Vec<String>> = [("PD", &s.pd), ("LGD", &s.lgd), ("EC", &s.ec)]
        .iter()
        .map(|(name, summary)| {
            let mut r = vec![name.to_string()];
            r.extend(io::summary_fields(summary).iter().map(|v| fmt_f64(*v)));
            r
        })
        .collect();
    let d = &s.delta_ec;
    let blank = String::new;
    rows.push(vec![
        "delta_EC_percent".into(),
        fmt_f64(d.mode),
        fmt_f64(d.mean),
        blank(),
        blank(),
        blank(),
        blank(),
        fmt_f64(d.q25),
        fmt_f64(d.q50),
        fmt_f64(d.q75),
    ]);
    rows
}

fn report_rows(
    mean: &ModelParams,
    point: &[CapitalRow],
    predictive: &[CapitalRow],
    s: &StressedSummaries,
    reference_source: &str,
) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    let mut push = |q: String, stat: &str, v: String| rows.push(vec![q, stat.to_string(), v]);
    for (name, v) in crate::model::PARAM_NAMES.iter().zip(mean.to_array()) {
        push(format!("posterior_mean_{name}"), "value", fmt_f64(v));
    }
    for r in point.iter().chain(predictive) {
        let q = format!("{}_J={}_q={}", r.estimator, r.j, r.q);
        push(q.clone(), "value", fmt_f64(r.estimate.value));
        push(q, "std_error", fmt_f64(r.estimate.std_error));
    }
    let stat_names = [
        "Mode", "Mean", "Stdev", "Skewness", "Kurtosis", "CV", "Q25", "Q50", "Q75",
    ];
    for (name, summary) in [("PD", &s.pd), ("LGD", &s.lgd), ("EC", &s.ec)] {
        for (stat, v) in stat_names.iter().zip(io::summary_fields(summary)) {
            push(name.to_string(), stat, fmt_f64(v));
        }
    }
    let d = &s.delta_ec;
    for (stat, v) in [
        ("Mode", d.mode),
        ("Mean", d.mean),
        ("Q25", d.q25),
        ("Q50", d.q50),
        ("Q75", d.q75),
    ] {
        push("delta_EC_percent".into(), stat, fmt_f64(v));
    }
    push("reference_EC".into(), "value", fmt_f64(s.reference_ec));
    push(
        "reference_EC".into(),
        "source",
        reference_source.to_string(),
    );
    rows
}
