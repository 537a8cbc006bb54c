//! Acceptance checks. Each criterion prints one `[PASS]` or `[FAIL]` line
//! with the measured values and the pinned tolerance; the process exits
//! non-zero when any criterion fails.
//!
//! Run a subset with `cargo test -p lgdcap --test acceptance -- C3 C8`.
//! Criterion C10 needs the original yearly data; point
//! `LGDCAP_ORIGINAL_DATA` at a CSV in the dataset schema to enable it.

use std::path::Path;
use std::time::{Duration, Instant};

use lgdcap::capital::{full_predictive_quantile, quantile_given_params, PortfolioModel};
use lgdcap::config::RunConfig;
use lgdcap::likelihood::{
    log_joint_density_period, log_likelihood_default_approx, log_likelihood_marginal, PeriodRecord,
    YearlyObservations,
};
use lgdcap::mcmc::{
    chain_rng, run_chain, run_sampler, ChainConfig, LgdPosterior, PosteriorSamples, PriorSpec,
    Target,
};
use lgdcap::mle::fit_default_closed_form;
use lgdcap::model::{stressed_factor, ModelParams, Portfolio, RecoveryLink};
use lgdcap::optimize::nelder_mead;
use lgdcap::rng::{derive_seed, substream};
use lgdcap::simulate::simulate_dataset;
use lgdcap::stats::{batch_means_standard_error, ks_distance, mean, order_statistic_quantile};
use lgdcap::{io, pipeline};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

const SEED: u64 = 20_240_601;

/// Parameters near the posterior means used for synthetic data.
fn synthetic_theta() -> ModelParams {
    ModelParams::new(0.0133, 0.0623, 0.456, 0.457, 0.032).unwrap()
}

enum Verdict {
    Pass,
    Fail,
    Skip,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
}

impl Outcome {
    fn check(pass: bool, detail: String) -> Self {
        Self {
            verdict: if pass { Verdict::Pass } else { Verdict::Fail },
            detail,
        }
    }
}

fn within_budget(elapsed: Duration, budget: Duration) -> bool {
    elapsed <= budget
}

// C1: stressed PD, LGD and EC at the published two-stage estimates.
fn c1_closed_form() -> Outcome {
    let theta = ModelParams::new(0.0123, 0.0406, 0.438, 0.0845, 0.0998).unwrap();
    let reps = 10_000u32;
    let start = Instant::now();
    let mut s = theta.stressed(0.999).unwrap();
    for _ in 1..reps {
        s = std::hint::black_box(&theta).stressed(0.999).unwrap();
    }
    let per_call = start.elapsed() / reps;
    let rel = |v: f64, r: f64| (v / r - 1.0).abs();
    let (e_pd, e_lgd, e_ec) = (rel(s.pd, 0.0476), rel(s.lgd, 0.644), rel(s.ec, 0.0307));
    let tol = 0.005;
    Outcome::check(
        e_pd <= tol && e_lgd <= tol && e_ec <= tol && per_call < Duration::from_millis(1),
        format!(
            "PD {:.6} (ref 0.0476, rel {:.4}) LGD {:.6} (ref 0.644, rel {:.4}) EC {:.6} (ref 0.0307, rel {:.4}); tol 0.005 rel; {:?}/call (budget 1ms)",
            s.pd, e_pd, s.lgd, e_lgd, s.ec, e_ec, per_call
        ),
    )
}

// C2: numeric maximisation of the approximate default likelihood against the
// closed form.
fn c2_mle_closed_form() -> Outcome {
    let start = Instant::now();
    let theta = synthetic_theta();
    let mut worst = (0.0f64, 0.0f64);
    let mut failures = 0;
    for i in 0..50u64 {
        let sim =
            simulate_dataset(&theta, &[5000; 18], derive_seed(SEED, &format!("c2/{i}"))).unwrap();
        let data = &sim.observations;
        let closed = fit_default_closed_form(data).unwrap();
        let f = |v: &[f64]| match log_likelihood_default_approx(v[0], v[1], data) {
            Ok(l) if l.is_finite() => -l,
            _ => f64::INFINITY,
        };
        let m = nelder_mead(f, &[0.05, 0.2], &[0.01, 0.05], 1e-13, 20_000);
        let (dp, dr) = ((m.x[0] - closed.p).abs(), (m.x[1] - closed.rho).abs());
        worst = (worst.0.max(dp), worst.1.max(dr));
        if dp > 1e-6 || dr > 1e-6 {
            failures += 1;
        }
    }
    let elapsed = start.elapsed();
    Outcome::check(
        failures == 0 && within_budget(elapsed, Duration::from_secs(30)),
        format!(
            "50 datasets T=18 J=5000: max |dp| {:.2e}, max |drho| {:.2e}, {failures} over tol 1e-6; {:.2?} (budget 30s)",
            worst.0, worst.1, elapsed
        ),
    )
}

/// Marginal CDF of a density tabulated on cell midpoints over (0, 1), taken
/// as uniform within each cell.
fn cell_cdf(masses: &[f64]) -> impl Fn(f64) -> f64 + '_ {
    let n = masses.len();
    let h = 1.0 / n as f64;
    let mut cum = vec![0.0; n + 1];
    for i in 0..n {
        cum[i + 1] = cum[i] + masses[i];
    }
    move |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let i = ((x / h) as usize).min(n - 1);
        cum[i] + masses[i] * (x / h - i as f64)
    }
}

// C3: (p, rho) sampler with every other component fixed, against a grid
// posterior.
fn c3_grid_posterior() -> Outcome {
    let start = Instant::now();
    let latent = [-1.2, 0.4, 1.5, -0.2, 0.9, -1.8];
    let generating = ModelParams::new(0.08, 0.25, 0.45, 0.25, 0.1).unwrap();
    let records: Vec<PeriodRecord> = latent
        .iter()
        .enumerate()
        .map(|(t, &x)| {
            let d = (60.0 * generating.conditional_default_prob(x))
                .round()
                .max(1.0) as u64;
            PeriodRecord {
                year: t as i32 + 1,
                obligors: 60,
                defaults: d,
                avg_recovery: Some(generating.conditional_recovery_mean(x)),
            }
        })
        .collect();
    let data = YearlyObservations::new(records).unwrap();
    let target = LgdPosterior::new(&data, PriorSpec::default());
    let fixed = |p: f64, rho: f64| {
        let mut s = vec![p, rho, generating.mu, generating.sigma, generating.omega];
        s.extend(latent);
        s
    };

    const GRID: usize = 200;
    let h = 1.0 / GRID as f64;
    let logd: Vec<f64> = (0..GRID * GRID)
        .into_par_iter()
        .map(|c| {
            let (i, j) = (c / GRID, c % GRID);
            target.log_density(&fixed((i as f64 + 0.5) * h, (j as f64 + 0.5) * h))
        })
        .collect();
    let top = logd.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logd.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut p_mass = vec![0.0; GRID];
    let mut rho_mass = vec![0.0; GRID];
    for i in 0..GRID {
        for j in 0..GRID {
            p_mass[i] += w[i * GRID + j] / total;
            rho_mass[j] += w[i * GRID + j] / total;
        }
    }

    let config = ChainConfig {
        burn_in: 5_000,
        samples: 100_000,
        tune_iters: 5_000,
        seed: SEED,
        initial_rw_sd: Some(vec![0.05, 0.1, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]),
        ..ChainConfig::default()
    };
    let mut rng = chain_rng(config.seed, 0);
    let samples = run_sampler(&target, fixed(0.3, 0.3), &[0, 1], &config, &mut rng).unwrap();
    let ks_p = ks_distance(&samples.column(0), cell_cdf(&p_mass));
    let ks_rho = ks_distance(&samples.column(1), cell_cdf(&rho_mass));
    let elapsed = start.elapsed();
    Outcome::check(
        ks_p < 0.05 && ks_rho < 0.05 && within_budget(elapsed, Duration::from_secs(120)),
        format!(
            "KS p {ks_p:.4}, KS rho {ks_rho:.4} (tol 0.05) over 100000 draws vs 200x200 grid; acceptance p {:.3} rho {:.3}; {:.2?} (budget 2min)",
            samples.acceptance_rates[0], samples.acceptance_rates[1], elapsed
        ),
    )
}

struct BoundedUniform;

impl Target for BoundedUniform {
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
        Some((0.0, 1.0))
    }
}

fn edge_bias(hastings_correction: bool) -> (f64, f64) {
    let config = ChainConfig {
        burn_in: 1_000,
        samples: 400_000,
        tune_iters: 0,
        seed: SEED,
        initial_rw_sd: Some(vec![0.5]),
        hastings_correction,
        ..ChainConfig::default()
    };
    let mut rng = chain_rng(config.seed, u64::from(hastings_correction));
    let s = run_sampler(&BoundedUniform, vec![0.5], &[0], &config, &mut rng).unwrap();
    let edge: Vec<f64> = s
        .column(0)
        .iter()
        .map(|&x| if !(0.1..=0.9).contains(&x) { 1.0 } else { 0.0 })
        .collect();
    (mean(&edge) - 0.2, batch_means_standard_error(&edge, 50))
}

// C4: the truncated-proposal normalisation ratio is needed for the right
// boundary mass.
fn c4_hastings_correction() -> Outcome {
    let (bias_off, se_off) = edge_bias(false);
    let (bias_on, se_on) = edge_bias(true);
    let (z_off, z_on) = (bias_off.abs() / se_off, bias_on.abs() / se_on);
    Outcome::check(
        z_off > 3.0 && z_on < 2.0,
        format!(
            "edge mass bias without ratio {bias_off:+.4} ({z_off:.1} SE, need > 3), with ratio {bias_on:+.4} ({z_on:.2} SE, need < 2)"
        ),
    )
}

// C5: coverage of central 95% credible intervals on synthetic data.
fn c5_coverage() -> Outcome {
    let start = Instant::now();
    let theta = synthetic_theta();
    let truth = theta.to_array();
    let hits: Vec<[bool; 5]> = (0..20u64)
        .into_par_iter()
        .map(|i| {
            let sim = simulate_dataset(&theta, &[5350; 18], derive_seed(SEED, &format!("c5/{i}")))
                .unwrap();
            let config = ChainConfig {
                burn_in: 5_000,
                samples: 20_000,
                tune_iters: 5_000,
                seed: derive_seed(SEED, &format!("c5-chain/{i}")),
                ..ChainConfig::default()
            };
            let samples = run_chain(&sim.observations, &PriorSpec::default(), &config).unwrap();
            std::array::from_fn(|k| {
                let col = samples.column(k);
                let lo = order_statistic_quantile(&col, 0.025).unwrap();
                let hi = order_statistic_quantile(&col, 0.975).unwrap();
                lo <= truth[k] && truth[k] <= hi
            })
        })
        .collect();
    let counts: Vec<usize> = (0..5)
        .map(|k| hits.iter().filter(|h| h[k]).count())
        .collect();
    let elapsed = start.elapsed();
    Outcome::check(
        counts.iter().all(|&c| c >= 17) && within_budget(elapsed, Duration::from_secs(1800)),
        format!(
            "95% interval hits out of 20 (need >= 17 each): p {} rho {} mu {} sigma {} omega {}; {:.2?} (budget 30min)",
            counts[0], counts[1], counts[2], counts[3], counts[4], elapsed
        ),
    )
}

// C6: Monte Carlo quantile of a large portfolio against the limit formula.
fn c6_limit_quantile() -> Outcome {
    let start = Instant::now();
    let mut rng = substream(derive_seed(SEED, "c6"), 0);
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    for i in 0..3u64 {
        let theta = ModelParams::new(
            rng.random_range(0.005..0.05),
            rng.random_range(0.02..0.3),
            rng.random_range(0.3..0.6),
            rng.random_range(0.05..0.3),
            rng.random_range(0.0..0.5),
        )
        .unwrap();
        let pf = Portfolio::equal(100_000, RecoveryLink::Identity, false).unwrap();
        let mc = quantile_given_params(
            &theta,
            &pf,
            0.999,
            1_000_000,
            derive_seed(SEED, &format!("c6/{i}")),
        )
        .unwrap();
        let exact = theta.analytic_limit_quantile(0.999).unwrap();
        let rel = (mc.value / exact - 1.0).abs();
        worst = worst.max(rel);
        lines.push(format!("{:.5} vs {:.5} (rel {:.4})", mc.value, exact, rel));
    }
    let elapsed = start.elapsed();
    Outcome::check(
        worst <= 0.01 && within_budget(elapsed, Duration::from_secs(120)),
        format!(
            "J=1e5 n=1e6 q=0.999: {}; tol 0.01 rel; {:.2?} (budget 2min)",
            lines.join(", "),
            elapsed
        ),
    )
}

// C7: diversification ordering of the full predictive quantile.
fn c7_diversification() -> Outcome {
    let theta = synthetic_theta();
    let sim = simulate_dataset(&theta, &[5350; 18], derive_seed(SEED, "c7")).unwrap();
    let config = ChainConfig {
        seed: derive_seed(SEED, "c7-chain"),
        ..ChainConfig::default()
    };
    let samples = run_chain(&sim.observations, &PriorSpec::default(), &config).unwrap();
    let draws = samples.all_params();
    let seed = derive_seed(SEED, "c7-predictive");
    let models = [
        (
            "50",
            PortfolioModel::Granular(Portfolio::equal(50, RecoveryLink::Identity, false).unwrap()),
        ),
        (
            "500",
            PortfolioModel::Granular(Portfolio::equal(500, RecoveryLink::Identity, false).unwrap()),
        ),
        (
            "5350",
            PortfolioModel::Granular(
                Portfolio::equal(5350, RecoveryLink::Identity, false).unwrap(),
            ),
        ),
        ("inf", PortfolioModel::Limiting { floor_loss: false }),
    ];
    let q: Vec<_> = models
        .iter()
        .map(|(_, m)| full_predictive_quantile(&draws, m, 0.999, 1_000_000, seed).unwrap())
        .collect();
    let monotone = q
        .windows(2)
        .all(|w| w[1].value <= w[0].value + 2.0 * w[0].std_error.hypot(w[1].std_error));
    let strict = q[1].value > q[3].value;
    Outcome::check(
        monotone && strict,
        format!(
            "Q^P_0.999 {}; non-increasing within 2 SE: {monotone}; J=500 > J=inf: {strict}",
            models
                .iter()
                .zip(&q)
                .map(|((l, _), e)| format!("J={l} {:.5}(se {:.5})", e.value, e.std_error))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    )
}

// C8: quadrature marginal likelihood against Monte Carlo integration of the
// augmented likelihood.
fn c8_marginal_vs_monte_carlo() -> Outcome {
    let theta = ModelParams::new(0.05, 0.05, 0.45, 0.3, 0.05).unwrap();
    let data = YearlyObservations::new(vec![
        PeriodRecord {
            year: 1,
            obligors: 40,
            defaults: 2,
            avg_recovery: Some(0.41),
        },
        PeriodRecord {
            year: 2,
            obligors: 40,
            defaults: 3,
            avg_recovery: Some(0.50),
        },
    ])
    .unwrap();
    let quad = log_likelihood_marginal(&theta, &data, 64).unwrap().value;
    let (chunks, per_chunk) = (100u64, 100_000usize);
    let seed = derive_seed(SEED, "c8");
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, c);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..per_chunk {
                let l: f64 = data
                    .records()
                    .iter()
                    .map(|r| {
                        let x: f64 = rng.sample(StandardNormal);
                        log_joint_density_period(&theta, x, r).unwrap()
                    })
                    .sum();
                let v = (l - quad).exp();
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .collect();
    let n = (chunks as usize * per_chunk) as f64;
    let (s, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let ratio = s / n;
    let se = ((s2 / n - ratio * ratio) / n).sqrt();
    let rel = (ratio - 1.0).abs();
    Outcome::check(
        rel < 1e-3,
        format!(
            "log L quadrature {quad:.10}, Monte Carlo/quadrature ratio {ratio:.6} (se {se:.1e}) over 1e7 draws; rel diff {rel:.2e} (tol 1e-3)"
        ),
    )
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn pipeline_run(threads: usize) -> Vec<(String, Vec<u8>)> {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.out = dir.path().to_path_buf();
    cfg.seed = SEED;
    for (k, v) in [
        ("tune_iters", "1000"),
        ("burn_in", "1000"),
        ("samples", "5000"),
        ("n_draws", "200000"),
        ("finite_draws", "4"),
        ("inner_draws", "50000"),
    ] {
        cfg.set(k, v).unwrap();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(|| {
            pipeline::run_simulate(&cfg).unwrap();
            cfg.data = Some(dir.path().join(pipeline::DATASET_FILE));
            pipeline::run_fit_mle(&cfg).unwrap();
            pipeline::run_fit_mcmc(&cfg).unwrap();
            pipeline::run_capital(&cfg, &cfg.chain_path()).unwrap();
            pipeline::run_summarize(&cfg).unwrap();
        });
    snapshot(dir.path())
}

// C9: every stage reproduces bit for bit under a fixed seed, for any thread
// count.
fn c9_determinism() -> Outcome {
    let one = pipeline_run(1);
    let four = pipeline_run(4);
    let again = pipeline_run(1);
    let differing: Vec<&str> = one
        .iter()
        .zip(&four)
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.as_str())
        .collect();
    Outcome::check(
        one == four && one == again && !one.is_empty(),
        format!(
            "{} output files from simulate, fit-mle, fit-mcmc, capital and summarize compared byte for byte across 1/4/1 threads; differing: {:?}",
            one.len(),
            differing
        ),
    )
}

// C10: original-data reproduction of the posterior means and predictive
// quantiles.
fn c10_original_data() -> Outcome {
    let Ok(path) = std::env::var("LGDCAP_ORIGINAL_DATA") else {
        return Outcome {
            verdict: Verdict::Skip,
            detail: "original 18-year dataset not supplied (set LGDCAP_ORIGINAL_DATA)".into(),
        };
    };
    let data = match io::load_dataset(&path) {
        Ok(d) => d,
        Err(e) => return Outcome::check(false, format!("cannot load {path}: {e}")),
    };
    let config = ChainConfig {
        seed: SEED,
        ..ChainConfig::default()
    };
    let samples: PosteriorSamples = run_chain(&data, &PriorSpec::default(), &config).unwrap();
    // posterior mean and standard deviation of p, rho, mu, sigma, omega
    let published = [
        (0.0133, 0.0022),
        (0.0623, 0.0239),
        (0.456, 0.027),
        (0.457, 0.085),
        (0.032, 0.023),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, (m, sd)) in published.iter().enumerate() {
        let est = mean(&samples.column(k));
        let good = (est - m).abs() <= 2.0 * sd;
        ok &= good;
        parts.push(format!("{est:.4} vs {m}"));
    }
    let draws = samples.all_params();
    let seed = derive_seed(SEED, "c10-predictive");
    for (j, reference) in [
        (Some(50), 0.1044),
        (Some(500), 0.0732),
        (Some(5350), 0.0674),
        (None, 0.0666),
    ] {
        let model = match j {
            Some(j) => PortfolioModel::Granular(
                Portfolio::equal(j, RecoveryLink::Identity, false).unwrap(),
            ),
            None => PortfolioModel::Limiting { floor_loss: false },
        };
        let q = full_predictive_quantile(&draws, &model, 0.999, 1_000_000, seed).unwrap();
        let good = (q.value / reference - 1.0).abs() <= 0.03;
        ok &= good;
        parts.push(format!(
            "Q^P(J={}) {:.4} vs {reference}",
            model.label(),
            q.value
        ));
    }
    Outcome::check(
        ok,
        format!(
            "{} (means within 2 posterior sd; quantiles within 3% rel)",
            parts.join(", ")
        ),
    )
}

fn main() {
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let criteria: [(&str, &str, fn() -> Outcome); 10] = [
        (
            "C1",
            "stressed PD/LGD/EC at the published estimates",
            c1_closed_form,
        ),
        (
            "C2",
            "closed-form default MLE equals numeric argmax",
            c2_mle_closed_form,
        ),
        (
            "C3",
            "(p, rho) sampler matches grid posterior",
            c3_grid_posterior,
        ),
        (
            "C4",
            "truncated-proposal Hastings ratio removes boundary bias",
            c4_hastings_correction,
        ),
        (
            "C5",
            "credible-interval coverage on synthetic data",
            c5_coverage,
        ),
        (
            "C6",
            "Monte Carlo quantile matches limiting-portfolio formula",
            c6_limit_quantile,
        ),
        (
            "C7",
            "full predictive quantile decreases with portfolio size",
            c7_diversification,
        ),
        (
            "C8",
            "quadrature marginal likelihood matches Monte Carlo",
            c8_marginal_vs_monte_carlo,
        ),
        (
            "C9",
            "bit-identical stages across thread counts",
            c9_determinism,
        ),
        (
            "C10",
            "original-data posterior means and predictive quantiles",
            c10_original_data,
        ),
    ];
    // keeps the stressed-factor constant in the report for reference
    let x = stressed_factor(0.999).unwrap();
    println!("acceptance: stressed factor {x:.12}, seed {SEED}");
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| f == id) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let tag = match outcome.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => {
                failed += 1;
                "FAIL"
            }
            Verdict::Skip => "SKIP",
        };
        println!(
            "[{tag}] {id} {name}: {} [{:.2?}]",
            outcome.detail,
            start.elapsed()
        );
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        std::process::exit(1);
    }
    println!("acceptance: all evaluated criteria passed");
}
