//! Posterior summary statistics.

use crate::error::{Error, Result};
use crate::stats::{compensated_sum, sorted_quantile};

use super::sampler::PosteriorSamples;

/// Fewest draws a summary is computed from.
pub const MIN_SUMMARY_DRAWS: usize = 1000;
/// Histogram bins used for the mode.
pub const MODE_BINS: usize = 100;

/// Moments, mode and quartiles of one posterior quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorSummary {
    /// Midpoint of the tallest of 100 equal-width bins over the sample range.
    pub mode: f64,
    pub mean: f64,
    /// Standard deviation with `1/(N−1)` normalisation.
    pub stdev: f64,
    pub skewness: f64,
    /// Standardised fourth central moment (3 for a normal).
    pub kurtosis: f64,
    /// `stdev / mean`.
    pub cv: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub n: usize,
}

pub fn summarize_values(values: &[f64]) -> Result<PosteriorSummary> {
    let n = values.len();
    if n < MIN_SUMMARY_DRAWS {
        return Err(Error::InsufficientData(format!(
            "summaries need at least {MIN_SUMMARY_DRAWS} draws, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = compensated_sum(values.iter().copied()) / nf;
    let central = |k: i32| compensated_sum(values.iter().map(|v| (v - mean).powi(k))) / nf;
    let (m2, m3, m4) = (central(2), central(3), central(4));
    let stdev = (m2 * nf / (nf - 1.0)).sqrt();
    let (skewness, kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    } else {
        (f64::NAN, f64::NAN)
    };
    let cv = if stdev == 0.0 {
        0.0
    } else if mean != 0.0 {
        stdev / mean
    } else {
        f64::NAN
    };
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(PosteriorSummary {
        mode: histogram_mode(&sorted),
        mean,
        stdev,
        skewness,
        kurtosis,
        cv,
        q25: sorted_quantile(&sorted, 0.25),
        q50: sorted_quantile(&sorted, 0.5),
        q75: sorted_quantile(&sorted, 0.75),
        n,
    })
}

fn histogram_mode(sorted: &[f64]) -> f64 {
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if hi == lo {
        return lo;
    }
    let width = (hi - lo) / MODE_BINS as f64;
    let mut counts = [0usize; MODE_BINS];
    for v in sorted {
        let bin = (((v - lo) / width) as usize).min(MODE_BINS - 1);
        counts[bin] += 1;
    }
    let mut best = 0;
    for (i, c) in counts.iter().enumerate() {
        if *c > counts[best] {
            best = i;
        }
    }
    lo + (best as f64 + 0.5) * width
}

/// Summary of state component `k` across stored draws.
pub fn summarize(samples: &PosteriorSamples, k: usize) -> Result<PosteriorSummary> {
    if k >= samples.dim {
        return Err(Error::InvalidParameter {
            name: "component",
            value: k as f64,
            reason: "component index exceeds the state dimension",
        });
    }
    summarize_values(&samples.column(k))
}
