//! Small numerical helpers shared by the simulators and the summaries.

use crate::error::{Error, Result};
use crate::normal;

/// 1-indexed rank `⌈q·n⌉`, clamped to `[1, n]`.
///
/// Products that land within rounding noise of an integer are snapped to it,
/// so `q = 0.999, n = 1000` selects rank 999 rather than 1000.
pub fn order_statistic_rank(q: f64, n: usize) -> usize {
    let target = q * n as f64;
    let nearest = target.round();
    let rank = if (target - nearest).abs() <= 1e-9 * (n as f64).max(1.0) {
        nearest
    } else {
        target.ceil()
    };
    (rank as usize).clamp(1, n.max(1))
}

fn check_level(q: f64) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter {
            name: "q",
            value: q,
            reason: "quantile level must lie in (0, 1)",
        });
    }
    Ok(())
}

/// The `⌈q·n⌉`-th order statistic of `values` (no interpolation).
pub fn order_statistic_quantile(values: &[f64], q: f64) -> Result<f64> {
    check_level(q)?;
    if values.is_empty() {
        return Err(Error::InsufficientData(
            "quantile of an empty sample".into(),
        ));
    }
    let k = order_statistic_rank(q, values.len());
    let mut scratch = values.to_vec();
    let (_, v, _) = scratch.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*v)
}

/// Same as [`order_statistic_quantile`] for data already sorted ascending.
pub fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    sorted[order_statistic_rank(q, sorted.len()) - 1]
}

/// Distribution-free standard error of the `q`-quantile estimator.
///
/// Uses the order statistics bracketing a 95% binomial interval on the rank
/// and divides its half-width by 1.96.
pub fn quantile_standard_error(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n < 2 {
        return f64::NAN;
    }
    let z = 1.959_963_984_540_054;
    let half = z * (n as f64 * q * (1.0 - q)).sqrt();
    let centre = q * n as f64;
    let lo = ((centre - half).floor() as isize).clamp(1, n as isize) as usize;
    let hi = ((centre + half).ceil() as isize).clamp(1, n as isize) as usize;
    (sorted[hi - 1] - sorted[lo - 1]) / (2.0 * z)
}

/// Numerically stable `ln Σ exp(xᵢ)`.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance with `1/(n−1)` normalisation.
pub fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() as f64 - 1.0)
}

/// Standard error of the mean from non-overlapping batch means.
pub fn batch_means_standard_error(values: &[f64], batches: usize) -> f64 {
    let size = values.len() / batches;
    if size == 0 || batches < 2 {
        return f64::NAN;
    }
    let means: Vec<f64> = values.chunks_exact(size).take(batches).map(mean).collect();
    (sample_variance(&means) / batches as f64).sqrt()
}

/// Kolmogorov–Smirnov distance between an empirical sample and a
/// reference CDF.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// `Φ((b − m)/s) − Φ((a − m)/s)` computed on the side of the distribution
/// that avoids cancellation.
pub fn normal_interval_mass(lower: f64, upper: f64, mean: f64, sd: f64) -> f64 {
    let a = (lower - mean) / sd;
    let b = (upper - mean) / sd;
    if a > 0.0 {
        normal::sf(a) - normal::sf(b)
    } else {
        normal::cdf(b) - normal::cdf(a)
    }
}
