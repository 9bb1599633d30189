//! Small statistics toolkit for the Monte Carlo estimators.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seeding::stream;

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Standard error of the mean (sample standard deviation over `√n`).
pub fn standard_error(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

pub fn median(v: &[f64]) -> f64 {
    quantile_sorted(&sorted(v), 0.5)
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(s: &[f64], q: f64) -> f64 {
    if s.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (pos - lo as f64) * (s[hi] - s[lo])
}

/// Mean after discarding `fraction` of the data at each end.
pub fn trimmed_mean(v: &[f64], fraction: f64) -> f64 {
    let s = sorted(v);
    let k = (fraction * s.len() as f64).floor() as usize;
    if 2 * k >= s.len() {
        return median(v);
    }
    mean(&s[k..s.len() - k])
}

/// Percentile bootstrap interval of `statistic` over resamples of `n` items.
///
/// `statistic` receives the resampled indices.
pub fn bootstrap_interval<F>(n: usize, resamples: usize, level: f64, seed: u64, mut statistic: F) -> (f64, f64)
where
    F: FnMut(&[usize]) -> f64,
{
    let mut rng = stream(seed, 0xB007);
    let mut idx = vec![0usize; n];
    let mut stats = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        for i in idx.iter_mut() {
            *i = rng.random_range(0..n);
        }
        let s = statistic(&idx);
        if s.is_finite() {
            stats.push(s);
        }
    }
    stats.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    (quantile_sorted(&stats, alpha), quantile_sorted(&stats, 1.0 - alpha))
}

/// Bootstrap interval for the mean of `v`.
pub fn bootstrap_mean_ci(v: &[f64], resamples: usize, level: f64, seed: u64) -> (f64, f64) {
    bootstrap_interval(v.len(), resamples, level, seed, |idx| {
        idx.iter().map(|&i| v[i]).sum::<f64>() / idx.len() as f64
    })
}

/// Wilson score interval for a binomial proportion at ~95% (`z = 1.96`).
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// One-sample Kolmogorov–Smirnov test: returns `(D, p-value)` using the
/// asymptotic Kolmogorov distribution with the Stephens correction.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> (f64, f64) {
    let s = sorted(samples);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sq = n.sqrt();
    (d, kolmogorov_q((sq + 0.12 + 0.11 / sq) * d))
}

fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Ordinary least-squares line `y = intercept + slope · x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination; 0 when `y` has no spread.
    pub r2: f64,
    /// Standard error of the slope (NaN for fewer than 3 points).
    pub slope_se: f64,
    pub n: usize,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let scale = y.iter().map(|b| b.abs()).fold(0.0, f64::max).max(1.0);
    let r2 = if ss_tot <= (1e-14 * scale).powi(2) * n as f64 {
        0.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    let slope_se = if n > 2 {
        (ss_res / (n - 2) as f64 / sxx).sqrt()
    } else {
        f64::NAN
    };
    Some(LineFit {
        slope,
        intercept,
        r2,
        slope_se,
        n,
    })
}
