//! Distribution-drift metrics between two approximate CDFs: the two-sample
//! Kolmogorov-Smirnov distance with its asymptotic p-value, and the
//! Bhattacharyya coefficient over binned densities.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::cdf::{ApproxCdf, BinnedDensity};
use crate::error::{Error, Result};

/// Default number of histogram bins for the Bhattacharyya coefficient.
pub const DEFAULT_BINS: usize = 100;

const SERIES_TOLERANCE: f64 = 1e-12;
const SERIES_MAX_TERMS: u32 = 200;
const LAMBDA_FLOOR: f64 = 1e-8;
/// Below this the theta-function form of Q_KS converges faster.
const THETA_CROSSOVER: f64 = 1.0;

/// One drift evaluation of a single monitored quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftMetrics {
    pub quantity_label: String,
    pub d_ks: f64,
    pub p_value: f64,
    pub bc: f64,
    pub n_baseline: u64,
    pub n_current: u64,
    pub eval_date: NaiveDate,
}

/// Largest absolute difference between two summaries' CDFs over all reals.
///
/// Both CDFs are linear between breakpoints, so the difference is linear on
/// every interval of the merged breakpoint set and its extremes sit at those
/// points. Jumps are covered by also comparing left limits.
pub fn ks_distance(f1: &ApproxCdf, f2: &ApproxCdf) -> f64 {
    let mut grid: Vec<f64> = f1
        .breakpoints()
        .iter()
        .chain(f2.breakpoints())
        .copied()
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid.iter()
        .map(|&x| {
            let at = (f1.eval_unchecked(x) - f2.eval_unchecked(x)).abs();
            let left = (f1.eval_left(x) - f2.eval_left(x)).abs();
            at.max(left)
        })
        .fold(0.0, f64::max)
        .min(1.0)
}

/// Kolmogorov tail probability `Q(lambda) = 2 sum (-1)^(k-1) exp(-2 k^2 lambda^2)`.
pub fn q_ks(lambda: f64) -> f64 {
    if lambda <= LAMBDA_FLOOR {
        return 1.0;
    }
    let q = if lambda < THETA_CROSSOVER {
        // Jacobi theta identity: 1 - sqrt(2 pi)/lambda * sum exp(-(2k-1)^2 pi^2 / (8 lambda^2)).
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut sum = 0.0;
        for k in 1..=SERIES_MAX_TERMS {
            let odd = f64::from(2 * k - 1);
            let term = (-odd * odd * c).exp();
            sum += term;
            if term < SERIES_TOLERANCE {
                break;
            }
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * sum
    } else {
        let mut sum = 0.0;
        let mut sign = 2.0;
        for k in 1..=SERIES_MAX_TERMS {
            let kf = f64::from(k);
            let term = sign * (-2.0 * kf * kf * lambda * lambda).exp();
            sum += term;
            if term.abs() < SERIES_TOLERANCE {
                break;
            }
            sign = -sign;
        }
        sum
    };
    q.clamp(0.0, 1.0)
}

/// Asymptotic p-value of a two-sample KS distance `d` for sizes `n`, `m`.
pub fn ks_p_value(d: f64, n: u64, m: u64) -> f64 {
    let (n, m) = (n as f64, m as f64);
    let lambda = (n * m / (n + m)).sqrt() * d;
    q_ks(lambda)
}

/// Distance at which the p-value equals `alpha`, by bisection on `[0, 1]`.
///
/// If even `d = 1` is not significant at `alpha` (tiny samples), returns 1.
pub fn ks_critical_distance(alpha: f64, n: u64, m: u64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameter("sample sizes must be positive".into()));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    if ks_p_value(hi, n, m) > alpha {
        return Ok(1.0);
    }
    // Run to float resolution rather than stopping at 1e-9: for n, m ~ 1e7 the
    // p-value changes by ~1e-6 per 1e-9 of distance.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ks_p_value(mid, n, m) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Common binning range for two summaries; a zero-width range is widened by 0.5 each way.
fn common_range(f1: &ApproxCdf, f2: &ApproxCdf) -> (f64, f64) {
    let lo = f1.min().min(f2.min());
    let hi = f1.max().max(f2.max());
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Bhattacharyya coefficient of the two summaries' binned densities.
pub fn bhattacharyya(f1: &ApproxCdf, f2: &ApproxCdf, bins: usize) -> Result<f64> {
    let (lo, hi) = common_range(f1, f2);
    let p = BinnedDensity::from_cdf(f1, lo, hi, bins)?;
    let q = BinnedDensity::from_cdf(f2, lo, hi, bins)?;
    Ok(bhattacharyya_masses(p.masses(), q.masses()))
}

/// `sum sqrt(p_k q_k)` over matching bins, clamped to `[0, 1]`.
pub fn bhattacharyya_masses(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(a, b)| (a * b).sqrt())
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// Compare a production summary against its training-time baseline.
pub fn drift_evaluate(
    baseline: &ApproxCdf,
    current: &ApproxCdf,
    eval_date: NaiveDate,
    bins: usize,
) -> Result<DriftMetrics> {
    if baseline.label() != current.label() {
        return Err(Error::Config(format!(
            "cannot compare `{}` against baseline `{}`",
            current.label(),
            baseline.label()
        )));
    }
    let d_ks = ks_distance(baseline, current);
    Ok(DriftMetrics {
        quantity_label: baseline.label().to_string(),
        d_ks,
        p_value: ks_p_value(d_ks, baseline.sample_count(), current.sample_count()),
        bc: bhattacharyya(baseline, current, bins)?,
        n_baseline: baseline.sample_count(),
        n_current: current.sample_count(),
        eval_date,
    })
}
