//! Production forecast accuracy: seven-day velocity, MAE, wMAPE, and the
//! coefficient of variation used to compare metric dispersion.

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Days in a velocity window.
pub const VELOCITY_WINDOW_DAYS: usize = 7;

/// Weight added to the actual velocity in the wMAPE denominator, in units/day.
pub const WMAPE_WEIGHT: f64 = 1.0;

/// Predicted and realised velocity (units/day) for one SKU-location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityPair {
    pub unit_id: String,
    pub predicted: f64,
    pub actual: f64,
}

impl VelocityPair {
    pub fn new(unit_id: impl Into<String>, predicted: f64, actual: f64) -> Result<Self> {
        for v in [predicted, actual] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidObservation(v));
            }
        }
        Ok(Self {
            unit_id: unit_id.into(),
            predicted,
            actual,
        })
    }

    fn abs_error(&self) -> f64 {
        (self.predicted - self.actual).abs()
    }
}

/// Accuracy of one forecast date's predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceMetrics {
    pub forecast_date: NaiveDate,
    pub mae: f64,
    pub wmape: f64,
    pub n: u64,
    pub computed_at: DateTime<Utc>,
}

impl PerformanceMetrics {
    pub fn compute(
        forecast_date: NaiveDate,
        pairs: &[VelocityPair],
        computed_at: DateTime<Utc>,
    ) -> Result<Self> {
        Ok(Self {
            forecast_date,
            mae: mae(pairs)?,
            wmape: wmape(pairs)?,
            n: pairs.len() as u64,
            computed_at,
        })
    }
}

/// Mean daily sales over a seven-day window; missing days must be passed as 0.
pub fn actual_velocity(daily_sales: &[f64]) -> Result<f64> {
    if daily_sales.len() != VELOCITY_WINDOW_DAYS {
        return Err(Error::InvalidWindow {
            expected: VELOCITY_WINDOW_DAYS,
            got: daily_sales.len(),
        });
    }
    if let Some(&bad) = daily_sales.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidObservation(bad));
    }
    Ok(daily_sales.iter().sum::<f64>() / VELOCITY_WINDOW_DAYS as f64)
}

/// Mean absolute error.
pub fn mae(pairs: &[VelocityPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(pairs.iter().map(VelocityPair::abs_error).sum::<f64>() / pairs.len() as f64)
}

/// Weighted MAPE in percent: `mean(|pred - actual| / (actual + 1)) * 100`.
/// Stays finite when actual velocity is zero.
pub fn wmape(pairs: &[VelocityPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sum: f64 = pairs
        .iter()
        .map(|p| p.abs_error() / (p.actual + WMAPE_WEIGHT))
        .sum();
    Ok(sum / pairs.len() as f64 * 100.0)
}

/// Sample standard deviation (n - 1 denominator) over the sample mean.
pub fn coefficient_of_variation(xs: &[f64]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::InsufficientData);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(Error::UndefinedRatio("sample mean is zero".into()));
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(var.sqrt() / mean)
}
