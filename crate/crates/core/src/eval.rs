//! Forecast accuracy metrics, the Mincer–Zarnowitz unbiasedness test and the
//! Durbin–Watson statistic.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    pub mae: f64,
    /// Mean absolute percentage error, in percent.
    pub mape: f64,
    pub r2: f64,
    pub qlike: f64,
    pub n_test: usize,
}

fn check_lengths(a: &[f64], b: &[f64], min: usize) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < min {
        return Err(Error::TooFewObservations {
            needed: min,
            have: a.len(),
        });
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Coefficient of determination of `fitted` against `target` around the
/// target mean. A zero-variance target scores 1 when it is matched exactly and
/// 0 otherwise.
pub fn r_squared(target: &[f64], fitted: &[f64]) -> f64 {
    let m = mean(target);
    let ss_tot: f64 = target.iter().map(|y| (y - m).powi(2)).sum();
    let ss_res: f64 = target.iter().zip(fitted).map(|(y, f)| (y - f).powi(2)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}

/// MSE, MAE, MAPE, R² (around the mean of `actual`) and QLIKE.
pub fn compute_metrics(actual: &[f64], forecast: &[f64]) -> Result<MetricsReport> {
    check_lengths(actual, forecast, 2)?;
    if actual.iter().chain(forecast).any(|&v| !(v > 0.0)) {
        return Err(Error::NonPositiveActual);
    }
    let n = actual.len() as f64;
    let mut mse = 0.0;
    let mut mae = 0.0;
    let mut mape = 0.0;
    let mut qlike = 0.0;
    for (&v, &f) in actual.iter().zip(forecast) {
        let e = v - f;
        mse += e * e;
        mae += e.abs();
        mape += (e / v).abs();
        let ratio = v / f;
        qlike += ratio - ratio.ln() - 1.0;
    }
    Ok(MetricsReport {
        mse: mse / n,
        mae: mae / n,
        mape: 100.0 * mape / n,
        r2: r_squared(actual, forecast),
        // x - ln x - 1 >= 0; clamp rounding noise around zero
        qlike: (qlike / n).max(0.0),
        n_test: actual.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MzResult {
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub f_statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Regresses `actual` on `(1, forecast)` and tests `(α, β) = (0, 1)` with the
/// nested residual-sum-of-squares F statistic on (2, n − 2) degrees of freedom.
pub fn mincer_zarnowitz(actual: &[f64], forecast: &[f64]) -> Result<MzResult> {
    check_lengths(actual, forecast, 10)?;
    let n = actual.len();
    let (ma, mf) = (mean(actual), mean(forecast));
    let sff: f64 = forecast.iter().map(|f| (f - mf).powi(2)).sum();
    if sff <= 1e-24 * forecast.iter().map(|f| f * f).sum::<f64>() || sff == 0.0 {
        return Err(Error::DegenerateForecast);
    }
    let sfa: f64 = forecast.iter().zip(actual).map(|(f, a)| (f - mf) * (a - ma)).sum();
    let beta = sfa / sff;
    let alpha = ma - beta * mf;
    let rss_u: f64 = actual
        .iter()
        .zip(forecast)
        .map(|(a, f)| (a - alpha - beta * f).powi(2))
        .sum();
    let rss_r: f64 = actual.iter().zip(forecast).map(|(a, f)| (a - f).powi(2)).sum();
    let ss_tot: f64 = actual.iter().map(|a| (a - ma).powi(2)).sum();
    if rss_u <= 1e-20 * ss_tot || rss_u == 0.0 {
        return Err(Error::PerfectForecast);
    }
    let df = (n - 2) as f64;
    let f_statistic = (((rss_r - rss_u) / 2.0) / (rss_u / df)).max(0.0);
    Ok(MzResult {
        alpha_hat: alpha,
        beta_hat: beta,
        f_statistic,
        p_value: (1.0 - f_cdf(f_statistic, 2, n - 2)).clamp(0.0, 1.0),
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DwResult {
    pub statistic: f64,
}

pub fn durbin_watson(residuals: &[f64]) -> Result<DwResult> {
    if residuals.len() < 2 {
        return Err(Error::TooFewObservations {
            needed: 2,
            have: residuals.len(),
        });
    }
    let den: f64 = residuals.iter().map(|e| e * e).sum();
    if den == 0.0 {
        return Err(Error::ZeroResiduals);
    }
    let num: f64 = residuals.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok(DwResult { statistic: num / den })
}

/// CDF of the F(d1, d2) distribution at `x`, through the regularized
/// incomplete beta function.
pub fn f_cdf(x: f64, d1: usize, d2: usize) -> f64 {
    if !(x > 0.0) {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let (a, b) = (d1 as f64, d2 as f64);
    let z = a * x / (a * x + b);
    beta_reg(a / 2.0, b / 2.0, z).clamp(0.0, 1.0)
}
