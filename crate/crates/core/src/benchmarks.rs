//! Classical baselines: persistence, HAR regressions and ARMA/ARIMA fitted by
//! conditional sum of squares with AIC order selection and KPSS differencing.

use std::ops::Range;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, AVERAGE_WINDOWS};
use crate::error::{Error, Result};
use crate::linalg;
use crate::par;
use crate::train::{lbfgs_minimize, LbfgsConfig, Termination};

/// Persistence forecast `V̂_t = V_{t-1}` for every `t` in `range`.
pub fn forward_fill_forecast(series: &[f64], range: Range<usize>) -> Result<Vec<f64>> {
    check_range(series, &range, 1)?;
    Ok(range.map(|t| series[t - 1]).collect())
}

fn check_range(series: &[f64], range: &Range<usize>, context: usize) -> Result<()> {
    if range.end > series.len() || range.start > range.end {
        return Err(Error::InvalidSplit(format!(
            "forecast range {}..{} outside series of length {}",
            range.start,
            range.end,
            series.len()
        )));
    }
    if range.start < context {
        return Err(Error::InsufficientContext(context));
    }
    Ok(())
}

/// `V_t = c + β1 V_{t-1} + β2 V_w + β3 V_m + β4 V_q`, with `β4 = 0` for the
/// three-regressor variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarModel {
    pub c: f64,
    pub beta: [f64; 4],
    pub quarterly: bool,
}

impl HarModel {
    pub fn name(&self) -> &'static str {
        if self.quarterly {
            "HAR(4)"
        } else {
            "HAR(3)"
        }
    }

    pub fn param_count(&self) -> usize {
        if self.quarterly {
            5
        } else {
            4
        }
    }

    /// Prediction from a `(V_{t-1}, V_w, V_m, V_q)` row.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.c + self.beta.iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }

    fn lookback(&self) -> usize {
        if self.quarterly {
            AVERAGE_WINDOWS[2]
        } else {
            AVERAGE_WINDOWS[1]
        }
    }
}

/// Ordinary least squares on rows `(V_{t-1}, V_w, V_m, V_q)`.
pub fn fit_har(fm: &FeatureMatrix, include_quarterly: bool) -> Result<HarModel> {
    if fm.len() < 5 {
        return Err(Error::TooFewObservations {
            needed: 5,
            have: fm.len(),
        });
    }
    if let Some(r) = fm.rows.iter().find(|r| r.len() != 4) {
        return Err(Error::ShapeMismatch {
            expected: 4,
            got: r.len(),
        });
    }
    let k = if include_quarterly { 4 } else { 3 };
    let rows: Vec<Vec<f64>> = fm.rows.iter().map(|r| r[..k].to_vec()).collect();
    let b = linalg::ols_qr(&linalg::design(&rows, true), &fm.targets)?;
    let mut beta = [0.0; 4];
    beta[..k].copy_from_slice(&b[1..]);
    Ok(HarModel {
        c: b[0],
        beta,
        quarterly: include_quarterly,
    })
}

/// ARIMA orders; `p, q ≤ 5`, `d ≤ 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaOrder {
    pub fn new(p: usize, d: usize, q: usize) -> Result<Self> {
        if p > 5 || q > 5 || d > 2 {
            return Err(Error::Config(format!("order ({p},{d},{q}) outside p,q <= 5, d <= 2")));
        }
        Ok(Self { p, d, q })
    }

    pub fn name(&self) -> String {
        if self.d == 0 {
            format!("ARMA({}, {})", self.p, self.q)
        } else {
            format!("ARIMA({}, {}, {})", self.p, self.d, self.q)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaModel {
    pub order: ArimaOrder,
    /// Mean of the (differenced) series; zero when `d > 0`.
    pub intercept: f64,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub sigma2: f64,
    pub loglik: f64,
    pub aic: f64,
    pub n_obs: usize,
}

impl ArimaModel {
    /// AR and MA coefficients, the mean when it is estimated, and the
    /// innovation variance.
    pub fn param_count(&self) -> usize {
        self.order.p + self.order.q + usize::from(self.order.d == 0) + 1
    }
}

/// `d`-th difference.
pub fn difference(x: &[f64], d: usize) -> Vec<f64> {
    let mut y = x.to_vec();
    for _ in 0..d {
        y = y.windows(2).map(|w| w[1] - w[0]).collect();
    }
    y
}

/// Maps partial autocorrelations in (−1, 1) to the coefficients of a
/// stationary autoregressive polynomial `1 − Σ a_k z^k`.
pub fn pacf_to_ar(r: &[f64]) -> Vec<f64> {
    let mut a: Vec<f64> = Vec::with_capacity(r.len());
    for (k, &rk) in r.iter().enumerate() {
        let prev = a.clone();
        for j in 0..k {
            a[j] = prev[j] - rk * prev[k - 1 - j];
        }
        a.push(rk);
    }
    a
}

/// Sample partial autocorrelations at lags `1..=p`.
fn sample_pacf(x: &[f64], p: usize) -> Vec<f64> {
    let n = x.len();
    let m = x.iter().sum::<f64>() / n as f64;
    let c0: f64 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
    let acf: Vec<f64> = (0..=p)
        .map(|k| (k..n).map(|t| (x[t] - m) * (x[t - k] - m)).sum::<f64>() / n as f64 / c0)
        .collect();
    // Durbin–Levinson on the sample autocorrelations
    let mut out = Vec::with_capacity(p);
    let mut phi: Vec<f64> = Vec::new();
    let mut v = 1.0;
    for k in 1..=p {
        let num = acf[k] - (0..phi.len()).map(|j| phi[j] * acf[k - 1 - j]).sum::<f64>();
        let rk = (num / v).clamp(-0.99, 0.99);
        let prev = phi.clone();
        for j in 0..phi.len() {
            phi[j] = prev[j] - rk * prev[phi.len() - 1 - j];
        }
        phi.push(rk);
        v *= 1.0 - rk * rk;
        out.push(rk);
    }
    out
}

struct Coefs {
    mu: f64,
    ar: Vec<f64>,
    ma: Vec<f64>,
}

/// Unconstrained vector `[μ?, u_1..u_p, v_1..v_q]` to model coefficients.
fn unpack(theta: &[f64], order: &ArimaOrder) -> Coefs {
    let has_mu = order.d == 0;
    let off = usize::from(has_mu);
    let u: Vec<f64> = theta[off..off + order.p].iter().map(|v| v.tanh()).collect();
    let v: Vec<f64> = theta[off + order.p..].iter().map(|v| v.tanh()).collect();
    Coefs {
        mu: if has_mu { theta[0] } else { 0.0 },
        ar: pacf_to_ar(&u),
        // invertible MA: 1 + Σθ z^j = 1 − Σ(−θ_j) z^j
        ma: pacf_to_ar(&v).into_iter().map(|a| -a).collect(),
    }
}

/// Conditional residuals with pre-sample innovations zero; residuals before
/// index `p` are not part of the objective.
fn css_residuals(y: &[f64], c: &Coefs) -> Vec<f64> {
    let p = c.ar.len();
    let mut e = vec![0.0; y.len()];
    for t in p..y.len() {
        let mut v = y[t] - c.mu;
        for (i, a) in c.ar.iter().enumerate() {
            v -= a * (y[t - 1 - i] - c.mu);
        }
        for (j, m) in c.ma.iter().enumerate() {
            if t > j {
                v -= m * e[t - 1 - j];
            }
        }
        e[t] = v;
    }
    e
}

/// Mean conditional sum of squares and its gradient with respect to
/// `(μ?, φ, θ)`.
fn css_and_gradient(y: &[f64], c: &Coefs, has_mu: bool) -> (f64, Vec<f64>) {
    let (p, q) = (c.ar.len(), c.ma.len());
    let off = usize::from(has_mu);
    let k = off + p + q;
    let n = y.len();
    let e = css_residuals(y, c);
    let mut de = vec![0.0; n * k];
    let mut s = 0.0;
    let mut g = vec![0.0; k];
    for t in p..n {
        let mut d = vec![0.0; k];
        if has_mu {
            d[0] = -1.0 + c.ar.iter().sum::<f64>();
        }
        for i in 0..p {
            d[off + i] = -(y[t - 1 - i] - c.mu);
        }
        for j in 0..q {
            if t > j {
                d[off + p + j] = -e[t - 1 - j];
            }
        }
        for (j, m) in c.ma.iter().enumerate() {
            if t > j {
                let prev = &de[(t - 1 - j) * k..(t - j) * k];
                for (dv, pv) in d.iter_mut().zip(prev) {
                    *dv -= m * pv;
                }
            }
        }
        s += e[t] * e[t];
        for (gv, dv) in g.iter_mut().zip(&d) {
            *gv += 2.0 * e[t] * dv;
        }
        de[t * k..(t + 1) * k].copy_from_slice(&d);
    }
    let m = (n - p) as f64;
    (s / m, g.into_iter().map(|v| v / m).collect())
}

/// Fits `order` to `series` (levels) by conditional sum of squares.
pub fn fit_arma(series: &[f64], order: ArimaOrder) -> Result<ArimaModel> {
    let y = difference(series, order.d);
    let (p, q) = (order.p, order.q);
    let needed = 10 * (p + q + 1) + 1;
    if y.len() < needed {
        return Err(Error::TooFewObservations { needed, have: y.len() });
    }
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if !(var > 0.0) {
        return Err(Error::SingularFit("series has zero variance".into()));
    }
    let sd = var.sqrt();
    let has_mu = order.d == 0;

    let (coefs, sigma2) = if p == 0 && q == 0 {
        // closed form: the mean (or zero) and the mean square around it
        let mu = if has_mu { mean } else { 0.0 };
        let s = y.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64;
        (
            Coefs {
                mu,
                ar: vec![],
                ma: vec![],
            },
            s,
        )
    } else {
        // work on a standardized copy so every coordinate is O(1)
        let shift = if has_mu { mean } else { 0.0 };
        let z: Vec<f64> = y.iter().map(|v| (v - shift) / sd).collect();
        let mut theta0 = Vec::with_capacity(usize::from(has_mu) + p + q);
        if has_mu {
            theta0.push(0.0);
        }
        theta0.extend(sample_pacf(&z, p).into_iter().map(f64::atanh));
        theta0.extend(std::iter::repeat_n(0.0, q));
        let off = usize::from(has_mu);
        let objective = |theta: &[f64]| -> Result<(f64, Vec<f64>)> {
            let c = unpack(theta, &order);
            let (f, g_coef) = css_and_gradient(&z, &c, has_mu);
            // chain rule through the transform (finite-difference Jacobian)
            let mut g = vec![0.0; theta.len()];
            if has_mu {
                g[0] = g_coef[0];
            }
            for i in off..theta.len() {
                let h = 1e-6;
                let mut tp = theta.to_vec();
                let mut tm = theta.to_vec();
                tp[i] += h;
                tm[i] -= h;
                let (cp, cm) = (unpack(&tp, &order), unpack(&tm, &order));
                let dp: Vec<f64> = cp.ar.iter().chain(&cp.ma).copied().collect();
                let dm: Vec<f64> = cm.ar.iter().chain(&cm.ma).copied().collect();
                g[i] = dp
                    .iter()
                    .zip(&dm)
                    .zip(&g_coef[off..])
                    .map(|((a, b), gc)| (a - b) / (2.0 * h) * gc)
                    .sum();
            }
            Ok((f, g))
        };
        let cfg = LbfgsConfig {
            max_iters: 500,
            grad_tol: 1e-9,
            ..LbfgsConfig::default()
        };
        let (theta, report) = lbfgs_minimize(objective, &theta0, &cfg)?;
        if !report.value.is_finite() {
            return Err(Error::NonConvergence(format!("{}: non-finite objective", order.name())));
        }
        if report.termination == Termination::MaxIterations {
            debug!("{} stopped at the iteration cap", order.name());
        }
        let c = unpack(&theta, &order);
        let coefs = Coefs {
            mu: shift + sd * c.mu,
            ar: c.ar,
            ma: c.ma,
        };
        let e = css_residuals(&y, &coefs);
        let s = e[p..].iter().map(|v| v * v).sum::<f64>() / (n - p) as f64;
        (coefs, s)
    };
    if !(sigma2 > 0.0) {
        return Err(Error::SingularFit(format!(
            "{}: zero innovation variance",
            order.name()
        )));
    }
    let m = (n - p) as f64;
    let loglik = -0.5 * m * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0);
    let k = (p + q + 2) as f64;
    Ok(ArimaModel {
        order,
        intercept: coefs.mu,
        ar: coefs.ar,
        ma: coefs.ma,
        sigma2,
        loglik,
        aic: 2.0 * k - 2.0 * loglik,
        n_obs: n,
    })
}

/// Level-stationarity KPSS statistic with a Bartlett-kernel long-run variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpssResult {
    pub statistic: f64,
    pub lags: usize,
    pub reject_at_5pct: bool,
}

/// 5% critical value of the level-stationarity KPSS test.
pub const KPSS_CRITICAL_5PCT: f64 = 0.463;

pub fn kpss_statistic(series: &[f64]) -> Result<KpssResult> {
    let n = series.len();
    if n < 20 {
        return Err(Error::TooFewObservations { needed: 20, have: n });
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let e: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let s0: f64 = e.iter().map(|v| v * v).sum::<f64>();
    if s0 <= 1e-24 * series.iter().map(|v| v * v).sum::<f64>() || s0 == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let lags = (4.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize;
    let mut lrv = s0 / n as f64;
    for s in 1..=lags {
        let w = 1.0 - s as f64 / (lags as f64 + 1.0);
        let cov: f64 = (s..n).map(|t| e[t] * e[t - s]).sum::<f64>() / n as f64;
        lrv += 2.0 * w * cov;
    }
    let mut partial = 0.0;
    let mut sum_sq = 0.0;
    for v in &e {
        partial += v;
        sum_sq += partial * partial;
    }
    let statistic = sum_sq / (n as f64).powi(2) / lrv;
    Ok(KpssResult {
        statistic,
        lags,
        reject_at_5pct: statistic > KPSS_CRITICAL_5PCT,
    })
}

/// Outcome of one `(p, q)` cell of the order search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub p: usize,
    pub q: usize,
    pub aic: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSelection {
    pub order: ArimaOrder,
    pub aic: f64,
    /// KPSS statistics of the 0-, 1-, … times differenced series that were tested.
    pub kpss: Vec<f64>,
    pub cells: Vec<GridCell>,
}

/// Smallest `d ≤ 2` that passes KPSS at 5%, or 2 when none does.
pub fn select_d(series: &[f64]) -> Result<(usize, Vec<f64>)> {
    let mut stats = Vec::new();
    for d in 0..=2 {
        let k = kpss_statistic(&difference(series, d))?;
        stats.push(k.statistic);
        if !k.reject_at_5pct {
            return Ok((d, stats));
        }
    }
    Ok((2, stats))
}

/// AIC search over `p, q ∈ 0..=5` at a fixed `d`.
pub fn select_pq(series: &[f64], d: usize) -> Result<(ArimaOrder, f64, Vec<GridCell>)> {
    let grid: Vec<(usize, usize)> = (0..=5).flat_map(|p| (0..=5).map(move |q| (p, q))).collect();
    let fits = par::map_slice(&grid, |&(p, q)| fit_arma(series, ArimaOrder { p, d, q }));
    let mut best: Option<(ArimaOrder, f64)> = None;
    let mut cells = Vec::with_capacity(grid.len());
    for (&(p, q), fit) in grid.iter().zip(fits) {
        match fit {
            Ok(m) if m.aic.is_finite() => {
                if best.is_none_or(|(_, a)| m.aic < a) {
                    best = Some((m.order, m.aic));
                }
                cells.push(GridCell {
                    p,
                    q,
                    aic: Some(m.aic),
                    error: None,
                });
            }
            Ok(_) => cells.push(GridCell {
                p,
                q,
                aic: None,
                error: Some("non-finite AIC".into()),
            }),
            Err(e) => cells.push(GridCell {
                p,
                q,
                aic: None,
                error: Some(e.to_string()),
            }),
        }
    }
    let (order, aic) = best.ok_or_else(|| Error::NonConvergence("every ARMA grid cell failed".into()))?;
    Ok((order, aic, cells))
}

/// KPSS-chosen `d` followed by the AIC grid search.
pub fn select_order(series: &[f64]) -> Result<OrderSelection> {
    let (d, kpss) = select_d(series)?;
    let (order, aic, cells) = select_pq(series, d)?;
    Ok(OrderSelection {
        order,
        aic,
        kpss,
        cells,
    })
}

/// A fitted one-step-ahead forecaster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ForecastModel {
    Naive,
    Har(HarModel),
    Arima(ArimaModel),
}

/// One-step-ahead forecasts of `series[t]` for `t` in `range`, using realized
/// values before `t` and fixed parameters.
pub fn rolling_forecast(model: &ForecastModel, series: &[f64], range: Range<usize>) -> Result<Vec<f64>> {
    match model {
        ForecastModel::Naive => forward_fill_forecast(series, range),
        ForecastModel::Har(h) => {
            check_range(series, &range, h.lookback())?;
            let mut prefix = vec![0.0; series.len() + 1];
            for (i, v) in series.iter().enumerate() {
                prefix[i + 1] = prefix[i] + v;
            }
            Ok(range
                .map(|t| {
                    let avg = |w: usize| {
                        if t >= w {
                            (prefix[t] - prefix[t - w]) / w as f64
                        } else {
                            0.0
                        }
                    };
                    let row = [
                        series[t - 1],
                        avg(AVERAGE_WINDOWS[0]),
                        avg(AVERAGE_WINDOWS[1]),
                        avg(AVERAGE_WINDOWS[2]),
                    ];
                    h.predict_row(&row)
                })
                .collect())
        }
        ForecastModel::Arima(m) => {
            let (p, d) = (m.order.p, m.order.d);
            check_range(series, &range, d + p)?;
            let y = difference(series, d);
            let coefs = Coefs {
                mu: m.intercept,
                ar: m.ar.clone(),
                ma: m.ma.clone(),
            };
            let e = css_residuals(&y, &coefs);
            // binomial coefficients for un-differencing
            let binom: Vec<f64> = (0..=d)
                .map(|k| (0..k).fold(1.0, |acc, i| acc * (d - i) as f64 / (i + 1) as f64))
                .collect();
            Ok(range
                .map(|t| {
                    // y index of level index t is t - d
                    let s = t - d;
                    let mut yhat = m.intercept;
                    for (i, a) in m.ar.iter().enumerate() {
                        yhat += a * (y[s - 1 - i] - m.intercept);
                    }
                    for (j, th) in m.ma.iter().enumerate() {
                        if s > j {
                            yhat += th * e[s - 1 - j];
                        }
                    }
                    let mut level = yhat;
                    for k in 1..=d {
                        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                        level += sign * binom[k] * series[t - k];
                    }
                    level
                })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_features, business_days, DatasetSpec, TimeSeries};
    use chrono::NaiveDate;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn simulate_arma(phi: f64, theta: f64, n: usize, seed: u64) -> Vec<f64> {
        let z = normals(n + 200, seed);
        let mut x = vec![0.0; n + 200];
        for t in 1..n + 200 {
            x[t] = phi * x[t - 1] + z[t] + theta * z[t - 1];
        }
        x[200..].to_vec()
    }

    fn fm_from_rows(rows: Vec<Vec<f64>>, targets: Vec<f64>) -> FeatureMatrix {
        let n = rows.len();
        FeatureMatrix {
            names: DatasetSpec::D3.feature_names(),
            rows,
            targets,
            dates: business_days(NaiveDate::from_ymd_opt(2010, 1, 4).unwrap(), n),
        }
    }

    #[test]
    fn forward_fill_examples() {
        assert_eq!(forward_fill_forecast(&[1.0, 2.0, 3.0], 1..3).unwrap(), vec![1.0, 2.0]);
        assert!(matches!(
            forward_fill_forecast(&[1.0, 2.0], 0..2),
            Err(Error::InsufficientContext(1))
        ));
    }

    #[test]
    fn har_exact_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..4).map(|_| rng.random_range(10.0..30.0)).collect())
            .collect();
        let t: Vec<f64> = rows
            .iter()
            .map(|r| 0.1 + 0.8 * r[0] + 0.15 * r[1] + 0.03 * r[2])
            .collect();
        let h = fit_har(&fm_from_rows(rows, t), false).unwrap();
        for (got, want) in [h.c, h.beta[0], h.beta[1], h.beta[2]]
            .iter()
            .zip([0.1, 0.8, 0.15, 0.03])
        {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
        assert_eq!(h.beta[3], 0.0);
        assert_eq!(h.param_count(), 4);
    }

    #[test]
    fn har_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..4).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let t: Vec<f64> = (0..200).map(|_| rng.random_range(-5.0..5.0)).collect();
        let fm = fm_from_rows(rows.clone(), t.clone());
        let h = fit_har(&fm, true).unwrap();
        let x = DMatrix::from_fn(200, 5, |i, j| if j == 0 { 1.0 } else { rows[i][j - 1] });
        let y = nalgebra::DVector::from_vec(t.clone());
        let oracle = (x.transpose() * &x).cholesky().unwrap().solve(&(x.transpose() * &y));
        let got = [h.c, h.beta[0], h.beta[1], h.beta[2], h.beta[3]];
        for (g, o) in got.iter().zip(oracle.iter()) {
            assert!((g - o).abs() < 1e-8);
        }
        let resid: Vec<f64> = rows.iter().zip(&t).map(|(r, y)| y - h.predict_row(r)).collect();
        let ynorm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
        for j in 0..5 {
            let dotp: f64 = (0..200).map(|i| x[(i, j)] * resid[i]).sum();
            assert!(dotp.abs() < 1e-8 * ynorm);
        }
    }

    #[test]
    fn arma_recovers_parameters() {
        let x = simulate_arma(0.7, 0.3, 5000, 3);
        let m = fit_arma(&x, ArimaOrder::new(1, 0, 1).unwrap()).unwrap();
        assert!((m.ar[0] - 0.7).abs() < 0.05, "{m:?}");
        assert!((m.ma[0] - 0.3).abs() < 0.05, "{m:?}");
        assert_eq!(m.param_count(), 4);
    }

    #[test]
    fn arma_on_white_noise() {
        // On white noise φ and θ are only identified through φ + θ (the AR and
        // MA factors cancel), so check the implied dynamics rather than the
        // individual coefficients.
        for seed in 0..5 {
            let x = normals(5000, seed);
            let m = fit_arma(&x, ArimaOrder::new(1, 0, 1).unwrap()).unwrap();
            assert!((m.ar[0] + m.ma[0]).abs() < 0.05, "{m:?}");
            // the nested white-noise point is feasible, so the fit is no worse
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            let e = css_residuals(
                &x,
                &Coefs {
                    mu: mean,
                    ar: vec![0.0],
                    ma: vec![0.0],
                },
            );
            let s0 = e[1..].iter().map(|v| v * v).sum::<f64>() / (x.len() - 1) as f64;
            assert!(m.sigma2 <= s0);
        }
    }

    #[test]
    fn mean_model_is_sample_mean() {
        let x: Vec<f64> = normals(300, 5).into_iter().map(|v| v + 20.0).collect();
        let m = fit_arma(&x, ArimaOrder::new(0, 0, 0).unwrap()).unwrap();
        assert_eq!(m.intercept, x.iter().sum::<f64>() / x.len() as f64);
        let f = rolling_forecast(&ForecastModel::Arima(m.clone()), &x, 250..300).unwrap();
        assert!(f.iter().all(|&v| v == m.intercept));
    }

    #[test]
    fn css_decreases_monotonically() {
        let x = simulate_arma(0.5, -0.4, 2000, 6);
        let order = ArimaOrder::new(2, 0, 2).unwrap();
        let z: Vec<f64> = x.clone();
        let obj = |theta: &[f64]| -> Result<(f64, Vec<f64>)> {
            let c = unpack(theta, &order);
            Ok((css_and_gradient(&z, &c, true).0, vec![0.0; theta.len()]))
        };
        // the analytic coefficient gradient agrees with finite differences
        let c = Coefs {
            mu: 0.1,
            ar: vec![0.3, -0.2],
            ma: vec![0.25, 0.1],
        };
        let (_, g) = css_and_gradient(&z, &c, true);
        let h = 1e-6;
        let params = [0.1, 0.3, -0.2, 0.25, 0.1];
        for i in 0..5 {
            let mut pp = params;
            let mut pm = params;
            pp[i] += h;
            pm[i] -= h;
            let mk = |v: [f64; 5]| Coefs {
                mu: v[0],
                ar: vec![v[1], v[2]],
                ma: vec![v[3], v[4]],
            };
            let fd = (css_and_gradient(&z, &mk(pp), true).0 - css_and_gradient(&z, &mk(pm), true).0) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6 * (1.0 + g[i].abs()), "{i}: {fd} vs {}", g[i]);
        }
        let _ = obj;
        let m = fit_arma(&x, order).unwrap();
        assert!(m.aic.is_finite());
    }

    #[test]
    fn kpss_examples() {
        let ar: Vec<f64> = simulate_arma(0.5, 0.0, 1000, 7);
        assert_eq!(select_d(&ar).unwrap().0, 0);
        let mut rw = normals(1000, 8);
        for t in 1..rw.len() {
            rw[t] += rw[t - 1];
        }
        assert!(select_d(&rw).unwrap().0 >= 1);
        assert!(matches!(kpss_statistic(&[3.0; 50]), Err(Error::ZeroVariance)));
        assert_eq!(kpss_statistic(&normals(100, 1)).unwrap().lags, 4);
    }

    #[test]
    fn pacf_transform_is_stationary() {
        let a = pacf_to_ar(&[0.5]);
        assert_eq!(a, vec![0.5]);
        let a = pacf_to_ar(&[0.5, 0.2]);
        // φ1 = r1(1 − r2), φ2 = r2
        assert!((a[0] - 0.4).abs() < 1e-15 && (a[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn persistence_embeddings() {
        let x: Vec<f64> = normals(300, 9).into_iter().map(|v| v + 20.0).collect();
        let naive = forward_fill_forecast(&x, 100..300).unwrap();
        let har = HarModel {
            c: 0.0,
            beta: [1.0, 0.0, 0.0, 0.0],
            quarterly: true,
        };
        assert_eq!(rolling_forecast(&ForecastModel::Har(har), &x, 100..300).unwrap(), naive);
        let rw = fit_arma(&x[..200], ArimaOrder::new(0, 1, 0).unwrap()).unwrap();
        assert_eq!(rw.intercept, 0.0);
        assert_eq!(
            rolling_forecast(&ForecastModel::Arima(rw), &x, 100..300).unwrap(),
            naive
        );
    }

    #[test]
    fn har_rolling_matches_feature_rows() {
        let x: Vec<f64> = normals(400, 10).into_iter().map(|v| v + 20.0).collect();
        let ts = TimeSeries::new(
            business_days(NaiveDate::from_ymd_opt(2010, 1, 4).unwrap(), 400),
            x.clone(),
        )
        .unwrap();
        let fm = build_features(&ts, &DatasetSpec::D3).unwrap();
        let h = fit_har(&fm, true).unwrap();
        let direct: Vec<f64> = fm.rows.iter().map(|r| h.predict_row(r)).collect();
        let rolled = rolling_forecast(&ForecastModel::Har(h), &x, 63..400).unwrap();
        for (a, b) in direct.iter().zip(&rolled) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn arima_one_differencing() {
        let mut x = simulate_arma(0.4, 0.0, 1500, 11);
        for t in 1..x.len() {
            x[t] += x[t - 1];
        }
        let m = fit_arma(&x[..1200], ArimaOrder::new(1, 1, 0).unwrap()).unwrap();
        assert!((m.ar[0] - 0.4).abs() < 0.08, "{m:?}");
        let f = rolling_forecast(&ForecastModel::Arima(m.clone()), &x, 1200..1500).unwrap();
        for (k, t) in (1200..1500).enumerate() {
            let want = x[t - 1] + m.ar[0] * (x[t - 1] - x[t - 2]);
            assert!((f[k] - want).abs() < 1e-9);
        }
    }
}
