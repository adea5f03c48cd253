//! Leverage-effect augmentation: a one-layer network over a base forecast and
//! the previous day's excess return.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::TimeSeries;
use crate::error::{Error, Result};
use crate::eval::{compute_metrics, r_squared, MetricsReport};
use crate::interpret::{collapse, symbolify, ClosedForm, SymbolicCandidate, SymbolicNetwork};
use crate::kan_core::{KanNetwork, NetworkInit};
use crate::pipeline::TrainingSummary;
use crate::train::{fit, Batch, TrainConfig};

/// Name of the base-forecast input.
pub const BASE_NAME: &str = "V̂_t";
/// Name of the lagged excess-return input.
pub const RETURN_NAME: &str = "R^e_{t-1}";
/// Left-hand side of the augmented formula.
pub const AUGMENTED_SYMBOL: &str = "Ṽ_t";
/// Symbolic fits below this R² raise the non-linearity warning.
pub const LINEAR_FIT_WARNING_R2: f64 = 0.9;

/// Rows `(V̂_t, R^e_{t-1})` with targets `V_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeverageDataset {
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub dates: Vec<NaiveDate>,
    /// Forecast dates dropped for lack of an actual value or a lagged return.
    pub dropped: usize,
}

impl LeverageDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn names() -> Vec<String> {
        vec![BASE_NAME.to_string(), RETURN_NAME.to_string()]
    }

    pub fn base_forecast(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r[0]).collect()
    }
}

/// Joins forecasts with actuals on date; the return paired with date `t` is
/// the one dated on the previous observation date of `actuals`.
pub fn build_leverage_dataset(
    forecasts: &TimeSeries,
    returns: &TimeSeries,
    actuals: &TimeSeries,
) -> Result<LeverageDataset> {
    let mut ds = LeverageDataset {
        rows: Vec::new(),
        targets: Vec::new(),
        dates: Vec::new(),
        dropped: 0,
    };
    for (&date, &forecast) in forecasts.dates.iter().zip(&forecasts.values) {
        let joined = actuals.position(date).filter(|&i| i > 0).and_then(|i| {
            let prev = actuals.dates[i - 1];
            returns.position(prev).map(|j| (actuals.values[i], returns.values[j]))
        });
        match joined {
            Some((actual, ret)) => {
                ds.rows.push(vec![forecast, ret]);
                ds.targets.push(actual);
                ds.dates.push(date);
            }
            None => ds.dropped += 1,
        }
    }
    if ds.is_empty() {
        return Err(Error::EmptyJoin);
    }
    Ok(ds)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LeverageConfig {
    pub init: NetworkInit,
    pub train: TrainConfig,
}

/// Candidate set of the augmentation: identity, negation and zero.
pub fn leverage_candidates() -> Vec<SymbolicCandidate> {
    vec![
        SymbolicCandidate::IDENTITY,
        SymbolicCandidate::NEGATION,
        SymbolicCandidate::ZERO,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeverageOutcome {
    pub spline: KanNetwork,
    pub training: TrainingSummary,
    pub symbolic: SymbolicNetwork,
    pub closed_form: ClosedForm,
    /// Metrics of the closed form on the dataset.
    pub metrics: MetricsReport,
    pub base_r2: f64,
    pub spline_r2: f64,
    /// Closed-form R² minus base R².
    pub r2_improvement: f64,
    /// Coefficient on the base forecast.
    pub a: f64,
    /// Coefficient on the lagged excess return.
    pub b: f64,
    pub c: f64,
    pub non_linear_fit_warning: bool,
    pub dropped_rows: usize,
}

/// Identity edges with a negative scale are rewritten as negation edges.
fn fold_negation(snet: &mut SymbolicNetwork) {
    for e in snet.layers.iter_mut().flat_map(|l| l.edges.iter_mut().flatten()) {
        if e.candidate == SymbolicCandidate::IDENTITY && e.c < 0.0 {
            e.candidate = SymbolicCandidate::NEGATION;
            e.c = -e.c;
        }
    }
}

/// Trains the `[2, 1]` network in-sample (the dataset serves as both training
/// and validation batch), starting from the identity on the base forecast
/// and zero on the return, then symbolifies and collapses it.
pub fn fit_leverage(ds: &LeverageDataset, config: &LeverageConfig) -> Result<LeverageOutcome> {
    if ds.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut net = KanNetwork::init(&[2, 1], &config.init, &ds.rows)?;
    net.layers[0].edge_mut(0, 0).set_affine(1.0, 0.0);
    net.layers[0].edge_mut(1, 0).set_affine(0.0, 0.0);
    let batch = Batch::new(&ds.rows, &ds.targets);
    let trained = fit(net, batch, batch, &config.train)?;
    let mut symbolic = symbolify(&trained.model, &ds.rows, &leverage_candidates())?;
    fold_negation(&mut symbolic);
    let closed_form = collapse(&symbolic, &LeverageDataset::names())?;
    let fitted: Vec<f64> = ds.rows.iter().map(|r| closed_form.eval(r)).collect();
    let metrics = compute_metrics(&ds.targets, &fitted)?;
    let base_r2 = r_squared(&ds.targets, &ds.base_forecast());
    let spline_r2 = r_squared(&ds.targets, &trained.model.predict(&ds.rows)?);
    let non_linear_fit_warning = !symbolic.poor_fits(LINEAR_FIT_WARNING_R2).is_empty();
    Ok(LeverageOutcome {
        a: closed_form.coefficients[0],
        b: closed_form.coefficients[1],
        c: closed_form.intercept,
        r2_improvement: metrics.r2 - base_r2,
        base_r2,
        spline_r2,
        metrics,
        training: TrainingSummary::from(&trained),
        spline: trained.model,
        symbolic,
        closed_form,
        non_linear_fit_warning,
        dropped_rows: ds.dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::business_days;

    fn series(start: NaiveDate, values: Vec<f64>) -> TimeSeries {
        TimeSeries::new(business_days(start, values.len()), values).unwrap()
    }

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn join_semantics() {
        let start = d(2020, 1, 6);
        let actual = series(start, (0..10).map(|i| 20.0 + i as f64).collect());
        let rets = series(start, (0..10).map(|i| i as f64 * 0.1).collect());
        let fc = TimeSeries::new(actual.dates[1..].to_vec(), actual.values[1..].to_vec()).unwrap();
        let ds = build_leverage_dataset(&fc, &rets, &actual).unwrap();
        assert_eq!((ds.len(), ds.dropped), (9, 0));
        // the return is the one from the previous trading day
        assert_eq!(ds.rows[0], vec![21.0, 0.0]);
        assert_eq!(ds.targets[0], 21.0);

        let mut gap = rets.clone();
        gap.dates.remove(4);
        gap.values.remove(4);
        let ds = build_leverage_dataset(&fc, &gap, &actual).unwrap();
        assert_eq!((ds.len(), ds.dropped), (8, 1));

        let later = series(d(2030, 1, 7), vec![1.0; 5]);
        assert!(matches!(
            build_leverage_dataset(&later, &rets, &actual),
            Err(Error::EmptyJoin)
        ));
    }

    #[test]
    fn negation_folding() {
        let mut snet = SymbolicNetwork {
            shape: vec![1, 1],
            layers: vec![crate::interpret::SymbolicLayer {
                n_in: 1,
                n_out: 1,
                edges: vec![Some(crate::interpret::SymbolicEdge {
                    candidate: SymbolicCandidate::IDENTITY,
                    a: 1.0,
                    b: 0.0,
                    c: -0.05,
                    d: 0.1,
                })],
                fit_r2: vec![Some(1.0)],
            }],
        };
        let before = snet.predict_one(&[3.0]).unwrap();
        fold_negation(&mut snet);
        let e = snet.layers[0].edges[0].unwrap();
        assert_eq!((e.candidate, e.c), (SymbolicCandidate::NEGATION, 0.05));
        assert!((snet.predict_one(&[3.0]).unwrap() - before).abs() < 1e-15);
    }
}
