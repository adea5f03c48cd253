use chrono::NaiveDate;
use kanvix::data::{business_days, simulate_ou, SyntheticOuConfig, TimeSeries};
use kanvix::leverage::{build_leverage_dataset, fit_leverage, LeverageConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Base forecasts from a mean-reverting path, standard-normal returns and
/// actuals `V̂ + b·R^e_{t-1} + noise`.
fn planted(b: f64, n: usize, seed: u64) -> (TimeSeries, TimeSeries, TimeSeries) {
    let base = simulate_ou(&SyntheticOuConfig {
        n,
        seed,
        ..Default::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    let ret_dist = Normal::new(0.0, 1.0).unwrap();
    let noise = Normal::new(0.0, 0.1).unwrap();
    let dates = business_days(NaiveDate::from_ymd_opt(2010, 1, 4).unwrap(), n);
    let rets: Vec<f64> = (0..n).map(|_| ret_dist.sample(&mut rng)).collect();
    let mut actual = vec![base.values[0]];
    for t in 1..n {
        actual.push(base.values[t] + b * rets[t - 1] + noise.sample(&mut rng));
    }
    let fc = TimeSeries::new(dates[1..].to_vec(), base.values[1..].to_vec()).unwrap();
    (
        fc,
        TimeSeries::new(dates.clone(), rets).unwrap(),
        TimeSeries::new(dates, actual).unwrap(),
    )
}

#[test]
fn planted_leverage_coefficient_recovered() {
    let (fc, rets, actual) = planted(-0.05, 2000, 3);
    let ds = build_leverage_dataset(&fc, &rets, &actual).unwrap();
    assert_eq!(ds.dropped, 0);
    let out = fit_leverage(&ds, &LeverageConfig::default()).unwrap();
    assert!((out.b + 0.05).abs() <= 0.01, "b = {}", out.b);
    assert!((out.a - 1.0).abs() <= 0.02, "a = {}", out.a);
    assert!(out.spline_r2 >= out.base_r2);
    assert!(out.r2_improvement > 0.0);
    let formula = out
        .closed_form
        .render_with_precision(kanvix::leverage::AUGMENTED_SYMBOL, 4);
    assert!(formula.contains("R^e_{t-1}"), "{formula}");
    for r in &ds.rows {
        assert!((out.closed_form.eval(r) - out.symbolic.predict_one(r).unwrap()).abs() < 1e-10);
    }
}

#[test]
fn null_leverage_effect_vanishes() {
    let mut small = 0;
    for seed in 0..10 {
        let (fc, rets, actual) = planted(0.0, 1000, seed);
        let ds = build_leverage_dataset(&fc, &rets, &actual).unwrap();
        let out = fit_leverage(&ds, &LeverageConfig::default()).unwrap();
        assert!(out.spline_r2 >= out.base_r2);
        if out.b.abs() < 0.01 {
            small += 1;
        }
    }
    assert!(small >= 9, "{small}/10");
}
