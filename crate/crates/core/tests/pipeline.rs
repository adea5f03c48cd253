use kanvix::data::{
    build_features, business_days, simulate_ou, split, DatasetSpec, FeatureMatrix, Period, SyntheticOuConfig,
};
use kanvix::interpret::{prune, score, ClosedForm, DEFAULT_PRUNE_THRESHOLD};
use kanvix::kan_core::{KanNetwork, NetworkInit};
use kanvix::pipeline::{run, PipelineConfig};
use kanvix::train::{fit, Batch, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// `y = 2 x1 + 1 + noise` with an unrelated second feature.
fn noise_feature_data(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
        .collect();
    let y = rows.iter().map(|r| 2.0 * r[0] + 1.0 + noise.sample(&mut rng)).collect();
    (rows, y)
}

#[test]
fn independent_noise_feature_is_pruned() {
    let mut pruned = 0;
    for seed in 0..10 {
        let (rows, y) = noise_feature_data(300, seed);
        let net = KanNetwork::init(
            &[2, 1],
            &NetworkInit {
                seed,
                ..Default::default()
            },
            &rows,
        )
        .unwrap();
        let cfg = TrainConfig {
            lambda: 0.1,
            seed,
            ..Default::default()
        };
        // validating on the training batch lets the penalty act until the
        // training loss itself stalls
        let batch = Batch::new(&rows, &y);
        let trained = fit(net, batch, batch, &cfg).unwrap().model;
        let report = score(&trained, &rows).unwrap();
        let out = prune(&trained, &report, DEFAULT_PRUNE_THRESHOLD).unwrap();
        assert!(out.layers[0].edge(0, 0).active, "seed {seed}: signal edge pruned");
        if !out.layers[0].edge(1, 0).active {
            pruned += 1;
        }
    }
    assert!(pruned >= 9, "noise edge pruned in {pruned}/10 seeds");
}

fn linear_matrix(n: usize, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.random_range(0.0..4.0), rng.random_range(0.0..4.0)])
        .collect();
    let targets = rows
        .iter()
        .map(|r| 0.9 * r[0] + 0.3 * r[1] + 2.0 + noise.sample(&mut rng))
        .collect();
    FeatureMatrix {
        names: vec!["a".into(), "b".into()],
        rows,
        targets,
        dates: business_days(chrono::NaiveDate::from_ymd_opt(2020, 1, 6).unwrap(), n),
    }
}

#[test]
fn linear_target_collapses_to_its_formula() {
    let (tr, va, te) = (linear_matrix(400, 1), linear_matrix(100, 2), linear_matrix(100, 3));
    let out = run(&tr, &va, &te, &PipelineConfig::default()).unwrap();
    let cf = &out.closed_form;
    assert!((cf.coefficient("a") - 0.9).abs() < 0.02, "{}", cf.render());
    assert!((cf.coefficient("b") - 0.3).abs() < 0.02, "{}", cf.render());
    assert!((cf.intercept - 2.0).abs() < 0.05, "{}", cf.render());
    assert!(out.metrics_symbolic.r2 > 0.999, "{:?}", out.metrics_symbolic);
}

#[test]
fn ou_pipeline_produces_consistent_outputs() {
    let series = simulate_ou(&SyntheticOuConfig::default());
    let fm = build_features(&series, &DatasetSpec::D3).unwrap();
    let (tr, va, te) = split(&fm, &Period::P3.resolve(&series).unwrap()).unwrap();
    let out = run(&tr, &va, &te, &PipelineConfig::default()).unwrap();

    assert_eq!(out.shape, vec![4, 2, 1]);
    // the closed form is the symbolic network, and its rendering round-trips
    for r in &te.rows {
        let (a, b) = (out.closed_form.eval(r), out.symbolic.predict_one(r).unwrap());
        assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
    }
    let parsed = ClosedForm::parse(&out.closed_form.render()).unwrap();
    for (x, y) in parsed.coefficients.iter().zip(&out.closed_form.coefficients) {
        assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
    }
    // one-step persistence dominates a κ = 0.15 process
    let lag = out.closed_form.coefficient("V_{t-1}");
    assert!((lag - 0.85).abs() < 0.1, "{}", out.closed_form.render());
    assert!((out.metrics_symbolic.r2 - out.metrics_spline.r2).abs() < 0.005);
    assert!(out.training.train_loss.windows(2).all(|w| w[1] <= w[0]));
    assert!(out.finetune.train_loss.last() <= out.finetune.train_loss.first());
}
