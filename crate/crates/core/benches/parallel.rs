//! Parallel vs sequential execution of the data-parallel hot paths.
//!
//! With the default `parallel` feature each workload runs on the global rayon
//! pool and inside a one-thread pool; built with `--no-default-features` the
//! same workloads run through the sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kanvix::benchmarks::select_pq;
use kanvix::data::{build_features, simulate_ou, DatasetSpec, SyntheticOuConfig};
use kanvix::kan_core::{KanNetwork, NetworkInit, Regularization};

const MODE: &str = if cfg!(feature = "parallel") {
    "parallel"
} else {
    "sequential-build"
};

fn run_modes(c: &mut Criterion, group: &str, work: &(dyn Fn() + Sync)) {
    let mut g = c.benchmark_group(group);
    g.sample_size(10);
    g.bench_function(BenchmarkId::new(MODE, "default pool"), |b| b.iter(work));
    #[cfg(feature = "parallel")]
    {
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        g.bench_function(BenchmarkId::new("sequential", "one-thread pool"), |b| {
            b.iter(|| single.install(work))
        });
    }
    g.finish();
}

fn gradient(c: &mut Criterion) {
    let series = simulate_ou(&SyntheticOuConfig::default());
    let fm = build_features(&series, &DatasetSpec::D3).unwrap();
    let net = KanNetwork::init(&[4, 2, 1], &NetworkInit::default(), &fm.rows).unwrap();
    let reg = Regularization {
        lambda: 0.1,
        ..Default::default()
    };
    run_modes(c, "kan loss and gradient (3937 rows)", &|| {
        std::hint::black_box(net.loss_and_gradient(&fm.rows, &fm.targets, &reg).unwrap());
    });
}

fn order_search(c: &mut Criterion) {
    let series = simulate_ou(&SyntheticOuConfig {
        n: 1000,
        ..Default::default()
    });
    run_modes(c, "ARMA order grid (1000 obs)", &|| {
        std::hint::black_box(select_pq(&series.values, 0).unwrap());
    });
}

criterion_group!(benches, gradient, order_search);
criterion_main!(benches);
