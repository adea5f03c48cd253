//! Command-line front end: experiment configuration, the dataset × period
//! grid, JSON reports and their text rendering.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::benchmarks::{
    fit_arma, fit_har, forward_fill_forecast, rolling_forecast, select_order, select_pq, ForecastModel,
};
use crate::data::{
    build_features, excess_returns, load_csv, simulate_ou, split, DatasetSpec, FeatureMatrix, Period,
    SyntheticOuConfig, TimeSeries,
};
use crate::error::{Error, Result};
use crate::eval::{compute_metrics, durbin_watson, mincer_zarnowitz, DwResult, MetricsReport, MzResult};
use crate::interpret::{mean_reversion_report, ClosedForm, MeanReversionReport, SymbolicCandidate, FORECAST_SYMBOL};
use crate::kan_core::NetworkInit;
use crate::leverage::{build_leverage_dataset, fit_leverage, LeverageConfig, AUGMENTED_SYMBOL};
use crate::par;
use crate::pipeline::{self, PipelineConfig, PipelineOutcome, TrainingSummary};
use crate::train::TrainConfig;

/// Significant digits of rendered formulas.
pub const FORMULA_DIGITS: usize = 6;

#[derive(Debug, Parser)]
#[command(
    name = "kanvix",
    version,
    about = "Interpretable KAN forecasting of volatility indices"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Args)]
pub struct Flags {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Restrict the run to one dataset (d1, d2, d3).
    #[arg(long, global = true)]
    pub dataset: Option<String>,
    /// Restrict the run to one period (1, 2, 3).
    #[arg(long, global = true)]
    pub period: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train, prune, symbolify and collapse; write reports and forecasts.
    Train,
    /// Forward filling, HAR and ARMA/ARIMA benchmarks.
    Benchmark,
    /// Augment the trained forecasts with lagged excess returns.
    Leverage,
    /// Write a synthetic mean-reverting series.
    Simulate,
    /// Print reports as text tables.
    Report {
        /// Report files; defaults to every report in the output directory.
        files: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub vix: Option<PathBuf>,
    pub sp500: Option<PathBuf>,
    pub rf: Option<PathBuf>,
    /// Precomputed daily excess returns in percent; replaces `sp500` + `rf`.
    pub returns: Option<PathBuf>,
    pub date_column: String,
    pub vix_column: String,
    pub sp500_column: String,
    pub rf_column: String,
    pub returns_column: String,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            vix: None,
            sp500: None,
            rf: None,
            returns: None,
            date_column: "date".into(),
            vix_column: "close".into(),
            sp500_column: "close".into(),
            rf_column: "dtb3".into(),
            returns_column: "excess_return".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub grid_size: usize,
    pub order: usize,
    pub coeff_scale: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let init = NetworkInit::default();
        Self {
            hidden: vec![2],
            grid_size: init.grid_size,
            order: init.order,
            coeff_scale: init.coeff_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub datasets: Vec<String>,
    pub periods: Vec<String>,
    pub seed: u64,
    pub out: PathBuf,
    pub threads: usize,
    pub prune_threshold: f64,
    pub candidates: Vec<String>,
    pub data: DataConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub finetune: TrainConfig,
    pub simulate: SyntheticOuConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            datasets: vec!["d1".into(), "d2".into(), "d3".into()],
            periods: vec!["1".into(), "2".into(), "3".into()],
            seed: 0,
            out: PathBuf::from("out"),
            threads: 0,
            prune_threshold: crate::interpret::DEFAULT_PRUNE_THRESHOLD,
            candidates: vec!["x".into(), "0".into()],
            data: DataConfig::default(),
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            finetune: TrainConfig::finetune(),
            simulate: SyntheticOuConfig::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl ExperimentConfig {
    /// Reads a TOML file; relative paths inside it are taken relative to the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|_| Error::FileNotFound(path.to_path_buf()))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.data.vix);
        resolve(base, &mut cfg.data.sp500);
        resolve(base, &mut cfg.data.rf);
        resolve(base, &mut cfg.data.returns);
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        Ok(cfg)
    }

    pub fn apply_flags(&mut self, flags: &Flags) {
        if let Some(d) = &flags.dataset {
            self.datasets = vec![d.clone()];
        }
        if let Some(p) = &flags.period {
            self.periods = vec![p.clone()];
        }
        if let Some(s) = flags.seed {
            self.seed = s;
            self.simulate.seed = s;
        }
        if let Some(o) = &flags.out {
            self.out = o.clone();
        }
        if let Some(t) = flags.threads {
            self.threads = t;
        }
    }

    pub fn dataset_specs(&self) -> Result<Vec<DatasetSpec>> {
        self.datasets.iter().map(|d| DatasetSpec::parse(d)).collect()
    }

    pub fn period_list(&self) -> Result<Vec<Period>> {
        self.periods.iter().map(|p| Period::parse(p)).collect()
    }

    pub fn candidate_set(&self) -> Result<Vec<SymbolicCandidate>> {
        self.candidates.iter().map(|c| SymbolicCandidate::by_name(c)).collect()
    }

    pub fn init(&self) -> NetworkInit {
        NetworkInit {
            grid_size: self.network.grid_size,
            order: self.network.order,
            seed: self.seed,
            coeff_scale: self.network.coeff_scale,
        }
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        let cfg = PipelineConfig {
            hidden: self.network.hidden.clone(),
            init: self.init(),
            train: TrainConfig {
                seed: self.seed,
                ..self.train
            },
            finetune: TrainConfig {
                seed: self.seed,
                ..self.finetune
            },
            prune_threshold: self.prune_threshold,
            candidates: self.candidate_set()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks the configured values.
    pub fn validate(&self) -> Result<()> {
        self.dataset_specs()?;
        self.period_list()?;
        self.pipeline()?;
        self.simulate.validate()?;
        if self.network.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }

    /// Checks that every configured input file exists.
    pub fn check_inputs(&self) -> Result<()> {
        let d = &self.data;
        for p in [&d.vix, &d.sp500, &d.rf, &d.returns].into_iter().flatten() {
            if !p.is_file() {
                return Err(Error::FileNotFound(p.clone()));
            }
        }
        Ok(())
    }

    /// The configuration as embedded in reports: run-location settings
    /// (output directory, thread count) are left out because they do not
    /// affect results.
    pub fn report_view(&self) -> Result<serde_json::Value> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("out");
            obj.remove("threads");
        }
        Ok(v)
    }

    pub fn hash(&self) -> Result<String> {
        let text = serde_json::to_string(&self.report_view()?)?;
        Ok(Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect())
    }

    fn vix_path(&self) -> Result<&Path> {
        self.data
            .vix
            .as_deref()
            .ok_or_else(|| Error::Config("data.vix is not set".into()))
    }

    pub fn load_vix(&self) -> Result<TimeSeries> {
        load_csv(self.vix_path()?, &self.data.date_column, &self.data.vix_column)
    }

    pub fn load_returns(&self) -> Result<TimeSeries> {
        let d = &self.data;
        if let Some(p) = &d.returns {
            return load_csv(p, &d.date_column, &d.returns_column);
        }
        match (&d.sp500, &d.rf) {
            (Some(sp), Some(rf)) => {
                let prices = load_csv(sp, &d.date_column, &d.sp500_column)?;
                let rates = load_csv(rf, &d.date_column, &d.rf_column)?;
                excess_returns(&prices, &rates)
            }
            _ => Err(Error::Config(
                "leverage needs data.returns or both data.sp500 and data.rf".into(),
            )),
        }
    }
}

/// Segment sizes and boundary dates of a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub train_rows: usize,
    pub valid_rows: usize,
    pub test_rows: usize,
    pub train_start: NaiveDate,
    pub valid_start: NaiveDate,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
}

impl SplitSummary {
    fn new(tr: &FeatureMatrix, va: &FeatureMatrix, te: &FeatureMatrix) -> Self {
        Self {
            train_rows: tr.len(),
            valid_rows: va.len(),
            test_rows: te.len(),
            train_start: tr.dates[0],
            valid_start: va.dates[0],
            test_start: te.dates[0],
            test_end: te.dates[te.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSection {
    pub shape: Vec<usize>,
    pub split: SplitSummary,
    pub spline: TrainingSummary,
    pub finetune: TrainingSummary,
    /// Trainable scalars of the unpruned spline network.
    pub param_count: usize,
    /// Trainable scalars left after pruning.
    pub param_count_pruned: usize,
    /// `(a, b, c, d)` of every symbolic edge.
    pub param_count_symbolic: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruningSection {
    pub threshold: f64,
    pub edge_importance: Vec<Vec<f64>>,
    pub node_importance: Vec<Vec<f64>>,
    pub active_edges: Vec<Vec<bool>>,
    /// Inputs left without any active edge.
    pub disconnected_inputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub layer: usize,
    pub from: usize,
    pub to: usize,
    pub candidate: String,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub fit_r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolicSection {
    pub edges: Vec<EdgeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormSection {
    pub formula: String,
    pub formula_full_precision: String,
    pub closed_form: ClosedForm,
    pub mean_reversion: Option<MeanReversionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSection {
    /// Pruned spline network on the test segment.
    pub spline: MetricsReport,
    /// Closed form on the test segment.
    pub symbolic: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticsSection {
    pub mincer_zarnowitz: MzResult,
    pub durbin_watson: DwResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub model: String,
    pub mse: f64,
    pub mae: f64,
    pub mape: f64,
    pub r2: f64,
    pub qlike: f64,
    pub params: usize,
}

impl BenchmarkRow {
    fn new(model: String, m: &MetricsReport, params: usize) -> Self {
        Self {
            model,
            mse: m.mse,
            mae: m.mae,
            mape: m.mape,
            r2: m.r2,
            qlike: m.qlike,
            params,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSection {
    pub test_rows: usize,
    pub rows: Vec<BenchmarkRow>,
    pub arima_kpss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeverageSection {
    pub formula: String,
    pub formula_full_precision: String,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub rows: usize,
    pub dropped_rows: usize,
    pub base_r2: f64,
    pub r2: f64,
    pub spline_r2: f64,
    pub r2_improvement: f64,
    pub non_linear_fit_warning: bool,
    /// The augmentation is fitted and scored on the same test-period pairs.
    pub in_sample: bool,
    pub training: TrainingSummary,
}

/// One JSON document per dataset and period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub config_hash: String,
    pub dataset: String,
    pub period: String,
    pub config: serde_json::Value,
    pub training: Option<TrainingSection>,
    pub pruning: Option<PruningSection>,
    pub symbolic: Option<SymbolicSection>,
    pub closed_form: Option<ClosedFormSection>,
    pub metrics: Option<MetricsSection>,
    pub statistics: Option<StatisticsSection>,
    pub benchmarks: Option<BenchmarkSection>,
    pub leverage: Option<LeverageSection>,
}

impl Report {
    fn new(cfg: &ExperimentConfig, dataset: &DatasetSpec, period: Period) -> Result<Self> {
        Ok(Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: cfg.hash()?,
            dataset: dataset.label(),
            period: period.label().to_string(),
            config: cfg.report_view()?,
            training: None,
            pruning: None,
            symbolic: None,
            closed_form: None,
            metrics: None,
            statistics: None,
            benchmarks: None,
            leverage: None,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|_| Error::FileNotFound(path.to_path_buf()))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Existing report for the pair, refreshed to the current config, or a
    /// fresh one.
    fn load_or_new(path: &Path, cfg: &ExperimentConfig, dataset: &DatasetSpec, period: Period) -> Result<Self> {
        let fresh = Self::new(cfg, dataset, period)?;
        if !path.is_file() {
            return Ok(fresh);
        }
        let old = Self::read(path)?;
        if old.config_hash != fresh.config_hash {
            return Ok(fresh);
        }
        Ok(old)
    }
}

fn stem(dataset: &DatasetSpec, period: Period) -> String {
    format!("{}_{}", dataset.label(), period.label())
}

pub fn report_path(out: &Path, dataset: &DatasetSpec, period: Period) -> PathBuf {
    out.join(format!("report_{}.json", stem(dataset, period)))
}

pub fn forecast_path(out: &Path, dataset: &DatasetSpec, period: Period) -> PathBuf {
    out.join(format!("forecast_{}.csv", stem(dataset, period)))
}

pub fn activations_path(out: &Path, dataset: &DatasetSpec, period: Period) -> PathBuf {
    out.join(format!("activations_{}.csv", stem(dataset, period)))
}

fn grid(cfg: &ExperimentConfig) -> Result<Vec<(DatasetSpec, Period)>> {
    let periods = cfg.period_list()?;
    Ok(cfg
        .dataset_specs()?
        .into_iter()
        .flat_map(|d| periods.iter().map(move |&p| (d.clone(), p)))
        .collect())
}

fn split_for(
    series: &TimeSeries,
    spec: &DatasetSpec,
    period: Period,
) -> Result<(FeatureMatrix, FeatureMatrix, FeatureMatrix)> {
    let fm = build_features(series, spec)?;
    split(&fm, &period.resolve(series)?)
}

struct TrainArtifacts {
    report: Report,
    outcome: PipelineOutcome,
    train: FeatureMatrix,
    test: FeatureMatrix,
}

fn train_one(
    cfg: &ExperimentConfig,
    series: &TimeSeries,
    dataset: &DatasetSpec,
    period: Period,
    previous: Report,
) -> Result<TrainArtifacts> {
    let (tr, va, te) = split_for(series, dataset, period)?;
    info!(
        "training {} {}: {} / {} / {} rows",
        dataset.label(),
        period.label(),
        tr.len(),
        va.len(),
        te.len()
    );
    let outcome = pipeline::run(&tr, &va, &te, &cfg.pipeline()?)?;
    let mut report = previous;

    report.training = Some(TrainingSection {
        shape: outcome.shape.clone(),
        split: SplitSummary::new(&tr, &va, &te),
        spline: outcome.training.clone(),
        finetune: outcome.finetune.clone(),
        param_count: outcome.trained.param_count(),
        param_count_pruned: outcome.pruned.active_param_count(),
        param_count_symbolic: 4 * outcome.symbolic.active_edge_count(),
    });
    let first = &outcome.pruned.layers[0];
    report.pruning = Some(PruningSection {
        threshold: cfg.prune_threshold,
        edge_importance: outcome.importance.edges.clone(),
        node_importance: outcome.importance.nodes.clone(),
        active_edges: outcome
            .pruned
            .layers
            .iter()
            .map(|l| l.edges.iter().map(|e| e.active).collect())
            .collect(),
        disconnected_inputs: (0..first.n_in)
            .filter(|&q| (0..first.n_out).all(|p| !first.edge(q, p).active))
            .map(|q| tr.names[q].clone())
            .collect(),
    });
    let mut edges = Vec::new();
    for (li, l) in outcome.symbolic.layers.iter().enumerate() {
        for (j, e) in l.edges.iter().enumerate() {
            if let Some(e) = e {
                edges.push(EdgeRecord {
                    layer: li,
                    from: j / l.n_out,
                    to: j % l.n_out,
                    candidate: e.candidate.name.to_string(),
                    a: e.a,
                    b: e.b,
                    c: e.c,
                    d: e.d,
                    fit_r2: l.fit_r2[j],
                });
            }
        }
    }
    report.symbolic = Some(SymbolicSection { edges });
    let cf = &outcome.closed_form;
    let mean_reversion = match dataset {
        DatasetSpec::D3 => match mean_reversion_report(cf, &tr) {
            Ok(r) => Some(r),
            Err(Error::MissingFeature(_)) => None,
            Err(e) => return Err(e),
        },
        _ => None,
    };
    report.closed_form = Some(ClosedFormSection {
        formula: cf.render_with_precision(FORECAST_SYMBOL, FORMULA_DIGITS),
        formula_full_precision: cf.render(),
        closed_form: cf.clone(),
        mean_reversion,
    });
    report.metrics = Some(MetricsSection {
        spline: outcome.metrics_spline,
        symbolic: outcome.metrics_symbolic,
    });
    let residuals: Vec<f64> = te
        .targets
        .iter()
        .zip(&outcome.test_forecast)
        .map(|(a, f)| a - f)
        .collect();
    report.statistics = Some(StatisticsSection {
        mincer_zarnowitz: mincer_zarnowitz(&te.targets, &outcome.test_forecast)?,
        durbin_watson: durbin_watson(&residuals)?,
    });
    Ok(TrainArtifacts {
        report,
        outcome,
        train: tr,
        test: te,
    })
}

fn write_forecasts(path: &Path, test: &FeatureMatrix, outcome: &PipelineOutcome) -> Result<()> {
    let spline = outcome.pruned.predict(&test.rows)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "actual", "forecast", "spline_forecast"])?;
    for i in 0..test.len() {
        w.write_record([
            test.dates[i].to_string(),
            test.targets[i].to_string(),
            outcome.test_forecast[i].to_string(),
            spline[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `(layer, from, to, active, x, phi)` for every edge of the pruned spline
/// network on the training rows.
fn write_activations(path: &Path, train: &FeatureMatrix, outcome: &PipelineOutcome) -> Result<()> {
    let trace = outcome.pruned.trace(&train.rows)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["layer", "from", "to", "active", "x", "phi"])?;
    for (li, (layer, lt)) in outcome.pruned.layers.iter().zip(&trace.layers).enumerate() {
        for q in 0..layer.n_in {
            for p in 0..layer.n_out {
                let active = layer.edge(q, p).active;
                let (xs, ys) = lt.edge_samples(q, p);
                for (x, y) in xs.iter().zip(&ys) {
                    w.write_record([
                        li.to_string(),
                        q.to_string(),
                        p.to_string(),
                        active.to_string(),
                        x.to_string(),
                        y.to_string(),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn ensure_out(cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out)?;
    Ok(())
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let series = cfg.load_vix()?;
    ensure_out(cfg)?;
    let pairs = grid(cfg)?;
    let previous = pairs
        .iter()
        .map(|(d, p)| Report::load_or_new(&report_path(&cfg.out, d, *p), cfg, d, *p))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<_> = pairs.iter().zip(previous).collect();
    let results = par::map_slice(&jobs, |((d, p), prev)| train_one(cfg, &series, d, *p, prev.clone()));
    let mut written = Vec::new();
    for ((d, p), res) in pairs.iter().zip(results) {
        let art = res?;
        write_forecasts(&forecast_path(&cfg.out, d, *p), &art.test, &art.outcome)?;
        write_activations(&activations_path(&cfg.out, d, *p), &art.train, &art.outcome)?;
        let path = report_path(&cfg.out, d, *p);
        art.report.write(&path)?;
        written.push(path);
    }
    Ok(written)
}

/// Benchmark rows for one period, scored on the test dates of `test`.
pub fn benchmark_rows(series: &TimeSeries, period: Period) -> Result<BenchmarkSection> {
    let (tr, _va, te) = split_for(series, &DatasetSpec::D3, period)?;
    let start = series.position(te.dates[0]).expect("test dates come from the series");
    let range = start..start + te.len();
    let valid_start = series.position(match period.resolve(series)? {
        crate::data::SplitSpec::Dates { valid_start, .. } => valid_start,
        crate::data::SplitSpec::Ratios(_) => unreachable!("periods resolve to dates"),
    });
    let history = &series.values[..valid_start.unwrap_or(start)];
    let actual = &te.targets;

    let mut rows = Vec::new();
    let naive = forward_fill_forecast(&series.values, range.clone())?;
    rows.push(BenchmarkRow::new(
        "Forward filling".into(),
        &compute_metrics(actual, &naive)?,
        0,
    ));
    for quarterly in [false, true] {
        let har = fit_har(&tr, quarterly)?;
        let f = rolling_forecast(&ForecastModel::Har(har), &series.values, range.clone())?;
        rows.push(BenchmarkRow::new(
            har.name().into(),
            &compute_metrics(actual, &f)?,
            har.param_count(),
        ));
    }
    let (arma_order, _, _) = select_pq(history, 0)?;
    let arma = fit_arma(history, arma_order)?;
    let f = rolling_forecast(&ForecastModel::Arima(arma.clone()), &series.values, range.clone())?;
    rows.push(BenchmarkRow::new(
        arma_order.name(),
        &compute_metrics(actual, &f)?,
        arma.param_count(),
    ));
    let sel = select_order(history)?;
    let arima = fit_arma(history, sel.order)?;
    let f = rolling_forecast(&ForecastModel::Arima(arima.clone()), &series.values, range)?;
    rows.push(BenchmarkRow::new(
        sel.order.name(),
        &compute_metrics(actual, &f)?,
        arima.param_count(),
    ));
    Ok(BenchmarkSection {
        test_rows: te.len(),
        rows,
        arima_kpss: sel.kpss,
    })
}

pub fn cmd_benchmark(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let series = cfg.load_vix()?;
    ensure_out(cfg)?;
    let periods = cfg.period_list()?;
    let sections = par::map_slice(&periods, |&p| benchmark_rows(&series, p));
    let sections = sections.into_iter().collect::<Result<Vec<_>>>()?;
    let mut written = Vec::new();
    for d in cfg.dataset_specs()? {
        for (&p, section) in periods.iter().zip(&sections) {
            let path = report_path(&cfg.out, &d, p);
            let mut report = Report::load_or_new(&path, cfg, &d, p)?;
            report.benchmarks = Some(section.clone());
            report.write(&path)?;
            written.push(path);
        }
    }
    Ok(written)
}

pub fn cmd_leverage(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let pairs = grid(cfg)?;
    for (d, p) in &pairs {
        for path in [report_path(&cfg.out, d, *p), forecast_path(&cfg.out, d, *p)] {
            if !path.is_file() {
                return Err(Error::MissingBaseReport(path));
            }
        }
    }
    let actuals = cfg.load_vix()?;
    let returns = cfg.load_returns()?;
    let lcfg = LeverageConfig {
        init: cfg.init(),
        train: TrainConfig {
            seed: cfg.seed,
            ..cfg.train
        },
    };
    let results = par::map_slice(&pairs, |(d, p)| -> Result<LeverageSection> {
        let forecasts = load_csv(&forecast_path(&cfg.out, d, *p), "date", "forecast")?;
        let ds = build_leverage_dataset(&forecasts, &returns, &actuals)?;
        let out = fit_leverage(&ds, &lcfg)?;
        Ok(LeverageSection {
            formula: out.closed_form.render_with_precision(AUGMENTED_SYMBOL, FORMULA_DIGITS),
            formula_full_precision: out.closed_form.render_as(AUGMENTED_SYMBOL),
            a: out.a,
            b: out.b,
            c: out.c,
            rows: ds.len(),
            dropped_rows: out.dropped_rows,
            base_r2: out.base_r2,
            r2: out.metrics.r2,
            spline_r2: out.spline_r2,
            r2_improvement: out.r2_improvement,
            non_linear_fit_warning: out.non_linear_fit_warning,
            in_sample: true,
            training: out.training,
        })
    });
    let mut written = Vec::new();
    for ((d, p), section) in pairs.iter().zip(results) {
        let path = report_path(&cfg.out, d, *p);
        let mut report = Report::read(&path)?;
        report.leverage = Some(section?);
        report.write(&path)?;
        written.push(path);
    }
    Ok(written)
}

pub fn simulated_path(out: &Path) -> PathBuf {
    out.join("synthetic_ou.csv")
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.simulate.validate()?;
    ensure_out(cfg)?;
    let path = simulated_path(&cfg.out);
    simulate_ou(&cfg.simulate).write_csv(&path, "close")?;
    Ok(path)
}

fn metrics_line(label: &str, m: &MetricsReport) -> String {
    format!(
        "  {label:<18} {:>10.4} {:>10.4} {:>9.3} {:>8.4} {:>9.5}\n",
        m.mse, m.mae, m.mape, m.r2, m.qlike
    )
}

/// Text tables for one report.
pub fn render_report(r: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "== {} {} (kanvix {}, config {}) ==",
        r.dataset,
        r.period,
        r.version,
        &r.config_hash[..12.min(r.config_hash.len())]
    );
    if let Some(t) = &r.training {
        let _ = writeln!(
            s,
            "shape {:?}; rows train/valid/test {}/{}/{}; test {} .. {}",
            t.shape, t.split.train_rows, t.split.valid_rows, t.split.test_rows, t.split.test_start, t.split.test_end
        );
        let _ = writeln!(
            s,
            "epochs {} (best {}, {:?}); params {} unpruned, {} pruned, {} symbolic",
            t.spline.epochs,
            t.spline.best_epoch,
            t.spline.stop_reason,
            t.param_count,
            t.param_count_pruned,
            t.param_count_symbolic
        );
    }
    if let Some(p) = &r.pruning {
        if !p.disconnected_inputs.is_empty() {
            let _ = writeln!(s, "pruned inputs: {}", p.disconnected_inputs.join(", "));
        }
    }
    if let Some(c) = &r.closed_form {
        let _ = writeln!(s, "{}", c.formula);
        if let Some(m) = &c.mean_reversion {
            let _ = writeln!(
                s,
                "mean reversion: kappa {:.4}, residual mean {:.4}, level mean {:.2}",
                m.kappa, m.residual_mean, m.level_mean
            );
        }
    }
    let header = format!(
        "  {:<18} {:>10} {:>10} {:>9} {:>8} {:>9}",
        "model", "MSE", "MAE", "MAPE", "R2", "QLIKE"
    );
    if let Some(m) = &r.metrics {
        let _ = writeln!(s, "{header}");
        s.push_str(&metrics_line("KAN (spline)", &m.spline));
        s.push_str(&metrics_line("KAN (symbolic)", &m.symbolic));
    }
    if let Some(st) = &r.statistics {
        let mz = &st.mincer_zarnowitz;
        let _ = writeln!(
            s,
            "Mincer-Zarnowitz: alpha {:.4}, beta {:.4}, F {:.4}, p {:.4}; Durbin-Watson {:.4}",
            mz.alpha_hat, mz.beta_hat, mz.f_statistic, mz.p_value, st.durbin_watson.statistic
        );
    }
    if let Some(b) = &r.benchmarks {
        let _ = writeln!(s, "{header} {:>7}", "params");
        for row in &b.rows {
            let _ = writeln!(
                s,
                "  {:<18} {:>10.4} {:>10.4} {:>9.3} {:>8.4} {:>9.5} {:>7}",
                row.model, row.mse, row.mae, row.mape, row.r2, row.qlike, row.params
            );
        }
    }
    if let Some(l) = &r.leverage {
        let _ = writeln!(
            s,
            "{}  (R2 {:.4}, {:+.4} over base{})",
            l.formula,
            l.r2,
            l.r2_improvement,
            if l.non_linear_fit_warning {
                "; non-linear fit warning"
            } else {
                ""
            }
        );
    }
    s
}

pub fn cmd_report(cfg: &ExperimentConfig, files: &[PathBuf]) -> Result<String> {
    let mut paths = files.to_vec();
    if paths.is_empty() {
        let entries = std::fs::read_dir(&cfg.out).map_err(|_| Error::FileNotFound(cfg.out.clone()))?;
        for e in entries {
            let p = e?.path();
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.starts_with("report_") && name.ends_with(".json") {
                paths.push(p);
            }
        }
        paths.sort();
    }
    let mut text = String::new();
    for p in &paths {
        text.push_str(&render_report(&Report::read(p)?));
        text.push('\n');
    }
    Ok(text)
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.flags.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_flags(&cli.flags);
    cfg.validate()?;
    par::set_threads(cfg.threads);
    if matches!(cli.command, Command::Train | Command::Benchmark | Command::Leverage) {
        cfg.check_inputs()?;
    }
    match &cli.command {
        Command::Train => {
            for p in cmd_train(&cfg)? {
                println!("{}", p.display());
            }
        }
        Command::Benchmark => {
            for p in cmd_benchmark(&cfg)? {
                println!("{}", p.display());
            }
        }
        Command::Leverage => {
            for p in cmd_leverage(&cfg)? {
                println!("{}", p.display());
            }
        }
        Command::Simulate => println!("{}", cmd_simulate(&cfg)?.display()),
        Command::Report { files } => print!("{}", cmd_report(&cfg, files)?),
    }
    Ok(())
}

/// Kind of an error as a short identifier (the variant name).
pub fn error_kind(e: &Error) -> String {
    let dbg = format!("{e:?}");
    dbg.split(|c: char| !c.is_alphanumeric())
        .next()
        .unwrap_or("Error")
        .to_string()
}

/// Parses `args`, runs the command and returns the process exit code;
/// failures are reported on stderr as one JSON object.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let msg = serde_json::json!({
                "error": error_kind(&e),
                "message": e.to_string(),
                "exit_code": e.exit_code(),
            });
            eprintln!("{msg}");
            e.exit_code()
        }
    }
}
