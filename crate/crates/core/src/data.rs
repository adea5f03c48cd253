//! Series ingestion, lag/average feature construction, chronological splits,
//! excess returns and a synthetic mean-reverting generator.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::Batch;

/// Dated observations with strictly increasing dates and finite values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::LengthMismatch {
                left: dates.len(),
                right: values.len(),
            });
        }
        for (i, w) in dates.windows(2).enumerate() {
            if w[1] == w[0] {
                return Err(Error::DuplicateDate(w[1]));
            }
            if w[1] < w[0] {
                return Err(Error::Parse {
                    row: i + 2,
                    message: format!("dates not increasing at {}", w[1]),
                });
            }
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                row: i + 1,
                message: "non-finite value".into(),
            });
        }
        Ok(Self { dates, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of `date`, if present.
    pub fn position(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// Value on the last date at or before `date`.
    pub fn value_at_or_before(&self, date: NaiveDate) -> Option<f64> {
        match self.dates.binary_search(&date) {
            Ok(i) => Some(self.values[i]),
            Err(0) => None,
            Err(i) => Some(self.values[i - 1]),
        }
    }

    /// Writes a two-column CSV (`date,<value_header>`).
    pub fn write_csv(&self, path: &Path, value_header: &str) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["date", value_header])?;
        for (d, v) in self.dates.iter().zip(&self.values) {
            w.write_record([d.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Accepted date layouts: ISO (`2004-01-02`) and US (`01/02/2004`).
const DATE_FORMATS: [&str; 2] = ["%Y-%m-%d", "%m/%d/%Y"];

/// Loads a dated series from a CSV file with a header row.
///
/// Rows are sorted by date. An empty cell or a lone `.` (the usual marker for
/// a missing observation in published rate series) skips the row; any other
/// unparseable cell is an error carrying its line number.
pub fn load_csv(path: &Path, date_column: &str, value_column: &str) -> Result<TimeSeries> {
    let file = File::open(path).map_err(|_| Error::FileNotFound(path.to_path_buf()))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Parse {
                row: 1,
                message: format!("missing column `{name}`"),
            })
    };
    let (di, vi) = (find(date_column)?, find(value_column)?);
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record?;
        let (ds, vs) = (record.get(di).unwrap_or(""), record.get(vi).unwrap_or(""));
        let date = DATE_FORMATS
            .iter()
            .find_map(|f| NaiveDate::parse_from_str(ds, f).ok())
            .ok_or_else(|| Error::Parse {
                row,
                message: format!("bad date `{ds}`"),
            })?;
        if vs.is_empty() || vs == "." {
            continue;
        }
        let value: f64 = vs.parse().map_err(|_| Error::Parse {
            row,
            message: format!("bad value `{vs}`"),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                row,
                message: format!("non-finite value `{vs}`"),
            });
        }
        points.push((date, value));
    }
    points.sort_by_key(|p| p.0);
    if let Some(w) = points.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateDate(w[0].0));
    }
    let (dates, values) = points.into_iter().unzip();
    TimeSeries::new(dates, values)
}

/// Feature layout of a forecasting dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetSpec {
    /// Lags 1 to 5.
    D1,
    /// Lags 1, 5, 10 and 21.
    D2,
    /// Lag 1 plus weekly, monthly and quarterly averages.
    D3,
    CustomLags(Vec<usize>),
}

/// Averaging windows (in trading days) used by [`DatasetSpec::D3`].
pub const AVERAGE_WINDOWS: [usize; 3] = [5, 21, 63];

pub fn lag_name(k: usize) -> String {
    format!("V_{{t-{k}}}")
}

impl DatasetSpec {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "d1" | "1" => Ok(Self::D1),
            "d2" | "2" => Ok(Self::D2),
            "d3" | "3" => Ok(Self::D3),
            other => Err(Error::Config(format!("unknown dataset `{other}`"))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::D1 => "d1".into(),
            Self::D2 => "d2".into(),
            Self::D3 => "d3".into(),
            Self::CustomLags(l) => format!("lags{}", l.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("_")),
        }
    }

    fn lags(&self) -> Vec<usize> {
        match self {
            Self::D1 => (1..=5).collect(),
            Self::D2 => vec![1, 5, 10, 21],
            Self::D3 => vec![1],
            Self::CustomLags(l) => l.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Self::CustomLags(l) = self {
            if l.is_empty() || l[0] == 0 || l.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config(
                    "custom lags must be positive and strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }

    /// Number of past observations a row needs.
    pub fn lookback(&self) -> usize {
        match self {
            Self::D3 => AVERAGE_WINDOWS[2],
            _ => self.lags().last().copied().unwrap_or(0),
        }
    }

    pub fn feature_names(&self) -> Vec<String> {
        match self {
            Self::D3 => vec![lag_name(1), "V_w".into(), "V_m".into(), "V_q".into()],
            _ => self.lags().into_iter().map(lag_name).collect(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.feature_names().len()
    }
}

/// Row-aligned features and targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub dates: Vec<NaiveDate>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn batch(&self) -> Batch<'_> {
        Batch::new(&self.rows, &self.targets)
    }

    /// Column `j` as a vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            names: self.names.clone(),
            rows: self.rows[range.clone()].to_vec(),
            targets: self.targets[range.clone()].to_vec(),
            dates: self.dates[range].to_vec(),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["date".to_string()];
        header.extend(self.names.iter().cloned());
        header.push("target".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![self.dates[i].to_string()];
            rec.extend(self.rows[i].iter().map(|v| v.to_string()));
            rec.push(self.targets[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds one row per target index `t >= lookback`, using only values before `t`.
pub fn build_features(series: &TimeSeries, spec: &DatasetSpec) -> Result<FeatureMatrix> {
    spec.validate()?;
    let lookback = spec.lookback();
    let n = series.len();
    if n <= lookback {
        return Err(Error::InsufficientHistory {
            needed: lookback + 1,
            have: n,
        });
    }
    let v = &series.values;
    // prefix sums for the window averages
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + v[i];
    }
    let mean_before = |t: usize, w: usize| (prefix[t] - prefix[t - w]) / w as f64;
    let lags = spec.lags();
    let mut rows = Vec::with_capacity(n - lookback);
    for t in lookback..n {
        let row = match spec {
            DatasetSpec::D3 => {
                let mut r = vec![v[t - 1]];
                r.extend(AVERAGE_WINDOWS.iter().map(|&w| mean_before(t, w)));
                r
            }
            _ => lags.iter().map(|&k| v[t - k]).collect(),
        };
        rows.push(row);
    }
    Ok(FeatureMatrix {
        names: spec.feature_names(),
        rows,
        targets: v[lookback..].to_vec(),
        dates: series.dates[lookback..].to_vec(),
    })
}

/// How rows are divided into training, validation and test segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitSpec {
    /// Integer train:valid:test ratios over row counts.
    Ratios([u32; 3]),
    /// Rows with target date before `valid_start` train, before `test_start`
    /// validate, the rest test.
    Dates {
        valid_start: NaiveDate,
        test_start: NaiveDate,
    },
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Ratios(r) if r.contains(&0) => Err(Error::InvalidSplit("ratios must be positive".into())),
            Self::Dates {
                valid_start,
                test_start,
            } if valid_start >= test_start => Err(Error::InvalidSplit("validation must start before test".into())),
            _ => Ok(()),
        }
    }
}

/// Segment sizes for a ratio split of `n` rows; the rounding remainder goes to
/// the training segment.
pub fn ratio_counts(n: usize, ratios: [u32; 3]) -> [usize; 3] {
    let total: u64 = ratios.iter().map(|&r| r as u64).sum();
    let valid = (n as u64 * ratios[1] as u64 / total) as usize;
    let test = (n as u64 * ratios[2] as u64 / total) as usize;
    [n - valid - test, valid, test]
}

/// Chronological split into (train, valid, test).
pub fn split(fm: &FeatureMatrix, spec: &SplitSpec) -> Result<(FeatureMatrix, FeatureMatrix, FeatureMatrix)> {
    spec.validate()?;
    if fm.is_empty() {
        return Err(Error::EmptySegment("train"));
    }
    let (a, b) = match *spec {
        SplitSpec::Ratios(r) => {
            let [tr, va, _] = ratio_counts(fm.len(), r);
            (tr, tr + va)
        }
        SplitSpec::Dates {
            valid_start,
            test_start,
        } => (
            fm.dates.partition_point(|d| *d < valid_start),
            fm.dates.partition_point(|d| *d < test_start),
        ),
    };
    let n = fm.len();
    for (name, len) in [("train", a), ("valid", b - a), ("test", n - b)] {
        if len == 0 {
            return Err(Error::EmptySegment(name));
        }
    }
    Ok((fm.slice(0..a), fm.slice(a..b), fm.slice(b..n)))
}

/// The three evaluation periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Period {
    /// Validation 2016–2017, test from 2018.
    P1,
    /// 7:1:2.
    P2,
    /// 8:1:1.
    P3,
}

impl Period {
    pub const ALL: [Period; 3] = [Period::P1, Period::P2, Period::P3];

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().trim_start_matches('p') {
            "1" => Ok(Self::P1),
            "2" => Ok(Self::P2),
            "3" => Ok(Self::P3),
            _ => Err(Error::Config(format!("unknown period `{s}`"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::P1 => "p1",
            Self::P2 => "p2",
            Self::P3 => "p3",
        }
    }

    /// Date boundaries for this period on `series`. Ratio periods are
    /// resolved on the raw series so that every dataset built from it shares
    /// the same validation and test dates.
    pub fn resolve(&self, series: &TimeSeries) -> Result<SplitSpec> {
        let ratios = match self {
            Self::P1 => {
                return Ok(SplitSpec::Dates {
                    valid_start: NaiveDate::from_ymd_opt(2016, 1, 1).expect("valid date"),
                    test_start: NaiveDate::from_ymd_opt(2018, 1, 1).expect("valid date"),
                })
            }
            Self::P2 => [7, 1, 2],
            Self::P3 => [8, 1, 1],
        };
        let [tr, va, te] = ratio_counts(series.len(), ratios);
        if tr == 0 || va == 0 || te == 0 {
            return Err(Error::EmptySegment(if va == 0 { "valid" } else { "test" }));
        }
        Ok(SplitSpec::Dates {
            valid_start: series.dates[tr],
            test_start: series.dates[tr + va],
        })
    }
}

/// Daily excess returns in percent: `(P_t/P_{t-1} - 1 - y_t/252/100) * 100`,
/// with the annualized yield `y` forward-filled to each price date.
pub fn excess_returns(prices: &TimeSeries, rf_annualized: &TimeSeries) -> Result<TimeSeries> {
    let mut dates = Vec::with_capacity(prices.len().saturating_sub(1));
    let mut values = Vec::with_capacity(prices.len().saturating_sub(1));
    for t in 1..prices.len() {
        let date = prices.dates[t];
        let y = rf_annualized.value_at_or_before(date).ok_or(Error::MissingRate(date))?;
        let gross = prices.values[t] / prices.values[t - 1];
        values.push((gross - 1.0 - y / 252.0 / 100.0) * 100.0);
        dates.push(date);
    }
    TimeSeries::new(dates, values)
}

/// Discretized mean-reverting process settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticOuConfig {
    pub kappa: f64,
    pub theta: f64,
    pub noise_scale: f64,
    pub n: usize,
    pub seed: u64,
    pub v0: f64,
}

impl Default for SyntheticOuConfig {
    fn default() -> Self {
        Self {
            kappa: 0.15,
            theta: 20.0,
            noise_scale: 1.0,
            n: 4000,
            seed: 0,
            v0: 20.0,
        }
    }
}

/// Lower bound applied to simulated values.
pub const OU_FLOOR: f64 = 0.01;

impl SyntheticOuConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa < 2.0) {
            return Err(Error::Config("kappa must lie in (0, 2)".into()));
        }
        if !(self.theta > 0.0) || !(self.noise_scale >= 0.0) || !self.v0.is_finite() {
            return Err(Error::Config("theta must be positive, noise_scale nonnegative".into()));
        }
        Ok(())
    }
}

/// Business days (Monday–Friday) starting at `start` (rolled forward if it
/// falls on a weekend).
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date in range");
    }
    out
}

/// Simulates `V_t = V_{t-1} + κ(θ − V_{t-1}) + σ z_t` from `V_0 = v0`, floored
/// at [`OU_FLOOR`], on synthetic business-day dates from 2000-01-03.
pub fn simulate_ou(config: &SyntheticOuConfig) -> TimeSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut values = Vec::with_capacity(config.n);
    let mut v = config.v0;
    for i in 0..config.n {
        if i > 0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            v = (v + config.kappa * (config.theta - v) + config.noise_scale * z).max(OU_FLOOR);
        }
        values.push(v);
    }
    let start = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
    TimeSeries {
        dates: business_days(start, config.n),
        values,
    }
}

/// Writes arbitrary text atomically enough for reports (create + write).
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn series(values: Vec<f64>) -> TimeSeries {
        let dates = business_days(d(2004, 1, 1), values.len());
        TimeSeries::new(dates, values).unwrap()
    }

    fn csv_file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_two_rows() {
        let f = csv_file("date,close\n2020-01-02,12.47\n2020-01-03,14.02\n");
        let s = load_csv(f.path(), "date", "close").unwrap();
        assert_eq!(s.values, vec![12.47, 14.02]);
        assert_eq!(s.dates, vec![d(2020, 1, 2), d(2020, 1, 3)]);
    }

    #[test]
    fn loads_us_dates() {
        let f = csv_file("DATE,OPEN,HIGH,LOW,CLOSE\n01/02/2004,17.96,18.68,17.54,18.22\n");
        let s = load_csv(f.path(), "date", "close").unwrap();
        assert_eq!((s.dates[0], s.values[0]), (d(2004, 1, 2), 18.22));
    }

    #[test]
    fn sorts_unsorted_rows() {
        let f = csv_file("date,close\n2020-01-03,14.02\n2020-01-02,12.47\n");
        let s = load_csv(f.path(), "date", "close").unwrap();
        assert_eq!(s.values, vec![12.47, 14.02]);
    }

    #[test]
    fn rejects_duplicates_and_garbage() {
        let f = csv_file("date,close\n2020-01-02,1\n2020-01-02,2\n");
        assert!(matches!(load_csv(f.path(), "date", "close"), Err(Error::DuplicateDate(x)) if x == d(2020, 1, 2)));
        let f = csv_file("date,close\n2020-01-02,1\n2020-01-03,abc\n");
        assert!(matches!(
            load_csv(f.path(), "date", "close"),
            Err(Error::Parse { row: 3, .. })
        ));
        assert!(matches!(
            load_csv(Path::new("/nonexistent/vix.csv"), "date", "close"),
            Err(Error::FileNotFound(_))
        ));
    }

    #[test]
    fn skips_missing_markers() {
        let f = csv_file("DATE,DGS1MO\n2020-01-02,1.5\n2020-01-03,.\n2020-01-06,1.6\n");
        let s = load_csv(f.path(), "date", "dgs1mo").unwrap();
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn constant_series_d3() {
        let fm = build_features(&series(vec![7.5; 100]), &DatasetSpec::D3).unwrap();
        assert_eq!(fm.len(), 37);
        assert!(fm.rows.iter().flatten().all(|&v| v == 7.5));
    }

    #[test]
    fn weekly_average() {
        let mut v = vec![0.0; 63];
        v.extend([10.0, 20.0, 30.0, 40.0, 50.0, 0.0]);
        let fm = build_features(&series(v), &DatasetSpec::D3).unwrap();
        // target index 68 sees the five values 10..50 just before it
        assert_eq!(fm.rows[5][1], 30.0);
    }

    #[test]
    fn ramp_monthly_average() {
        let v: Vec<f64> = (0..200).map(|i| i as f64).collect();
        let fm = build_features(&series(v), &DatasetSpec::D3).unwrap();
        for (row, &t) in fm.rows.iter().zip(&fm.targets) {
            assert!((row[2] - (t - 11.0)).abs() < 1e-12);
            assert_eq!(row[0], t - 1.0);
        }
    }

    #[test]
    fn lag_layouts() {
        let v: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let s = series(v);
        let d1 = build_features(&s, &DatasetSpec::D1).unwrap();
        assert_eq!(d1.rows[0], vec![4.0, 3.0, 2.0, 1.0, 0.0]);
        assert_eq!(d1.targets[0], 5.0);
        let d2 = build_features(&s, &DatasetSpec::D2).unwrap();
        assert_eq!(d2.rows[0], vec![20.0, 16.0, 11.0, 0.0]);
        assert_eq!(d2.targets[0], 21.0);
        assert_eq!(d2.names, vec!["V_{t-1}", "V_{t-5}", "V_{t-10}", "V_{t-21}"]);
        assert!(matches!(
            build_features(&series(vec![1.0; 63]), &DatasetSpec::D3),
            Err(Error::InsufficientHistory { needed: 64, have: 63 })
        ));
    }

    #[test]
    fn d3_averages_match_direct_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..300).map(|_| StandardNormal.sample(&mut rng)).collect::<Vec<f64>>();
        let s = series(v.clone());
        let fm = build_features(&s, &DatasetSpec::D3).unwrap();
        for (i, row) in fm.rows.iter().enumerate() {
            let t = i + 63;
            for (j, &w) in AVERAGE_WINDOWS.iter().enumerate() {
                let m: f64 = v[t - w..t].iter().sum::<f64>() / w as f64;
                assert!((row[j + 1] - m).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ratio_splits() {
        let fm = build_features(&series((0..105).map(|i| i as f64).collect()), &DatasetSpec::D1).unwrap();
        let (a, b, c) = split(&fm, &SplitSpec::Ratios([8, 1, 1])).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (80, 10, 10));
        let small = build_features(&series((0..15).map(|i| i as f64).collect()), &DatasetSpec::D1).unwrap();
        let (a, b, c) = split(&small, &SplitSpec::Ratios([8, 1, 1])).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (8, 1, 1));
        assert_eq!(ratio_counts(11, [6, 1, 3]), [7, 1, 3]);
        let tiny = build_features(&series((0..8).map(|i| i as f64).collect()), &DatasetSpec::D1).unwrap();
        assert!(matches!(
            split(&tiny, &SplitSpec::Ratios([8, 1, 1])),
            Err(Error::EmptySegment(_))
        ));
    }

    #[test]
    fn period_one_dates() {
        let dates = business_days(d(2004, 1, 1), 5300);
        let s = TimeSeries::new(dates, vec![15.0; 5300]).unwrap();
        let fm = build_features(&s, &DatasetSpec::D1).unwrap();
        let (a, b, c) = split(&fm, &Period::P1.resolve(&s).unwrap()).unwrap();
        assert!(a.dates.iter().all(|x| x.year() <= 2015));
        assert!(b.dates.iter().all(|x| (2016..=2017).contains(&x.year())));
        assert!(c.dates.iter().all(|x| x.year() >= 2018));
        assert_eq!(a.dates[0].year(), 2004);
    }

    #[test]
    fn ratio_period_shared_across_datasets() {
        let s = series((0..1000).map(|i| i as f64).collect());
        let spec = Period::P3.resolve(&s).unwrap();
        let (_, _, t1) = split(&build_features(&s, &DatasetSpec::D1).unwrap(), &spec).unwrap();
        let (_, _, t3) = split(&build_features(&s, &DatasetSpec::D3).unwrap(), &spec).unwrap();
        assert_eq!(t1.dates, t3.dates);
        assert_eq!(t1.len(), 100);
    }

    proptest! {
        #[test]
        fn split_preserves_rows(n in 20usize..400, rt in 1u32..9, rv in 1u32..4, rs in 1u32..4) {
            let fm = build_features(&series((0..n).map(|i| i as f64).collect()), &DatasetSpec::D1).unwrap();
            if let Ok((a, b, c)) = split(&fm, &SplitSpec::Ratios([rt, rv, rs])) {
                let mut rows = a.rows.clone();
                rows.extend(b.rows.clone());
                rows.extend(c.rows.clone());
                prop_assert_eq!(rows, fm.rows.clone());
            }
        }

        #[test]
        fn no_look_ahead(n in 70usize..200) {
            let v: Vec<f64> = (0..n).map(|i| i as f64).collect();
            for spec in [DatasetSpec::D1, DatasetSpec::D2, DatasetSpec::D3] {
                let fm = build_features(&series(v.clone()), &spec).unwrap();
                for (row, &t) in fm.rows.iter().zip(&fm.targets) {
                    // on a ramp every feature is built from values below t
                    prop_assert!(row.iter().all(|&x| x < t));
                }
            }
        }
    }

    #[test]
    fn excess_return_examples() {
        let dates = vec![d(2020, 1, 2), d(2020, 1, 3)];
        let rf0 = TimeSeries::new(vec![d(2020, 1, 1)], vec![0.0]).unwrap();
        let flat = TimeSeries::new(dates.clone(), vec![100.0, 100.0]).unwrap();
        assert_eq!(excess_returns(&flat, &rf0).unwrap().values, vec![0.0]);
        let up = TimeSeries::new(dates.clone(), vec![100.0, 101.0]).unwrap();
        assert!((excess_returns(&up, &rf0).unwrap().values[0] - 1.0).abs() < 1e-12);
        let up2 = TimeSeries::new(dates.clone(), vec![100.0, 102.0]).unwrap();
        let rf = TimeSeries::new(vec![d(2019, 12, 31)], vec![2.52]).unwrap();
        assert!((excess_returns(&up2, &rf).unwrap().values[0] - 1.99).abs() < 1e-12);
        let late = TimeSeries::new(vec![d(2020, 2, 1)], vec![1.0]).unwrap();
        assert!(matches!(excess_returns(&up, &late), Err(Error::MissingRate(_))));
    }

    #[test]
    fn ou_examples() {
        let fixed = simulate_ou(&SyntheticOuConfig {
            noise_scale: 0.0,
            v0: 20.0,
            n: 50,
            ..Default::default()
        });
        assert!(fixed.values.iter().all(|&v| v == 20.0));
        let jump = simulate_ou(&SyntheticOuConfig {
            kappa: 1.0,
            noise_scale: 0.0,
            v0: 5.0,
            n: 3,
            ..Default::default()
        });
        assert_eq!(jump.values, vec![5.0, 20.0, 20.0]);
        let long = simulate_ou(&SyntheticOuConfig {
            kappa: 0.1,
            n: 100_000,
            seed: 11,
            ..Default::default()
        });
        let mean = long.values.iter().sum::<f64>() / long.len() as f64;
        assert!((mean - 20.0).abs() < 0.5, "{mean}");
        assert!(long
            .dates
            .iter()
            .all(|x| !matches!(x.weekday(), Weekday::Sat | Weekday::Sun)));
        let again = simulate_ou(&SyntheticOuConfig {
            kappa: 0.1,
            n: 100_000,
            seed: 11,
            ..Default::default()
        });
        assert_eq!(long, again);
        assert!(SyntheticOuConfig {
            kappa: 2.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
