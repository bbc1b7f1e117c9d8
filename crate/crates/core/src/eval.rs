//! Forecast metrics, the model x feature-set experiment and its report.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::DailyFeatureFrame;
use crate::nn::{train, window_dataset, Architecture, ModelSpec, TrainConfig, TrainedForecaster};

fn check_lengths(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: yhat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::InvalidInput("no values to score".into()));
    }
    Ok(())
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_lengths(y, yhat)?;
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sse / y.len() as f64).sqrt())
}

pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_lengths(y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

pub fn r2(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_lengths(y, yhat)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let total: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum();
    if total == 0.0 {
        return Err(Error::InvalidInput("targets have zero variance".into()));
    }
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - sse / total)
}

/// Mean absolute percentage error, in percent.
pub fn mape(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_lengths(y, yhat)?;
    if y.iter().any(|&a| a == 0.0) {
        return Err(Error::InvalidInput(
            "zero target in percentage error".into(),
        ));
    }
    Ok(100.0
        * y.iter()
            .zip(yhat)
            .map(|(a, b)| ((a - b) / a).abs())
            .sum::<f64>()
        / y.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
    pub mape: f64,
}

impl Metrics {
    pub fn compute(y: &[f64], yhat: &[f64]) -> Result<Metrics> {
        Ok(Metrics {
            rmse: rmse(y, yhat)?,
            mae: mae(y, yhat)?,
            r2: r2(y, yhat)?,
            mape: mape(y, yhat)?,
        })
    }

    fn median(all: &[Metrics]) -> Metrics {
        let med = |f: fn(&Metrics) -> f64| median(&all.iter().map(f).collect::<Vec<_>>());
        Metrics {
            rmse: med(|m| m.rmse),
            mae: med(|m| m.mae),
            r2: med(|m| m.r2),
            mape: med(|m| m.mape),
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Baseline,
    Sentiment,
    TopicSentiment,
}

impl Variant {
    pub const ALL: [Variant; 3] = [
        Variant::Baseline,
        Variant::Sentiment,
        Variant::TopicSentiment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Sentiment => "sentiment",
            Variant::TopicSentiment => "topic_sentiment",
        }
    }

    /// Column suffix in reports.
    fn suffix(self) -> &'static str {
        match self {
            Variant::Baseline => "",
            Variant::Sentiment => "(Vader)",
            Variant::TopicSentiment => "(Vader&TOPIC)",
        }
    }

    /// `(with_score, with_topic_score)`.
    pub fn flags(self, topic_keeps_score: bool) -> (bool, bool) {
        match self {
            Variant::Baseline => (false, false),
            Variant::Sentiment => (true, false),
            Variant::TopicSentiment => (topic_keeps_score, true),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Variant::Baseline),
            "sentiment" => Ok(Variant::Sentiment),
            "topic" | "topic_sentiment" => Ok(Variant::TopicSentiment),
            _ => Err(Error::Unknown {
                kind: "variant",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::Unknown {
                kind: "split",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub model: Architecture,
    pub variant: Variant,
    pub engine: String,
    pub split: Split,
    pub metrics: Metrics,
}

/// Metrics of one trained cell on one split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedMetrics {
    pub model: Architecture,
    pub variant: Variant,
    pub seed: u64,
    pub split: Split,
    pub metrics: Metrics,
}

fn parse_field<T: FromStr>(record: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
    let raw = record.get(i).unwrap_or("");
    raw.parse().map_err(|_| Error::Row {
        line,
        message: format!("cannot parse field {} `{raw}`", i + 1),
    })
}

fn parse_metrics(record: &csv::StringRecord, first: usize, line: u64) -> Result<Metrics> {
    Ok(Metrics {
        rmse: parse_field(record, first, line)?,
        mae: parse_field(record, first + 1, line)?,
        r2: parse_field(record, first + 2, line)?,
        mape: parse_field(record, first + 3, line)?,
    })
}

fn check_header(rdr: &mut csv::Reader<impl std::io::Read>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::InvalidInput(format!(
            "unexpected header {:?}, want {expected:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    Ok(())
}

const SEED_HEADER: [&str; 8] = [
    "model", "variant", "seed", "split", "rmse", "mae", "r2", "mape",
];
const REPORT_HEADER: [&str; 8] = [
    "model", "variant", "engine", "split", "rmse", "mae", "r2", "mape",
];

pub fn write_seed_metrics<W: std::io::Write>(records: &[SeedMetrics], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(SEED_HEADER)?;
    for r in records {
        let m = r.metrics;
        wtr.write_record([
            r.model.as_str().to_string(),
            r.variant.as_str().to_string(),
            r.seed.to_string(),
            r.split.as_str().to_string(),
            format!("{:?}", m.rmse),
            format!("{:?}", m.mae),
            format!("{:?}", m.r2),
            format!("{:?}", m.mape),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<metrics writer>", e))?;
    Ok(())
}

pub fn read_seed_metrics<R: std::io::Read>(reader: R) -> Result<Vec<SeedMetrics>> {
    let mut rdr = csv::Reader::from_reader(reader);
    check_header(&mut rdr, &SEED_HEADER)?;
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i as u64 + 2;
        out.push(SeedMetrics {
            model: parse_field(&record, 0, line)?,
            variant: parse_field(&record, 1, line)?,
            seed: parse_field(&record, 2, line)?,
            split: parse_field(&record, 3, line)?,
            metrics: parse_metrics(&record, 4, line)?,
        });
    }
    Ok(out)
}

/// Reads rows written by [`emit_report`] in CSV format.
pub fn read_report_csv<R: std::io::Read>(reader: R) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    check_header(&mut rdr, &REPORT_HEADER)?;
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i as u64 + 2;
        out.push(MetricsRow {
            model: parse_field(&record, 0, line)?,
            variant: parse_field(&record, 1, line)?,
            engine: record.get(2).unwrap_or("").to_string(),
            split: parse_field(&record, 3, line)?,
            metrics: parse_metrics(&record, 4, line)?,
        });
    }
    Ok(out)
}

/// Median over seeds of every (model, variant, split) group, sorted.
pub fn aggregate(records: &[SeedMetrics], engine: &str) -> Vec<MetricsRow> {
    let mut keys: Vec<(Architecture, Variant, Split)> = records
        .iter()
        .map(|r| (r.model, r.variant, r.split))
        .collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(model, variant, split)| {
            let all: Vec<Metrics> = records
                .iter()
                .filter(|r| r.model == model && r.variant == variant && r.split == split)
                .map(|r| r.metrics)
                .collect();
            MetricsRow {
                model,
                variant,
                engine: engine.to_string(),
                split,
                metrics: Metrics::median(&all),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub models: Vec<Architecture>,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub lookback: usize,
    pub train: TrainConfig,
    /// Overrides the default widths of an architecture.
    pub specs: Vec<ModelSpec>,
    /// Topic variant keeps `score` next to `score_topic`.
    pub topic_keeps_score: bool,
    pub engine: String,
}

impl ExperimentConfig {
    pub fn new(
        models: Vec<Architecture>,
        variants: Vec<Variant>,
        seeds: Vec<u64>,
    ) -> ExperimentConfig {
        ExperimentConfig {
            models,
            variants,
            seeds,
            lookback: 5,
            train: TrainConfig::new(0),
            specs: Vec::new(),
            topic_keeps_score: false,
            engine: "lexicon".into(),
        }
    }

    fn spec(&self, arch: Architecture) -> ModelSpec {
        self.specs
            .iter()
            .copied()
            .find(|s| s.arch == arch)
            .unwrap_or_else(|| ModelSpec::new(arch))
    }
}

/// One trained (model, variant, seed) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRun {
    pub model: Architecture,
    pub variant: Variant,
    pub seed: u64,
    pub forecaster: TrainedForecaster,
    pub train_actual: Vec<f64>,
    pub test_actual: Vec<f64>,
    pub train_dates: Vec<NaiveDate>,
    pub test_dates: Vec<NaiveDate>,
    pub train_metrics: Metrics,
    pub test_metrics: Metrics,
}

impl CellRun {
    pub fn name(&self) -> String {
        format!("{}_{}_seed{}", self.model, self.variant, self.seed)
    }

    pub fn seed_metrics(&self) -> [SeedMetrics; 2] {
        [
            (Split::Train, self.train_metrics),
            (Split::Test, self.test_metrics),
        ]
        .map(|(split, metrics)| SeedMetrics {
            model: self.model,
            variant: self.variant,
            seed: self.seed,
            split,
            metrics,
        })
    }

    pub fn write_predictions<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["date", "split", "actual", "predicted"])?;
        let train = self
            .train_dates
            .iter()
            .zip(&self.train_actual)
            .zip(&self.forecaster.train_predictions)
            .map(|((d, a), p)| (d, Split::Train, a, p));
        let test = self
            .test_dates
            .iter()
            .zip(&self.test_actual)
            .zip(&self.forecaster.test_predictions)
            .map(|((d, a), p)| (d, Split::Test, a, p));
        for (d, split, a, p) in train.chain(test) {
            wtr.write_record([
                d.to_string(),
                split.as_str().to_string(),
                format!("{a:?}"),
                format!("{p:?}"),
            ])?;
        }
        wtr.flush()
            .map_err(|e| Error::io("<prediction writer>", e))?;
        Ok(())
    }
}

/// One line of a predictions file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub date: NaiveDate,
    pub split: Split,
    pub actual: f64,
    pub predicted: f64,
}

/// Reads a file written by [`CellRun::write_predictions`].
pub fn read_predictions<R: std::io::Read>(reader: R) -> Result<Vec<Prediction>> {
    let mut rdr = csv::Reader::from_reader(reader);
    check_header(&mut rdr, &["date", "split", "actual", "predicted"])?;
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i as u64 + 2;
        out.push(Prediction {
            date: parse_field(&record, 0, line)?,
            split: parse_field(&record, 1, line)?,
            actual: parse_field(&record, 2, line)?,
            predicted: parse_field(&record, 3, line)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    /// Median over seeds, sorted by (model, variant, split).
    pub rows: Vec<MetricsRow>,
    pub cells: Vec<CellRun>,
    pub seeds: Vec<u64>,
    pub config_snapshot: String,
}

impl ExperimentReport {
    pub fn row(&self, model: Architecture, variant: Variant, split: Split) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.variant == variant && r.split == split)
    }

    pub fn cells_for(
        &self,
        model: Architecture,
        variant: Variant,
    ) -> impl Iterator<Item = &CellRun> {
        self.cells
            .iter()
            .filter(move |c| c.model == model && c.variant == variant)
    }
}

fn run_cell(
    frame: &DailyFeatureFrame,
    config: &ExperimentConfig,
    model: Architecture,
    variant: Variant,
    seed: u64,
) -> Result<CellRun> {
    let (with_score, with_topic) = variant.flags(config.topic_keeps_score);
    let data = window_dataset(frame, config.lookback, with_score, with_topic)?;
    let train_cfg = TrainConfig {
        seed,
        ..config.train
    };
    let forecaster = train(config.spec(model), &data, &train_cfg)?;
    let train_actual = data.unscaled_targets(false);
    let test_actual = data.unscaled_targets(true);
    Ok(CellRun {
        model,
        variant,
        seed,
        train_metrics: Metrics::compute(&train_actual, &forecaster.train_predictions)?,
        test_metrics: Metrics::compute(&test_actual, &forecaster.test_predictions)?,
        train_dates: data.train_dates().to_vec(),
        test_dates: data.test_dates().to_vec(),
        forecaster,
        train_actual,
        test_actual,
    })
}

/// Trains every (model, variant, seed) cell and aggregates medians.
/// Cells run in parallel on the current rayon pool; results are ordered.
pub fn run_experiment(
    frame: &DailyFeatureFrame,
    config: &ExperimentConfig,
) -> Result<ExperimentReport> {
    if config.models.is_empty() || config.variants.is_empty() || config.seeds.is_empty() {
        return Err(Error::InvalidInput(
            "experiment needs at least one model, variant and seed".into(),
        ));
    }
    if config.variants.contains(&Variant::TopicSentiment) {
        frame.column(crate::frame::SCORE_TOPIC)?;
    }
    let mut jobs = Vec::new();
    for &m in &config.models {
        for &v in &config.variants {
            for &s in &config.seeds {
                jobs.push((m, v, s));
            }
        }
    }
    let cells = jobs
        .par_iter()
        .map(|&(m, v, s)| run_cell(frame, config, m, v, s))
        .collect::<Result<Vec<_>>>()?;
    let per_seed: Vec<SeedMetrics> = cells.iter().flat_map(CellRun::seed_metrics).collect();
    let rows = aggregate(&per_seed, &config.engine);
    Ok(ExperimentReport {
        rows,
        cells,
        seeds: config.seeds.clone(),
        config_snapshot: format!("{config:#?}"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(Error::Unknown {
                kind: "report format",
                name: s.to_string(),
            }),
        }
    }
}

const METRIC_NAMES: [&str; 4] = ["RMSE", "MAE", "R2", "MAPE"];

fn metric(m: &Metrics, i: usize) -> f64 {
    [m.rmse, m.mae, m.r2, m.mape][i]
}

fn fmt_value(v: f64) -> String {
    format!("{v:.3}")
}

pub fn emit_report(rows: &[MetricsRow], format: ReportFormat) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("report has no rows".into()));
    }
    match format {
        ReportFormat::Csv => {
            let mut wtr = csv::Writer::from_writer(Vec::new());
            wtr.write_record([
                "model", "variant", "engine", "split", "rmse", "mae", "r2", "mape",
            ])?;
            for r in rows {
                wtr.write_record([
                    r.model.as_str().to_string(),
                    r.variant.as_str().to_string(),
                    r.engine.clone(),
                    r.split.as_str().to_string(),
                    format!("{:?}", r.metrics.rmse),
                    format!("{:?}", r.metrics.mae),
                    format!("{:?}", r.metrics.r2),
                    format!("{:?}", r.metrics.mape),
                ])?;
            }
            let bytes = wtr
                .into_inner()
                .map_err(|e| Error::InvalidInput(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        ReportFormat::Markdown => Ok(markdown(rows)),
    }
}

/// One table per split: metrics down, model/variant pairs across. Within a
/// model the better value of each metric is bold.
fn markdown(rows: &[MetricsRow]) -> String {
    let mut models: Vec<Architecture> = rows.iter().map(|r| r.model).collect();
    models.sort();
    models.dedup();
    let mut variants: Vec<Variant> = rows.iter().map(|r| r.variant).collect();
    variants.sort();
    variants.dedup();
    let mut out = String::new();
    for split in [Split::Train, Split::Test] {
        let columns: Vec<(Architecture, Variant)> = models
            .iter()
            .flat_map(|&m| variants.iter().map(move |&v| (m, v)))
            .filter(|&(m, v)| {
                rows.iter()
                    .any(|r| r.model == m && r.variant == v && r.split == split)
            })
            .collect();
        if columns.is_empty() {
            continue;
        }
        let find = |m: Architecture, v: Variant| {
            rows.iter()
                .find(|r| r.model == m && r.variant == v && r.split == split)
                .unwrap()
        };
        out.push_str(&format!("### {} set\n\n", split.as_str()));
        out.push_str("| TITLE |");
        for (m, v) in &columns {
            out.push_str(&format!(" {}{} |", m.title(), v.suffix()));
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(columns.len()));
        out.push('\n');
        for (i, name) in METRIC_NAMES.iter().enumerate() {
            out.push_str(&format!("| {name} |"));
            for &(m, v) in &columns {
                let value = metric(&find(m, v).metrics, i);
                let peers: Vec<f64> = columns
                    .iter()
                    .filter(|(pm, _)| *pm == m)
                    .map(|&(pm, pv)| metric(&find(pm, pv).metrics, i))
                    .collect();
                let best = if *name == "R2" {
                    peers.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                } else {
                    peers.iter().copied().fold(f64::INFINITY, f64::min)
                };
                let cell = fmt_value(value);
                if peers.len() > 1 && value == best {
                    out.push_str(&format!(" **{cell}** |"));
                } else {
                    out.push_str(&format!(" {cell} |"));
                }
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}
