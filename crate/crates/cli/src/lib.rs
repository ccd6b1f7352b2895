//! Run configuration and subcommand implementations for the `gridwise`
//! binary.

use std::collections::HashSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use chrono::NaiveDate;
use gridwise::anomaly::{self, AnomalyConfig};
use gridwise::context::{self, TreeConfig};
use gridwise::evaluation::{self, SplitPredictions};
use gridwise::ingest::{self, Feature, FillPolicy, UnivariateSeries, TIMESTAMP_FORMAT};
use gridwise::lstm::{self, LstmConfig, LstmModel};
use gridwise::preprocess::{self, ScalerFit};
use gridwise::svr::{self, SvrConfig, SvrModel};

/// A problem with what the user supplied: flags, config, or input files.
/// Maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// 1 for runtime and model failures, 2 for usage and input errors.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<gridwise::Error>() {
            return match e {
                gridwise::Error::Diverged { .. } | gridwise::Error::Io(_) => 1,
                _ => 2,
            };
        }
    }
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Lstm,
    Svr,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lstm => "lstm",
            ModelKind::Svr => "svr",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_path: Option<PathBuf>,
    pub feature: Feature,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    pub fill_policy: FillPolicy,
    pub resample_minutes: u32,
    pub train_fraction: f64,
    pub fit_on: ScalerFit,
    pub lstm: LstmConfig,
    pub svr: SvrConfig,
    /// Include train-split metrics in the SVR report.
    pub svr_report_train: bool,
    pub anomaly: AnomalyConfig,
    pub tree: TreeConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Set when `lstm.seed` was given explicitly; otherwise derived from `seed`.
    lstm_seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_path: None,
            feature: Feature::default(),
            start: None,
            end: None,
            fill_policy: FillPolicy::default(),
            resample_minutes: 1,
            train_fraction: 0.8,
            fit_on: ScalerFit::default(),
            lstm: LstmConfig::default(),
            svr: SvrConfig::default(),
            svr_report_train: false,
            anomaly: AnomalyConfig::default(),
            tree: TreeConfig::default(),
            out_dir: PathBuf::from("out"),
            seed: 0,
            lstm_seed: None,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> anyhow::Result<T> {
    value
        .parse()
        .map_err(|_| usage(format!("invalid value `{value}` for `{key}`")))
}

fn parse_date(key: &str, value: &str) -> anyhow::Result<NaiveDate> {
    NaiveDate::parse_from_str(value, "%Y-%m-%d")
        .map_err(|_| usage(format!("invalid date `{value}` for `{key}` (expected YYYY-MM-DD)")))
}

fn parse_bool(key: &str, value: &str) -> anyhow::Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(usage(format!("invalid value `{value}` for `{key}` (expected true/false)"))),
    }
}

/// SplitMix64 finalizer; spreads one seed into independent per-stage seeds.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    let mut z = stage
        .bytes()
        .fold(seed, |acc, b| acc.rotate_left(8) ^ u64::from(b))
        .wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> anyhow::Result<()> {
        let v = value.trim();
        match key.trim() {
            "data.path" => self.data_path = Some(PathBuf::from(v)),
            "data.feature" => self.feature = parse_value(key, v)?,
            "data.start" => self.start = Some(parse_date(key, v)?),
            "data.end" => self.end = Some(parse_date(key, v)?),
            "data.fill_policy" => self.fill_policy = parse_value(key, v)?,
            "data.resample_minutes" => self.resample_minutes = parse_value(key, v)?,
            "split.train_fraction" => self.train_fraction = parse_value(key, v)?,
            "scaler.fit_on" => self.fit_on = parse_value(key, v)?,
            "lstm.lookback" => self.lstm.lookback = parse_value(key, v)?,
            "lstm.hidden_size" => self.lstm.hidden_size = parse_value(key, v)?,
            "lstm.epochs" => self.lstm.epochs = parse_value(key, v)?,
            "lstm.batch_size" => self.lstm.batch_size = parse_value(key, v)?,
            "lstm.learning_rate" => self.lstm.learning_rate = parse_value(key, v)?,
            "lstm.patience" => self.lstm.patience = parse_value(key, v)?,
            "lstm.min_improvement" => self.lstm.min_improvement = parse_value(key, v)?,
            "lstm.seed" => self.lstm_seed = Some(parse_value(key, v)?),
            "svr.lookback" => self.svr.lookback = parse_value(key, v)?,
            "svr.c" => self.svr.c = parse_value(key, v)?,
            "svr.epsilon" => self.svr.epsilon = parse_value(key, v)?,
            "svr.gamma" => {
                self.svr.gamma = match v {
                    "auto" => None,
                    _ => Some(parse_value(key, v)?),
                }
            }
            "svr.tolerance" => self.svr.tolerance = parse_value(key, v)?,
            "svr.max_passes" => self.svr.max_passes = parse_value(key, v)?,
            "svr.max_train_rows" => self.svr.max_train_rows = parse_value(key, v)?,
            "svr.report_train" => self.svr_report_train = parse_bool(key, v)?,
            "anomaly.window_length" => self.anomaly.window_length = parse_value(key, v)?,
            "anomaly.stride" => {
                self.anomaly.stride = match v {
                    "auto" => None,
                    _ => Some(parse_value(key, v)?),
                }
            }
            "anomaly.k" => self.anomaly.k = parse_value(key, v)?,
            "anomaly.percentile" => self.anomaly.percentile = parse_value(key, v)?,
            "anomaly.exclusion_radius" => self.anomaly.exclusion_radius = parse_value(key, v)?,
            "tree.max_depth" => self.tree.max_depth = parse_value(key, v)?,
            "tree.min_samples_leaf" => self.tree.min_samples_leaf = parse_value(key, v)?,
            "output.dir" => self.out_dir = PathBuf::from(v),
            "seed" => self.seed = parse_value(key, v)?,
            other => return Err(usage(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a config file: one `key = value` per line, `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> anyhow::Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("config line {}: expected `key = value`", i + 1)))?;
            self.set(key, value)
                .with_context(|| format!("config line {}", i + 1))?;
        }
        Ok(())
    }

    /// `--set key=value` overrides.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> anyhow::Result<()> {
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| usage(format!("--set expects key=value, got `{o}`")))?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(usage(format!(
                "split.train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.resample_minutes == 0 {
            return Err(usage("data.resample_minutes must be at least 1"));
        }
        if let (Some(s), Some(e)) = (self.start, self.end) {
            if s > e {
                return Err(usage("data.start is after data.end"));
            }
        }
        self.lstm_config().validate()?;
        self.svr.validate()?;
        self.anomaly.validate()?;
        if self.tree.min_samples_leaf == 0 {
            return Err(usage("tree.min_samples_leaf must be at least 1"));
        }
        Ok(())
    }

    /// LSTM settings with the stage seed filled in.
    pub fn lstm_config(&self) -> LstmConfig {
        LstmConfig {
            seed: self.lstm_seed.unwrap_or_else(|| stage_seed(self.seed, "lstm")),
            ..self.lstm.clone()
        }
    }

    /// Settings echoed into reports.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "data": {
                "feature": self.feature.to_string(),
                "start": self.start.map(|d| d.to_string()),
                "end": self.end.map(|d| d.to_string()),
                "fill_policy": self.fill_policy.to_string(),
                "resample_minutes": self.resample_minutes,
            },
            "split": { "train_fraction": self.train_fraction },
            "scaler": { "fit_on": self.fit_on.to_string() },
            "lstm": self.lstm_config(),
            "svr": self.svr,
            "anomaly": self.anomaly,
            "tree": self.tree,
            "seed": self.seed,
        })
    }
}

/// Common flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct CommonArgs {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub set: Vec<String>,
}

/// Loads the config file (if any) and layers flags on top.
pub fn load_config(args: &CommonArgs) -> anyhow::Result<RunConfig> {
    let mut config = RunConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        config
            .apply_text(&text)
            .with_context(|| format!("in {}", path.display()))?;
    }
    config.apply_overrides(&args.set)?;
    if let Some(out) = &args.out {
        config.out_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn open_input(path: &Path) -> anyhow::Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| usage(format!("cannot open {}: {e}", path.display())))
}

fn create_output(dir: &Path, name: &str) -> anyhow::Result<(PathBuf, BufWriter<File>)> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok((path, BufWriter::new(file)))
}

fn finish(mut w: BufWriter<File>) -> anyhow::Result<()> {
    w.flush()?;
    Ok(())
}

pub const SERIES_FILE: &str = "series.csv";

fn series_path(config: &RunConfig, explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.out_dir.join(SERIES_FILE))
}

fn load_series(path: &Path) -> anyhow::Result<UnivariateSeries> {
    ingest::read_series(open_input(path)?).with_context(|| format!("reading {}", path.display()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestSummary {
    pub records: usize,
    pub missing: usize,
    pub first: Option<chrono::NaiveDateTime>,
    pub last: Option<chrono::NaiveDateTime>,
    pub series_len: usize,
    pub series_path: PathBuf,
}

impl fmt::Display for IngestSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let stamp = |t: Option<chrono::NaiveDateTime>| {
            t.map(|t| t.format(TIMESTAMP_FORMAT).to_string())
                .unwrap_or_else(|| "-".into())
        };
        writeln!(f, "records: {}", self.records)?;
        writeln!(f, "missing: {}", self.missing)?;
        writeln!(f, "span: {} .. {}", stamp(self.first), stamp(self.last))?;
        write!(f, "series: {} points -> {}", self.series_len, self.series_path.display())
    }
}

pub fn cmd_ingest(config: &RunConfig, input: Option<&Path>) -> anyhow::Result<IngestSummary> {
    let path = input
        .map(Path::to_path_buf)
        .or_else(|| config.data_path.clone())
        .ok_or_else(|| usage("no input: pass --input or set data.path"))?;
    let records = ingest::parse_dataset(open_input(&path)?)
        .with_context(|| format!("ingest {}", path.display()))?;
    let records = ingest::slice_dates(records, config.start, config.end);
    if records.is_empty() {
        return Err(gridwise::Error::EmptyInput).context("ingest: no records in the selected date range");
    }
    let missing = records.iter().filter(|r| r.is_missing()).count();
    let filled = ingest::fill_missing(&records, config.fill_policy).context("ingest")?;
    let series = ingest::resample(&filled, config.feature, config.resample_minutes).context("ingest")?;
    let (series_path, mut w) = create_output(&config.out_dir, SERIES_FILE)?;
    ingest::write_series(&series, &mut w)?;
    finish(w)?;
    Ok(IngestSummary {
        records: records.len(),
        missing,
        first: records.first().map(|r| r.timestamp),
        last: records.last().map(|r| r.timestamp),
        series_len: series.len(),
        series_path,
    })
}

/// Paths written by `train` for one model.
pub fn model_file(dir: &Path, kind: ModelKind) -> PathBuf {
    dir.join(format!("{}_model.json", kind.name()))
}

pub fn metrics_file(dir: &Path, kind: ModelKind) -> PathBuf {
    dir.join(format!("{}_metrics.json", kind.name()))
}

pub fn forecast_file(dir: &Path, kind: ModelKind) -> PathBuf {
    dir.join(format!("{}_forecast.csv", kind.name()))
}

fn write_to_path(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> gridwise::Result<()>) -> anyhow::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| anyhow!("invalid output path"))?;
    let (_, mut w) = create_output(dir, &name.to_string_lossy())?;
    write(&mut w)?;
    finish(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub model: ModelKind,
    pub test_mae: f64,
    pub test_rmse: f64,
    pub test_rows: usize,
    pub detail: String,
}

impl fmt::Display for TrainSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model: {}", self.model.name())?;
        writeln!(f, "{}", self.detail)?;
        writeln!(f, "test rows: {}", self.test_rows)?;
        writeln!(f, "test mae (normalized): {}", self.test_mae)?;
        write!(f, "test rmse (normalized): {}", self.test_rmse)
    }
}

pub fn cmd_train(config: &RunConfig, kind: ModelKind, series: Option<&Path>) -> anyhow::Result<TrainSummary> {
    let series = load_series(&series_path(config, series))?;
    let stage = format!("train {}", kind.name());
    let lookback = match kind {
        ModelKind::Lstm => config.lstm.lookback,
        ModelKind::Svr => config.svr.lookback,
    };
    let data = preprocess::prepare(&series, lookback, config.train_fraction, config.fit_on)
        .with_context(|| stage.clone())?;
    let dir = &config.out_dir;

    let (train_pred, test_pred, detail) = match kind {
        ModelKind::Lstm => {
            let lstm_config = config.lstm_config();
            let (mut params, report) =
                lstm::train(&lstm_config, &data.train, &data.test).with_context(|| stage.clone())?;
            params.set_scaler(data.scaler);
            let train_pred = lstm::predict(&params, &data.train)?;
            let test_pred = lstm::predict(&params, &data.test)?;
            let detail = format!(
                "epochs run: {}{}",
                report.epoch_losses.len(),
                if report.stopped_early { " (early stop)" } else { "" }
            );
            let model = LstmModel {
                config: lstm_config,
                params,
                report: Some(report),
            };
            write_to_path(&model_file(dir, kind), |w| model.write_to(w))?;
            (Some(train_pred), test_pred, detail)
        }
        ModelKind::Svr => {
            let mut model = svr::train_svr(&config.svr, &data.train).with_context(|| stage.clone())?;
            model.scaler = data.scaler;
            let train_pred = if config.svr_report_train {
                Some(svr::predict_all(&model, &data.train)?)
            } else {
                None
            };
            let test_pred = svr::predict_all(&model, &data.test)?;
            let detail = format!(
                "support vectors: {}, solver iterations: {}{}",
                model.support_count(),
                model.iterations,
                if model.converged { "" } else { " (iteration budget reached)" }
            );
            write_to_path(&model_file(dir, kind), |w| model.write_to(&config.svr, w))?;
            (train_pred, test_pred, detail)
        }
    };

    let train_split = train_pred.as_ref().map(|p| SplitPredictions {
        actual: data.train.targets(),
        predicted: p,
    });
    let report = evaluation::evaluate(
        kind.name(),
        train_split,
        SplitPredictions {
            actual: data.test.targets(),
            predicted: &test_pred,
        },
        &data.scaler,
        config.to_json(),
    )?;
    write_to_path(&metrics_file(dir, kind), |w| report.write_to(w))?;
    let rows = evaluation::forecast_rows(data.test.origin_timestamps(), data.test.targets(), &test_pred)?;
    write_to_path(&forecast_file(dir, kind), |w| evaluation::write_forecast(&rows, w))?;

    let test = report
        .split(evaluation::Split::Test)
        .expect("test split is always reported");
    Ok(TrainSummary {
        model: kind,
        test_mae: test.mae_normalized,
        test_rmse: test.rmse_normalized,
        test_rows: test.n_samples,
        detail,
    })
}

/// A loaded model of either kind.
enum Loaded {
    Lstm(LstmModel),
    Svr(SvrModel),
}

impl Loaded {
    fn lookback(&self) -> usize {
        match self {
            Loaded::Lstm(m) => m.params.lookback(),
            Loaded::Svr(m) => m.lookback,
        }
    }

    fn scaler(&self) -> preprocess::ScalerParams {
        match self {
            Loaded::Lstm(m) => m.params.scaler(),
            Loaded::Svr(m) => m.scaler,
        }
    }

    fn predict(&self, ds: &preprocess::WindowedDataset) -> gridwise::Result<Vec<f64>> {
        match self {
            Loaded::Lstm(m) => lstm::predict(&m.params, ds),
            Loaded::Svr(m) => svr::predict_all(m, ds),
        }
    }

    fn predict_one(&self, window: &[f64]) -> gridwise::Result<f64> {
        match self {
            Loaded::Lstm(m) => lstm::forward(&m.params, window),
            Loaded::Svr(m) => svr::predict_svr(m, window),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSummary {
    pub rows: usize,
    pub path: PathBuf,
    pub next_timestamp: chrono::NaiveDateTime,
    /// Next-step forecast past the end of the series, normalized and in kW.
    pub next_normalized: f64,
    pub next_kw: f64,
}

impl fmt::Display for ForecastSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "forecast rows: {} -> {}", self.rows, self.path.display())?;
        write!(
            f,
            "next step {}: {} (normalized {})",
            self.next_timestamp.format(TIMESTAMP_FORMAT),
            self.next_kw,
            self.next_normalized
        )
    }
}

/// Applies a saved model to a series: forecasts the test span with the
/// model's own scaler and one step past the end.
pub fn cmd_forecast(
    config: &RunConfig,
    kind: ModelKind,
    model_path: Option<&Path>,
    series: Option<&Path>,
) -> anyhow::Result<ForecastSummary> {
    let path = model_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| model_file(&config.out_dir, kind));
    let reader = open_input(&path)?;
    let model = match kind {
        ModelKind::Lstm => Loaded::Lstm(LstmModel::read_from(reader).context("forecast: model file")?),
        ModelKind::Svr => Loaded::Svr(SvrModel::read_from(reader).context("forecast: model file")?.0),
    };
    let series = load_series(&series_path(config, series))?;
    let scaler = model.scaler();
    let normalized = series.with_values(scaler.transform_all(series.values()))?;
    let windows = preprocess::make_windows(&normalized, model.lookback()).context("forecast")?;
    let (_, test) = preprocess::split_train_test(&windows, config.train_fraction).context("forecast")?;
    let predicted = model.predict(&test)?;
    let rows = evaluation::forecast_rows(test.origin_timestamps(), test.targets(), &predicted)?;
    let out = config.out_dir.join(format!("{}_forecast.csv", kind.name()));
    write_to_path(&out, |w| evaluation::write_forecast(&rows, w))?;

    let values = normalized.values();
    let next_normalized = model.predict_one(&values[values.len() - model.lookback()..])?;
    Ok(ForecastSummary {
        rows: rows.len(),
        path: out,
        next_timestamp: series.timestamp_at(series.len()),
        next_normalized,
        next_kw: scaler.inverse_transform(next_normalized),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectSummary {
    pub windows: usize,
    pub flagged_count: usize,
    pub threshold: f64,
    pub report_path: PathBuf,
}

impl fmt::Display for DetectSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "windows: {}", self.windows)?;
        writeln!(f, "flagged_count: {}", self.flagged_count)?;
        writeln!(f, "threshold: {}", self.threshold)?;
        write!(f, "report: {}", self.report_path.display())
    }
}

pub const ANOMALY_FILE: &str = "anomalies.csv";
pub const ANOMALY_META_FILE: &str = "anomalies.meta.json";

pub fn cmd_detect(config: &RunConfig, series: Option<&Path>) -> anyhow::Result<DetectSummary> {
    let series = load_series(&series_path(config, series))?;
    let report = anomaly::detect(&series, &config.anomaly).context("detect")?;
    let report_path = config.out_dir.join(ANOMALY_FILE);
    write_to_path(&report_path, |w| report.write_csv(w))?;
    write_to_path(&config.out_dir.join(ANOMALY_META_FILE), |w| report.write_metadata(w))?;
    Ok(DetectSummary {
        windows: report.windows.len(),
        flagged_count: report.flagged_count,
        threshold: report.threshold,
        report_path,
    })
}

pub const TREE_FILE: &str = "context_tree.json";
pub const PREDICTIONS_FILE: &str = "context_predictions.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifySummary {
    pub rows: usize,
    pub anomalies: usize,
    /// Agreement with the input labels, when the input has them.
    pub accuracy: Option<f64>,
    pub tree_path: Option<PathBuf>,
    pub predictions_path: PathBuf,
}

impl fmt::Display for ClassifySummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(p) = &self.tree_path {
            writeln!(f, "tree: {}", p.display())?;
        }
        writeln!(f, "rows: {}", self.rows)?;
        writeln!(f, "anomaly: {}", self.anomalies)?;
        writeln!(f, "adaptation: {}", self.rows - self.anomalies)?;
        if let Some(a) = self.accuracy {
            writeln!(f, "label agreement: {a}")?;
        }
        write!(f, "predictions: {}", self.predictions_path.display())
    }
}

fn read_holidays(path: &Path) -> anyhow::Result<HashSet<NaiveDate>> {
    let mut out = HashSet::new();
    for (i, line) in open_input(path)?.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let date = NaiveDate::parse_from_str(line, "%Y-%m-%d")
            .map_err(|_| usage(format!("{} line {}: expected YYYY-MM-DD", path.display(), i + 1)))?;
        out.insert(date);
    }
    Ok(out)
}

/// Trains a tree from labeled samples (`train = true`) or loads `tree`, then
/// labels every row of `samples`.
pub fn cmd_classify(
    config: &RunConfig,
    samples: &Path,
    train: bool,
    tree: Option<&Path>,
    holidays: Option<&Path>,
) -> anyhow::Result<ClassifySummary> {
    let holidays = match holidays {
        Some(p) => read_holidays(p)?,
        None => HashSet::new(),
    };
    let (rows, has_label) = context::read_samples(open_input(samples)?, &holidays)
        .with_context(|| format!("classify: reading {}", samples.display()))?;

    let (root, tree_path) = if train {
        if !has_label {
            return Err(usage(format!(
                "classify: {} has no label column; training needs labeled samples",
                samples.display()
            )));
        }
        let labeled: Vec<context::LabeledSample> = rows
            .iter()
            .map(|r| context::LabeledSample {
                sample: r.sample,
                label: r.label.expect("labeled file"),
            })
            .collect();
        let root = context::train_tree(&labeled, &config.tree).context("classify: training")?;
        let path = tree
            .map(Path::to_path_buf)
            .unwrap_or_else(|| config.out_dir.join(TREE_FILE));
        write_to_path(&path, |w| context::write_tree(&root, &config.tree, w))?;
        (root, Some(path))
    } else {
        let path = tree.ok_or_else(|| usage("classify: no model (pass --tree FILE or --train)"))?;
        if !path.exists() {
            return Err(usage(format!("classify: no model at {}", path.display())));
        }
        let (root, _) = context::read_tree(open_input(path)?).context("classify: tree file")?;
        (root, None)
    };

    let predictions_path = config.out_dir.join(PREDICTIONS_FILE);
    let mut anomalies = 0;
    let mut hits = 0;
    write_to_path(&predictions_path, |w| {
        let base: Vec<&str> = context::SAMPLE_HEADER.split(',').take(6).collect();
        writeln!(w, "{},label,probability", base.join(","))?;
        for r in &rows {
            let (label, p) = context::classify(&root, &r.sample);
            if label == context::Label::Anomaly {
                anomalies += 1;
            }
            if r.label == Some(label) {
                hits += 1;
            }
            let fields: Vec<&str> = r.raw.split(',').take(6).collect();
            writeln!(w, "{},{label},{p}", fields.join(","))?;
        }
        Ok(())
    })?;
    Ok(ClassifySummary {
        rows: rows.len(),
        anomalies,
        accuracy: has_label.then(|| hits as f64 / rows.len() as f64),
        tree_path,
        predictions_path,
    })
}

pub const COMPARISON_FILE: &str = "comparison.json";

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub comparison: evaluation::Comparison,
    pub path: PathBuf,
}

impl fmt::Display for EvalSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.comparison;
        writeln!(f, "shared test rows: {} ({} .. {})", c.n_samples, c.span_start, c.span_end)?;
        for s in [&c.lstm, &c.svr] {
            writeln!(f, "{} test mae {} rmse {}", s.model, s.test_mae, s.test_rmse)?;
        }
        writeln!(f, "svr_test_mae < lstm_test_mae: {}", c.svr_beats_lstm)?;
        write!(f, "report: {}", self.path.display())
    }
}

pub fn cmd_eval(config: &RunConfig, lstm_path: Option<&Path>, svr_path: Option<&Path>) -> anyhow::Result<EvalSummary> {
    let read = |explicit: Option<&Path>, kind: ModelKind| -> anyhow::Result<Vec<evaluation::ForecastRow>> {
        let path = explicit
            .map(Path::to_path_buf)
            .unwrap_or_else(|| forecast_file(&config.out_dir, kind));
        evaluation::read_forecast(open_input(&path)?).with_context(|| format!("eval: reading {}", path.display()))
    };
    let lstm_rows = read(lstm_path, ModelKind::Lstm)?;
    let svr_rows = read(svr_path, ModelKind::Svr)?;
    let comparison = evaluation::compare_forecasts(&lstm_rows, &svr_rows).context("eval")?;
    let path = config.out_dir.join(COMPARISON_FILE);
    write_to_path(&path, |w| {
        serde_json::to_writer_pretty(&mut *w, &comparison)?;
        writeln!(w)?;
        Ok(())
    })?;
    Ok(EvalSummary { comparison, path })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_text_and_overrides() {
        let mut c = RunConfig::default();
        c.apply_text(
            "# desk\n\
             data.resample_minutes = 60\n\
             lstm.lookback = 24   # hourly\n\
             svr.gamma = auto\n\
             data.start = 2007-01-01\n",
        )
        .unwrap();
        assert_eq!(c.resample_minutes, 60);
        assert_eq!(c.lstm.lookback, 24);
        assert_eq!(c.svr.gamma, None);
        assert_eq!(c.start, NaiveDate::from_ymd_opt(2007, 1, 1));
        c.apply_overrides(&["lstm.lookback=12".into()]).unwrap();
        assert_eq!(c.lstm.lookback, 12);
    }

    #[test]
    fn bad_config_is_a_usage_error() {
        let mut c = RunConfig::default();
        for text in ["lstm.lookback 3", "nope.key = 1", "lstm.epochs = many"] {
            let err = c.apply_text(text).unwrap_err();
            assert_eq!(exit_code(&err), 2, "{text}: {err:#}");
        }
    }

    #[test]
    fn stage_seeds_differ_and_are_stable() {
        assert_eq!(stage_seed(7, "lstm"), stage_seed(7, "lstm"));
        assert_ne!(stage_seed(7, "lstm"), stage_seed(8, "lstm"));
        assert_ne!(stage_seed(7, "lstm"), stage_seed(7, "svr"));
        let mut c = RunConfig {
            seed: 7,
            ..RunConfig::default()
        };
        assert_eq!(c.lstm_config().seed, stage_seed(7, "lstm"));
        c.set("lstm.seed", "3").unwrap();
        assert_eq!(c.lstm_config().seed, 3);
    }

    #[test]
    fn divergence_maps_to_runtime_failure() {
        let err: anyhow::Error = gridwise::Error::Diverged { epoch: 1, loss: f64::NAN }.into();
        assert_eq!(exit_code(&err.context("train lstm")), 1);
        let err: anyhow::Error = gridwise::Error::EmptyInput.into();
        assert_eq!(exit_code(&err), 2);
    }
}
