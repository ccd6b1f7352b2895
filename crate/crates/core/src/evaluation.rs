//! Error metrics, residuals and forecast reports.

use std::io::{BufRead, Write};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::ingest::TIMESTAMP_FORMAT;
use crate::preprocess::ScalerParams;
use crate::{Error, Result, SCHEMA_VERSION};

fn check_pair(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            expected: actual.len(),
            actual: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(actual, predicted)?;
    let sum: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p).abs()).sum();
    Ok(sum / actual.len() as f64)
}

/// Root mean squared error.
pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(actual, predicted)?;
    let sum: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p).powi(2)).sum();
    Ok((sum / actual.len() as f64).sqrt())
}

/// `actual - predicted`; positive values mean the model under-predicted.
pub fn residuals(actual: &[f64], predicted: &[f64]) -> Result<Vec<f64>> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            expected: actual.len(),
            actual: predicted.len(),
        });
    }
    Ok(actual.iter().zip(predicted).map(|(a, p)| a - p).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Metrics of one split, in normalized units and in the feature's own unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub split: Split,
    pub mae_normalized: f64,
    pub rmse_normalized: f64,
    pub mae_kw: f64,
    pub rmse_kw: f64,
    /// Mean residual (normalized); a persistent offset shows up here.
    pub mean_residual: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub model: String,
    pub splits: Vec<SplitMetrics>,
    /// Echo of the settings that produced the predictions.
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn split(&self, split: Split) -> Option<&SplitMetrics> {
        self.splits.iter().find(|m| m.split == split)
    }

    pub fn write_to<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }
}

/// Actual and predicted values of one split, normalized.
#[derive(Debug, Clone, Copy)]
pub struct SplitPredictions<'a> {
    pub actual: &'a [f64],
    pub predicted: &'a [f64],
}

fn split_metrics(split: Split, p: SplitPredictions<'_>, scaler: &ScalerParams) -> Result<SplitMetrics> {
    let actual_kw = scaler.inverse_all(p.actual);
    let predicted_kw = scaler.inverse_all(p.predicted);
    let res = residuals(p.actual, p.predicted)?;
    Ok(SplitMetrics {
        split,
        mae_normalized: mae(p.actual, p.predicted)?,
        rmse_normalized: rmse(p.actual, p.predicted)?,
        mae_kw: mae(&actual_kw, &predicted_kw)?,
        rmse_kw: rmse(&actual_kw, &predicted_kw)?,
        mean_residual: res.iter().sum::<f64>() / res.len() as f64,
        n_samples: p.actual.len(),
    })
}

/// Builds a report from aligned predictions. The train split is optional.
pub fn evaluate(
    model: &str,
    train: Option<SplitPredictions<'_>>,
    test: SplitPredictions<'_>,
    scaler: &ScalerParams,
    config: serde_json::Value,
) -> Result<EvalReport> {
    let mut splits = Vec::with_capacity(2);
    if let Some(t) = train {
        splits.push(split_metrics(Split::Train, t, scaler)?);
    }
    splits.push(split_metrics(Split::Test, test, scaler)?);
    Ok(EvalReport {
        schema_version: SCHEMA_VERSION,
        model: model.to_string(),
        splits,
        config,
    })
}

/// One row of a forecast export, normalized units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastRow {
    pub timestamp: NaiveDateTime,
    pub actual: f64,
    pub predicted: f64,
}

impl ForecastRow {
    pub fn residual(&self) -> f64 {
        self.actual - self.predicted
    }
}

pub const FORECAST_HEADER: &str = "timestamp,actual,predicted,residual";

pub fn forecast_rows(
    timestamps: &[NaiveDateTime],
    actual: &[f64],
    predicted: &[f64],
) -> Result<Vec<ForecastRow>> {
    check_pair(actual, predicted)?;
    if timestamps.len() != actual.len() {
        return Err(Error::LengthMismatch {
            expected: actual.len(),
            actual: timestamps.len(),
        });
    }
    Ok(timestamps
        .iter()
        .zip(actual.iter().zip(predicted))
        .map(|(&timestamp, (&actual, &predicted))| ForecastRow {
            timestamp,
            actual,
            predicted,
        })
        .collect())
}

pub fn write_forecast<W: Write>(rows: &[ForecastRow], mut writer: W) -> Result<()> {
    writeln!(writer, "{FORECAST_HEADER}")?;
    for r in rows {
        writeln!(
            writer,
            "{},{},{},{}",
            r.timestamp.format(TIMESTAMP_FORMAT),
            r.actual,
            r.predicted,
            r.residual()
        )?;
    }
    Ok(())
}

pub fn read_forecast<R: BufRead>(reader: R) -> Result<Vec<ForecastRow>> {
    let mut lines = reader.lines();
    let header = lines.next().ok_or(Error::EmptyInput)??;
    if header.trim() != FORECAST_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{FORECAST_HEADER}`"),
        });
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 2;
        let bad = |message: String| Error::Parse {
            line: lineno,
            message,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", fields.len())));
        }
        let timestamp = NaiveDateTime::parse_from_str(fields[0], TIMESTAMP_FORMAT)
            .map_err(|e| bad(format!("invalid timestamp: {e}")))?;
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("non-numeric `{s}`")));
        rows.push(ForecastRow {
            timestamp,
            actual: num(fields[1])?,
            predicted: num(fields[2])?,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub model: String,
    pub test_mae: f64,
    pub test_rmse: f64,
    pub mean_residual: f64,
}

/// Side-by-side short-term vs long-term comparison on a shared test span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub schema_version: u32,
    pub n_samples: usize,
    pub span_start: String,
    pub span_end: String,
    pub lstm: ModelScore,
    pub svr: ModelScore,
    pub svr_beats_lstm: bool,
}

/// Compares two forecast exports on the timestamps they share.
///
/// The exports may start at slightly different points (different lookbacks
/// shift the first test target), but they must describe the same data: every
/// shared timestamp has to carry the same actual value, and at least one
/// timestamp must be shared.
pub fn compare_forecasts(lstm: &[ForecastRow], svr: &[ForecastRow]) -> Result<Comparison> {
    use std::collections::BTreeMap;

    let svr_by_time: BTreeMap<NaiveDateTime, &ForecastRow> =
        svr.iter().map(|r| (r.timestamp, r)).collect();
    let mut actual = Vec::new();
    let mut lstm_pred = Vec::new();
    let mut svr_pred = Vec::new();
    let mut stamps = Vec::new();
    for row in lstm {
        if let Some(other) = svr_by_time.get(&row.timestamp) {
            if (other.actual - row.actual).abs() > 1e-12 {
                return Err(Error::InvalidSample(format!(
                    "misaligned forecasts: actual values differ at {}",
                    row.timestamp.format(TIMESTAMP_FORMAT)
                )));
            }
            stamps.push(row.timestamp);
            actual.push(row.actual);
            lstm_pred.push(row.predicted);
            svr_pred.push(other.predicted);
        }
    }
    if actual.is_empty() {
        return Err(Error::InvalidSample(
            "misaligned forecasts: no shared timestamps".into(),
        ));
    }
    let score = |model: &str, predicted: &[f64]| -> Result<ModelScore> {
        let res = residuals(&actual, predicted)?;
        Ok(ModelScore {
            model: model.to_string(),
            test_mae: mae(&actual, predicted)?,
            test_rmse: rmse(&actual, predicted)?,
            mean_residual: res.iter().sum::<f64>() / res.len() as f64,
        })
    };
    let lstm_score = score("lstm", &lstm_pred)?;
    let svr_score = score("svr", &svr_pred)?;
    Ok(Comparison {
        schema_version: SCHEMA_VERSION,
        n_samples: actual.len(),
        span_start: stamps[0].format(TIMESTAMP_FORMAT).to_string(),
        span_end: stamps[stamps.len() - 1].format(TIMESTAMP_FORMAT).to_string(),
        svr_beats_lstm: svr_score.test_mae < lstm_score.test_mae,
        lstm: lstm_score,
        svr: svr_score,
    })
}
