//! Min-max scaling, lookback windowing and chronological splitting.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::ingest::UnivariateSeries;
use crate::{Error, Result};

/// Affine map of `[min_value, max_value]` onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min_value: f64,
    pub max_value: f64,
}

pub fn fit_scaler(values: &[f64]) -> Result<ScalerParams> {
    let first = *values.first().ok_or(Error::EmptyInput)?;
    let (min_value, max_value) = values
        .iter()
        .fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(ScalerParams {
        min_value,
        max_value,
    })
}

impl ScalerParams {
    pub fn range(&self) -> f64 {
        self.max_value - self.min_value
    }

    fn is_degenerate(&self) -> bool {
        self.range() <= 0.0
    }

    /// Out-of-range inputs are not clamped. A constant fit maps everything to 0.
    pub fn transform(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            (x - self.min_value) / self.range()
        }
    }

    pub fn inverse_transform(&self, y: f64) -> f64 {
        if self.is_degenerate() {
            self.min_value
        } else {
            self.min_value + y * self.range()
        }
    }

    pub fn transform_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.transform(x)).collect()
    }

    pub fn inverse_all(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|&y| self.inverse_transform(y)).collect()
    }
}

/// Which part of the series the scaler is fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalerFit {
    /// Only the chronological training prefix.
    #[default]
    Train,
    All,
}

impl FromStr for ScalerFit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(ScalerFit::Train),
            "all" => Ok(ScalerFit::All),
            other => Err(Error::InvalidConfig(format!(
                "scaler.fit_on must be `train` or `all`, got `{other}`"
            ))),
        }
    }
}

impl fmt::Display for ScalerFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalerFit::Train => "train",
            ScalerFit::All => "all",
        })
    }
}

/// Lookback windows paired with their next-step targets.
///
/// Row `i` holds series values `[i, i + lookback)` and `targets[i]` is value
/// `i + lookback`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    lookback: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    origin_timestamps: Vec<NaiveDateTime>,
}

impl WindowedDataset {
    pub fn from_parts(
        lookback: usize,
        inputs: Vec<f64>,
        targets: Vec<f64>,
        origin_timestamps: Vec<NaiveDateTime>,
    ) -> Result<Self> {
        if lookback == 0 {
            return Err(Error::InvalidConfig("lookback must be at least 1".into()));
        }
        if inputs.len() != targets.len() * lookback {
            return Err(Error::LengthMismatch {
                expected: targets.len() * lookback,
                actual: inputs.len(),
            });
        }
        if origin_timestamps.len() != targets.len() {
            return Err(Error::LengthMismatch {
                expected: targets.len(),
                actual: origin_timestamps.len(),
            });
        }
        Ok(Self {
            lookback,
            inputs,
            targets,
            origin_timestamps,
        })
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.lookback..(i + 1) * self.lookback]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.inputs.chunks_exact(self.lookback)
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn origin_timestamps(&self) -> &[NaiveDateTime] {
        &self.origin_timestamps
    }

    /// Rows `start..end` as a new dataset.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            lookback: self.lookback,
            inputs: self.inputs[start * self.lookback..end * self.lookback].to_vec(),
            targets: self.targets[start..end].to_vec(),
            origin_timestamps: self.origin_timestamps[start..end].to_vec(),
        }
    }
}

pub fn make_windows(series: &UnivariateSeries, lookback: usize) -> Result<WindowedDataset> {
    if lookback == 0 {
        return Err(Error::InvalidConfig("lookback must be at least 1".into()));
    }
    let values = series.values();
    if lookback >= values.len() {
        return Err(Error::InsufficientData(format!(
            "lookback {lookback} needs more than {} points",
            values.len()
        )));
    }
    let n = values.len() - lookback;
    let mut inputs = Vec::with_capacity(n * lookback);
    for window in values.windows(lookback).take(n) {
        inputs.extend_from_slice(window);
    }
    let targets = values[lookback..].to_vec();
    let origin_timestamps = (lookback..values.len())
        .map(|i| series.timestamp_at(i))
        .collect();
    WindowedDataset::from_parts(lookback, inputs, targets, origin_timestamps)
}

/// Chronological split: the first `floor(n * train_fraction)` rows train.
pub fn split_train_test(
    dataset: &WindowedDataset,
    train_fraction: f64,
) -> Result<(WindowedDataset, WindowedDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = dataset.len();
    let n_train = (n as f64 * train_fraction).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InsufficientData(format!(
            "splitting {n} rows at {train_fraction} leaves one side empty"
        )));
    }
    Ok((dataset.slice(0, n_train), dataset.slice(n_train, n)))
}

/// A series scaled and framed for one model.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub scaler: ScalerParams,
    pub normalized: UnivariateSeries,
    pub train: WindowedDataset,
    pub test: WindowedDataset,
}

/// Fits the scaler, normalizes, windows and splits.
///
/// With [`ScalerFit::Train`] the scaler sees only the first
/// `floor(len * train_fraction)` raw points. That prefix is independent of
/// the lookback and always lies inside the training windows, so models with
/// different lookbacks share one normalization.
pub fn prepare(
    series: &UnivariateSeries,
    lookback: usize,
    train_fraction: f64,
    fit_on: ScalerFit,
) -> Result<PreparedData> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let values = series.values();
    let scaler = match fit_on {
        ScalerFit::All => fit_scaler(values)?,
        ScalerFit::Train => {
            let cut = ((values.len() as f64) * train_fraction).floor() as usize;
            fit_scaler(&values[..cut.max(1)])?
        }
    };
    let normalized = series.with_values(scaler.transform_all(values))?;
    let windows = make_windows(&normalized, lookback)?;
    let (train, test) = split_train_test(&windows, train_fraction)?;
    Ok(PreparedData {
        scaler,
        normalized,
        train,
        test,
    })
}
