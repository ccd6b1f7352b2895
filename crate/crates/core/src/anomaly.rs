//! Sectioned-window k-nearest-neighbour anomaly scoring.
//!
//! The series is cut into windows; each window's score is the Euclidean
//! distance to its k-th nearest admissible window, and windows scoring
//! strictly above a percentile of all scores are flagged.

use std::io::Write;

use chrono::NaiveDateTime;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{UnivariateSeries, TIMESTAMP_FORMAT};
use crate::{Error, Result, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnomalyConfig {
    pub window_length: usize,
    /// `None` tiles the series with disjoint windows (stride = window length).
    pub stride: Option<usize>,
    pub k: usize,
    pub percentile: f64,
    /// Windows whose indices differ by at most this much are not neighbours.
    pub exclusion_radius: usize,
}

impl Default for AnomalyConfig {
    fn default() -> Self {
        Self {
            window_length: 60,
            stride: None,
            k: 5,
            percentile: 99.9,
            exclusion_radius: 0,
        }
    }
}

impl AnomalyConfig {
    pub fn stride(&self) -> usize {
        self.stride.unwrap_or(self.window_length)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_length == 0 || self.k == 0 || self.stride() == 0 {
            return Err(Error::InvalidConfig(
                "anomaly.window_length, anomaly.stride and anomaly.k must be at least 1".into(),
            ));
        }
        if !(self.percentile > 0.0 && self.percentile < 100.0) {
            return Err(Error::InvalidConfig(format!(
                "anomaly.percentile must lie in (0, 100), got {}",
                self.percentile
            )));
        }
        Ok(())
    }
}

/// Percentile that places the threshold between the `top`-th and
/// `top + 1`-th largest of `count` distinct scores.
pub fn percentile_flagging(top: usize, count: usize) -> Result<f64> {
    if count < 2 || top == 0 || top >= count {
        return Err(Error::InvalidConfig(format!(
            "cannot flag {top} of {count} windows"
        )));
    }
    Ok(100.0 * (count as f64 - top as f64 - 0.5) / (count as f64 - 1.0))
}

/// Window start indices and views, starting at 0 and stepping by `stride`.
pub fn section_windows(
    values: &[f64],
    window_length: usize,
    stride: usize,
) -> Result<Vec<(usize, &[f64])>> {
    if window_length == 0 || stride == 0 {
        return Err(Error::InvalidConfig("window length and stride must be at least 1".into()));
    }
    if window_length > values.len() {
        return Err(Error::InsufficientData(format!(
            "window of {window_length} exceeds series length {}",
            values.len()
        )));
    }
    Ok((0..=values.len() - window_length)
        .step_by(stride)
        .map(|s| (s, &values[s..s + window_length]))
        .collect())
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Distance from each window to its k-th nearest admissible neighbour.
/// Window `j` is admissible for `i` when `|i - j| > exclusion_radius`.
pub fn knn_scores<W: AsRef<[f64]> + Sync>(
    windows: &[W],
    k: usize,
    exclusion_radius: usize,
) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let required = k + 2 * exclusion_radius + 1;
    if windows.len() < required {
        return Err(Error::TooFewNeighbours {
            required,
            available: windows.len(),
        });
    }
    if let Some(first) = windows.first() {
        let len = first.as_ref().len();
        if let Some(w) = windows.iter().find(|w| w.as_ref().len() != len) {
            return Err(Error::LengthMismatch {
                expected: len,
                actual: w.as_ref().len(),
            });
        }
    }
    Ok((0..windows.len())
        .into_par_iter()
        .map(|i| {
            let query = windows[i].as_ref();
            let mut d: Vec<f64> = windows
                .iter()
                .enumerate()
                .filter(|(j, _)| i.abs_diff(*j) > exclusion_radius)
                .map(|(_, w)| squared_distance(query, w.as_ref()))
                .collect();
            let (_, kth, _) = d.select_nth_unstable_by(k - 1, f64::total_cmp);
            kth.sqrt()
        })
        .collect())
}

/// Linear-interpolation percentile (the "linear" rule: rank `p/100 · (n-1)`).
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::InvalidConfig(format!("percentile {p} outside [0, 100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowScore {
    pub start_index: usize,
    pub start_timestamp: NaiveDateTime,
    pub score: f64,
    /// 1 for the highest score; ties are ranked by start index.
    pub rank: usize,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyReport {
    pub windows: Vec<WindowScore>,
    pub threshold: f64,
    pub flagged_count: usize,
    pub config: AnomalyConfig,
}

impl AnomalyReport {
    pub fn flagged(&self) -> impl Iterator<Item = &WindowScore> {
        self.windows.iter().filter(|w| w.flagged)
    }

    /// `start_index,start_timestamp,score,rank,flagged`, one row per window.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "start_index,start_timestamp,score,rank,flagged")?;
        for w in &self.windows {
            writeln!(
                writer,
                "{},{},{},{},{}",
                w.start_index,
                w.start_timestamp.format(TIMESTAMP_FORMAT),
                w.score,
                w.rank,
                w.flagged
            )?;
        }
        Ok(())
    }

    /// Sidecar document with threshold, percentile and configuration.
    pub fn write_metadata<W: Write>(&self, writer: W) -> Result<()> {
        let meta = ReportMetadata {
            schema_version: SCHEMA_VERSION,
            threshold: self.threshold,
            percentile: self.config.percentile,
            flagged_count: self.flagged_count,
            window_count: self.windows.len(),
            window_length: self.config.window_length,
            stride: self.config.stride(),
            k: self.config.k,
            exclusion_radius: self.config.exclusion_radius,
        };
        serde_json::to_writer_pretty(writer, &meta)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub schema_version: u32,
    pub threshold: f64,
    pub percentile: f64,
    pub flagged_count: usize,
    pub window_count: usize,
    pub window_length: usize,
    pub stride: usize,
    pub k: usize,
    pub exclusion_radius: usize,
}

/// Sections, scores and thresholds a series.
pub fn detect(series: &UnivariateSeries, config: &AnomalyConfig) -> Result<AnomalyReport> {
    config.validate()?;
    let windows = section_windows(series.values(), config.window_length, config.stride())?;
    let views: Vec<&[f64]> = windows.iter().map(|(_, w)| *w).collect();
    let scores = knn_scores(&views, config.k, config.exclusion_radius)?;
    let threshold = percentile(&scores, config.percentile)?;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut ranks = vec![0; scores.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r + 1;
    }

    let windows: Vec<WindowScore> = windows
        .iter()
        .zip(&scores)
        .zip(ranks)
        .map(|(((start, _), &score), rank)| WindowScore {
            start_index: *start,
            start_timestamp: series.timestamp_at(*start),
            score,
            rank,
            flagged: score > threshold,
        })
        .collect();
    let flagged_count = windows.iter().filter(|w| w.flagged).count();
    Ok(AnomalyReport {
        windows,
        threshold,
        flagged_count,
        config: config.clone(),
    })
}
