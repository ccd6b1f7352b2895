//! Parsing, cleaning and resampling of the household power dataset.
//!
//! The source is a semicolon-delimited text file with one row per minute:
//!
//! ```text
//! Date;Time;Global_active_power;Global_reactive_power;Voltage;Global_intensity;Sub_metering_1;Sub_metering_2;Sub_metering_3
//! 16/4/2007;02:10:00;0.218;0.000;242.300;1.000;0.000;0.000;0.000
//! ```
//!
//! Rows where the meter dropped out carry `?` in every measured column.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const HEADER: &str = "Date;Time;Global_active_power;Global_reactive_power;Voltage;Global_intensity;Sub_metering_1;Sub_metering_2;Sub_metering_3";

const FIELD_COUNT: usize = 9;
const MISSING_MARKER: &str = "?";

/// Timestamp layout used by the series and export files.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// The seven measured columns of one row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurements {
    /// kW
    pub global_active_power: f64,
    /// kW
    pub global_reactive_power: f64,
    /// V
    pub voltage: f64,
    /// A
    pub global_intensity: f64,
    /// Wh, kitchen
    pub sub_metering_1: f64,
    /// Wh, laundry
    pub sub_metering_2: f64,
    /// Wh, water heater and air conditioning
    pub sub_metering_3: f64,
}

impl Measurements {
    pub fn get(&self, feature: Feature) -> f64 {
        match feature {
            Feature::GlobalActivePower => self.global_active_power,
            Feature::GlobalReactivePower => self.global_reactive_power,
            Feature::Voltage => self.voltage,
            Feature::GlobalIntensity => self.global_intensity,
            Feature::SubMetering1 => self.sub_metering_1,
            Feature::SubMetering2 => self.sub_metering_2,
            Feature::SubMetering3 => self.sub_metering_3,
        }
    }

    fn values(&self) -> [f64; 7] {
        [
            self.global_active_power,
            self.global_reactive_power,
            self.voltage,
            self.global_intensity,
            self.sub_metering_1,
            self.sub_metering_2,
            self.sub_metering_3,
        ]
    }
}

/// One minute of measurements. `measurements` is `None` when the source row
/// was marked missing; the source always blanks whole rows, so the measured
/// fields are present or absent together.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerRecord {
    pub timestamp: NaiveDateTime,
    pub measurements: Option<Measurements>,
}

impl PowerRecord {
    pub fn is_missing(&self) -> bool {
        self.measurements.is_none()
    }
}

/// Selects one measured column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    #[default]
    GlobalActivePower,
    GlobalReactivePower,
    Voltage,
    GlobalIntensity,
    SubMetering1,
    SubMetering2,
    SubMetering3,
}

impl Feature {
    pub fn name(self) -> &'static str {
        match self {
            Feature::GlobalActivePower => "global_active_power",
            Feature::GlobalReactivePower => "global_reactive_power",
            Feature::Voltage => "voltage",
            Feature::GlobalIntensity => "global_intensity",
            Feature::SubMetering1 => "sub_metering_1",
            Feature::SubMetering2 => "sub_metering_2",
            Feature::SubMetering3 => "sub_metering_3",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let feature = match s.to_ascii_lowercase().as_str() {
            "global_active_power" => Feature::GlobalActivePower,
            "global_reactive_power" => Feature::GlobalReactivePower,
            "voltage" => Feature::Voltage,
            "global_intensity" => Feature::GlobalIntensity,
            "sub_metering_1" => Feature::SubMetering1,
            "sub_metering_2" => Feature::SubMetering2,
            "sub_metering_3" => Feature::SubMetering3,
            other => return Err(Error::InvalidConfig(format!("unknown feature `{other}`"))),
        };
        Ok(feature)
    }
}

/// How missing rows are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillPolicy {
    /// Repeat the last fully present row; leading missing rows are dropped.
    #[default]
    ForwardFill,
    Drop,
}

impl FromStr for FillPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward_fill" => Ok(FillPolicy::ForwardFill),
            "drop" => Ok(FillPolicy::Drop),
            other => Err(Error::InvalidConfig(format!("unknown fill policy `{other}`"))),
        }
    }
}

impl fmt::Display for FillPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FillPolicy::ForwardFill => "forward_fill",
            FillPolicy::Drop => "drop",
        })
    }
}

/// A uniformly sampled, gap-free series of one feature.
#[derive(Debug, Clone, PartialEq)]
pub struct UnivariateSeries {
    start: NaiveDateTime,
    step_seconds: i64,
    values: Vec<f64>,
}

impl UnivariateSeries {
    pub fn new(start: NaiveDateTime, step_seconds: i64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        if step_seconds <= 0 {
            return Err(Error::InvalidInterval(format!(
                "step must be positive, got {step_seconds} s"
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSample(format!("value {i} is not finite")));
        }
        Ok(Self {
            start,
            step_seconds,
            values,
        })
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn step_seconds(&self) -> i64 {
        self.step_seconds
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp_at(&self, index: usize) -> NaiveDateTime {
        self.start + Duration::seconds(self.step_seconds * index as i64)
    }

    /// Same timestamps, new values (e.g. after scaling).
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::LengthMismatch {
                expected: self.values.len(),
                actual: values.len(),
            });
        }
        Self::new(self.start, self.step_seconds, values)
    }
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_timestamp(date: &str, time: &str, line: usize) -> Result<NaiveDateTime> {
    let date = NaiveDate::parse_from_str(date, "%d/%m/%Y")
        .map_err(|e| parse_error(line, format!("invalid date `{date}`: {e}")))?;
    let time = NaiveTime::parse_from_str(time, "%H:%M:%S")
        .map_err(|e| parse_error(line, format!("invalid time `{time}`: {e}")))?;
    if time.second() != 0 {
        return Err(parse_error(line, "timestamp is not minute-aligned"));
    }
    Ok(date.and_time(time))
}

fn parse_row(row: &str, line: usize) -> Result<PowerRecord> {
    let fields: Vec<&str> = row.split(';').map(str::trim).collect();
    if fields.len() != FIELD_COUNT {
        return Err(parse_error(
            line,
            format!("expected {FIELD_COUNT} fields, found {}", fields.len()),
        ));
    }
    let timestamp = parse_timestamp(fields[0], fields[1], line)?;

    // A single missing marker blanks the whole row.
    if fields[2..].iter().any(|f| *f == MISSING_MARKER || f.is_empty()) {
        return Ok(PowerRecord {
            timestamp,
            measurements: None,
        });
    }

    let mut values = [0.0; 7];
    for (slot, field) in values.iter_mut().zip(&fields[2..]) {
        let v: f64 = field
            .parse()
            .map_err(|_| parse_error(line, format!("non-numeric field `{field}`")))?;
        if !v.is_finite() {
            return Err(parse_error(line, format!("non-finite field `{field}`")));
        }
        *slot = v;
    }
    let m = Measurements {
        global_active_power: values[0],
        global_reactive_power: values[1],
        voltage: values[2],
        global_intensity: values[3],
        sub_metering_1: values[4],
        sub_metering_2: values[5],
        sub_metering_3: values[6],
    };
    if m.voltage <= 0.0 {
        return Err(parse_error(line, "voltage must be positive"));
    }
    if m.values().iter().any(|v| *v < 0.0) {
        return Err(parse_error(line, "negative measurement"));
    }
    Ok(PowerRecord {
        timestamp,
        measurements: Some(m),
    })
}

/// Parses the dataset. Records come back in file order, one per data row.
pub fn parse_dataset<R: BufRead>(reader: R) -> Result<Vec<PowerRecord>> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(Error::EmptyInput),
    };
    let header = header.trim_start_matches('\u{feff}').trim();
    if header.is_empty() {
        return Err(Error::EmptyInput);
    }
    let columns = header.split(';').count();
    if columns != FIELD_COUNT || !header.starts_with("Date;Time") {
        return Err(parse_error(1, "expected header `Date;Time;...` with 9 columns"));
    }

    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let row = line.trim_end_matches('\r');
        if row.trim().is_empty() {
            continue;
        }
        records.push(parse_row(row, i + 2)?);
    }
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(records)
}

/// Writes records in the source format. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_dataset<W: Write>(records: &[PowerRecord], mut writer: W) -> Result<()> {
    writeln!(writer, "{HEADER}")?;
    for r in records {
        write!(
            writer,
            "{};{}",
            r.timestamp.format("%-d/%-m/%Y"),
            r.timestamp.format("%H:%M:%S")
        )?;
        match &r.measurements {
            Some(m) => {
                for v in m.values() {
                    write!(writer, ";{v}")?;
                }
            }
            None => {
                for _ in 0..7 {
                    write!(writer, ";{MISSING_MARKER}")?;
                }
            }
        }
        writeln!(writer)?;
    }
    Ok(())
}

/// Keeps records whose timestamp falls in `[from, to]` (inclusive dates).
pub fn slice_dates(
    records: Vec<PowerRecord>,
    from: Option<NaiveDate>,
    to: Option<NaiveDate>,
) -> Vec<PowerRecord> {
    records
        .into_iter()
        .filter(|r| {
            let d = r.timestamp.date();
            from.is_none_or(|f| d >= f) && to.is_none_or(|t| d <= t)
        })
        .collect()
}

/// Resolves missing rows. The output never contains a missing record.
pub fn fill_missing(records: &[PowerRecord], policy: FillPolicy) -> Result<Vec<PowerRecord>> {
    if records.iter().all(PowerRecord::is_missing) {
        return Err(Error::AllMissing);
    }
    let out = match policy {
        FillPolicy::Drop => records.iter().filter(|r| !r.is_missing()).copied().collect(),
        FillPolicy::ForwardFill => {
            let mut last: Option<Measurements> = None;
            let mut out = Vec::with_capacity(records.len());
            for r in records {
                match r.measurements {
                    Some(m) => {
                        last = Some(m);
                        out.push(*r);
                    }
                    None => {
                        if let Some(m) = last {
                            out.push(PowerRecord {
                                timestamp: r.timestamp,
                                measurements: Some(m),
                            });
                        }
                    }
                }
            }
            out
        }
    };
    Ok(out)
}

/// Averages `feature` over consecutive buckets of `interval_minutes`,
/// aligned to the first record. A trailing partial bucket is dropped.
pub fn resample(
    records: &[PowerRecord],
    feature: Feature,
    interval_minutes: u32,
) -> Result<UnivariateSeries> {
    let first = records.first().ok_or(Error::EmptyInput)?;
    if interval_minutes == 0 {
        return Err(Error::InvalidInterval("interval must be positive".into()));
    }
    let step = match records.get(1) {
        Some(second) => (second.timestamp - first.timestamp).num_seconds(),
        None => 60,
    };
    if step <= 0 {
        return Err(Error::InvalidInterval(
            "records are not strictly increasing in time".into(),
        ));
    }
    for (i, pair) in records.windows(2).enumerate() {
        if (pair[1].timestamp - pair[0].timestamp).num_seconds() != step {
            return Err(Error::InvalidInterval(format!(
                "records are not uniformly spaced at {}s (gap after record {i})",
                step
            )));
        }
    }
    let interval_seconds = i64::from(interval_minutes) * 60;
    if interval_seconds % step != 0 {
        return Err(Error::InvalidInterval(format!(
            "{interval_minutes} min is not a multiple of the record step ({step} s)"
        )));
    }
    let per_bucket = (interval_seconds / step) as usize;
    if records.len() < per_bucket {
        return Err(Error::InsufficientData(format!(
            "{} records cannot fill one {interval_minutes}-minute bucket",
            records.len()
        )));
    }

    let mut values = Vec::with_capacity(records.len() / per_bucket);
    for bucket in records.chunks_exact(per_bucket) {
        let mut sum = 0.0;
        for r in bucket {
            let m = r.measurements.ok_or_else(|| {
                Error::InvalidSample(format!(
                    "missing record at {} must be filled before resampling",
                    r.timestamp
                ))
            })?;
            sum += m.get(feature);
        }
        values.push(sum / per_bucket as f64);
    }
    UnivariateSeries::new(first.timestamp, interval_seconds, values)
}

/// Writes a series as `timestamp,value`.
pub fn write_series<W: Write>(series: &UnivariateSeries, mut writer: W) -> Result<()> {
    writeln!(writer, "timestamp,value")?;
    for (i, v) in series.values().iter().enumerate() {
        writeln!(writer, "{},{v}", series.timestamp_at(i).format(TIMESTAMP_FORMAT))?;
    }
    Ok(())
}

/// Reads a series written by [`write_series`]; the step is inferred from
/// the first two rows and must be uniform.
pub fn read_series<R: BufRead>(reader: R) -> Result<UnivariateSeries> {
    let mut lines = reader.lines();
    match lines.next() {
        Some(h) => {
            if h?.trim() != "timestamp,value" {
                return Err(parse_error(1, "expected header `timestamp,value`"));
            }
        }
        None => return Err(Error::EmptyInput),
    }
    let mut stamps = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 2;
        let (ts, v) = line
            .split_once(',')
            .ok_or_else(|| parse_error(lineno, "expected 2 fields"))?;
        let ts = NaiveDateTime::parse_from_str(ts.trim(), TIMESTAMP_FORMAT)
            .map_err(|e| parse_error(lineno, format!("invalid timestamp: {e}")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| parse_error(lineno, format!("non-numeric value `{v}`")))?;
        stamps.push(ts);
        values.push(v);
    }
    let start = *stamps.first().ok_or(Error::EmptyInput)?;
    let step = match stamps.get(1) {
        Some(t) => (*t - start).num_seconds(),
        None => 60,
    };
    for (i, pair) in stamps.windows(2).enumerate() {
        if (pair[1] - pair[0]).num_seconds() != step {
            return Err(parse_error(i + 3, "series is not uniformly spaced"));
        }
    }
    UnivariateSeries::new(start, step, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M").unwrap()
    }

    fn present(t: &str, gap: f64) -> PowerRecord {
        PowerRecord {
            timestamp: ts(t),
            measurements: Some(Measurements {
                global_active_power: gap,
                global_reactive_power: 0.1,
                voltage: 240.0,
                global_intensity: 1.0,
                sub_metering_1: 0.0,
                sub_metering_2: 0.0,
                sub_metering_3: 0.0,
            }),
        }
    }

    fn missing(t: &str) -> PowerRecord {
        PowerRecord {
            timestamp: ts(t),
            measurements: None,
        }
    }

    fn gap_values(records: &[PowerRecord]) -> Vec<f64> {
        records
            .iter()
            .map(|r| r.measurements.unwrap().global_active_power)
            .collect()
    }

    #[test]
    fn parses_a_present_row() {
        let text = format!("{HEADER}\n16/4/2007;02:10:00;0.218;0.000;242.300;1.000;0.000;0.000;0.000\n");
        let records = parse_dataset(text.as_bytes()).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].timestamp, ts("2007-04-16 02:10"));
        let m = records[0].measurements.unwrap();
        assert_eq!(m.global_active_power, 0.218);
        assert_eq!(m.voltage, 242.3);
        assert_eq!(m.global_intensity, 1.0);
    }

    #[test]
    fn parses_a_missing_row() {
        let text = format!("{HEADER}\n28/4/2007;00:21:00;?;?;?;?;?;?;?\n");
        let records = parse_dataset(text.as_bytes()).unwrap();
        assert_eq!(records[0].timestamp, ts("2007-04-28 00:21"));
        assert!(records[0].is_missing());
    }

    #[test]
    fn rejects_wrong_field_count() {
        let text = format!("{HEADER}\n16/4/2007;02:10:00;0.218;0.000;242.300;1.000;0.000;0.000\n");
        let err = parse_dataset(text.as_bytes()).unwrap_err().to_string();
        assert_eq!(err, "line 2: expected 9 fields, found 8");
    }

    #[test]
    fn rejects_bad_dates_and_numbers() {
        let bad_date = format!("{HEADER}\n32/4/2007;02:10:00;1;1;240;1;0;0;0\n");
        assert!(matches!(
            parse_dataset(bad_date.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        let bad_num = format!("{HEADER}\n1/4/2007;02:10:00;1;1;240;1;0;x;0\n");
        assert!(matches!(
            parse_dataset(bad_num.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        let seconds = format!("{HEADER}\n1/4/2007;02:10:30;1;1;240;1;0;0;0\n");
        assert!(parse_dataset(seconds.as_bytes()).is_err());
        let negative = format!("{HEADER}\n1/4/2007;02:10:00;-1;1;240;1;0;0;0\n");
        assert!(parse_dataset(negative.as_bytes()).is_err());
    }

    #[test]
    fn rejects_empty_input() {
        assert!(matches!(parse_dataset(&b""[..]), Err(Error::EmptyInput)));
        let header_only = format!("{HEADER}\n");
        assert!(matches!(
            parse_dataset(header_only.as_bytes()),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn forward_fill_repeats_last_present_row() {
        let records = [
            present("2007-01-01 00:00", 1.0),
            missing("2007-01-01 00:01"),
            present("2007-01-01 00:02", 3.0),
        ];
        let filled = fill_missing(&records, FillPolicy::ForwardFill).unwrap();
        assert_eq!(gap_values(&filled), vec![1.0, 1.0, 3.0]);
        assert_eq!(filled[1].timestamp, ts("2007-01-01 00:01"));
    }

    #[test]
    fn forward_fill_drops_leading_gap() {
        let records = [missing("2007-01-01 00:00"), present("2007-01-01 00:01", 2.0)];
        let filled = fill_missing(&records, FillPolicy::ForwardFill).unwrap();
        assert_eq!(gap_values(&filled), vec![2.0]);
    }

    #[test]
    fn drop_policy_removes_missing_rows() {
        let records = [present("2007-01-01 00:00", 1.0), missing("2007-01-01 00:01")];
        let filled = fill_missing(&records, FillPolicy::Drop).unwrap();
        assert_eq!(filled, vec![records[0]]);
    }

    #[test]
    fn all_missing_is_an_error() {
        let records = [missing("2007-01-01 00:00"), missing("2007-01-01 00:01")];
        assert!(matches!(
            fill_missing(&records, FillPolicy::ForwardFill),
            Err(Error::AllMissing)
        ));
    }

    #[test]
    fn resample_means_each_bucket() {
        let records = [
            present("2007-01-01 00:00", 1.0),
            present("2007-01-01 00:01", 2.0),
            present("2007-01-01 00:02", 3.0),
        ];
        let series = resample(&records, Feature::GlobalActivePower, 3).unwrap();
        assert_eq!(series.values(), &[2.0]);
        assert_eq!(series.step_seconds(), 180);
    }

    #[test]
    fn resample_at_record_step_is_identity() {
        let records = [
            present("2007-01-01 00:00", 1.0),
            present("2007-01-01 00:01", 2.5),
            present("2007-01-01 00:02", 3.0),
        ];
        let series = resample(&records, Feature::GlobalActivePower, 1).unwrap();
        assert_eq!(series.values(), &[1.0, 2.5, 3.0]);
        assert_eq!(series.start(), records[0].timestamp);
    }

    #[test]
    fn resample_drops_trailing_partial_bucket() {
        let records: Vec<_> = (0..7)
            .map(|i| present(&format!("2007-01-01 00:0{i}"), i as f64))
            .collect();
        let series = resample(&records, Feature::GlobalActivePower, 3).unwrap();
        assert_eq!(series.values(), &[1.0, 4.0]);
    }

    #[test]
    fn resample_rejects_non_multiple_interval_and_gaps() {
        let two_minute = [
            present("2007-01-01 00:00", 1.0),
            present("2007-01-01 00:02", 2.0),
            present("2007-01-01 00:04", 3.0),
        ];
        assert!(matches!(
            resample(&two_minute, Feature::GlobalActivePower, 3),
            Err(Error::InvalidInterval(_))
        ));
        let gappy = [
            present("2007-01-01 00:00", 1.0),
            present("2007-01-01 00:01", 2.0),
            present("2007-01-01 00:05", 3.0),
        ];
        assert!(resample(&gappy, Feature::GlobalActivePower, 1).is_err());
    }

    #[test]
    fn hourly_resampling_of_half_a_year() {
        let start = ts("2007-01-01 00:00");
        let records: Vec<_> = (0..260_640)
            .map(|i| PowerRecord {
                timestamp: start + Duration::minutes(i),
                measurements: present("2007-01-01 00:00", (i % 7) as f64).measurements,
            })
            .collect();
        let series = resample(&records, Feature::GlobalActivePower, 60).unwrap();
        // independent count: number of whole hours between first and last record
        let last = records.last().unwrap().timestamp;
        let hours = ((last - start).num_minutes() + 1) / 60;
        assert_eq!(series.len() as i64, hours);
        assert_eq!(series.len(), 4_344);
    }

    #[test]
    fn series_file_roundtrip() {
        let series =
            UnivariateSeries::new(ts("2007-01-01 00:00"), 3600, vec![0.5, 1.25, 1.0 / 3.0]).unwrap();
        let mut buf = Vec::new();
        write_series(&series, &mut buf).unwrap();
        assert_eq!(read_series(buf.as_slice()).unwrap(), series);
    }

    #[test]
    fn slicing_keeps_inclusive_date_range() {
        let records = vec![
            present("2006-12-31 23:59", 1.0),
            present("2007-01-01 00:00", 2.0),
            present("2007-06-30 23:59", 3.0),
            present("2007-07-01 00:00", 4.0),
        ];
        let from = NaiveDate::from_ymd_opt(2007, 1, 1);
        let to = NaiveDate::from_ymd_opt(2007, 6, 30);
        assert_eq!(gap_values(&slice_dates(records, from, to)), vec![2.0, 3.0]);
    }
}
