//! Contextual classification of consumption deviations.
//!
//! A two-class CART tree decides whether a deviation is an `anomaly` (a
//! fault or irregularity worth an alert) or an `adaptation` (a legitimate
//! shift in demand explained by context such as weather, time of day,
//! holidays or what neighbouring households are doing).

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::TIMESTAMP_FORMAT;
use crate::{Error, Result, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Anomaly,
    Adaptation,
}

impl Label {
    const ALL: [Label; 2] = [Label::Anomaly, Label::Adaptation];

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Anomaly => "anomaly",
            Label::Adaptation => "adaptation",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "anomaly" => Ok(Label::Anomaly),
            "adaptation" => Ok(Label::Adaptation),
            other => Err(Error::InvalidSample(format!("unknown label `{other}`"))),
        }
    }
}

/// Weather categories; `Unknown` stands in when no weather feed is available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeatherCode {
    Clear = 0,
    Rain = 1,
    Snow = 2,
    Extreme = 3,
    Unknown = 4,
}

impl WeatherCode {
    pub const DOMAIN: usize = 5;

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => WeatherCode::Clear,
            1 => WeatherCode::Rain,
            2 => WeatherCode::Snow,
            3 => WeatherCode::Extreme,
            4 => WeatherCode::Unknown,
            other => return Err(Error::InvalidSample(format!("weather code {other} outside 0..=4"))),
        })
    }
}

impl FromStr for WeatherCode {
    type Err = Error;

    /// Accepts the numeric code, a category name, or an empty field / `?`
    /// for unknown.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.to_ascii_lowercase().as_str() {
            "" | "?" | "unknown" => Ok(WeatherCode::Unknown),
            "clear" => Ok(WeatherCode::Clear),
            "rain" => Ok(WeatherCode::Rain),
            "snow" => Ok(WeatherCode::Snow),
            "extreme" => Ok(WeatherCode::Extreme),
            num => {
                let code: u8 = num
                    .parse()
                    .map_err(|_| Error::InvalidSample(format!("invalid weather code `{s}`")))?;
                WeatherCode::from_code(code)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextSample {
    pub hour_of_day: u8,
    /// 0 = Monday.
    pub day_of_week: u8,
    pub is_holiday: bool,
    /// °C; `None` when no reading is available.
    pub temperature: Option<f64>,
    pub weather: WeatherCode,
    pub neighbor_mean_deviation: f64,
    pub consumption_deviation: f64,
}

impl ContextSample {
    pub fn validate(&self) -> Result<()> {
        if self.hour_of_day > 23 {
            return Err(Error::InvalidSample(format!("hour {} outside 0..=23", self.hour_of_day)));
        }
        if self.day_of_week > 6 {
            return Err(Error::InvalidSample(format!("day {} outside 0..=6", self.day_of_week)));
        }
        for (name, v) in [
            ("neighbor_mean_deviation", self.neighbor_mean_deviation),
            ("consumption_deviation", self.consumption_deviation),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidSample(format!("{name} must be finite and non-negative")));
            }
        }
        if self.temperature.is_some_and(|t| !t.is_finite()) {
            return Err(Error::InvalidSample("temperature must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub sample: ContextSample,
    pub label: Label,
}

/// Weather inputs as they arrive from an external feed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeatherInput {
    pub temperature: Option<f64>,
    pub code: WeatherCode,
}

/// Derives calendar fields from the timestamp and averages peer deviations
/// (0 when there are no peers).
pub fn build_context_features(
    timestamp: NaiveDateTime,
    weather: WeatherInput,
    own_deviation: f64,
    peer_deviations: &[f64],
    holidays: &HashSet<NaiveDate>,
) -> Result<ContextSample> {
    let neighbor_mean_deviation = if peer_deviations.is_empty() {
        0.0
    } else {
        peer_deviations.iter().sum::<f64>() / peer_deviations.len() as f64
    };
    let sample = ContextSample {
        hour_of_day: timestamp.hour() as u8,
        day_of_week: timestamp.weekday().num_days_from_monday() as u8,
        is_holiday: holidays.contains(&timestamp.date()),
        temperature: weather.temperature,
        weather: weather.code,
        neighbor_mean_deviation,
        consumption_deviation: own_deviation,
    };
    if peer_deviations.iter().any(|p| p.is_nan() || *p < 0.0) {
        return Err(Error::InvalidSample("peer deviations must be non-negative".into()));
    }
    sample.validate()?;
    Ok(sample)
}

/// Gini impurity `1 - Σ p²`.
pub fn gini(counts: &[usize]) -> Result<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyInput);
    }
    let n = total as f64;
    Ok(1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>())
}

/// Feature ids, in tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextFeature {
    HourOfDay = 0,
    DayOfWeek = 1,
    IsHoliday = 2,
    Temperature = 3,
    Weather = 4,
    NeighborMeanDeviation = 5,
    ConsumptionDeviation = 6,
}

impl ContextFeature {
    pub const ALL: [ContextFeature; 7] = [
        ContextFeature::HourOfDay,
        ContextFeature::DayOfWeek,
        ContextFeature::IsHoliday,
        ContextFeature::Temperature,
        ContextFeature::Weather,
        ContextFeature::NeighborMeanDeviation,
        ContextFeature::ConsumptionDeviation,
    ];

    /// Domain size of categorical features, `None` for numeric ones.
    fn categories(self) -> Option<usize> {
        match self {
            ContextFeature::DayOfWeek => Some(7),
            ContextFeature::IsHoliday => Some(2),
            ContextFeature::Weather => Some(WeatherCode::DOMAIN),
            _ => None,
        }
    }

    fn numeric(self, s: &ContextSample) -> Option<f64> {
        match self {
            ContextFeature::HourOfDay => Some(f64::from(s.hour_of_day)),
            ContextFeature::Temperature => s.temperature,
            ContextFeature::NeighborMeanDeviation => Some(s.neighbor_mean_deviation),
            ContextFeature::ConsumptionDeviation => Some(s.consumption_deviation),
            _ => None,
        }
    }

    fn category(self, s: &ContextSample) -> usize {
        match self {
            ContextFeature::DayOfWeek => usize::from(s.day_of_week),
            ContextFeature::IsHoliday => usize::from(s.is_holiday),
            ContextFeature::Weather => usize::from(s.weather.code()),
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitRule {
    /// `value > threshold` goes right, `≤` goes left.
    Numeric { feature: ContextFeature, threshold: f64 },
    /// Categories in `left` go left; everything else goes right.
    Categorical { feature: ContextFeature, left: Vec<u8> },
}

impl SplitRule {
    pub fn feature(&self) -> ContextFeature {
        match self {
            SplitRule::Numeric { feature, .. } | SplitRule::Categorical { feature, .. } => *feature,
        }
    }

    /// `None` when the sample lacks the feature (missing temperature).
    fn goes_left(&self, s: &ContextSample) -> Option<bool> {
        match self {
            SplitRule::Numeric { feature, threshold } => feature.numeric(s).map(|v| v <= *threshold),
            SplitRule::Categorical { feature, left } => {
                let c = feature.category(s);
                Some(left.iter().any(|&l| usize::from(l) == c))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        /// Training counts, indexed anomaly, adaptation.
        counts: [usize; 2],
        probabilities: [f64; 2],
        label: Label,
    },
    Split {
        rule: SplitRule,
        n_samples: usize,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    fn leaf(counts: [usize; 2]) -> Self {
        let total = (counts[0] + counts[1]) as f64;
        let probabilities = [counts[0] as f64 / total, counts[1] as f64 / total];
        // ties resolve to anomaly
        let label = if counts[1] > counts[0] {
            Label::Adaptation
        } else {
            Label::Anomaly
        };
        TreeNode::Leaf {
            counts,
            probabilities,
            label,
        }
    }

    fn n_samples(&self) -> usize {
        match self {
            TreeNode::Leaf { counts, .. } => counts[0] + counts[1],
            TreeNode::Split { n_samples, .. } => *n_samples,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: 6,
            min_samples_leaf: 5,
        }
    }
}

fn class_counts(samples: &[&LabeledSample]) -> [usize; 2] {
    let mut counts = [0; 2];
    for s in samples {
        counts[s.label.index()] += 1;
    }
    counts
}

fn weighted_gini(left: [usize; 2], right: [usize; 2]) -> f64 {
    let nl = (left[0] + left[1]) as f64;
    let nr = (right[0] + right[1]) as f64;
    let g = |c: [usize; 2], n: f64| 1.0 - (c[0] as f64 / n).powi(2) - (c[1] as f64 / n).powi(2);
    (nl * g(left, nl) + nr * g(right, nr)) / (nl + nr)
}

const GAIN_EPSILON: f64 = 1e-12;

struct Candidate {
    rule: SplitRule,
    impurity: f64,
}

fn best_numeric(
    feature: ContextFeature,
    samples: &[&LabeledSample],
    min_leaf: usize,
) -> Option<Candidate> {
    let mut points: Vec<(f64, Label)> = samples
        .iter()
        .map(|s| (feature.numeric(&s.sample).unwrap_or(f64::NAN), s.label))
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total = class_counts(samples);
    let mut left = [0usize; 2];
    let mut best: Option<Candidate> = None;
    for i in 0..points.len() - 1 {
        left[points[i].1.index()] += 1;
        let (v, next) = (points[i].0, points[i + 1].0);
        if v == next {
            continue;
        }
        let n_left = i + 1;
        if n_left < min_leaf || points.len() - n_left < min_leaf {
            continue;
        }
        let right = [total[0] - left[0], total[1] - left[1]];
        let impurity = weighted_gini(left, right);
        if best.as_ref().is_none_or(|b| impurity < b.impurity - GAIN_EPSILON) {
            best = Some(Candidate {
                rule: SplitRule::Numeric {
                    feature,
                    threshold: v + (next - v) / 2.0,
                },
                impurity,
            });
        }
    }
    best
}

fn best_categorical(
    feature: ContextFeature,
    domain: usize,
    samples: &[&LabeledSample],
    min_leaf: usize,
) -> Option<Candidate> {
    let mut per_category = vec![[0usize; 2]; domain];
    for s in samples {
        per_category[feature.category(&s.sample)][s.label.index()] += 1;
    }
    let present: Vec<usize> = (0..domain)
        .filter(|&c| per_category[c][0] + per_category[c][1] > 0)
        .collect();
    if present.len() < 2 {
        return None;
    }
    let total = class_counts(samples);
    let mut best: Option<Candidate> = None;
    // Subsets of the present categories that contain the first one, so each
    // partition is visited once; masks ascend for a stable tie-break.
    let rest = present.len() - 1;
    for mask in 0..(1u32 << rest) {
        let mut left_cats = vec![present[0]];
        for (b, &c) in present[1..].iter().enumerate() {
            if mask & (1 << b) != 0 {
                left_cats.push(c);
            }
        }
        if left_cats.len() == present.len() {
            continue;
        }
        let mut left = [0usize; 2];
        for &c in &left_cats {
            left[0] += per_category[c][0];
            left[1] += per_category[c][1];
        }
        let right = [total[0] - left[0], total[1] - left[1]];
        if left[0] + left[1] < min_leaf || right[0] + right[1] < min_leaf {
            continue;
        }
        let impurity = weighted_gini(left, right);
        if best.as_ref().is_none_or(|b| impurity < b.impurity - GAIN_EPSILON) {
            best = Some(Candidate {
                rule: SplitRule::Categorical {
                    feature,
                    left: left_cats.iter().map(|&c| c as u8).collect(),
                },
                impurity,
            });
        }
    }
    best
}

fn grow(
    samples: &[&LabeledSample],
    depth: usize,
    config: &TreeConfig,
    features: &[ContextFeature],
) -> TreeNode {
    let counts = class_counts(samples);
    let parent = gini(&counts).unwrap_or(0.0);
    if depth >= config.max_depth || counts[0] == 0 || counts[1] == 0 || samples.len() < 2 * config.min_samples_leaf {
        return TreeNode::leaf(counts);
    }

    let mut best: Option<Candidate> = None;
    for &feature in features {
        let candidate = match feature.categories() {
            Some(domain) => best_categorical(feature, domain, samples, config.min_samples_leaf),
            None => best_numeric(feature, samples, config.min_samples_leaf),
        };
        if let Some(c) = candidate {
            if best.as_ref().is_none_or(|b| c.impurity < b.impurity - GAIN_EPSILON) {
                best = Some(c);
            }
        }
    }
    let Some(best) = best.filter(|b| b.impurity < parent - GAIN_EPSILON) else {
        return TreeNode::leaf(counts);
    };

    let (left, right): (Vec<&LabeledSample>, Vec<&LabeledSample>) = samples
        .iter()
        .partition(|s| best.rule.goes_left(&s.sample).unwrap_or(true));
    TreeNode::Split {
        n_samples: samples.len(),
        left: Box::new(grow(&left, depth + 1, config, features)),
        right: Box::new(grow(&right, depth + 1, config, features)),
        rule: best.rule,
    }
}

/// Greedy recursive partitioning on weighted Gini impurity.
///
/// Ties between equally good splits go to the lower feature id, then to the
/// lower threshold (or lower category mask). If any sample lacks a
/// temperature reading, temperature is not used for this tree.
pub fn train_tree(samples: &[LabeledSample], config: &TreeConfig) -> Result<TreeNode> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    if config.min_samples_leaf == 0 {
        return Err(Error::InvalidConfig("tree.min_samples_leaf must be at least 1".into()));
    }
    for s in samples {
        s.sample.validate()?;
    }
    let temperature_complete = samples.iter().all(|s| s.sample.temperature.is_some());
    let features: Vec<ContextFeature> = ContextFeature::ALL
        .into_iter()
        .filter(|f| *f != ContextFeature::Temperature || temperature_complete)
        .collect();
    let refs: Vec<&LabeledSample> = samples.iter().collect();
    Ok(grow(&refs, 0, config, &features))
}

/// Majority label of the reached leaf and that label's probability.
///
/// A sample missing the split feature follows the child that saw more
/// training samples.
pub fn classify(tree: &TreeNode, sample: &ContextSample) -> (Label, f64) {
    let mut node = tree;
    loop {
        match node {
            TreeNode::Leaf {
                probabilities,
                label,
                ..
            } => return (*label, probabilities[label.index()]),
            TreeNode::Split {
                rule, left, right, ..
            } => {
                let go_left = rule
                    .goes_left(sample)
                    .unwrap_or(left.n_samples() >= right.n_samples());
                node = if go_left { left } else { right };
            }
        }
    }
}

pub fn accuracy(tree: &TreeNode, samples: &[LabeledSample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let hits = samples
        .iter()
        .filter(|s| classify(tree, &s.sample).0 == s.label)
        .count();
    hits as f64 / samples.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TreeFile {
    schema_version: u32,
    model: String,
    config: TreeConfig,
    root: TreeNode,
}

pub fn write_tree<W: Write>(tree: &TreeNode, config: &TreeConfig, writer: W) -> Result<()> {
    let file = TreeFile {
        schema_version: SCHEMA_VERSION,
        model: "context_tree".into(),
        config: *config,
        root: tree.clone(),
    };
    serde_json::to_writer_pretty(writer, &file)?;
    Ok(())
}

pub fn read_tree<R: Read>(reader: R) -> Result<(TreeNode, TreeConfig)> {
    let file: TreeFile = serde_json::from_reader(reader)?;
    if file.schema_version != SCHEMA_VERSION || file.model != "context_tree" {
        return Err(Error::ModelFile(format!(
            "expected context_tree schema {SCHEMA_VERSION}, found {} schema {}",
            file.model, file.schema_version
        )));
    }
    Ok((file.root, file.config))
}

pub const SAMPLE_HEADER: &str =
    "timestamp,temperature,weather_code,is_holiday,own_deviation,peer_deviations,label";

/// One parsed row of a context CSV; `label` is `None` for unlabeled rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    pub timestamp: NaiveDateTime,
    pub sample: ContextSample,
    pub label: Option<Label>,
    /// The raw line, echoed in prediction output.
    pub raw: String,
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" | "" => Some(false),
        _ => None,
    }
}

/// Reads context rows. The header must start with the six feature columns;
/// the `label` column is optional.
pub fn read_samples<R: BufRead>(reader: R, holidays: &HashSet<NaiveDate>) -> Result<(Vec<SampleRow>, bool)> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => return Err(Error::EmptyInput),
    };
    let columns: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    let expected: Vec<&str> = SAMPLE_HEADER.split(',').collect();
    let has_label = match columns.len() {
        6 => false,
        7 => true,
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `{SAMPLE_HEADER}`"),
            })
        }
    };
    if columns[..] != expected[..columns.len()] {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{SAMPLE_HEADER}`"),
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
        if fields.len() != columns.len() {
            return Err(bad(format!("expected {} fields, found {}", columns.len(), fields.len())));
        }
        let timestamp = NaiveDateTime::parse_from_str(fields[0], TIMESTAMP_FORMAT)
            .map_err(|e| bad(format!("invalid timestamp `{}`: {e}", fields[0])))?;
        let temperature = match fields[1] {
            "" | "?" => None,
            t => Some(t.parse::<f64>().map_err(|_| bad(format!("invalid temperature `{t}`")))?),
        };
        let code: WeatherCode = fields[2].parse().map_err(|e: Error| bad(e.to_string()))?;
        let flagged_holiday =
            parse_bool(fields[3]).ok_or_else(|| bad(format!("invalid is_holiday `{}`", fields[3])))?;
        let own: f64 = fields[4]
            .parse()
            .map_err(|_| bad(format!("invalid own_deviation `{}`", fields[4])))?;
        let peers = if fields[5].is_empty() {
            Vec::new()
        } else {
            fields[5]
                .split('|')
                .map(|p| p.trim().parse::<f64>().map_err(|_| bad(format!("invalid peer deviation `{p}`"))))
                .collect::<Result<Vec<f64>>>()?
        };
        let mut sample = build_context_features(
            timestamp,
            WeatherInput { temperature, code },
            own,
            &peers,
            holidays,
        )
        .map_err(|e| bad(e.to_string()))?;
        sample.is_holiday |= flagged_holiday;
        let label = if has_label {
            Some(fields[6].parse().map_err(|e: Error| bad(e.to_string()))?)
        } else {
            None
        };
        rows.push(SampleRow {
            timestamp,
            sample,
            label,
            raw: line.trim().to_string(),
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok((rows, has_label))
}

/// Writes rows in the labeled-sample CSV format.
pub fn write_samples<W: Write>(rows: &[(NaiveDateTime, LabeledSample, Vec<f64>)], mut writer: W) -> Result<()> {
    writeln!(writer, "{SAMPLE_HEADER}")?;
    for (ts, s, peers) in rows {
        let temp = s.sample.temperature.map(|t| t.to_string()).unwrap_or_default();
        let peers: Vec<String> = peers.iter().map(f64::to_string).collect();
        writeln!(
            writer,
            "{},{},{},{},{},{},{}",
            ts.format(TIMESTAMP_FORMAT),
            temp,
            s.sample.weather.code(),
            u8::from(s.sample.is_holiday),
            s.sample.consumption_deviation,
            peers.join("|"),
            s.label
        )?;
    }
    Ok(())
}

/// Synthetic scenarios labeled by the rule
/// `anomaly ⇔ consumption_deviation > 0.3`, with a share of labels flipped.
///
/// Returns the timestamp and peer deviations alongside each sample so the
/// set can be written as CSV.
pub fn synthetic_samples(
    count: usize,
    label_noise: f64,
    seed: u64,
) -> Vec<(NaiveDateTime, LabeledSample, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = NaiveDate::from_ymd_opt(2007, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap();
    let n_flip = (count as f64 * label_noise).round() as usize;
    let flips: HashSet<usize> = rand::seq::index::sample(&mut rng, count, n_flip.min(count))
        .into_iter()
        .collect();
    (0..count)
        .map(|i| {
            let ts = base + chrono::Duration::hours(rng.gen_range(0..24 * 181));
            let temperature = Some((rng.gen_range(-50..350) as f64) / 10.0);
            let code = WeatherCode::from_code(rng.gen_range(0..4)).unwrap();
            let own = f64::from(rng.gen_range(0..1000u32)) / 1000.0;
            let peers: Vec<f64> = (0..rng.gen_range(0..4))
                .map(|_| f64::from(rng.gen_range(0..500u32)) / 1000.0)
                .collect();
            let sample = build_context_features(
                ts,
                WeatherInput {
                    temperature,
                    code,
                },
                own,
                &peers,
                &HashSet::new(),
            )
            .expect("generated fields are in range");
            let mut label = if own > 0.3 { Label::Anomaly } else { Label::Adaptation };
            if flips.contains(&i) {
                label = Label::ALL[1 - label.index()];
            }
            (ts, LabeledSample { sample, label }, peers)
        })
        .collect()
}
