mod common;

use std::fs;
use std::path::Path;

use common::*;
use gridwise::context::{synthetic_samples, write_samples};

fn write_series(path: &Path, values: &[f64]) {
    let mut s = String::from("timestamp,value\n");
    let start = chrono::NaiveDate::from_ymd_opt(2007, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    for (i, v) in values.iter().enumerate() {
        let t = start + chrono::Duration::hours(i as i64);
        s.push_str(&format!("{},{v}\n", t.format("%Y-%m-%dT%H:%M:%S")));
    }
    fs::write(path, s).unwrap();
}

fn small_raw(dir: &Path) -> std::path::PathBuf {
    let raw = dir.join("raw.txt");
    fs::write(&raw, household_dataset(12, 3)).unwrap();
    raw
}

const FAST: &[&str] = &[
    "--set", "data.resample_minutes=60",
    "--set", "lstm.lookback=12",
    "--set", "lstm.hidden_size=8",
    "--set", "lstm.epochs=3",
    "--set", "lstm.batch_size=16",
    "--set", "svr.lookback=12",
];

fn args<'a>(head: &[&'a str], out: &'a str) -> Vec<&'a str> {
    let mut v = head.to_vec();
    v.extend_from_slice(&["--out", out]);
    v.extend_from_slice(FAST);
    v
}

#[test]
fn ingest_reports_counts_and_span() {
    let dir = tempfile::tempdir().unwrap();
    let raw = small_raw(dir.path());
    let out = dir.path().join("out");
    let o = run(&args(&["ingest", "--input", raw.to_str().unwrap()], out.to_str().unwrap()));
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("records: 17280"), "{text}");
    assert!(text.contains("span: 2007-01-01T00:00:00 .. 2007-01-12T23:59:00"), "{text}");
    let series = fs::read_to_string(out.join("series.csv")).unwrap();
    assert_eq!(series.lines().count(), 1 + 12 * 24);
}

#[test]
fn ingest_date_slice() {
    let dir = tempfile::tempdir().unwrap();
    let raw = small_raw(dir.path());
    let out = dir.path().join("out");
    let mut a = args(&["ingest", "--input", raw.to_str().unwrap()], out.to_str().unwrap());
    a.extend_from_slice(&["--set", "data.start=2007-01-03", "--set", "data.end=2007-01-04"]);
    let o = run(&a);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("records: 2880"));
}

#[test]
fn empty_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("empty.txt");
    fs::write(&raw, "").unwrap();
    let o = run(&["ingest", "--input", raw.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("empty input"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_prints_usage_and_exits_2() {
    let o = run(&["ingest", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn bad_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "lstm.depth = 3\n").unwrap();
    let o = run(&["detect", "--config", conf.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown config key `lstm.depth`"));
}

#[test]
fn train_forecast_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let raw = small_raw(dir.path());
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    assert!(run(&args(&["ingest", "--input", raw.to_str().unwrap()], out_s)).status.success());

    for model in ["lstm", "svr"] {
        let o = run(&args(&["train", "--model", model], out_s));
        assert!(o.status.success(), "{model}: {}", stderr(&o));
        assert!(out.join(format!("{model}_model.json")).exists());
        let metrics: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join(format!("{model}_metrics.json"))).unwrap()).unwrap();
        let splits: Vec<&str> = metrics["splits"]
            .as_array()
            .unwrap()
            .iter()
            .map(|s| s["split"].as_str().unwrap())
            .collect();
        // the SVR report is test-only unless asked otherwise
        let expected: &[&str] = if model == "svr" { &["test"] } else { &["train", "test"] };
        assert_eq!(splits, expected);
        for s in metrics["splits"].as_array().unwrap() {
            assert!(s["rmse_normalized"].as_f64().unwrap() >= s["mae_normalized"].as_f64().unwrap());
        }
    }

    // forecasting with the saved model reproduces the training-time export
    let trained = fs::read_to_string(out.join("svr_forecast.csv")).unwrap();
    let o = run(&args(&["forecast", "--model", "svr"], out_s));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("next step 2007-01-13T00:00:00"));
    assert_eq!(fs::read_to_string(out.join("svr_forecast.csv")).unwrap(), trained);

    let o = run(&args(&["eval"], out_s));
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("svr_test_mae < lstm_test_mae: "), "{text}");
    let cmp: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("comparison.json")).unwrap()).unwrap();
    assert_eq!(
        cmp["svr_beats_lstm"].as_bool().unwrap(),
        cmp["svr"]["test_mae"].as_f64().unwrap() < cmp["lstm"]["test_mae"].as_f64().unwrap()
    );
}

#[test]
fn train_with_oversized_lookback_reports_insufficient_data() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("s.csv");
    write_series(&series, &[1.0, 2.0, 3.0, 4.0, 5.0]);
    let o = run(&[
        "train", "--model", "lstm", "--series", series.to_str().unwrap(),
        "--out", dir.path().to_str().unwrap(), "--set", "lstm.lookback=5",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("train lstm") && err.contains("insufficient data"), "{err}");
}

#[test]
fn divergence_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("s.csv");
    let values: Vec<f64> = (0..60).map(|i| (i as f64 / 3.0).sin()).collect();
    write_series(&series, &values);
    let o = run(&[
        "train", "--model", "lstm", "--series", series.to_str().unwrap(),
        "--out", dir.path().to_str().unwrap(),
        "--set", "lstm.lookback=4", "--set", "lstm.hidden_size=4",
        "--set", "lstm.learning_rate=1e300",
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("train lstm"));
}

fn detect(values: &[f64], extra: &[&str]) -> (std::process::Output, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("s.csv");
    write_series(&series, values);
    let mut a = vec![
        "detect", "--series", series.to_str().unwrap(),
        "--out", dir.path().to_str().unwrap(),
        "--set", "anomaly.window_length=1", "--set", "anomaly.k=1",
    ];
    let owned: Vec<String> = extra.iter().map(|s| s.to_string()).collect();
    a.extend(owned.iter().map(String::as_str));
    let o = run(&a);
    (o, dir)
}

/// Points whose nearest-neighbour gaps are all different.
fn spread_values(n: usize) -> Vec<f64> {
    let mut x = 0.0;
    (0..n)
        .map(|i| {
            x += 1.0 + i as f64 * 1e-3;
            x
        })
        .collect()
}

#[test]
fn detect_top_tenth_percent() {
    let (o, dir) = detect(&spread_values(10_000), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("flagged_count: 10\n"), "{}", stdout(&o));
    let csv = fs::read_to_string(dir.path().join("anomalies.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.ends_with(",true")).count(), 10);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("anomalies.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["flagged_count"], 10);
}

#[test]
fn detect_median_flags_about_half() {
    let (o, _dir) = detect(&spread_values(1000), &["--set", "anomaly.percentile=50"]);
    assert!(o.status.success());
    let line = stdout(&o).lines().find(|l| l.starts_with("flagged_count")).unwrap().to_string();
    let n: usize = line.split(": ").nth(1).unwrap().parse().unwrap();
    assert!((495..=505).contains(&n), "{n}");
}

#[test]
fn detect_window_longer_than_series_fails() {
    let (o, _dir) = detect(&[1.0, 2.0, 3.0], &["--set", "anomaly.window_length=10"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn classify_train_then_apply() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("samples.csv");
    let mut buf = Vec::new();
    write_samples(&synthetic_samples(200, 0.0, 21), &mut buf).unwrap();
    fs::write(&samples, &buf).unwrap();
    let out = dir.path().join("out");
    let tree = dir.path().join("tree.json");
    let o = run(&[
        "classify", "--train", "--samples", samples.to_str().unwrap(),
        "--tree", tree.to_str().unwrap(), "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("label agreement: 1\n"), "{}", stdout(&o));
    let trained = fs::read_to_string(out.join("context_predictions.csv")).unwrap();

    let o = run(&[
        "classify", "--samples", samples.to_str().unwrap(),
        "--tree", tree.to_str().unwrap(), "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let applied = fs::read_to_string(out.join("context_predictions.csv")).unwrap();
    assert_eq!(trained, applied);
    assert!(applied.starts_with(
        "timestamp,temperature,weather_code,is_holiday,own_deviation,peer_deviations,label,probability\n"
    ));

    let single = dir.path().join("one.csv");
    fs::write(
        &single,
        "timestamp,temperature,weather_code,is_holiday,own_deviation,peer_deviations\n\
         2007-03-04T18:00:00,12.5,1,0,0.9,0.1|0.2\n",
    )
    .unwrap();
    let o = run(&[
        "classify", "--samples", single.to_str().unwrap(),
        "--tree", tree.to_str().unwrap(), "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = fs::read_to_string(out.join("context_predictions.csv")).unwrap();
    assert_eq!(rows.lines().count(), 2);
    assert!(rows.lines().nth(1).unwrap().contains(",anomaly,"), "{rows}");
}

#[test]
fn classify_needs_a_model_or_labels() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("s.csv");
    fs::write(
        &samples,
        "timestamp,temperature,weather_code,is_holiday,own_deviation,peer_deviations\n\
         2007-03-04T18:00:00,12.5,1,0,0.9,\n",
    )
    .unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["classify", "--samples", samples.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no model"), "{}", stderr(&o));
    let o = run(&["classify", "--train", "--samples", samples.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no label column"), "{}", stderr(&o));
}

#[test]
fn eval_identical_forecasts_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("f.csv");
    fs::write(
        &f,
        "timestamp,actual,predicted,residual\n\
         2007-01-01T00:00:00,0.5,0.4,0.09999999999999998\n\
         2007-01-01T01:00:00,0.6,0.7,-0.09999999999999998\n",
    )
    .unwrap();
    let fs_ = f.to_str().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["eval", "--lstm", fs_, "--svr", fs_, "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("svr_test_mae < lstm_test_mae: false"));
    let cmp: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("comparison.json")).unwrap()).unwrap();
    assert_eq!(cmp["lstm"]["test_mae"], cmp["svr"]["test_mae"]);

    let o = run(&["eval", "--lstm", fs_, "--svr", "/nonexistent/svr.csv", "--out", out]);
    assert_eq!(o.status.code(), Some(2));

    let other = dir.path().join("g.csv");
    fs::write(
        &other,
        "timestamp,actual,predicted,residual\n2008-01-01T00:00:00,0.5,0.4,0.1\n",
    )
    .unwrap();
    let o = run(&["eval", "--lstm", fs_, "--svr", other.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("misaligned"));
}

#[test]
fn commands_leave_inputs_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let raw = small_raw(dir.path());
    let before = fs::read(&raw).unwrap();
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    assert!(run(&args(&["ingest", "--input", raw.to_str().unwrap()], out_s)).status.success());
    let series_before = fs::read(out.join("series.csv")).unwrap();
    assert!(run(&args(&["detect", "--set", "anomaly.window_length=6"], out_s)).status.success());
    assert!(run(&args(&["train", "--model", "svr"], out_s)).status.success());
    assert_eq!(fs::read(&raw).unwrap(), before);
    assert_eq!(fs::read(out.join("series.csv")).unwrap(), series_before);
}
