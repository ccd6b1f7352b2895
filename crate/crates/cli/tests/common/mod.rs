#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{Datelike, Duration, NaiveDate, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const HEADER: &str = "Date;Time;Global_active_power;Global_reactive_power;Voltage;Global_intensity;Sub_metering_1;Sub_metering_2;Sub_metering_3";

/// Minute-level household-like load: a daily profile with morning and
/// evening peaks, a weekend lift, appliance bursts and a few blank rows.
pub fn household_dataset(days: i64, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = NaiveDate::from_ymd_opt(2007, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let mut out = String::with_capacity((days * 1440 * 60) as usize);
    out.push_str(HEADER);
    out.push('\n');
    let mut burst = 0usize;
    let mut burst_kw = 0.0;
    for m in 0..days * 1440 {
        let t = start + Duration::minutes(m);
        let date = format!("{}/{}/{}", t.day(), t.month(), t.year());
        let time = t.format("%H:%M:%S");
        if rng.gen_bool(0.002) {
            writeln!(out, "{date};{time};?;?;?;?;?;?;").unwrap();
            continue;
        }
        let hour = t.hour() as f64 + t.minute() as f64 / 60.0;
        let peak = |c: f64, w: f64| (-((hour - c) / w).powi(2)).exp();
        let weekend = if t.weekday().num_days_from_monday() >= 5 { 0.3 } else { 0.0 };
        let season = 0.2 * (m as f64 / (1440.0 * 60.0)).cos();
        if burst == 0 && rng.gen_bool(0.01) {
            burst = rng.gen_range(5..40);
            burst_kw = rng.gen_range(1.0..3.0);
        }
        let extra = if burst > 0 {
            burst -= 1;
            burst_kw
        } else {
            0.0
        };
        let active: f64 = (0.35
            + 1.2 * peak(7.5, 1.2)
            + 1.8 * peak(19.5, 2.0)
            + weekend * peak(13.0, 3.0)
            + season
            + extra
            + rng.gen_range(-0.08..0.08))
        .max(0.08);
        let reactive = 0.1 + 0.05 * rng.gen::<f64>();
        let voltage = 240.0 + rng.gen_range(-3.0..3.0);
        let intensity = active * 1000.0 / voltage;
        let s3 = if active > 1.0 { 17.0 } else { 0.0 };
        writeln!(
            out,
            "{date};{time};{active:.3};{reactive:.3};{voltage:.3};{intensity:.3};0.000;1.000;{s3:.3}"
        )
        .unwrap();
    }
    out
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_gridwise"))
}

pub fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

pub fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}
