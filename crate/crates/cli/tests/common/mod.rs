//! Fixtures shared by the CLI test targets.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stnn_core::data::TimeSeries;
use stnn_core::{Matrix, SpatialFeatureSet, StnnConfig, StnnModel, StnnVariant};

pub fn stnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stnn")).args(args).env("RUST_LOG", "error").output().expect("binary runs")
}

/// Runs the binary and panics with its stderr unless it exits 0.
pub fn stnn_ok(args: &[&str]) -> String {
    let out = stnn(args);
    assert!(
        out.status.success(),
        "stnn {args:?} failed ({:?}): {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&read(path)).unwrap()
}

pub fn start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 22).unwrap()
}

/// Writes `values` (one `n × d` matrix per day) as a series CSV starting at [`start_date`].
pub fn write_series(path: &Path, locations: &[&str], targets: &[&str], values: Vec<Matrix>) -> TimeSeries {
    let dates = (0..values.len() as u64).map(|k| start_date() + chrono::Days::new(k)).collect();
    let ts = TimeSeries::new(
        dates,
        locations.iter().map(|s| s.to_string()).collect(),
        targets.iter().map(|s| s.to_string()).collect(),
        values,
    )
    .unwrap();
    ts.write_csv(path).unwrap();
    ts
}

pub fn write_spatial(path: &Path, names: &[&str], w: &Matrix) {
    let mut s = String::new();
    for n in names {
        let _ = write!(s, ",{n}");
    }
    s.push('\n');
    for (i, n) in names.iter().enumerate() {
        s.push_str(n);
        for j in 0..names.len() {
            let _ = write!(s, ",{}", w[(i, j)]);
        }
        s.push('\n');
    }
    std::fs::write(path, s).unwrap();
}

pub const TEACHER_LOCATIONS: [&str; 5] = ["A", "B", "C", "D", "E"];

/// Series of `m` days from a seeded STNN-A teacher (n = 5, d = 1, p = 2, l = 6),
/// shifted to positive counts, plus the spatial matrix files.
pub fn teacher_files(dir: &Path, m: usize) -> (PathBuf, Vec<PathBuf>, TimeSeries) {
    let (n, p, l) = (5, 2, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mats: Vec<Matrix> = (0..p)
        .map(|_| {
            let mut w = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    if i != j && rng.gen_bool(0.5) {
                        w[(i, j)] = rng.gen_range(0.2..1.0);
                    }
                }
            }
            let top = w.as_slice().iter().fold(0.0f64, |a, v| a.max(v.abs()));
            w.scale(1.0 / top)
        })
        .collect();
    let w = SpatialFeatureSet::new(n, mats.clone()).unwrap();
    let mut model = StnnModel::new(StnnConfig::new(n, 1, p, l, StnnVariant::Augmented, 1), 2).unwrap();
    for v in model.params.b.weights_mut()[0].as_mut_slice() {
        *v *= 1.5;
    }
    let s0 = Matrix::from_vec(n, l, (0..n * l).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let (_, obs) = model.simulate(&[s0], m, &w).unwrap();
    let counts = obs.iter().map(|x| x.map(|v| 100.0 * (v + 1.0))).collect();

    let series = dir.join("teacher.csv");
    let ts = write_series(&series, &TEACHER_LOCATIONS, &["cases"], counts);
    let spatial = mats
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let path = dir.join(format!("w{}.csv", i + 1));
            write_spatial(&path, &TEACHER_LOCATIONS, w);
            path
        })
        .collect();
    (series, spatial, ts)
}

/// Population standard deviation over every entry.
pub fn std_dev(xs: &[Matrix]) -> f64 {
    let all: Vec<f64> = xs.iter().flat_map(|x| x.as_slice().iter().copied()).collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    (all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / all.len() as f64).sqrt()
}

/// Parses a series CSV into (dates, rows).
pub fn parse_rows(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut dates = Vec::new();
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        let mut it = line.split(',');
        dates.push(it.next().unwrap().to_string());
        rows.push(it.map(|v| v.parse().unwrap()).collect());
    }
    (dates, rows)
}

/// Removes the wall-clock field so two metrics documents can be compared byte for byte.
pub fn strip_wall_time(text: &str) -> String {
    text.lines().filter(|l| !l.trim_start().starts_with("\"wall_time_seconds\"")).collect::<Vec<_>>().join("\n")
}

pub fn write_config(path: &Path, body: &str) {
    std::fs::write(path, body).unwrap();
}
