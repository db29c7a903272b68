//! Several experiments over the same data, ranked by test RMSE.

use std::path::PathBuf;

use stnn_core::{Error, Result};

use crate::config::ExperimentConfig;
use crate::experiment::{self, Experiment, MetricsReport};

fn data_key(cfg: &ExperimentConfig) -> Vec<PathBuf> {
    std::iter::once(&cfg.data.series)
        .chain(&cfg.data.spatial)
        .map(|p| std::fs::canonicalize(p).unwrap_or_else(|_| p.clone()))
        .collect()
}

/// Trains every config, one thread each. Results keep the input order.
pub fn run_all(configs: &[ExperimentConfig]) -> Result<Vec<Experiment>> {
    if configs.len() < 2 {
        return Err(Error::InvalidInput("compare needs at least two configs".into()));
    }
    for c in configs {
        c.validate()?;
    }
    let key = data_key(&configs[0]);
    for c in &configs[1..] {
        if data_key(c) != key {
            return Err(Error::InvalidInput(format!(
                "configs '{}' and '{}' use different data files",
                configs[0].label(),
                c.label()
            )));
        }
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = configs.iter().map(|c| s.spawn(move || experiment::run(c))).collect();
        handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    None,
    Best,
    Worst,
}

impl Mark {
    fn as_str(self) -> &'static str {
        match self {
            Mark::None => "",
            Mark::Best => "best",
            Mark::Worst => "worst",
        }
    }
}

/// Best marks the minimum test RMSE, worst the maximum; all rows tie → no marks.
pub fn marks(reports: &[MetricsReport]) -> Vec<Mark> {
    let vals: Vec<f64> = reports.iter().map(|r| r.test_rmse).collect();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    vals.iter()
        .map(|&v| match v {
            _ if lo == hi => Mark::None,
            v if v == lo => Mark::Best,
            v if v == hi => Mark::Worst,
            _ => Mark::None,
        })
        .collect()
}

const HEADER: [&str; 6] = ["name", "model", "train_rmse", "test_rmse", "epochs", "mark"];

fn rows(reports: &[MetricsReport]) -> Vec<[String; 6]> {
    reports
        .iter()
        .zip(marks(reports))
        .map(|(r, m)| {
            [
                r.name.clone(),
                r.model.clone(),
                r.train_rmse.to_string(),
                r.test_rmse.to_string(),
                r.epochs.to_string(),
                m.as_str().to_string(),
            ]
        })
        .collect()
}

pub fn table_csv(reports: &[MetricsReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory write");
    for r in rows(reports) {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

/// Fixed-width rendering; best and worst rows are also flagged with `*` and `!`.
pub fn table_text(reports: &[MetricsReport]) -> String {
    let body = rows(reports);
    let mut width = HEADER.map(str::len);
    for r in &body {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: [&str; 6], flag: char| {
        let mut s = String::new();
        s.push(flag);
        s.push(' ');
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            if (2..5).contains(&i) {
                s.push_str(&format!("{c:>w$}", w = width[i]));
            } else {
                s.push_str(&format!("{c:<w$}", w = width[i]));
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(HEADER, ' ');
    for r in &body {
        let flag = match r[5].as_str() {
            "best" => '*',
            "worst" => '!',
            _ => ' ',
        };
        out.push_str(&line([&r[0], &r[1], &r[2], &r[3], &r[4], &r[5]], flag));
    }
    out
}
