//! Time-series ingestion and the transformations applied before training.
//!
//! Series files are CSV with a `date` column followed by one column per
//! `location:target` pair, dates in ISO-8601 and one row per day.

mod correlate;
mod normalize;
mod spatial;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub use correlate::{
    correlate, load_factors, pearson, CorrelateOptions, CorrelationRow, CorrelationTable, FactorTable, Reduce,
};
pub use normalize::{NormMode, Normalizer};
pub use spatial::{load_spatial, load_spatial_excluding, parse_spatial, parse_spatial_excluding};

/// `m` daily observations of `d` targets at `n` locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    dates: Vec<NaiveDate>,
    locations: Vec<String>,
    targets: Vec<String>,
    /// One `n × d` matrix per date.
    values: Vec<Matrix>,
}

/// A non-fatal finding from validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataWarning(pub String);

impl std::fmt::Display for DataWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Targets holding running totals, which should never decrease.
pub fn is_cumulative_target(name: &str) -> bool {
    let n = name.to_ascii_lowercase();
    matches!(n.as_str(), "confirmed" | "deaths" | "recovered") || n.starts_with("cumulative")
}

impl TimeSeries {
    pub fn new(
        dates: Vec<NaiveDate>,
        locations: Vec<String>,
        targets: Vec<String>,
        values: Vec<Matrix>,
    ) -> Result<Self> {
        if dates.is_empty() || locations.is_empty() || targets.is_empty() {
            return Err(Error::InvalidInput("a series needs at least one date, location and target".into()));
        }
        if dates.len() != values.len() {
            return Err(Error::dim("TimeSeries", format!("{} value rows", dates.len()), values.len()));
        }
        for w in dates.windows(2) {
            if w[1].signed_duration_since(w[0]).num_days() != 1 {
                return Err(Error::InvalidInput(format!("dates must be consecutive days: {} follows {}", w[1], w[0])));
            }
        }
        let (n, d) = (locations.len(), targets.len());
        for (t, v) in values.iter().enumerate() {
            if v.shape() != (n, d) {
                return Err(Error::dim(
                    "TimeSeries",
                    format!("{n}x{d}"),
                    format!("{}x{} at {}", v.rows(), v.cols(), dates[t]),
                ));
            }
        }
        Ok(TimeSeries { dates, locations, targets, values })
    }

    /// Same labels as `self`, new values (e.g. after normalization).
    pub fn with_values(&self, values: Vec<Matrix>) -> Result<Self> {
        Self::new(self.dates.clone(), self.locations.clone(), self.targets.clone(), values)
    }

    pub fn m(&self) -> usize {
        self.dates.len()
    }

    pub fn n(&self) -> usize {
        self.locations.len()
    }

    pub fn d(&self) -> usize {
        self.targets.len()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn locations(&self) -> &[String] {
        &self.locations
    }

    pub fn targets(&self) -> &[String] {
        &self.targets
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Matrix> {
        self.values
    }

    pub fn target_index(&self, name: &str) -> Option<usize> {
        self.targets.iter().position(|t| t.eq_ignore_ascii_case(name))
    }

    pub fn location_index(&self, name: &str) -> Option<usize> {
        self.locations.iter().position(|l| l == name)
    }

    /// Values of one `(location, target)` channel over time.
    pub fn channel(&self, loc: usize, target: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[(loc, target)]).collect()
    }

    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.m() {
            return Err(Error::InvalidInput(format!(
                "range {}..{} is empty or outside 0..{}",
                range.start,
                range.end,
                self.m()
            )));
        }
        Self::new(
            self.dates[range.clone()].to_vec(),
            self.locations.clone(),
            self.targets.clone(),
            self.values[range].to_vec(),
        )
    }

    /// A single-location view.
    pub fn location(&self, loc: usize) -> Result<Self> {
        if loc >= self.n() {
            return Err(Error::InvalidInput(format!("location index {loc} out of range")));
        }
        let values = self.values.iter().map(|v| Matrix::row_vector(v.row(loc))).collect();
        Self::new(self.dates.clone(), vec![self.locations[loc].clone()], self.targets.clone(), values)
    }

    /// Sums all locations into one named `total`.
    pub fn aggregate(&self) -> Self {
        let values = self
            .values
            .iter()
            .map(|v| {
                let mut sum = vec![0.0; self.d()];
                for r in 0..v.rows() {
                    for (s, x) in sum.iter_mut().zip(v.row(r)) {
                        *s += x;
                    }
                }
                Matrix::row_vector(&sum)
            })
            .collect();
        TimeSeries { dates: self.dates.clone(), locations: vec!["total".into()], targets: self.targets.clone(), values }
    }

    /// Drops the named locations; unknown names are ignored.
    pub fn without_locations(&self, names: &[String]) -> Result<Self> {
        let keep: Vec<usize> = (0..self.n()).filter(|&j| !names.contains(&self.locations[j])).collect();
        if keep.is_empty() {
            return Err(Error::InvalidInput("every location was excluded".into()));
        }
        let values = self
            .values
            .iter()
            .map(|v| {
                let rows: Vec<Vec<f64>> = keep.iter().map(|&j| v.row(j).to_vec()).collect();
                Matrix::from_rows(&rows)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            self.dates.clone(),
            keep.iter().map(|&j| self.locations[j].clone()).collect(),
            self.targets.clone(),
            values,
        )
    }

    /// Dates following the last one, for forecasts.
    pub fn continue_dates(&self, count: usize) -> Vec<NaiveDate> {
        let last = *self.dates.last().expect("series is never empty");
        last.iter_days().skip(1).take(count).collect()
    }

    /// Header `date,<loc>:<target>,...` in location-major order.
    pub fn csv_header(&self) -> String {
        let mut h = String::from("date");
        for l in &self.locations {
            for t in &self.targets {
                let _ = write!(h, ",{l}:{t}");
            }
        }
        h
    }

    pub fn to_csv_string(&self) -> String {
        rows_to_csv(&self.csv_header(), &self.dates, &self.values)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    /// Non-decreasing check for cumulative targets; one warning per offending channel.
    pub fn cumulative_warnings(&self) -> Vec<DataWarning> {
        let mut out = Vec::new();
        for (k, t) in self.targets.iter().enumerate() {
            if !is_cumulative_target(t) {
                continue;
            }
            for (j, l) in self.locations.iter().enumerate() {
                let bad: Vec<String> = (1..self.m())
                    .filter(|&i| self.values[i][(j, k)] < self.values[i - 1][(j, k)])
                    .map(|i| self.dates[i].to_string())
                    .collect();
                if !bad.is_empty() {
                    out.push(DataWarning(format!("cumulative column {l}:{t} decreases on {}", bad.join(", "))));
                }
            }
        }
        out
    }
}

/// Renders rows in series schema; shared with the forecast writer.
pub fn rows_to_csv(header: &str, dates: &[NaiveDate], values: &[Matrix]) -> String {
    let mut out = String::with_capacity(64 * (dates.len() + 1));
    out.push_str(header);
    out.push('\n');
    for (date, v) in dates.iter().zip(values) {
        let _ = write!(out, "{}", date.format("%Y-%m-%d"));
        for x in v.as_slice() {
            let _ = write!(out, ",{x}");
        }
        out.push('\n');
    }
    out
}

fn parse_err(path: &Path, row: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), row, col, msg: msg.into() }
}

pub fn load_timeseries(path: &Path) -> Result<TimeSeries> {
    let (series, warnings) = load_timeseries_with_warnings(path)?;
    for w in &warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(series)
}

/// Parses and validates a series file, returning validation warnings separately.
///
/// Rows and columns in errors are 1-based, the header being row 1.
pub fn load_timeseries_with_warnings(path: &Path) -> Result<(TimeSeries, Vec<DataWarning>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_timeseries(&text, path)
}

pub fn parse_timeseries(text: &str, path: &Path) -> Result<(TimeSeries, Vec<DataWarning>)> {
    let mut reader =
        csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| parse_err(path, 1, 1, e.to_string()))?,
        None => return Err(parse_err(path, 1, 1, "empty file")),
    };
    if header.get(0).map(|h| h.to_ascii_lowercase()) != Some("date".into()) {
        return Err(parse_err(path, 1, 1, "first column must be 'date'"));
    }

    let mut locations: Vec<String> = Vec::new();
    let mut targets: Vec<String> = Vec::new();
    let mut slots: Vec<(usize, usize)> = Vec::new();
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    for (c, h) in header.iter().enumerate().skip(1) {
        let Some((loc, tgt)) = h.rsplit_once(':') else {
            return Err(parse_err(path, 1, c + 1, format!("column '{h}' is not '<location>:<target>'")));
        };
        if loc.is_empty() || tgt.is_empty() {
            return Err(parse_err(path, 1, c + 1, format!("column '{h}' has an empty name")));
        }
        let li = index_of(&mut locations, loc);
        let ti = index_of(&mut targets, tgt);
        if seen.insert((li, ti), c).is_some() {
            return Err(parse_err(path, 1, c + 1, format!("duplicate column '{h}'")));
        }
        slots.push((li, ti));
    }
    if slots.is_empty() {
        return Err(parse_err(path, 1, 1, "no data columns"));
    }
    let (n, d) = (locations.len(), targets.len());
    if slots.len() != n * d {
        return Err(parse_err(
            path,
            1,
            header.len(),
            format!("expected every location to have all {d} targets ({} columns), found {}", n * d, slots.len()),
        ));
    }

    let width = header.len();
    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in records.enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| parse_err(path, row, 1, e.to_string()))?;
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != width {
            return Err(parse_err(
                path,
                row,
                rec.len().min(width) + 1,
                format!("ragged row: {} fields, header has {width}", rec.len()),
            ));
        }
        let raw_date = rec.get(0).unwrap_or_default();
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
            .map_err(|_| parse_err(path, row, 1, format!("bad date '{raw_date}', expected YYYY-MM-DD")))?;
        if let Some(prev) = dates.last() {
            let gap = date.signed_duration_since(*prev).num_days();
            if gap <= 0 {
                return Err(parse_err(path, row, 1, format!("date {date} does not follow {prev}")));
            }
            if gap > 1 {
                return Err(parse_err(
                    path,
                    row,
                    1,
                    format!("date gap: {date} follows {prev}, missing {} day(s)", gap - 1),
                ));
            }
        }
        let mut v = Matrix::zeros(n, d);
        for (c, &(li, ti)) in slots.iter().enumerate() {
            let raw = rec.get(c + 1).unwrap_or_default();
            let x: f64 = raw.parse().map_err(|_| parse_err(path, row, c + 2, format!("'{raw}' is not a number")))?;
            if !x.is_finite() {
                return Err(parse_err(path, row, c + 2, format!("non-finite value '{raw}'")));
            }
            if x < 0.0 {
                return Err(parse_err(path, row, c + 2, format!("negative count {x}")));
            }
            v[(li, ti)] = x;
        }
        dates.push(date);
        values.push(v);
    }
    if dates.is_empty() {
        return Err(parse_err(path, 2, 1, "no data rows"));
    }
    let series = TimeSeries::new(dates, locations, targets, values)?;
    let warnings = series.cumulative_warnings();
    Ok((series, warnings))
}

fn index_of(names: &mut Vec<String>, name: &str) -> usize {
    match names.iter().position(|x| x == name) {
        Some(i) => i,
        None => {
            names.push(name.to_string());
            names.len() - 1
        }
    }
}

/// `confirmed − deaths − recovered`, clamped at zero.
pub fn derive_active(cumulative: &TimeSeries) -> Result<(TimeSeries, Vec<DataWarning>)> {
    let find = |name: &str| {
        cumulative.target_index(name).ok_or_else(|| Error::InvalidInput(format!("active cases need a '{name}' target")))
    };
    let (c, dth, r) = (find("confirmed")?, find("deaths")?, find("recovered")?);
    let mut warnings = Vec::new();
    let mut values = Vec::with_capacity(cumulative.m());
    for (t, v) in cumulative.values().iter().enumerate() {
        let mut col = Matrix::zeros(cumulative.n(), 1);
        for j in 0..cumulative.n() {
            let a = v[(j, c)] - v[(j, dth)] - v[(j, r)];
            if a < 0.0 {
                warnings.push(DataWarning(format!(
                    "{} on {}: deaths + recovered exceed confirmed by {}; clamped to 0",
                    cumulative.locations()[j],
                    cumulative.dates()[t],
                    -a
                )));
            }
            col[(j, 0)] = a.max(0.0);
        }
        values.push(col);
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let series =
        TimeSeries::new(cumulative.dates().to_vec(), cumulative.locations().to_vec(), vec!["active".into()], values)?;
    Ok((series, warnings))
}

/// Chronological prefix/suffix split with `round(m · ratio)` training steps.
pub fn split(series: &TimeSeries, ratio: f64) -> Result<(TimeSeries, TimeSeries)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidInput(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    let m = series.m();
    let k = (m as f64 * ratio).round() as usize;
    if k == 0 || k >= m {
        return Err(Error::InvalidInput(format!("split ratio {ratio} on {m} steps leaves an empty part")));
    }
    Ok((series.slice(0..k)?, series.slice(k..m)?))
}

/// How a series is cut into independently trained periods.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Periods {
    /// `"all"` or `"monthly"`.
    Named(String),
    /// Explicit `[start, end]` inclusive date pairs.
    Explicit(Vec<[NaiveDate; 2]>),
}

impl Default for Periods {
    fn default() -> Self {
        Periods::Named("monthly".into())
    }
}

impl Periods {
    /// Index ranges into `dates`, in order.
    pub fn ranges(&self, dates: &[NaiveDate]) -> Result<Vec<Range<usize>>> {
        match self {
            Periods::Named(s) if s.eq_ignore_ascii_case("all") => Ok(vec![0..dates.len()]),
            Periods::Named(s) if s.eq_ignore_ascii_case("monthly") => Ok(month_ranges(dates)),
            Periods::Named(s) => Err(Error::InvalidConfig(format!(
                "unknown periods '{s}' (use \"all\", \"monthly\" or a list of [start, end] dates)"
            ))),
            Periods::Explicit(pairs) => pairs
                .iter()
                .map(|[a, b]| {
                    let s = dates.iter().position(|d| d == a);
                    let e = dates.iter().position(|d| d == b);
                    match (s, e) {
                        (Some(s), Some(e)) if s <= e => Ok(s..e + 1),
                        _ => Err(Error::InvalidConfig(format!("period {a}..{b} is not inside the series dates"))),
                    }
                })
                .collect(),
        }
    }
}

/// Consecutive runs of dates sharing a calendar month.
pub fn month_ranges(dates: &[NaiveDate]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=dates.len() {
        let boundary =
            i == dates.len() || (dates[i].year(), dates[i].month()) != (dates[start].year(), dates[start].month());
        if boundary {
            out.push(start..i);
            start = i;
        }
    }
    out
}
