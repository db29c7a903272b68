use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TimeSeries;
use crate::error::{Error, Result};

/// Per-location scalar factors, one column per factor.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorTable {
    pub locations: Vec<String>,
    pub names: Vec<String>,
    /// `values[f][j]`: factor `f` at location `j`.
    pub values: Vec<Vec<f64>>,
}

fn parse_err(path: &Path, row: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), row, col, msg: msg.into() }
}

impl FactorTable {
    /// Parses `location,<factor>,...` CSV text.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| parse_err(path, 1, 1, e.to_string()))?.clone();
        if header.get(0).map(str::to_ascii_lowercase) != Some("location".into()) {
            return Err(parse_err(path, 1, 1, "first column must be 'location'"));
        }
        let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        if names.is_empty() {
            return Err(parse_err(path, 1, 2, "no factor columns"));
        }
        let mut locations = Vec::new();
        let mut values = vec![Vec::new(); names.len()];
        for (i, rec) in reader.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| parse_err(path, row, 1, e.to_string()))?;
            let loc = rec.get(0).unwrap_or_default().to_string();
            if locations.contains(&loc) {
                return Err(parse_err(path, row, 1, format!("duplicate location '{loc}'")));
            }
            locations.push(loc);
            for (f, col) in values.iter_mut().enumerate() {
                let raw = rec.get(f + 1).unwrap_or_default();
                let v: f64 =
                    raw.parse().map_err(|_| parse_err(path, row, f + 2, format!("'{raw}' is not a number")))?;
                col.push(v);
            }
        }
        Ok(FactorTable { locations, names, values })
    }
}

pub fn load_factors(path: &Path) -> Result<FactorTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    FactorTable::parse(&text, path)
}

/// How an epidemic series collapses to one number per location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduce {
    /// Value on the last date (the cumulative total for cumulative series).
    #[default]
    Last,
    Mean,
    Sum,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelateOptions {
    #[serde(default)]
    pub reduce: Reduce,
    /// Locations left out of the analysis.
    #[serde(default)]
    pub exclude: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRow {
    pub factor: String,
    pub confirmed: Option<f64>,
    pub recovered: Option<f64>,
    pub deaths: Option<f64>,
    /// `|C| + |R| + |D|`.
    pub sum_abs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTable {
    pub rows: Vec<CorrelationRow>,
    pub locations: Vec<String>,
}

impl CorrelationTable {
    /// `factor,C,R,D,S` with three decimals and `NA` for undefined cells.
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.3}"));
        let mut out = String::from("factor,C,R,D,S\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.factor,
                cell(r.confirmed),
                cell(r.recovered),
                cell(r.deaths),
                cell(r.sum_abs)
            );
        }
        out
    }
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    r.is_finite().then(|| r.clamp(-1.0, 1.0))
}

/// Correlates every factor with the confirmed, recovered and deaths totals across locations.
pub fn correlate(factors: &FactorTable, epidemic: &TimeSeries, opts: &CorrelateOptions) -> Result<CorrelationTable> {
    let series = if opts.exclude.is_empty() { epidemic.clone() } else { epidemic.without_locations(&opts.exclude)? };
    let target = |name: &str| {
        series.target_index(name).ok_or_else(|| Error::InvalidInput(format!("epidemic series has no '{name}' target")))
    };
    let (tc, tr, td) = (target("confirmed")?, target("recovered")?, target("deaths")?);
    let mut rows_of_factor = Vec::with_capacity(series.n());
    for loc in series.locations() {
        let j = factors
            .locations
            .iter()
            .position(|l| l == loc)
            .ok_or_else(|| Error::InvalidInput(format!("factor file has no row for location '{loc}'")))?;
        rows_of_factor.push(j);
    }
    if series.n() < 3 {
        return Err(Error::InvalidInput(format!("correlation needs at least 3 locations, got {}", series.n())));
    }
    let reduce = |k: usize| -> Vec<f64> {
        (0..series.n())
            .map(|j| {
                let ch = series.channel(j, k);
                match opts.reduce {
                    Reduce::Last => *ch.last().expect("non-empty series"),
                    Reduce::Sum => ch.iter().sum(),
                    Reduce::Mean => ch.iter().sum::<f64>() / ch.len() as f64,
                }
            })
            .collect()
    };
    let (c, r, d) = (reduce(tc), reduce(tr), reduce(td));
    let rows = factors
        .names
        .iter()
        .zip(&factors.values)
        .map(|(name, col)| {
            let f: Vec<f64> = rows_of_factor.iter().map(|&j| col[j]).collect();
            let (pc, pr, pd) = (pearson(&f, &c), pearson(&f, &r), pearson(&f, &d));
            let sum_abs = match (pc, pr, pd) {
                (Some(a), Some(b), Some(e)) => Some(a.abs() + b.abs() + e.abs()),
                _ => None,
            };
            CorrelationRow { factor: name.clone(), confirmed: pc, recovered: pr, deaths: pd, sum_abs }
        })
        .collect();
    Ok(CorrelationTable { rows, locations: series.locations().to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_timeseries;
    use proptest::prelude::*;

    const SERIES: &str = "date,A:confirmed,A:recovered,A:deaths,B:confirmed,B:recovered,B:deaths,C:confirmed,C:recovered,C:deaths,D:confirmed,D:recovered,D:deaths\n\
2020-01-01,1,0,0,2,0,0,3,0,0,1,0,0\n2020-01-02,10,2,1,40,5,1,25,9,3,7,1,0\n";

    fn epidemic() -> TimeSeries {
        parse_timeseries(SERIES, Path::new("s.csv")).unwrap().0
    }

    #[test]
    fn self_and_negated_factor() {
        let f = FactorTable::parse(
            "location,same,neg,flat\nD,7,-7,1\nC,25,-25,1\nB,40,-40,1\nA,10,-10,1\n",
            Path::new("f.csv"),
        )
        .unwrap();
        let t = correlate(&f, &epidemic(), &CorrelateOptions::default()).unwrap();
        assert!((t.rows[0].confirmed.unwrap() - 1.0).abs() < 1e-12);
        assert!((t.rows[1].confirmed.unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(t.rows[2].confirmed, None);
        let csv = t.to_csv();
        assert!(csv.lines().nth(1).unwrap().starts_with("same,1.000,"));
        assert_eq!(csv.lines().nth(3).unwrap(), "flat,NA,NA,NA,NA");
    }

    #[test]
    fn s_column_is_sum_of_absolute_values() {
        let f = FactorTable::parse("location,x\nA,3\nB,1\nC,4\nD,1.5\n", Path::new("f.csv")).unwrap();
        let r = &correlate(&f, &epidemic(), &CorrelateOptions::default()).unwrap().rows[0];
        let want = r.confirmed.unwrap().abs() + r.recovered.unwrap().abs() + r.deaths.unwrap().abs();
        assert_eq!(r.sum_abs, Some(want));
    }

    #[test]
    fn exclusion_and_minimum_locations() {
        let f = FactorTable::parse("location,x\nA,3\nB,1\nC,4\nD,1.5\n", Path::new("f.csv")).unwrap();
        let opts = CorrelateOptions { exclude: vec!["A".into()], ..Default::default() };
        assert_eq!(correlate(&f, &epidemic(), &opts).unwrap().locations.len(), 3);
        let opts = CorrelateOptions { exclude: vec!["A".into(), "B".into()], ..Default::default() };
        assert!(correlate(&f, &epidemic(), &opts).is_err());
    }

    proptest! {
        #[test]
        fn pearson_is_bounded(x in prop::collection::vec(-1e3f64..1e3, 5), y in prop::collection::vec(-1e3f64..1e3, 5)) {
            if let Some(r) = pearson(&x, &y) {
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }
    }
}
