use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::stnn::SpatialFeatureSet;

fn parse_err(path: &Path, row: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), row, col, msg: msg.into() }
}

/// Parses one relation matrix with location names on the first row and column,
/// reorders it to `order` and scales it by its largest absolute entry.
pub fn parse_spatial(text: &str, path: &Path, order: &[String]) -> Result<Matrix> {
    parse_spatial_excluding(text, path, order, &[])
}

/// [`parse_spatial`] after dropping the rows and columns named in `excluded`.
/// Scaling uses the remaining entries only.
pub fn parse_spatial_excluding(text: &str, path: &Path, order: &[String], excluded: &[String]) -> Result<Matrix> {
    let mut reader =
        csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for (i, r) in reader.records().enumerate() {
        let r = r.map_err(|e| parse_err(path, i + 1, 1, e.to_string()))?;
        if r.len() == 1 && r.get(0) == Some("") {
            continue;
        }
        rows.push(r);
    }
    let Some(header) = rows.first() else {
        return Err(parse_err(path, 1, 1, "empty file"));
    };
    let cols: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let n = cols.len();
    if rows.len() != n + 1 {
        return Err(parse_err(
            path,
            rows.len().min(n + 1) + 1,
            1,
            format!("matrix is not square: {n} named columns but {} rows", rows.len() - 1),
        ));
    }
    let mut names = Vec::with_capacity(n);
    let mut raw = Matrix::zeros(n, n);
    for (i, r) in rows.iter().enumerate().skip(1) {
        if r.len() != n + 1 {
            return Err(parse_err(
                path,
                i + 1,
                r.len().min(n + 1) + 1,
                format!("expected {} fields, got {}", n + 1, r.len()),
            ));
        }
        names.push(r.get(0).unwrap_or_default().to_string());
        for j in 0..n {
            let s = r.get(j + 1).unwrap_or_default();
            let v: f64 = s.parse().map_err(|_| parse_err(path, i + 1, j + 2, format!("'{s}' is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(path, i + 1, j + 2, "non-finite entry"));
            }
            raw[(i - 1, j)] = v;
        }
    }
    if names != cols {
        return Err(parse_err(path, 2, 1, "row names must match the column names in the same order"));
    }
    let keep: Vec<usize> = (0..n).filter(|&i| !excluded.contains(&cols[i])).collect();
    let cols: Vec<String> = keep.iter().map(|&i| cols[i].clone()).collect();
    let n = keep.len();
    let mut kept = Matrix::zeros(n, n);
    for (a, &ka) in keep.iter().enumerate() {
        for (b, &kb) in keep.iter().enumerate() {
            kept[(a, b)] = raw[(ka, kb)];
        }
    }
    let raw = kept;
    if n != order.len() {
        return Err(parse_err(path, 1, 1, format!("matrix covers {n} locations, the series has {}", order.len())));
    }
    let mut perm = Vec::with_capacity(n);
    for name in order {
        let idx = cols
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| parse_err(path, 1, 1, format!("location '{name}' is missing from the matrix")))?;
        perm.push(idx);
    }
    let mut out = Matrix::zeros(n, n);
    for (a, &pa) in perm.iter().enumerate() {
        for (b, &pb) in perm.iter().enumerate() {
            out[(a, b)] = raw[(pa, pb)];
        }
    }
    let max = out.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max > 0.0 {
        out = out.scale(1.0 / max);
    } else {
        log::warn!("{}: all-zero relation matrix", path.display());
    }
    Ok(out)
}

/// Loads one matrix per file, all aligned to `location_order`.
pub fn load_spatial<P: AsRef<Path>>(paths: &[P], location_order: &[String]) -> Result<SpatialFeatureSet> {
    load_spatial_excluding(paths, location_order, &[])
}

/// [`load_spatial`] for a series that had the `excluded` locations removed.
pub fn load_spatial_excluding<P: AsRef<Path>>(
    paths: &[P],
    location_order: &[String],
    excluded: &[String],
) -> Result<SpatialFeatureSet> {
    let mut mats = Vec::with_capacity(paths.len());
    for p in paths {
        let p = p.as_ref();
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        mats.push(parse_spatial_excluding(&text, p, location_order, excluded)?);
    }
    SpatialFeatureSet::new(location_order.len(), mats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn identity_and_scaling() {
        let p = Path::new("w.csv");
        let id = parse_spatial(",A,B\nA,1,0\nB,0,1\n", p, &names(&["A", "B"])).unwrap();
        assert_eq!(id, Matrix::identity(2));
        let fives = parse_spatial(",A,B\nA,5,5\nB,5,5\n", p, &names(&["A", "B"])).unwrap();
        assert_eq!(fives, Matrix::filled(2, 2, 1.0));
    }

    #[test]
    fn reorders_to_series_order() {
        let p = Path::new("w.csv");
        let text = ",B,A,C\nB,0,2,4\nA,1,0,3\nC,0,8,0\n";
        let m = parse_spatial(text, p, &names(&["A", "B", "C"])).unwrap();
        // Original A->B = 1, B->A = 2, A->C = 3, B->C = 4, C->A = 8.
        let want = Matrix::from_rows(&[vec![0.0, 1.0, 3.0], vec![2.0, 0.0, 4.0], vec![8.0, 0.0, 0.0]])
            .unwrap()
            .scale(1.0 / 8.0);
        assert_eq!(m, want);
    }

    #[test]
    fn rejects_mismatch_and_non_square() {
        let p = Path::new("w.csv");
        assert!(matches!(parse_spatial(",A,B\nA,1,0\nB,0,1\n", p, &names(&["A", "C"])), Err(Error::Parse { .. })));
        assert!(matches!(parse_spatial(",A,B\nA,1,0\n", p, &names(&["A", "B"])), Err(Error::Parse { .. })));
        assert!(matches!(parse_spatial(",A,B\nA,1,0,4\nB,0,1\n", p, &names(&["A", "B"])), Err(Error::Parse { .. })));
    }

    #[test]
    fn excluded_locations_are_dropped_before_scaling() {
        let p = Path::new("w.csv");
        let text = ",B,A,C\nB,0,2,4\nA,1,0,3\nC,0,8,0\n";
        let m = parse_spatial_excluding(text, p, &names(&["A", "B"]), &names(&["C"])).unwrap();
        let want = Matrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 0.0]]).unwrap().scale(0.5);
        assert_eq!(m, want);
        assert!(parse_spatial(text, p, &names(&["A", "B"])).is_err());
    }
}
