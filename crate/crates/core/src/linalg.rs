//! Dense row-major matrices and the scalar metrics built on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense `rows × cols` matrix of `f64` stored in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<MatrixRepr> for Matrix {
    type Error = Error;

    fn try_from(r: MatrixRepr) -> Result<Self> {
        Matrix::from_vec(r.rows, r.cols, r.data)
    }
}

impl From<Matrix> for MatrixRepr {
    fn from(m: Matrix) -> Self {
        MatrixRepr { rows: m.rows, cols: m.cols, data: m.data }
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major entries. Entries must be finite.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(
                "Matrix::from_vec",
                format!("{} entries ({rows}x{cols})", rows * cols),
                format!("{} entries", data.len()),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite matrix entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::dim(
                    "Matrix::from_rows",
                    format!("{cols} columns"),
                    format!("{} columns in row {i}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    /// A `1 × n` matrix.
    pub fn row_vector(values: &[f64]) -> Self {
        Matrix { rows: 1, cols: values.len(), data: values.to_vec() }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn check_same_shape(&self, other: &Matrix, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dim(
                op,
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::dim(
                "matmul",
                format!("rhs with {} rows", self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`, without materializing the transpose.
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::dim(
                "matmul_t",
                format!("rhs with {} columns", self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(a, other.row(j));
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other`, without materializing the transpose.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::dim(
                "t_matmul",
                format!("rhs with {} rows", self.rows),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let b = other.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &bv) in out_row.iter_mut().zip(b) {
                    *o += a * bv;
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "add")?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "sub")?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    /// Element-wise (Hadamard) product.
    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "hadamard")?;
        Ok(self.zip_map(other, |a, b| a * b))
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Matrix) -> Result<()> {
        self.check_same_shape(other, "axpy")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&self, alpha: f64) -> Matrix {
        self.map(|v| v * alpha)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Sum of squared entries, i.e. `‖A‖_F²`.
    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    /// Horizontal concatenation `[A | B | ...]`. All blocks must have the same row count.
    pub fn hstack(blocks: &[&Matrix]) -> Result<Matrix> {
        let rows = blocks.first().map_or(0, |b| b.rows);
        if let Some(bad) = blocks.iter().find(|b| b.rows != rows) {
            return Err(Error::dim("hstack", format!("{rows} rows"), format!("{} rows", bad.rows)));
        }
        let cols: usize = blocks.iter().map(|b| b.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for b in blocks {
                data.extend_from_slice(b.row(i));
            }
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Vertical concatenation. All blocks must have the same column count.
    pub fn vstack(blocks: &[&Matrix]) -> Result<Matrix> {
        let cols = blocks.first().map_or(0, |b| b.cols);
        if let Some(bad) = blocks.iter().find(|b| b.cols != cols) {
            return Err(Error::dim("vstack", format!("{cols} columns"), format!("{} columns", bad.cols)));
        }
        let rows = blocks.iter().map(|b| b.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for b in blocks {
            data.extend_from_slice(&b.data);
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Copy of columns `start..end`.
    pub fn col_block(&self, start: usize, end: usize) -> Result<Matrix> {
        if start > end || end > self.cols {
            return Err(Error::dim("col_block", format!("range within 0..{}", self.cols), format!("{start}..{end}")));
        }
        let width = end - start;
        let mut data = Vec::with_capacity(self.rows * width);
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[start..end]);
        }
        Ok(Matrix { rows: self.rows, cols: width, data })
    }

    /// Copy of rows `start..end`.
    pub fn row_block(&self, start: usize, end: usize) -> Result<Matrix> {
        if start > end || end > self.rows {
            return Err(Error::dim("row_block", format!("range within 0..{}", self.rows), format!("{start}..{end}")));
        }
        Ok(Matrix { rows: end - start, cols: self.cols, data: self.data[start * self.cols..end * self.cols].to_vec() })
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn frobenius_norm(a: &Matrix) -> f64 {
    a.frobenius_norm()
}

pub fn hadamard(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    a.hadamard(b)
}

/// Root mean square error over every scalar entry of two equally shaped sequences.
pub fn rmse(pred: &[Matrix], actual: &[Matrix]) -> Result<f64> {
    if pred.is_empty() || actual.is_empty() {
        return Err(Error::InvalidInput("rmse of an empty sequence".into()));
    }
    if pred.len() != actual.len() {
        return Err(Error::dim("rmse", actual.len(), pred.len()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, a) in pred.iter().zip(actual) {
        a.check_same_shape(p, "rmse")?;
        sum += p.sub(a)?.frobenius_sq();
        count += p.data.len();
    }
    if count == 0 {
        return Err(Error::InvalidInput("rmse over zero entries".into()));
    }
    Ok((sum / count as f64).sqrt())
}

/// Solves `min ‖A x − b‖₂` by Householder QR with column equilibration.
///
/// Returns [`Error::Singular`] when `A` is numerically rank deficient.
pub fn least_squares_qr(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::dim("least_squares_qr", format!("rhs of length {m}"), b.len()));
    }
    if m < n {
        return Err(Error::Singular(format!("{m} equations cannot determine {n} unknowns")));
    }

    // Column scaling keeps Vandermonde-like systems well conditioned.
    let mut scale = vec![0.0; n];
    for (j, s) in scale.iter_mut().enumerate() {
        *s = (0..m).map(|i| a[(i, j)] * a[(i, j)]).sum::<f64>().sqrt();
        if *s == 0.0 {
            return Err(Error::Singular(format!("column {j} is identically zero")));
        }
    }
    let mut r = a.clone();
    for i in 0..m {
        for j in 0..n {
            r[(i, j)] /= scale[j];
        }
    }
    let mut qtb = b.to_vec();

    for k in 0..n {
        let norm = (k..m).map(|i| r[(i, k)] * r[(i, k)]).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Singular(format!("rank deficient at column {k}")));
        }
        let alpha = if r[(k, k)] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| r[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm_sq: f64 = v.iter().map(|x| x * x).sum();
        if vnorm_sq > 0.0 {
            for j in k..n {
                let proj: f64 = v.iter().enumerate().map(|(t, vi)| vi * r[(k + t, j)]).sum();
                let f = 2.0 * proj / vnorm_sq;
                for (t, vi) in v.iter().enumerate() {
                    r[(k + t, j)] -= f * vi;
                }
            }
            let proj: f64 = v.iter().enumerate().map(|(t, vi)| vi * qtb[k + t]).sum();
            let f = 2.0 * proj / vnorm_sq;
            for (t, vi) in v.iter().enumerate() {
                qtb[k + t] -= f * vi;
            }
        }
    }

    let rmax = (0..n).map(|k| r[(k, k)].abs()).fold(0.0, f64::max);
    let tol = rmax * 1e-12 * m.max(n) as f64;
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        if r[(k, k)].abs() <= tol {
            return Err(Error::Singular(format!("rank deficient: |R[{k},{k}]| = {:.3e}", r[(k, k)].abs())));
        }
        let s: f64 = ((k + 1)..n).map(|j| r[(k, j)] * x[j]).sum();
        x[k] = (qtb[k] - s) / r[(k, k)];
    }
    for (xi, s) in x.iter_mut().zip(&scale) {
        *xi /= s;
    }
    Ok(x)
}

/// Solves the square system `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve_linear(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(Error::dim(
            "solve_linear",
            format!("{n}x{n} system with rhs {n}"),
            format!("{}x{} with rhs {}", a.rows(), a.cols(), b.len()),
        ));
    }
    let mut m = a.clone();
    let mut x = b.to_vec();
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| m[(i, k)].abs().total_cmp(&m[(j, k)].abs())).unwrap_or(k);
        if m[(piv, k)].abs() < 1e-300 {
            return Err(Error::Singular(format!("zero pivot at column {k}")));
        }
        if piv != k {
            for j in 0..n {
                let tmp = m[(k, j)];
                m[(k, j)] = m[(piv, j)];
                m[(piv, j)] = tmp;
            }
            x.swap(k, piv);
        }
        for i in (k + 1)..n {
            let f = m[(i, k)] / m[(k, k)];
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                m[(i, j)] -= f * m[(k, j)];
            }
            x[i] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        let s: f64 = ((k + 1)..n).map(|j| m[(k, j)] * x[j]).sum();
        x[k] = (x[k] - s) / m[(k, k)];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn frobenius_examples() {
        assert_relative_eq!(Matrix::identity(2).frobenius_norm(), 2f64.sqrt());
        assert_eq!(Matrix::zeros(3, 4).frobenius_norm(), 0.0);
        let m = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        assert_relative_eq!(frobenius_norm(&m), 5.0);
    }

    #[test]
    fn hadamard_examples() {
        let a = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 7.0]]).unwrap();
        assert_eq!(a.hadamard(&Matrix::filled(2, 2, 1.0)).unwrap(), a);
        assert_eq!(a.hadamard(&Matrix::zeros(2, 2)).unwrap(), Matrix::zeros(2, 2));
        let x = Matrix::row_vector(&[1.0, 2.0]);
        let y = Matrix::row_vector(&[3.0, 4.0]);
        assert_eq!(hadamard(&x, &y).unwrap().as_slice(), &[3.0, 8.0]);
        assert!(matches!(x.hadamard(&Matrix::zeros(2, 1)), Err(Error::Dimension { .. })));
    }

    #[test]
    fn rmse_examples() {
        let a = vec![Matrix::row_vector(&[1.0, 2.0]), Matrix::row_vector(&[3.0, 4.0])];
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);

        let pred = [Matrix::row_vector(&[0.0, 0.0])];
        let actual = [Matrix::row_vector(&[3.0, 4.0])];
        assert_relative_eq!(rmse(&pred, &actual).unwrap(), 12.5f64.sqrt(), epsilon = 1e-12);

        let shifted: Vec<Matrix> = a.iter().map(|m| m.map(|v| v - 2.5)).collect();
        assert_relative_eq!(rmse(&shifted, &a).unwrap(), 2.5, epsilon = 1e-12);

        assert!(matches!(rmse(&[], &[]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn shape_errors_report_both_sides() {
        let err = Matrix::zeros(2, 3).matmul(&Matrix::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("3 rows") && msg.contains("2x3"), "{msg}");
    }

    #[test]
    fn least_squares_recovers_exact_solution() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let x = least_squares_qr(&a, &[1.0, 3.0, 5.0]).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 2.0, epsilon = 1e-12);

        let singular = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        assert!(matches!(least_squares_qr(&singular, &[1.0, 2.0, 3.0]), Err(Error::Singular(_))));
    }

    #[test]
    fn solve_linear_pivots() {
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 1.0]]).unwrap();
        let x = solve_linear(&a, &[1.0, 3.0]).unwrap();
        assert_relative_eq!(x[0], 1.0);
        assert_relative_eq!(x[1], 1.0);
    }

    fn square(n: usize) -> impl Strategy<Value = Matrix> {
        prop::collection::vec(-10.0f64..10.0, n * n).prop_map(move |v| Matrix::from_vec(n, n, v).unwrap())
    }

    proptest! {
        #[test]
        fn frobenius_matches_trace_of_gram(a in square(5)) {
            let lhs = a.frobenius_sq();
            let rhs = a.t_matmul(&a).unwrap().trace();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1e-300));
        }

        #[test]
        fn frobenius_triangle_inequality(a in square(4), b in square(4)) {
            let sum = a.add(&b).unwrap().frobenius_norm();
            prop_assert!(sum <= a.frobenius_norm() + b.frobenius_norm() + 1e-12);
        }

        #[test]
        fn rmse_is_permutation_invariant(
            vals in prop::collection::vec(-5.0f64..5.0, 12),
            shift in 0usize..6,
        ) {
            let pred: Vec<Matrix> = vals[..6].iter().map(|&v| Matrix::row_vector(&[v])).collect();
            let act: Vec<Matrix> = vals[6..].iter().map(|&v| Matrix::row_vector(&[v])).collect();
            let mut p2 = pred.clone();
            let mut a2 = act.clone();
            p2.rotate_left(shift);
            a2.rotate_left(shift);
            let r1 = rmse(&pred, &act).unwrap();
            let r2 = rmse(&p2, &a2).unwrap();
            prop_assert!((r1 - r2).abs() <= 1e-12);
        }

        #[test]
        fn matmul_variants_agree(a in square(3), b in square(3)) {
            let direct = a.matmul(&b.transpose()).unwrap();
            let fused = a.matmul_t(&b).unwrap();
            let tfused = a.t_matmul(&b).unwrap();
            let tdirect = a.transpose().matmul(&b).unwrap();
            for (x, y) in direct.as_slice().iter().zip(fused.as_slice()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            for (x, y) in tdirect.as_slice().iter().zip(tfused.as_slice()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
