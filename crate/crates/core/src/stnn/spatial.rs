use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// The `p` spatial relation matrices (adjacency, migration, distance, ...), each `n × n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialFeatureSet {
    n: usize,
    matrices: Vec<Matrix>,
}

impl SpatialFeatureSet {
    pub fn new(n: usize, matrices: Vec<Matrix>) -> Result<Self> {
        for (i, w) in matrices.iter().enumerate() {
            if w.shape() != (n, n) {
                return Err(Error::dim(
                    "SpatialFeatureSet",
                    format!("{n}x{n}"),
                    format!("{}x{} for matrix {i}", w.rows(), w.cols()),
                ));
            }
        }
        Ok(SpatialFeatureSet { n, matrices })
    }

    /// No spatial features (`p = 0`).
    pub fn empty(n: usize) -> Self {
        SpatialFeatureSet { n, matrices: Vec::new() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrices(&self) -> &[Matrix] {
        &self.matrices
    }

    fn check_state(&self, s: &Matrix, op: &'static str) -> Result<()> {
        if s.rows() != self.n {
            return Err(Error::dim(op, format!("state with {} rows", self.n), format!("{}x{}", s.rows(), s.cols())));
        }
        Ok(())
    }

    /// `s + Σ W_i s`.
    pub fn superpose(&self, s: &Matrix) -> Result<Matrix> {
        self.check_state(s, "superpose")?;
        let mut out = s.clone();
        for w in &self.matrices {
            out.axpy(1.0, &w.matmul(s)?)?;
        }
        Ok(out)
    }

    /// Adjoint of [`superpose`](Self::superpose): `g + Σ W_iᵀ g`.
    pub fn superpose_adjoint(&self, g: &Matrix) -> Result<Matrix> {
        self.check_state(g, "superpose_adjoint")?;
        let mut out = g.clone();
        for w in &self.matrices {
            out.axpy(1.0, &w.t_matmul(g)?)?;
        }
        Ok(out)
    }

    /// `[s | W_1 s | ... | W_p s]`, an `n × (p+1)l` matrix.
    pub fn augment(&self, s: &Matrix) -> Result<Matrix> {
        self.check_state(s, "augment")?;
        let mut blocks = Vec::with_capacity(self.p() + 1);
        blocks.push(s.clone());
        for w in &self.matrices {
            blocks.push(w.matmul(s)?);
        }
        let refs: Vec<&Matrix> = blocks.iter().collect();
        Matrix::hstack(&refs)
    }

    /// Adjoint of [`augment`](Self::augment): `g_0 + Σ W_iᵀ g_i` for column blocks `g_i`.
    pub fn augment_adjoint(&self, g: &Matrix, l: usize) -> Result<Matrix> {
        if g.cols() != (self.p() + 1) * l {
            return Err(Error::dim(
                "augment_adjoint",
                format!("{} columns", (self.p() + 1) * l),
                format!("{}x{}", g.rows(), g.cols()),
            ));
        }
        self.check_state(g, "augment_adjoint")?;
        let mut out = g.col_block(0, l)?;
        for (i, w) in self.matrices.iter().enumerate() {
            let gi = g.col_block((i + 1) * l, (i + 2) * l)?;
            out.axpy(1.0, &w.t_matmul(&gi)?)?;
        }
        Ok(out)
    }
}

pub fn spatial_superpose(s: &Matrix, w: &SpatialFeatureSet) -> Result<Matrix> {
    w.superpose(s)
}

pub fn spatial_augment(s: &Matrix, w: &SpatialFeatureSet) -> Result<Matrix> {
    w.augment(s)
}
