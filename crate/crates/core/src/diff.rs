//! First-difference operators for anisotropic total variation.
//!
//! With `S[i][j]` a block in row `i`, column `j` (vectorized at `i * N + j`):
//!
//! * `dx` takes differences along the first index, `S[i+1][j] - S[i][j]`
//!   (vertical neighbours), one row per `(i, j)` with `i < N - 1`, ordered
//!   row-major over `(i, j)`.
//! * `dy` takes differences along the second index, `S[i][j+1] - S[i][j]`
//!   (horizontal neighbours), one row per `(i, j)` with `j < N - 1`.
//!
//! Differences that would leave the block are dropped, so each operator has
//! `N (N - 1)` rows. The stacked operator `D` is `dx` on top of `dy`.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::{Error, Result};

/// Sparse horizontal/vertical difference matrices for one block size.
#[derive(Debug, Clone)]
pub struct DiffOperator {
    block_size: usize,
    dx: CsrMatrix<f64>,
    dy: CsrMatrix<f64>,
    stacked: CsrMatrix<f64>,
}

pub fn build_diff_operator(block_size: usize) -> Result<DiffOperator> {
    if block_size < 2 {
        return Err(Error::Config(format!(
            "difference operator needs block size >= 2, got {block_size}"
        )));
    }
    let n = block_size;
    let rows = n * (n - 1);
    let mut dx = CooMatrix::new(rows, n * n);
    let mut dy = CooMatrix::new(rows, n * n);
    let mut stacked = CooMatrix::new(2 * rows, n * n);

    for i in 0..n - 1 {
        for j in 0..n {
            let r = i * n + j;
            dx.push(r, (i + 1) * n + j, 1.0);
            dx.push(r, i * n + j, -1.0);
            stacked.push(r, (i + 1) * n + j, 1.0);
            stacked.push(r, i * n + j, -1.0);
        }
    }
    for i in 0..n {
        for j in 0..n - 1 {
            let r = i * (n - 1) + j;
            dy.push(r, i * n + j + 1, 1.0);
            dy.push(r, i * n + j, -1.0);
            stacked.push(rows + r, i * n + j + 1, 1.0);
            stacked.push(rows + r, i * n + j, -1.0);
        }
    }

    Ok(DiffOperator {
        block_size,
        dx: CsrMatrix::from(&dx),
        dy: CsrMatrix::from(&dy),
        stacked: CsrMatrix::from(&stacked),
    })
}

impl DiffOperator {
    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Differences along the first (row) index.
    pub fn dx(&self) -> &CsrMatrix<f64> {
        &self.dx
    }

    /// Differences along the second (column) index.
    pub fn dy(&self) -> &CsrMatrix<f64> {
        &self.dy
    }

    /// `D = [dx; dy]`, `2N(N-1) x N^2`.
    pub fn stacked(&self) -> &CsrMatrix<f64> {
        &self.stacked
    }

    pub fn rows(&self) -> usize {
        self.stacked.nrows()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        let expected = self.block_size * self.block_size;
        if len != expected {
            return Err(Error::dim("vectorized block", expected, len));
        }
        Ok(())
    }

    /// `D s` through the sparse matrix.
    pub fn apply(&self, s: &[f64]) -> Result<DVector<f64>> {
        self.check_len(s.len())?;
        let v = DMatrix::from_column_slice(s.len(), 1, s);
        let out = &self.stacked * &v;
        Ok(DVector::from_column_slice(out.as_slice()))
    }

    /// `D s` evaluated stencil-wise without touching the matrices.
    pub fn apply_matrix_free(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.check_len(s.len())?;
        let n = self.block_size;
        let mut out = Vec::with_capacity(2 * n * (n - 1));
        for i in 0..n - 1 {
            for j in 0..n {
                out.push(s[(i + 1) * n + j] - s[i * n + j]);
            }
        }
        for i in 0..n {
            for j in 0..n - 1 {
                out.push(s[i * n + j + 1] - s[i * n + j]);
            }
        }
        Ok(out)
    }

    /// `D M` for a dense `N^2 x K` matrix.
    pub fn apply_dense(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_len(m.nrows())?;
        Ok(&self.stacked * m)
    }
}

/// Anisotropic total variation `||D s||_1` of a vectorized block.
pub fn tv(s: &[f64], op: &DiffOperator) -> Result<f64> {
    Ok(op.apply_matrix_free(s)?.iter().map(|d| d.abs()).sum())
}
