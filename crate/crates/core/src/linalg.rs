//! Dense least squares shared by the linear model, MICE and LIME.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LstsqError {
    #[error("design matrix is rank deficient (column {column} is linearly dependent on the others)")]
    RankDeficient { column: usize },
    #[error("design has {rows} rows but {cols} columns")]
    Underdetermined { rows: usize, cols: usize },
}

/// Relative pivot size below which a column counts as dependent.
const RANK_TOL: f64 = 1e-10;

/// Solves `min ‖W^{1/2}(X b − y)‖²` for a row-major design `x` with
/// `n_cols` columns. `weights` defaults to all ones.
///
/// Columns are scaled to unit norm before a Householder QR so that the rank
/// test does not depend on feature units.
pub fn least_squares(
    x: &[f64],
    n_cols: usize,
    y: &[f64],
    weights: Option<&[f64]>,
) -> Result<Vec<f64>, LstsqError> {
    let n_rows = y.len();
    if n_rows < n_cols || n_cols == 0 {
        return Err(LstsqError::Underdetermined {
            rows: n_rows,
            cols: n_cols,
        });
    }
    let mut a = DMatrix::<f64>::from_row_slice(n_rows, n_cols, x);
    let mut b = DVector::<f64>::from_column_slice(y);
    if let Some(w) = weights {
        for i in 0..n_rows {
            let s = w[i].sqrt();
            for j in 0..n_cols {
                a[(i, j)] *= s;
            }
            b[i] *= s;
        }
    }
    let mut scale = vec![1.0; n_cols];
    for (j, s) in scale.iter_mut().enumerate() {
        let norm = a.column(j).norm();
        if norm == 0.0 {
            return Err(LstsqError::RankDeficient { column: j });
        }
        *s = norm;
        a.column_mut(j).unscale_mut(norm);
    }
    let qr = a.qr();
    let r = qr.r();
    let max_diag = (0..n_cols).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    for j in 0..n_cols {
        if r[(j, j)].abs() <= RANK_TOL * max_diag.max(1.0) {
            return Err(LstsqError::RankDeficient { column: j });
        }
    }
    let qtb = qr.q().transpose() * b;
    let coef = r
        .solve_upper_triangular(&qtb)
        .ok_or(LstsqError::RankDeficient { column: n_cols - 1 })?;
    Ok(coef.iter().zip(&scale).map(|(c, s)| c / s).collect())
}
