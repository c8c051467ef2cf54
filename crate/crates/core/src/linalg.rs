//! Dense matrix helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn zeros(r: usize) -> Mat {
    Mat::zeros(r, r)
}

pub fn ones(r: usize) -> Vector {
    Vector::from_element(r, 1.0)
}

pub fn sup_norm(m: &Mat) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

pub fn row_sums(m: &Mat) -> Vector {
    Vector::from_iterator(m.nrows(), m.row_iter().map(|r| r.sum()))
}

pub fn is_zero(m: &Mat) -> bool {
    m.iter().all(|&x| x == 0.0)
}

/// Solves `a x = b` by LU, failing on singular or badly conditioned input.
pub fn solve(a: &Mat, b: &Mat) -> Result<Mat> {
    let lu = a.clone().lu();
    let x = lu.solve(b).ok_or_else(|| Error::Singular("LU factorization failed".into()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("non-finite solution".into()));
    }
    Ok(x)
}

pub fn inverse(a: &Mat) -> Result<Mat> {
    solve(a, &Mat::identity(a.nrows(), a.ncols()))
}

/// Converts a row-major nested list to a matrix, checking it is `r x r`.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let r = rows.len();
    if rows.iter().any(|row| row.len() != r) {
        return Err(Error::InvalidWalk(format!("matrix is not {r}x{r}")));
    }
    Ok(Mat::from_fn(r, r, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}
