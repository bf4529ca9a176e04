use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative size of a pivot below which a column counts as linearly dependent on
/// the columns before it.
pub const SINGULAR_TOLERANCE: f64 = 1e-12;

/// Indices of columns of the symmetric positive semi-definite `a` that are
/// (numerically) linear combinations of earlier columns.
pub fn dependent_columns(a: &DMatrix<f64>) -> Vec<usize> {
    let q = a.nrows();
    let scale: Vec<f64> = (0..q).map(|i| a[(i, i)].abs().sqrt()).collect();
    // work on the correlation form so the tolerance is scale free
    let mut m = DMatrix::from_fn(q, q, |i, j| {
        if scale[i] > 0.0 && scale[j] > 0.0 {
            a[(i, j)] / (scale[i] * scale[j])
        } else {
            0.0
        }
    });
    let mut dependent = Vec::new();
    for k in 0..q {
        let pivot = m[(k, k)];
        if scale[k] == 0.0 || pivot < SINGULAR_TOLERANCE {
            dependent.push(k);
            continue;
        }
        for i in k + 1..q {
            let f = m[(i, k)] / pivot;
            for j in k + 1..q {
                m[(i, j)] -= f * m[(k, j)];
            }
        }
    }
    dependent
}

/// Inverse of a symmetric positive-definite matrix via Cholesky, falling back to LU.
pub fn spd_inverse(a: &DMatrix<f64>, names: &[String]) -> Result<DMatrix<f64>> {
    let dependent = dependent_columns(a);
    if !dependent.is_empty() {
        return Err(Error::SingularMatrix {
            columns: dependent.iter().map(|&i| names[i].clone()).collect(),
        });
    }
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.inverse());
    }
    a.clone().lu().try_inverse().ok_or_else(|| Error::SingularMatrix {
        columns: names.to_vec(),
    })
}

/// Solves `a x = b` for symmetric positive-definite `a`, falling back to LU.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>, names: &[String]) -> Result<DVector<f64>> {
    let dependent = dependent_columns(a);
    if !dependent.is_empty() {
        return Err(Error::SingularMatrix {
            columns: dependent.iter().map(|&i| names[i].clone()).collect(),
        });
    }
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    a.clone().lu().solve(b).ok_or_else(|| Error::SingularMatrix {
        columns: names.to_vec(),
    })
}
