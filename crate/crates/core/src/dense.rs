//! Small dense kernels backing the direct inner solve and the reference oracle.

use crate::error::{NodaError, Result};
use crate::scalar::Scalar;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
///
/// An exactly zero pivot is replaced by `eps · max|a|` so that a shift sitting
/// on an eigenvalue still yields a (huge) inverse-iteration direction instead
/// of failing.
pub fn gauss_solve<T: Scalar>(mut a: Vec<Vec<T>>, b: &[T]) -> Result<Vec<T>> {
    let n = a.len();
    if b.len() != n {
        return Err(NodaError::DimensionMismatch { expected: n, found: b.len() });
    }
    if let Some(bad) = a.iter().position(|row| row.len() != n) {
        return Err(NodaError::InvalidMatrix(format!("dense row {bad} has wrong length")));
    }
    let scale = a.iter().flat_map(|row| row.iter()).fold(T::zero(), |m, v| m.max(v.abs()));
    let tiny = T::epsilon() * if scale > T::zero() { scale } else { T::one() };
    let mut x = b.to_vec();

    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap();
        a.swap(col, pivot_row);
        x.swap(col, pivot_row);
        if a[col][col] == T::zero() {
            a[col][col] = tiny;
        }
        let pivot = a[col][col];
        let (upper, lower) = a.split_at_mut(col + 1);
        let prow = &upper[col];
        for (off, row) in lower.iter_mut().enumerate() {
            let factor = row[col] / pivot;
            if factor == T::zero() {
                continue;
            }
            for k in col..n {
                row[k] -= factor * prow[k];
            }
            let xi = x[col];
            x[col + 1 + off] -= factor * xi;
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col];
        for k in col + 1..n {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(NodaError::InvalidMatrix("dense solve produced non-finite values".into()));
    }
    Ok(x)
}
