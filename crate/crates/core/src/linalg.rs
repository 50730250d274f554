use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

pub(crate) type Chol = Cholesky<f64, Dyn>;

/// Cholesky of a symmetric matrix. On failure the diagonal is nudged by
/// `jitter`, then by 100x and 10^4x that amount, before giving up.
pub(crate) fn cholesky_escalating(m: DMatrix<f64>, jitter: f64, what: &str) -> Result<Chol> {
    if let Some(c) = m.clone().cholesky() {
        return Ok(c);
    }
    if jitter > 0.0 {
        let mut eps = jitter;
        for _ in 0..3 {
            let mut j = m.clone();
            for i in 0..j.nrows() {
                j[(i, i)] += eps;
            }
            if let Some(c) = j.cholesky() {
                log::debug!("{what}: Cholesky needed diagonal jitter {eps:e}");
                return Ok(c);
            }
            eps *= 100.0;
        }
    }
    Err(Error::Singular(format!("{what} is not positive definite")))
}

/// Cholesky with no retry.
pub(crate) fn cholesky_strict(m: DMatrix<f64>, what: &str) -> Result<Chol> {
    m.cholesky()
        .ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))
}

/// Squared column norms of `L^{-1} B`.
pub(crate) fn whitened_col_norms2(chol: &Chol, b: &DMatrix<f64>) -> Vec<f64> {
    let v = chol
        .l_dirty()
        .solve_lower_triangular(b)
        .expect("Cholesky factor has a nonzero diagonal");
    v.column_iter().map(|c| c.norm_squared()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escalation_rescues_semidefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(cholesky_strict(m.clone(), "m").is_err());
        assert!(cholesky_escalating(m.clone(), 1e-10, "m").is_ok());
        assert!(cholesky_escalating(m, 0.0, "m").is_err());
    }
}
