//! Sylvester equation A·X + X·B = Q via dense Kronecker vectorization.
//!
//! Desk scale only: the vectorized system is (n·m)×(n·m). That is the right
//! trade at the dimensions this crate handles and keeps the solver exact
//! about when it gives up (`SylvesterSingular`), which callers use to fall
//! back to path integration.

use super::{CMatrix, NumError};

/// Solve A·X + X·B = Q for X (A: n×n, B: m×m, Q: n×m).
///
/// With row-major vectorization the system matrix is A⊗I + I⊗Bᵀ.
/// Returns `SylvesterSingular` when the vectorized system is numerically
/// singular or the solution fails the residual check (shared spectrum of A
/// and −B).
pub fn sylvester(a: &CMatrix, b: &CMatrix, q: &CMatrix) -> Result<CMatrix, NumError> {
    assert!(
        a.is_square() && b.is_square(),
        "sylvester: A, B must be square"
    );
    let n = a.rows();
    let m = b.rows();
    assert_eq!(q.rows(), n, "sylvester: Q row mismatch");
    assert_eq!(q.cols(), m, "sylvester: Q column mismatch");

    let nm = n * m;
    let mut k = CMatrix::zeros(nm, nm);
    for i in 0..n {
        for j in 0..m {
            let r = i * m + j;
            for kk in 0..n {
                k[(r, kk * m + j)] += a[(i, kk)];
            }
            for l in 0..m {
                k[(r, i * m + l)] += b[(l, j)];
            }
        }
    }
    let rhs = CMatrix::from_fn(nm, 1, |r, _| q[(r / m, r % m)]);

    let x_vec = super::lu_solve(&k, &rhs).map_err(|e| match e {
        NumError::SingularMatrix { .. } => NumError::SylvesterSingular,
        other => other,
    })?;
    let x = CMatrix::from_fn(n, m, |i, j| x_vec[(i * m + j, 0)]);

    let residual = (&(&(a * &x) + &(&x * b)) - q).norm_max();
    let scale = a.norm_max() * x.norm_max() + x.norm_max() * b.norm_max() + q.norm_max();
    if !x.is_finite() || residual > 1e-10 * scale.max(1.0) {
        return Err(NumError::SylvesterSingular);
    }
    Ok(x)
}
