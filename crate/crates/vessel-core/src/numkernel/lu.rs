//! Pivoted LU factorization, linear solves, determinants.

use super::{CMatrix, NumError, C64, PIVOT_REL_TOL};

/// Packed LU factors of a square matrix with partial (row) pivoting.
///
/// The factorization itself never fails: a zero pivot just leaves its column
/// uneliminated, which is exactly what the determinant needs. Solving checks
/// the pivot magnitudes against the relative threshold and reports
/// `SingularMatrix` instead of amplifying noise.
pub struct LuFactors {
    n: usize,
    lu: Vec<C64>,
    perm: Vec<usize>,
    swaps: usize,
    min_pivot: f64,
    scale: f64,
}

pub fn lu_factor(m: &CMatrix) -> LuFactors {
    assert!(m.is_square(), "LU factorization requires a square matrix");
    let n = m.rows();
    let mut lu: Vec<C64> = m.data().to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut swaps = 0usize;
    let mut min_pivot = f64::INFINITY;
    let scale = m.norm_max();

    for col in 0..n {
        let mut best = col;
        let mut best_mag = lu[col * n + col].norm();
        for row in (col + 1)..n {
            let mag = lu[row * n + col].norm();
            if mag > best_mag {
                best_mag = mag;
                best = row;
            }
        }
        if best != col {
            for j in 0..n {
                lu.swap(col * n + j, best * n + j);
            }
            perm.swap(col, best);
            swaps += 1;
        }
        let pivot = lu[col * n + col];
        let mag = pivot.norm();
        min_pivot = min_pivot.min(mag);
        if mag == 0.0 {
            continue;
        }
        for row in (col + 1)..n {
            let factor = lu[row * n + col] / pivot;
            lu[row * n + col] = factor;
            for j in (col + 1)..n {
                let sub = factor * lu[col * n + j];
                lu[row * n + j] -= sub;
            }
        }
    }
    if n == 0 {
        min_pivot = 0.0;
    }

    LuFactors {
        n,
        lu,
        perm,
        swaps,
        min_pivot,
        scale,
    }
}

impl LuFactors {
    /// Magnitude of the smallest pivot encountered.
    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    /// Max-norm of the factored matrix, the scale for the pivot threshold.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_singular(&self) -> bool {
        self.min_pivot <= PIVOT_REL_TOL * self.scale
    }

    /// Determinant: permutation sign times the product of pivots.
    pub fn det(&self) -> C64 {
        let sign = if self.swaps.is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        let mut d = C64::new(sign, 0.0);
        for i in 0..self.n {
            d *= self.lu[i * self.n + i];
        }
        d
    }

    /// Solve M·X = RHS for X (RHS may have any number of columns).
    pub fn solve(&self, rhs: &CMatrix) -> Result<CMatrix, NumError> {
        assert_eq!(rhs.rows(), self.n, "solve: RHS row count mismatch");
        if self.is_singular() {
            return Err(NumError::SingularMatrix {
                pivot: self.min_pivot,
                threshold: PIVOT_REL_TOL * self.scale,
            });
        }
        let n = self.n;
        let k = rhs.cols();
        // Apply the row permutation to the RHS.
        let mut x = CMatrix::from_fn(n, k, |i, j| rhs[(self.perm[i], j)]);
        // Forward substitution with unit-diagonal L.
        for col in 0..n {
            for row in (col + 1)..n {
                let factor = self.lu[row * n + col];
                if factor.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..k {
                    let sub = factor * x[(col, j)];
                    x[(row, j)] -= sub;
                }
            }
        }
        // Back substitution with U.
        for col in (0..n).rev() {
            let pivot = self.lu[col * n + col];
            for j in 0..k {
                let mut s = x[(col, j)];
                for m in (col + 1)..n {
                    s -= self.lu[col * n + m] * x[(m, j)];
                }
                x[(col, j)] = s / pivot;
            }
        }
        Ok(x)
    }
}

/// One-shot solve M·X = RHS.
pub fn lu_solve(m: &CMatrix, rhs: &CMatrix) -> Result<CMatrix, NumError> {
    lu_factor(m).solve(rhs)
}

/// Determinant via pivoted LU; returns 0 for singular input.
pub fn det_lu(m: &CMatrix) -> C64 {
    lu_factor(m).det()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::c;

    fn residual(m: &CMatrix, x: &CMatrix, rhs: &CMatrix) -> f64 {
        (&(m * x) - rhs).norm_max()
    }

    #[test]
    fn identity_solve_returns_rhs() {
        let rhs = CMatrix::from_real_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        let x = lu_solve(&CMatrix::identity(3), &rhs).unwrap();
        assert_eq!(x, rhs);
    }

    #[test]
    fn diagonal_inversion() {
        let m = CMatrix::diag(&[c(2.0, 0.0), c(0.0, 4.0)]);
        let x = lu_solve(&m, &CMatrix::identity(2)).unwrap();
        assert!((x[(0, 0)] - c(0.5, 0.0)).norm() < 1e-15);
        assert!((x[(1, 1)] - c(0.0, -0.25)).norm() < 1e-15);
    }

    #[test]
    fn random_5x5_residual() {
        // Fixed pseudo-random matrix; the oracle is the residual itself.
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let m = CMatrix::from_fn(5, 5, |_, _| c(next(), next()));
        let rhs = CMatrix::from_fn(5, 2, |_, _| c(next(), next()));
        let x = lu_solve(&m, &rhs).unwrap();
        let tol = 1e-12 * (1.0 + m.norm_max() * x.norm_max());
        assert!(residual(&m, &x, &rhs) <= tol);
    }

    #[test]
    fn singular_matrix_reported() {
        let m = CMatrix::from_real_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        match lu_solve(&m, &CMatrix::identity(2)) {
            Err(NumError::SingularMatrix { .. }) => {}
            other => panic!("expected SingularMatrix, got {other:?}"),
        }
    }

    #[test]
    fn det_identity_and_diag() {
        assert_eq!(det_lu(&CMatrix::identity(4)), c(1.0, 0.0));
        let d = det_lu(&CMatrix::diag(&[c(2.0, 0.0), c(0.0, 3.0)]));
        assert!((d - c(0.0, 6.0)).norm() < 1e-15);
    }

    #[test]
    fn det_vs_cofactor_expansion() {
        let mut seed = 0xabcdef1234567890u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..10 {
            let m = CMatrix::from_fn(3, 3, |_, _| c(next(), next()));
            // Cofactor expansion along the first row: the independent oracle.
            let cof = |r: &[usize], cs: &[usize]| -> C64 {
                m[(r[0], cs[0])] * m[(r[1], cs[1])] - m[(r[0], cs[1])] * m[(r[1], cs[0])]
            };
            let oracle = m[(0, 0)] * cof(&[1, 2], &[1, 2]) - m[(0, 1)] * cof(&[1, 2], &[0, 2])
                + m[(0, 2)] * cof(&[1, 2], &[0, 1]);
            let d = det_lu(&m);
            assert!((d - oracle).norm() <= 1e-13 * oracle.norm().max(1e-30));
        }
    }

    #[test]
    fn det_singular_is_zero() {
        let m = CMatrix::from_real_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(det_lu(&m).norm() < 1e-14);
    }
}
