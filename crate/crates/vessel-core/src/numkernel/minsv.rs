//! Smallest singular value via inverse power iteration.
//!
//! σ_min(M) = 1/‖M⁻¹‖₂, and ‖M⁻¹‖₂² is the largest eigenvalue of the
//! Hermitian operator M⁻ᴴM⁻¹, which we power-iterate using two triangular
//! solves per step (no Gram matrix is formed, so accuracy degrades like
//! ε·κ(M) instead of ε·κ(M)²). Good to ~1% as an invertibility indicator.

use super::{lu_factor, CMatrix, C64};

/// Smallest singular value of a square matrix (estimate, ~1% accuracy).
/// Returns 0 for matrices that are singular at working precision.
pub fn min_sv(m: &CMatrix) -> f64 {
    assert!(m.is_square(), "min_sv requires a square matrix");
    let n = m.rows();
    if n == 0 {
        return 0.0;
    }
    if n == 1 {
        return m[(0, 0)].norm();
    }
    let scale = m.norm_max();
    if scale == 0.0 {
        return 0.0;
    }

    let lu_m = lu_factor(m);
    let lu_mh = lu_factor(&m.adjoint());
    // A pivot at roundoff level means rank-deficiency at working precision.
    if lu_m.min_pivot() <= 1e-15 * scale {
        return 0.0;
    }

    let mut best = 0.0f64;
    for restart in 0..3u64 {
        // Deterministic pseudo-random start vector.
        let mut s = 0x9e37_79b9_7f4a_7c15u64 ^ (restart.wrapping_mul(0xd134_2543_de82_ef95));
        let mut next = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut v = CMatrix::from_fn(n, 1, |_, _| C64::new(next(), next()));
        let mut lambda = 0.0f64;
        let mut prev = f64::INFINITY;
        for _ in 0..80 {
            let y = match lu_m.solve(&v) {
                Ok(y) => y,
                Err(_) => return 0.0,
            };
            let w = match lu_mh.solve(&y) {
                Ok(w) => w,
                Err(_) => return 0.0,
            };
            let norm_w = w.norm_fro();
            if !norm_w.is_finite() {
                return 0.0;
            }
            if norm_w == 0.0 {
                break;
            }
            lambda = norm_w / v.norm_fro();
            v = w.scale(C64::new(1.0 / norm_w, 0.0));
            if (lambda - prev).abs() <= 1e-6 * lambda {
                break;
            }
            prev = lambda;
        }
        best = best.max(lambda);
    }
    if best == 0.0 {
        return 0.0;
    }
    1.0 / best.sqrt()
}
