//! Matrix exponential by scaling-and-squaring with a diagonal Padé(13)
//! approximant (Higham 2005). Degree 13 is used unconditionally; for the
//! matrix sizes in this crate the extra multiplications are irrelevant and
//! the single code path keeps the error behaviour uniform.

use super::{CMatrix, NumError, C64};

const THETA_13: f64 = 5.371920351148152;

const B: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// exp(M) for square complex M. Errors with `Overflow` if the result leaves
/// the representable range.
pub fn expm(m: &CMatrix) -> Result<CMatrix, NumError> {
    assert!(m.is_square(), "expm requires a square matrix");
    let n = m.rows();
    if n == 0 {
        return Ok(CMatrix::zeros(0, 0));
    }
    if n == 1 {
        let e = m[(0, 0)].exp();
        if !(e.re.is_finite() && e.im.is_finite()) {
            return Err(NumError::Overflow);
        }
        return Ok(CMatrix::new(1, 1, vec![e]));
    }

    let norm = m.norm_one();
    if !norm.is_finite() {
        return Err(NumError::Overflow);
    }
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as u32
    } else {
        0
    };
    let scaled = m.scale(C64::new((0.5f64).powi(s as i32), 0.0));

    let mut result = pade13(&scaled)?;
    for _ in 0..s {
        result = &result * &result;
        if !result.is_finite() {
            return Err(NumError::Overflow);
        }
    }
    Ok(result)
}

fn pade13(a: &CMatrix) -> Result<CMatrix, NumError> {
    let n = a.rows();
    let eye = CMatrix::identity(n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;

    let re = |x: f64| C64::new(x, 0.0);

    let w1 = &(&a6.scale(re(B[13])) + &a4.scale(re(B[11]))) + &a2.scale(re(B[9]));
    let w2 = &(&(&(&w1 * &a6) + &a6.scale(re(B[7]))) + &a4.scale(re(B[5])))
        + &(&a2.scale(re(B[3])) + &eye.scale(re(B[1])));
    let u = a * &w2;

    let v1 = &(&a6.scale(re(B[12])) + &a4.scale(re(B[10]))) + &a2.scale(re(B[8]));
    let v = &(&(&(&v1 * &a6) + &a6.scale(re(B[6]))) + &a4.scale(re(B[4])))
        + &(&a2.scale(re(B[2])) + &eye.scale(re(B[0])));

    let num = &v + &u;
    let den = &v - &u;
    let x = super::lu_solve(&den, &num).map_err(|_| NumError::Overflow)?;
    if !x.is_finite() {
        return Err(NumError::Overflow);
    }
    Ok(x)
}
