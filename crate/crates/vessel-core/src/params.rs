//! Canonical 3×3 vessel parameter matrices, the explicit fundamental matrix
//! Φ(λ, x) of the input equation, and the commutant family Y(λ).

use num_complex::Complex64;

use crate::numkernel::{c, expm, CMatrix, C64};

/// α = e^{2πi/3}, the basic cube root of unity.
pub const ALPHA: C64 = Complex64::new(-0.5, 0.866_025_403_784_438_6);

pub const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Sign convention for the (3,3) entry of the time-direction parameter γ̃.
///
/// `Paper` is the printed +i; `Compatible` (the default) is −i, which makes
/// the x- and t-flow generators commute and matches both built-in soliton
/// datasets. The errata reporter measures the difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GammaTSign {
    Paper,
    #[default]
    Compatible,
}

impl std::fmt::Display for GammaTSign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GammaTSign::Paper => write!(f, "paper"),
            GammaTSign::Compatible => write!(f, "compatible"),
        }
    }
}

/// The constant parameter matrices (σ₁, σ₂, γ) of the space direction and
/// (σ̃₁, σ̃₂, γ̃) of the time direction.
#[derive(Debug, Clone)]
pub struct VesselParameters {
    pub sigma1: CMatrix,
    pub sigma2: CMatrix,
    pub gamma: CMatrix,
    pub sigma1_t: CMatrix,
    pub sigma2_t: CMatrix,
    pub gamma_t: CMatrix,
    pub gamma_t_sign: GammaTSign,
}

/// The canonical parameter set. σ₁ is an involution (σ₁⁻¹ = σ₁), which the
/// rest of the crate relies on.
pub fn canonical_parameters(sign: GammaTSign) -> VesselParameters {
    let sigma1 = CMatrix::from_real_rows(&[&[0.0, 0.0, 1.0], &[0.0, 1.0, 0.0], &[1.0, 0.0, 0.0]]);
    let sigma2 = CMatrix::from_real_rows(&[&[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0]]);
    let gamma = CMatrix::from_real_rows(&[&[0.0, 0.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, -1.0, 0.0]]);
    let sigma2_t = CMatrix::from_rows(&[
        vec![c(0.0, 0.0), c(0.0, -1.0), c(0.0, 0.0)],
        vec![c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0)],
        vec![c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
    ]);
    let g33 = match sign {
        GammaTSign::Paper => c(0.0, 1.0),
        GammaTSign::Compatible => c(0.0, -1.0),
    };
    let mut gamma_t = CMatrix::zeros(3, 3);
    gamma_t[(2, 2)] = g33;
    VesselParameters {
        sigma1: sigma1.clone(),
        sigma2,
        gamma,
        sigma1_t: sigma1,
        sigma2_t,
        gamma_t,
        gamma_t_sign: sign,
    }
}

impl VesselParameters {
    /// σ₁⁻¹ (= σ₁, since σ₁² = I).
    pub fn sigma1_inv(&self) -> &CMatrix {
        &self.sigma1
    }

    /// Generator of the input equation: Φ′ = σ₁⁻¹(λσ₂ + γ)Φ.
    pub fn input_generator(&self, lambda: C64) -> CMatrix {
        let lam_sigma2 = self.sigma2.scale(lambda);
        &self.sigma1 * &(&lam_sigma2 + &self.gamma)
    }
}

/// Fundamental matrix Φ(λ, x) of the input equation, normalized Φ(λ, 0) = I.
///
/// λ = 0 uses the closed nilpotent-exponential form; x = 0 returns the exact
/// identity. Away from those, the explicit exponential-sum form with the
/// principal cube root of λ is used; all entries depend on k³ only, so the
/// branch choice is immaterial (asserted in tests, not assumed).
pub fn phi(lambda: C64, x: f64) -> CMatrix {
    if x == 0.0 {
        return CMatrix::identity(3);
    }
    if lambda == c(0.0, 0.0) {
        // Generator σ₁(γ) is nilpotent of order 3.
        return CMatrix::from_rows(&[
            vec![c(1.0, 0.0), c(-x, 0.0), c(-x * x / 2.0, 0.0)],
            vec![c(0.0, 0.0), c(1.0, 0.0), c(x, 0.0)],
            vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
        ]);
    }
    phi_from_k(lambda.cbrt(), x)
}

/// The explicit form of Φ evaluated from a chosen cube root k of λ.
///
/// Exposed so the cube-root branch independence can be tested directly by
/// rotating k through αk and α²k.
pub fn phi_from_k(k: C64, x: f64) -> CMatrix {
    let a = ALPHA;
    let a2 = ALPHA * ALPHA;
    let xs = c(x, 0.0);
    let e1 = (-k * xs).exp();
    let e2 = (-a * k * xs).exp();
    let e3 = (-a2 * k * xs).exp();
    let r1 = a2 * (e1 + e2 + e3);
    let r2 = a2 * e1 + a * e2 + e3;
    let r3 = a2 * e1 + e2 + a * e3;
    let pref = c(1.0, 0.0) / (c(3.0, 0.0) * a2);
    CMatrix::from_rows(&[
        vec![pref * r1, pref * r2 / k, -pref * r3 / (k * k)],
        vec![pref * k * r3, pref * r1, -pref * r2 / k],
        vec![-pref * k * k * r2, -pref * k * r3, pref * r1],
    ])
}

/// A member Y(λ) = aI + b·N₁(λ) + c·N₂(λ) of the family commuting with
/// Φ(λ, x).
pub fn commutant(a: C64, b: C64, cc: C64, lambda: C64) -> CMatrix {
    let mut y = CMatrix::identity(3).scale(a);
    let n1 = CMatrix::from_rows(&[
        vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
        vec![c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)],
        vec![-lambda, c(0.0, 0.0), c(0.0, 0.0)],
    ]);
    let n2 = CMatrix::from_rows(&[
        vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
        vec![-lambda, c(0.0, 0.0), c(0.0, 0.0)],
        vec![c(0.0, 0.0), lambda, c(0.0, 0.0)],
    ]);
    y = &y + &n1.scale(b);
    y = &y + &n2.scale(cc);
    y
}

/// Φ(λ, x) via the generic matrix exponential of the generator. Used as a
/// cross-check of the closed form.
pub fn phi_by_expm(params: &VesselParameters, lambda: C64, x: f64) -> CMatrix {
    expm(&params.input_generator(lambda).scale(c(x, 0.0))).expect("bounded 3x3 generator")
}
