//! Measured discrepancies between the published formulas and the identities
//! the engine verifies. Nothing here is asserted; the entries are computed
//! fresh and rendered into reports so the numbers travel with the results.

use crate::evolution::{compatibility_residual, generators, propagate};
use crate::numkernel::{c, CMatrix};
use crate::params::{canonical_parameters, GammaTSign, ALPHA, SQRT3};
use crate::pde_verify::{calibrate_beta, residual_ladder};
use crate::potentials::pi_relations;
use crate::rng::SplitMix64;
use crate::solitons::{soliton_classic, soliton_exp};

#[derive(Debug, Clone)]
pub struct ErrataEntry {
    pub id: &'static str,
    pub summary: String,
    pub measurements: Vec<(String, f64)>,
}

/// Compute the full errata report on the built-in datasets (μ = 1).
pub fn errata_report() -> Vec<ErrataEntry> {
    let mut entries = Vec::new();
    let mu = c(1.0, 0.0);
    let compat = canonical_parameters(GammaTSign::Compatible);
    let paper = canonical_parameters(GammaTSign::Paper);
    let (r_exp, _) = soliton_exp(mu);
    let (r_classic, classic_ref) = soliton_classic(mu);

    // 1. Sign of the (3,3) entry of the time-direction parameter: the
    // printed +i makes the x- and t-flow generators non-commuting.
    {
        let comm_norm = |sign: &crate::params::VesselParameters| {
            let g = generators(&r_exp, sign);
            (&(&g.mx_b * &g.mt_b) - &(&g.mt_b * &g.mx_b)).norm_max()
        };
        let res_paper = compatibility_residual(&r_exp, &paper, (0.3, 0.2), 1e-4).unwrap();
        let res_compat = compatibility_residual(&r_exp, &compat, (0.3, 0.2), 1e-4).unwrap();
        entries.push(ErrataEntry {
            id: "gamma_t_sign",
            summary: "the printed time-direction parameter (+i in entry (3,3)) breaks flow \
                      commutativity; the engine default flips the sign"
                .to_string(),
            measurements: vec![
                ("commutator_norm_paper".to_string(), comm_norm(&paper)),
                ("commutator_norm_compatible".to_string(), comm_norm(&compat)),
                ("compatibility_residual_paper".to_string(), res_paper),
                ("compatibility_residual_compatible".to_string(), res_compat),
            ],
        });
    }

    // 2. The literal published soliton triples (B, C, X at the origin) fail
    // the algebraic constraint A X + X A_ζ + Bσ₁C = 0 by constant factors;
    // the constructors rescale C to restore it.
    {
        let lyap = |a: crate::numkernel::C64,
                    az: crate::numkernel::C64,
                    b0: &CMatrix,
                    c0: &CMatrix,
                    x0: crate::numkernel::C64| {
            let bsc = (&(b0 * &compat.sigma1) * c0)[(0, 0)];
            ((a + az) * x0 + bsc).norm()
        };
        // Published exp dataset at the origin.
        let i = c(0.0, 1.0);
        let k1 = c(2.0, 0.0) * i * ALPHA * mu;
        let f1 = c(2.0, 0.0) * i * ALPHA * ALPHA * mu;
        let a = k1 * k1 * k1;
        let b = c(1.0, 0.0) / (i + c(SQRT3, 0.0));
        let cc = -i;
        let b0 = CMatrix::from_rows(&[vec![
            b / (k1 * k1) + cc / (f1 * f1),
            -b / k1 - cc / f1,
            -b - cc,
        ]]);
        let c0_printed = CMatrix::from_rows(&[
            vec![c(1.0, 0.0) / (f1 * f1)],
            vec![-c(1.0, 0.0) / f1],
            vec![-c(1.0, 0.0)],
        ]);
        let x0_printed = ALPHA / c(32.0, 0.0);
        let res_exp = lyap(a, a, &b0, &c0_printed, x0_printed);

        // Published classic dataset at the origin (single-component C).
        let k = c(2.0, 0.0) * i * ALPHA * mu;
        let nu2 = i * ALPHA * mu;
        let b0c = CMatrix::from_rows(&[vec![c(1.0, 0.0), -k, -k * k]]);
        let c0c = CMatrix::from_rows(&[vec![c(1.0, 0.0)], vec![-nu2], vec![-nu2 * nu2]]);
        let x0c = -c(2.0, 0.0) * ALPHA / c(SQRT3, 0.0);
        let res_classic = lyap(k * k * k, nu2 * nu2 * nu2, &b0c, &c0c, x0c);

        let engine_exp = r_exp.lyapunov_residual(&compat);
        let engine_classic = r_classic.lyapunov_residual(&compat);
        entries.push(ErrataEntry {
            id: "dataset_basepoint_constraint",
            summary: "the published soliton triples violate the basepoint operator identity \
                      by constant factors; the built-in constructors rescale (and for the \
                      classic dataset complete) the C column so it holds exactly"
                .to_string(),
            measurements: vec![
                ("published_exp_residual".to_string(), res_exp),
                ("published_classic_residual".to_string(), res_classic),
                ("engine_exp_residual".to_string(), engine_exp),
                ("engine_classic_residual".to_string(), engine_classic),
            ],
        });
    }

    // 3. Classic closed-form amplitude: factor 4 against the
    // realization-derived profile at the crest.
    {
        let ratio = classic_ref.q_printed(0.0, 0.0) / classic_ref.q(0.0, 0.0);
        entries.push(ErrataEntry {
            id: "classic_amplitude_factor",
            summary: "the published classic closed form is 4x the realization-derived \
                      amplitude at the crest"
                .to_string(),
            measurements: vec![
                ("amplitude_ratio_re".to_string(), ratio.re),
                ("amplitude_ratio_im".to_string(), ratio.im),
            ],
        });
    }

    // 4. Normalization constant of the equation: candidate readings
    // {3, 1, 1/3} and the calibrated value.
    {
        let mut rng = SplitMix64::new(4242);
        let pts: Vec<(f64, f64)> = (0..30)
            .map(|_| (rng.next_in(-1.2, 1.2), rng.next_in(-0.6, 0.6)))
            .collect();
        let fit = calibrate_beta(&r_exp, &compat, &pts).unwrap();
        let mut measurements = vec![("calibrated_beta".to_string(), fit.beta)];
        for (label, beta) in [("3", 3.0), ("1", 1.0), ("1_3", 1.0 / 3.0)] {
            let rep = residual_ladder(&r_exp, &compat, &pts, beta).unwrap();
            measurements.push((format!("ladder_residual_beta_{label}"), rep.max_residual));
        }
        entries.push(ErrataEntry {
            id: "normalization_beta",
            summary: "the three published normalizations of the equation are inconsistent; \
                      one constant fits all generated solutions"
                .to_string(),
            measurements,
        });
    }

    // 5. Suspect relations between the entries of the zeroth moment.
    {
        let state = propagate(&r_exp, &compat, 0.3, 0.15).unwrap();
        let pr = pi_relations(&r_exp, &state, &compat).unwrap();
        entries.push(ErrataEntry {
            id: "moment_entry_relations",
            summary: "residuals of the printed relations for pi32, pi13' and the pi12·pi11' \
                      identity, measured on the exp dataset"
                .to_string(),
            measurements: vec![
                ("pi21_residual".to_string(), pr.pi21),
                ("pi22_residual".to_string(), pr.pi22),
                ("pi31_residual".to_string(), pr.pi31),
                ("pi32_residual".to_string(), pr.pi32),
                ("pi13_prime_residual".to_string(), pr.pi13_prime),
                ("pi12_relation_residual".to_string(), pr.pi12_relation),
            ],
        });
    }

    entries
}

/// Render the report as structured text (one `id.key: value` line per
/// measurement).
pub fn render(entries: &[ErrataEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        s.push_str(&format!("[{}] {}\n", e.id, e.summary));
        for (k, v) in &e.measurements {
            s.push_str(&format!("{}.{k}: {v:.6e}\n", e.id));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_measures_the_known_discrepancies() {
        let entries = errata_report();
        let get = |id: &str, key: &str| -> f64 {
            entries
                .iter()
                .find(|e| e.id == id)
                .unwrap()
                .measurements
                .iter()
                .find(|(k, _)| k == key)
                .unwrap()
                .1
        };
        // Paper sign breaks commutativity, compatible restores it.
        assert!(get("gamma_t_sign", "commutator_norm_paper") > 1e-2);
        assert!(get("gamma_t_sign", "commutator_norm_compatible") <= 1e-12);
        // Published triples fail the basepoint identity, engine ones hold.
        assert!(get("dataset_basepoint_constraint", "published_exp_residual") > 1e-2);
        assert!(get("dataset_basepoint_constraint", "engine_exp_residual") <= 1e-12);
        assert!(get("dataset_basepoint_constraint", "published_classic_residual") > 1e-2);
        // Amplitude ratio 4.
        assert!((get("classic_amplitude_factor", "amplitude_ratio_re") - 4.0).abs() <= 1e-9);
        // Calibration lands on 1/3 and discriminates the readings.
        assert!((get("normalization_beta", "calibrated_beta") - 1.0 / 3.0).abs() <= 1e-9);
        assert!(get("normalization_beta", "ladder_residual_beta_1_3") <= 1e-8);
        assert!(get("normalization_beta", "ladder_residual_beta_3") > 1e-2);
    }
}
