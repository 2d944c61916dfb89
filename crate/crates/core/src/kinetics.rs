//! Reaction kinetics for the four-reaction reforming network:
//! ethanol dehydrogenation, ethanol decomposition, water-gas shift, and
//! acetaldehyde steam reforming.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const N_SPECIES: usize = 7;
pub const N_REACTIONS: usize = 4;
pub const N_ELEMENTS: usize = 3; // C, H, O

/// Default reference temperature for the Arrhenius law, in K.
pub const T_REF_DEFAULT: f64 = 773.0;

pub const SPECIES_NAMES: [&str; N_SPECIES] =
    ["C2H5OH", "H2O", "CH4", "H2", "CO", "CO2", "CH3CHO"];

#[derive(Debug, Error)]
pub enum KineticsError {
    #[error("total molar flow must be positive (got {0})")]
    ZeroTotalFlow(f64),
    #[error("stoichiometry row {reaction} violates {element} balance (residual {residual})")]
    AtomBalance { reaction: usize, element: &'static str, residual: i64 },
    #[error("{field} must be positive (got {value})")]
    NonPositive { field: &'static str, value: f64 },
}

pub type Result<T> = std::result::Result<T, KineticsError>;

/// Fixed species ordering and per-species atom counts (C, H, O).
#[derive(Debug, Clone)]
pub struct SpeciesSet {
    pub atoms: [[i64; N_ELEMENTS]; N_SPECIES],
}

impl Default for SpeciesSet {
    fn default() -> Self {
        Self {
            atoms: [
                [2, 6, 1], // C2H5OH
                [0, 2, 1], // H2O
                [1, 4, 0], // CH4
                [0, 2, 0], // H2
                [1, 0, 1], // CO
                [1, 0, 2], // CO2
                [2, 4, 1], // CH3CHO
            ],
        }
    }
}

/// Stoichiometric coefficients, one row per reaction, species order fixed.
pub fn default_stoichiometry() -> [[f64; N_SPECIES]; N_REACTIONS] {
    [
        [-1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0],  // C2H5OH -> CH3CHO + H2
        [-1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0],  // C2H5OH -> CO + CH4 + H2
        [0.0, -1.0, 0.0, 1.0, -1.0, 1.0, 0.0], // CO + H2O <-> CO2 + H2
        [0.0, -3.0, 0.0, 5.0, 0.0, 2.0, -1.0], // CH3CHO + 3 H2O -> 2 CO2 + 5 H2
    ]
}

/// Checks nu . atoms = 0 row by row; coefficients must be whole numbers so
/// the balance is exact in integer arithmetic.
pub fn validate_stoichiometry(
    nu: &[[f64; N_SPECIES]; N_REACTIONS],
    species: &SpeciesSet,
) -> Result<()> {
    const ELEMENTS: [&str; N_ELEMENTS] = ["C", "H", "O"];
    for (i, row) in nu.iter().enumerate() {
        for (e, name) in ELEMENTS.iter().enumerate() {
            let residual: i64 = row
                .iter()
                .enumerate()
                .map(|(j, &c)| (c.round() as i64) * species.atoms[j][e])
                .sum();
            if residual != 0 {
                return Err(KineticsError::AtomBalance {
                    reaction: i + 1,
                    element: name,
                    residual,
                });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KineticsParams {
    /// Pre-exponential factors, one per reaction.
    pub k_inf: [f64; N_REACTIONS],
    /// Activation energies in J/mol.
    pub e_a: [f64; N_REACTIONS],
    /// Reaction heats in J/mol.
    pub dh: [f64; N_REACTIONS],
    /// Stoichiometric matrix, reactions x species.
    pub nu: [[f64; N_SPECIES]; N_REACTIONS],
    /// Arrhenius reference temperature in K.
    pub t_ref: f64,
}

impl KineticsParams {
    /// Parameters with all rates switched off (zero pre-exponentials).
    pub fn inert() -> Self {
        Self {
            k_inf: [0.0; N_REACTIONS],
            e_a: [0.0; N_REACTIONS],
            dh: [0.0; N_REACTIONS],
            nu: default_stoichiometry(),
            t_ref: T_REF_DEFAULT,
        }
    }

    pub fn validate(&self, species: &SpeciesSet) -> Result<()> {
        if self.t_ref <= 0.0 {
            return Err(KineticsError::NonPositive { field: "t_ref", value: self.t_ref });
        }
        validate_stoichiometry(&self.nu, species)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RateVector {
    pub r_a: f64,
    pub r_b: f64,
    pub r_c: f64,
    pub r_d: f64,
}

impl RateVector {
    pub fn as_array(&self) -> [f64; N_REACTIONS] {
        [self.r_a, self.r_b, self.r_c, self.r_d]
    }
}

/// Partial pressures from molar flows: P_j = (F_j / sum F) * p.
pub fn partial_pressures(flows: &[f64; N_SPECIES], p: f64) -> Result<[f64; N_SPECIES]> {
    if p <= 0.0 {
        return Err(KineticsError::NonPositive { field: "p", value: p });
    }
    let total: f64 = flows.iter().sum();
    if total <= 0.0 {
        return Err(KineticsError::ZeroTotalFlow(total));
    }
    let mut out = [0.0; N_SPECIES];
    for (o, f) in out.iter_mut().zip(flows) {
        *o = f / total * p;
    }
    Ok(out)
}

/// Water-gas shift equilibrium constant, exp(4577.8/T - 4.33).
pub fn k_wgs(t: f64) -> f64 {
    (4577.8 / t - 4.33).exp()
}

/// Arrhenius law around a reference temperature:
/// k = k_inf * exp(-E_a * (1/(R T) - 1/(R T_ref))).
pub fn arrhenius(k_inf: f64, e_a: f64, t: f64, t_ref: f64, r_gas: f64) -> f64 {
    k_inf * (-e_a * (1.0 / (r_gas * t) - 1.0 / (r_gas * t_ref))).exp()
}

/// Reaction rates plus the count of partial pressures clamped to zero.
///
/// Negative pressures only arise from transient numerical undershoot; they
/// are clamped here, in the source evaluation, never in the state itself.
pub fn reaction_rates_with_clamps(
    pressures: &[f64; N_SPECIES],
    t: f64,
    params: &KineticsParams,
    r_gas: f64,
) -> (RateVector, u32) {
    let mut p = *pressures;
    let mut clamps = 0;
    for v in &mut p {
        if *v < 0.0 {
            *v = 0.0;
            clamps += 1;
        }
    }
    let k: Vec<f64> = (0..N_REACTIONS)
        .map(|i| arrhenius(params.k_inf[i], params.e_a[i], t, params.t_ref, r_gas))
        .collect();
    let rates = RateVector {
        r_a: k[0] * p[0],
        r_b: k[1] * p[0],
        r_c: k[2] * (p[4] * p[1] - p[5] * p[3] / k_wgs(t)),
        r_d: k[3] * p[6] * p[1].powi(3),
    };
    (rates, clamps)
}

pub fn reaction_rates(
    pressures: &[f64; N_SPECIES],
    t: f64,
    params: &KineticsParams,
    r_gas: f64,
) -> RateVector {
    reaction_rates_with_clamps(pressures, t, params, r_gas).0
}

/// Per-species molar source: s_j = sum_i nu_{i,j} r_i.
pub fn species_sources(r: &RateVector, nu: &[[f64; N_SPECIES]; N_REACTIONS]) -> [f64; N_SPECIES] {
    let rates = r.as_array();
    let mut s = [0.0; N_SPECIES];
    for (row, rate) in nu.iter().zip(rates) {
        for (sj, coeff) in s.iter_mut().zip(row) {
            *sj += coeff * rate;
        }
    }
    s
}

/// Reaction heat release H_r = -sum_i dH_i r_i.
pub fn heat_source(r: &RateVector, dh: &[f64; N_REACTIONS]) -> f64 {
    -r.as_array().iter().zip(dh).map(|(ri, dhi)| dhi * ri).sum::<f64>()
}

/// Infinity-norm estimate of d(species sources)/d(partial pressures),
/// scaled by RT so it bounds the source Jacobian in concentration space.
/// Used to pick sub-step counts when kinetics are fast.
pub fn source_stiffness(
    pressures: &[f64; N_SPECIES],
    t: f64,
    params: &KineticsParams,
    r_gas: f64,
) -> f64 {
    let mut p = *pressures;
    for v in &mut p {
        *v = v.max(0.0);
    }
    let k: Vec<f64> = (0..N_REACTIONS)
        .map(|i| arrhenius(params.k_inf[i], params.e_a[i], t, params.t_ref, r_gas))
        .collect();
    let kw = k_wgs(t);
    // dr_i/dP_j, nonzero entries only.
    let mut dr = [[0.0; N_SPECIES]; N_REACTIONS];
    dr[0][0] = k[0];
    dr[1][0] = k[1];
    dr[2][4] = k[2] * p[1];
    dr[2][1] = k[2] * p[4];
    dr[2][5] = -k[2] * p[3] / kw;
    dr[2][3] = -k[2] * p[5] / kw;
    dr[3][6] = k[3] * p[1].powi(3);
    dr[3][1] = 3.0 * k[3] * p[6] * p[1] * p[1];
    let mut norm = 0.0f64;
    for j in 0..N_SPECIES {
        let mut row_sum = 0.0;
        for l in 0..N_SPECIES {
            let mut entry = 0.0;
            for i in 0..N_REACTIONS {
                entry += params.nu[i][j] * dr[i][l];
            }
            row_sum += entry.abs();
        }
        norm = norm.max(row_sum);
    }
    norm * r_gas * t
}

#[cfg(test)]
mod tests {
    use super::*;

    const R_GAS: f64 = 8.314;

    #[test]
    fn stoichiometry_rows_match_reactions() {
        let nu = default_stoichiometry();
        assert_eq!(nu[0], [-1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(nu[3], [0.0, -3.0, 0.0, 5.0, 0.0, 2.0, -1.0]);
    }

    #[test]
    fn stoichiometry_conserves_atoms() {
        validate_stoichiometry(&default_stoichiometry(), &SpeciesSet::default()).unwrap();
    }

    #[test]
    fn unbalanced_row_rejected() {
        let mut nu = default_stoichiometry();
        nu[2][3] = 2.0;
        let err = validate_stoichiometry(&nu, &SpeciesSet::default()).unwrap_err();
        assert!(matches!(err, KineticsError::AtomBalance { reaction: 3, .. }));
    }

    #[test]
    fn partial_pressures_uniform() {
        let p = partial_pressures(&[1.0; 7], 7.0).unwrap();
        for v in p {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn partial_pressures_single_species() {
        let p = partial_pressures(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 5.0).unwrap();
        assert_eq!(p[0], 5.0);
        assert_eq!(p[1..], [0.0; 6]);
    }

    #[test]
    fn partial_pressures_weighted() {
        let p = partial_pressures(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0], 10.0).unwrap();
        assert!((p[6] - 2.5).abs() < 1e-14);
        let sum: f64 = p.iter().sum();
        assert!((sum - 10.0).abs() < 1e-12);
    }

    #[test]
    fn zero_total_flow_rejected() {
        assert!(matches!(
            partial_pressures(&[0.0; 7], 1.0),
            Err(KineticsError::ZeroTotalFlow(_))
        ));
    }

    #[test]
    fn k_wgs_anchor() {
        assert!((k_wgs(773.0) - 4.914).abs() < 1e-3);
        // High-temperature limit is e^{-4.33}.
        assert!((k_wgs(1e12) - (-4.33f64).exp()).abs() < 1e-6);
        assert!(k_wgs(700.0) > k_wgs(800.0));
    }

    #[test]
    fn arrhenius_reference_point() {
        assert_eq!(arrhenius(3.5, 9e4, 773.0, 773.0, R_GAS), 3.5);
        assert_eq!(arrhenius(3.5, 0.0, 512.0, 773.0, R_GAS), 3.5);
        let expected = 2.0 * (-1000.0_f64 * (1.0 / 6651.2 - 1.0 / 6426.722)).exp();
        let got = arrhenius(2.0, 1000.0, 800.0, 773.0, 8.314);
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }

    fn demo_params() -> KineticsParams {
        KineticsParams {
            k_inf: [1.0, 2.0, 3.0, 4.0],
            e_a: [1e4, 2e4, 3e4, 4e4],
            dh: [1e3, -2e3, 3e3, -4e3],
            nu: default_stoichiometry(),
            t_ref: T_REF_DEFAULT,
        }
    }

    #[test]
    fn zero_pressure_zero_rates() {
        let r = reaction_rates(&[0.0; 7], 700.0, &demo_params(), R_GAS);
        assert_eq!(r.as_array(), [0.0; 4]);
    }

    #[test]
    fn wgs_equilibrium_and_reverse_shift() {
        let t = 750.0;
        let kw = k_wgs(t);
        // P5 * P2 = P6 * P4 / k_wgs -> r_c = 0.
        let p = [1.0, 2.0, 1.0, 4.0, 3.0, 6.0 * kw / 4.0 * 2.0 / 2.0, 1.0];
        let pressures = [p[0], p[1], p[2], p[3], p[4], p[4] * p[1] * kw / p[3], p[6]];
        let r = reaction_rates(&pressures, t, &demo_params(), R_GAS);
        assert!(r.r_c.abs() <= 1e-12 * pressures[4] * pressures[1]);
        // No CO, products present: reverse shift.
        let r = reaction_rates(&[1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0], t, &demo_params(), R_GAS);
        assert!(r.r_c < 0.0);
    }

    #[test]
    fn rates_homogeneous_in_prefactor() {
        let p = [0.5, 1.5, 0.2, 0.8, 0.3, 0.4, 0.1];
        let params = demo_params();
        let mut doubled = params.clone();
        for k in &mut doubled.k_inf {
            *k *= 2.0;
        }
        let r1 = reaction_rates(&p, 700.0, &params, R_GAS).as_array();
        let r2 = reaction_rates(&p, 700.0, &doubled, R_GAS).as_array();
        for (a, b) in r1.iter().zip(r2) {
            assert_eq!(2.0 * a, b);
        }
    }

    #[test]
    fn negative_pressures_clamped_and_counted() {
        let (r, clamps) =
            reaction_rates_with_clamps(&[-0.1, 1.0, 0.0, 0.0, -0.2, 0.0, 0.0], 700.0, &demo_params(), R_GAS);
        assert_eq!(clamps, 2);
        assert_eq!(r.r_a, 0.0);
    }

    #[test]
    fn species_sources_single_reactions() {
        let nu = default_stoichiometry();
        let s = species_sources(&RateVector { r_a: 1.0, ..Default::default() }, &nu);
        assert_eq!(s, [-1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let s = species_sources(&RateVector { r_d: 1.0, ..Default::default() }, &nu);
        assert_eq!(s, [0.0, -3.0, 0.0, 5.0, 0.0, 2.0, -1.0]);
        assert_eq!(species_sources(&RateVector::default(), &nu), [0.0; 7]);
    }

    #[test]
    fn heat_source_signs() {
        assert_eq!(heat_source(&RateVector::default(), &[1.0; 4]), 0.0);
        let r = RateVector { r_a: 1.0, ..Default::default() };
        assert_eq!(heat_source(&r, &[-50.0, 0.0, 0.0, 0.0]), 50.0);
        let r = RateVector { r_a: 1.0, r_b: 1.0, r_c: 1.0, r_d: 1.0 };
        assert_eq!(heat_source(&r, &[1.0, 2.0, 3.0, 4.0]), -10.0);
    }
}
