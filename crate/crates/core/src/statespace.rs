//! State representations for the reformer model: physical molar flows plus
//! temperature, the orthonormal-basis coordinates, and assembly of the two
//! matrix pencils together with their source vectors.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinetics::{
    self, KineticsParams, N_SPECIES,
};
use crate::numcore::Matrix;

pub const SQRT7: f64 = 2.6457513110645907; // sqrt(7)

#[derive(Debug, Error)]
pub enum StateError {
    #[error("inadmissible state: {0}")]
    InadmissibleState(String),
    #[error("total molar flow must be positive (got {0})")]
    ZeroTotalFlow(f64),
    #[error("constants: {field} must be positive (got {value})")]
    NonPositiveConstant { field: &'static str, value: f64 },
    #[error("beta_area * gamma_diam must equal 4 (got {0})")]
    BetaGammaMismatch(f64),
    #[error(transparent)]
    Kinetics(#[from] kinetics::KineticsError),
}

pub type Result<T> = std::result::Result<T, StateError>;

/// Constants of the convection-form temperature equation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvForm {
    pub rho_g: f64,
    pub cp_g: f64,
    pub rho_s: f64,
    pub cp_s: f64,
    pub ua: f64,
    /// Inlet/furnace value of the advected variable g = v / (total flow).
    pub g_f: f64,
}

impl ConvForm {
    /// beta = 1 + rho_s c_ps / (rho_g c_pg).
    pub fn beta(&self) -> f64 {
        1.0 + self.rho_s * self.cp_s / (self.rho_g * self.cp_g)
    }
}

/// All scalar model constants. Pressures are stored in Pa; the scenario
/// layer accepts bar and converts at the boundary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConstants {
    /// Ideal gas constant, Pa m^3 / (mol K).
    pub r_gas: f64,
    /// Reactor cross-section, m^2.
    pub a_cross: f64,
    /// Operating pressure, Pa.
    pub p: f64,
    /// Per-species heat capacities at constant pressure, J/(mol K).
    pub cp: [f64; N_SPECIES],
    /// Per-species heat capacities at constant volume, J/(mol K).
    pub cv: [f64; N_SPECIES],
    /// Overall heat-transfer coefficient, J/(m^2 s K).
    pub h_coeff: f64,
    /// Heat-transfer area per reactor volume, m^2/m^3 (= 4 / diameter).
    pub beta_area: f64,
    /// Reactor diameter, m. Optional; checked against beta_area if present.
    pub gamma_diam: Option<f64>,
    /// Furnace temperature, K.
    pub t_furnace: f64,
    /// Axial reactor length, m.
    pub l1: f64,
    pub conv_form: ConvForm,
}

impl ModelConstants {
    pub fn validate(&self) -> Result<()> {
        let positives: [(&'static str, f64); 7] = [
            ("r_gas", self.r_gas),
            ("a_cross", self.a_cross),
            ("p", self.p),
            ("beta_area", self.beta_area),
            ("t_furnace", self.t_furnace),
            ("l1", self.l1),
            ("h_coeff", self.h_coeff),
        ];
        for (field, value) in positives {
            if value <= 0.0 {
                return Err(StateError::NonPositiveConstant { field, value });
            }
        }
        for v in self.cp.iter().chain(self.cv.iter()) {
            if *v <= 0.0 {
                return Err(StateError::NonPositiveConstant { field: "cp/cv", value: *v });
            }
        }
        if let Some(gamma) = self.gamma_diam {
            let product = self.beta_area * gamma;
            if (product - 4.0).abs() > 1e-12 * 4.0 {
                return Err(StateError::BetaGammaMismatch(product));
            }
        }
        Ok(())
    }
}

/// Physical state: molar flows plus temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct StateF {
    pub flows: [f64; N_SPECIES],
    pub temperature: f64,
}

impl StateF {
    pub fn new(flows: [f64; N_SPECIES], temperature: f64) -> Result<Self> {
        if temperature <= 0.0 {
            return Err(StateError::InadmissibleState(format!(
                "temperature must be positive (got {temperature})"
            )));
        }
        if let Some(j) = flows.iter().position(|f| *f < 0.0) {
            return Err(StateError::InadmissibleState(format!(
                "flow {} is negative ({})",
                kinetics::SPECIES_NAMES[j],
                flows[j]
            )));
        }
        let total: f64 = flows.iter().sum();
        if total <= 0.0 {
            return Err(StateError::ZeroTotalFlow(total));
        }
        Ok(Self { flows, temperature })
    }

    pub fn total_flow(&self) -> f64 {
        self.flows.iter().sum()
    }
}

/// Transformed state: orthonormal-basis coordinates plus temperature.
/// The seventh coordinate is total flow / sqrt(7) and must stay positive.
#[derive(Debug, Clone, PartialEq)]
pub struct StateU {
    pub u: [f64; N_SPECIES],
    pub temperature: f64,
}

impl StateU {
    pub fn new(u: [f64; N_SPECIES], temperature: f64) -> Result<Self> {
        if temperature <= 0.0 {
            return Err(StateError::InadmissibleState(format!(
                "temperature must be positive (got {temperature})"
            )));
        }
        if u[6] <= 0.0 {
            return Err(StateError::InadmissibleState(format!(
                "u7 must be positive (got {})",
                u[6]
            )));
        }
        Ok(Self { u, temperature })
    }
}

/// Orthogonal change of basis whose 7th column is e/sqrt(7). Built once as
/// the Householder reflection mapping e7 to e/sqrt(7); deterministic and
/// symmetric, so Q^T = Q.
#[derive(Debug, Clone)]
pub struct BasisQ {
    q: Matrix,
}

impl Default for BasisQ {
    fn default() -> Self {
        Self::new()
    }
}

impl BasisQ {
    pub fn new() -> Self {
        let n = N_SPECIES;
        let mut w = vec![-1.0 / SQRT7; n];
        w[6] += 1.0; // e7 - e/sqrt(7)
        let norm2: f64 = w.iter().map(|v| v * v).sum();
        let mut q = Matrix::identity(n);
        for r in 0..n {
            for c in 0..n {
                q.set(r, c, q.get(r, c) - 2.0 * w[r] * w[c] / norm2);
            }
        }
        Self { q }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.q
    }

    /// u = Q^T F.
    pub fn to_u(&self, flows: &[f64; N_SPECIES]) -> [f64; N_SPECIES] {
        let mut out = [0.0; N_SPECIES];
        for (c, o) in out.iter_mut().enumerate() {
            *o = (0..N_SPECIES).map(|r| self.q.get(r, c) * flows[r]).sum();
        }
        out
    }

    /// F = Q u.
    pub fn to_f(&self, u: &[f64; N_SPECIES]) -> [f64; N_SPECIES] {
        let mut out = [0.0; N_SPECIES];
        for (r, o) in out.iter_mut().enumerate() {
            *o = (0..N_SPECIES).map(|c| self.q.get(r, c) * u[c]).sum();
        }
        out
    }
}

pub fn f_to_u(state: &StateF, q: &BasisQ) -> Result<StateU> {
    let u = q.to_u(&state.flows);
    StateU::new(u, state.temperature)
}

pub fn u_to_f(state: &StateU, q: &BasisQ) -> Result<StateF> {
    let flows = q.to_f(&state.u);
    StateF::new(flows, state.temperature)
}

/// cv-weighted total flow, sum_j cv_j F_j with F = Q u.
pub fn cv_u(u: &[f64; N_SPECIES], cv: &[f64; N_SPECIES], q: &BasisQ) -> f64 {
    let f = q.to_f(u);
    f.iter().zip(cv).map(|(a, b)| a * b).sum()
}

/// cp-weighted total flow.
pub fn cp_u(u: &[f64; N_SPECIES], cp: &[f64; N_SPECIES], q: &BasisQ) -> f64 {
    cv_u(u, cp, q)
}

/// Time-derivative coefficient matrix of the transformed system.
///
/// Rows 1..6 carry the identity block with coupling columns -u_i/u7 and
/// -u_i/T; rows 7 and 8 live entirely in the last column, which is why the
/// determinant vanishes identically.
pub fn assemble_a(state: &StateU, consts: &ModelConstants, q: &BasisQ) -> Result<Matrix> {
    let u = &state.u;
    let t = state.temperature;
    if u[6] <= 0.0 || t <= 0.0 {
        return Err(StateError::InadmissibleState("u7 and T must be positive".into()));
    }
    let mut a = Matrix::zeros(8, 8);
    for i in 0..6 {
        a.set(i, i, 1.0);
        a.set(i, 6, -u[i] / u[6]);
        a.set(i, 7, -u[i] / t);
    }
    a.set(6, 7, -u[6] / t);
    let cvu = cv_u(u, &consts.cv, q);
    a.set(7, 7, cvu / (SQRT7 * consts.r_gas * t * u[6]));
    Ok(a)
}

/// Space-derivative coefficient matrix: RT/(Ap) on the diagonal, the
/// sqrt(7) coupling in row 8, and the cp-weighted scalar in (8,8).
pub fn assemble_b(state: &StateU, consts: &ModelConstants, q: &BasisQ) -> Result<Matrix> {
    let t = state.temperature;
    if t <= 0.0 {
        return Err(StateError::InadmissibleState("T must be positive".into()));
    }
    let rt_ap = consts.r_gas * t / (consts.a_cross * consts.p);
    let mut b = Matrix::zeros(8, 8);
    for i in 0..7 {
        b.set(i, i, rt_ap);
    }
    b.set(7, 6, SQRT7 * rt_ap);
    b.set(7, 7, cp_u(&state.u, &consts.cp, q) / (consts.a_cross * consts.p));
    Ok(b)
}

/// Source vector in physical coordinates: molar rows R T (sum F) (nu^T r),
/// energy row U beta (T_f - T) - sum_j sum_i r_i (dH_i - nu_{i,j} R T).
/// Returns the vector together with the clamp count from rate evaluation.
pub fn assemble_g_f(
    state: &StateF,
    consts: &ModelConstants,
    kin: &KineticsParams,
) -> Result<([f64; 8], u32)> {
    let total = state.total_flow();
    if total <= 0.0 {
        return Err(StateError::ZeroTotalFlow(total));
    }
    let t = state.temperature;
    let pressures = kinetics::partial_pressures(&state.flows, consts.p)?;
    let (rates, clamps) = kinetics::reaction_rates_with_clamps(&pressures, t, kin, consts.r_gas);
    let sources = kinetics::species_sources(&rates, &kin.nu);
    let mut g = [0.0; 8];
    for j in 0..N_SPECIES {
        g[j] = consts.r_gas * t * total * sources[j];
    }
    let mut energy = consts.h_coeff * consts.beta_area * (consts.t_furnace - t);
    for j in 0..N_SPECIES {
        for (i, r) in rates.as_array().iter().enumerate() {
            energy -= r * (kin.dh[i] - kin.nu[i][j] * consts.r_gas * t);
        }
    }
    g[7] = energy;
    Ok((g, clamps))
}

/// Source vector of the transformed system: molar components rotated into
/// u-coordinates, energy component unchanged.
pub fn assemble_g(
    state: &StateU,
    consts: &ModelConstants,
    kin: &KineticsParams,
    q: &BasisQ,
) -> Result<([f64; 8], u32)> {
    let f_state = u_to_f(state, q)?;
    let (g_f, clamps) = assemble_g_f(&f_state, consts, kin)?;
    let molar: [f64; N_SPECIES] = g_f[..N_SPECIES].try_into().unwrap();
    let rotated = q.to_u(&molar);
    let mut g = [0.0; 8];
    g[..N_SPECIES].copy_from_slice(&rotated);
    g[7] = g_f[7];
    Ok((g, clamps))
}

/// Time-derivative matrix of the original (physical) system. ||F|| is the
/// Euclidean norm; with it the rank-one block I - F e^T/||F|| keeps its F
/// eigenvalue at 1 - (e^T F)/||F|| != 0, so M stays nonsingular.
pub fn assemble_m(state: &StateF, consts: &ModelConstants) -> Result<Matrix> {
    let total = state.total_flow();
    let t = state.temperature;
    if total <= 0.0 {
        return Err(StateError::ZeroTotalFlow(total));
    }
    let norm = state.flows.iter().map(|f| f * f).sum::<f64>().sqrt();
    let mut m = Matrix::zeros(8, 8);
    for i in 0..N_SPECIES {
        for j in 0..N_SPECIES {
            let identity = if i == j { 1.0 } else { 0.0 };
            m.set(i, j, identity - state.flows[i] / norm);
        }
        m.set(i, 7, -state.flows[i] / t);
    }
    let cv_flow: f64 = state.flows.iter().zip(&consts.cv).map(|(f, c)| f * c).sum();
    m.set(7, 7, cv_flow / (consts.r_gas * t * norm));
    Ok(m)
}

/// Space-derivative matrix of the original system.
pub fn assemble_n(state: &StateF, consts: &ModelConstants) -> Result<Matrix> {
    let t = state.temperature;
    if t <= 0.0 {
        return Err(StateError::InadmissibleState("T must be positive".into()));
    }
    let rt_ap = consts.r_gas * t / (consts.a_cross * consts.p);
    let mut n = Matrix::zeros(8, 8);
    for i in 0..N_SPECIES {
        n.set(i, i, rt_ap);
        n.set(7, i, rt_ap);
    }
    let cp_flow: f64 = state.flows.iter().zip(&consts.cp).map(|(f, c)| f * c).sum();
    n.set(7, 7, cp_flow / (consts.a_cross * consts.p));
    Ok(n)
}

/// Concentrations C_j = (F_j / sum F)(p / RT) and velocity
/// v = (sum F) R T / (A p).
pub fn concentration_velocity(
    state: &StateF,
    consts: &ModelConstants,
) -> Result<([f64; N_SPECIES], f64)> {
    let total = state.total_flow();
    if total <= 0.0 {
        return Err(StateError::ZeroTotalFlow(total));
    }
    let rt = consts.r_gas * state.temperature;
    let mut c = [0.0; N_SPECIES];
    for (cj, f) in c.iter_mut().zip(&state.flows) {
        *cj = f / total * consts.p / rt;
    }
    let v = total * rt / (consts.a_cross * consts.p);
    Ok((c, v))
}

/// Draw a random admissible physical state: flows in [0.1, 10] mol/s,
/// temperature in [400, 1200] K.
pub fn random_admissible_f<R: Rng>(rng: &mut R) -> StateF {
    let mut flows = [0.0; N_SPECIES];
    for f in &mut flows {
        *f = rng.gen_range(0.1..10.0);
    }
    StateF::new(flows, rng.gen_range(400.0..1200.0)).expect("range is admissible")
}
