//! Characteristic-form ODE systems. Two modes: Full8 integrates the 2m
//! system dx_k/ds = 1/sigma_k, (L A) du/ds = L g for the 8-state model,
//! and PaperLiteral3 reproduces the simplified 3-state regression system
//! equation-for-equation, including its idiosyncratic row wiring.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use thiserror::Error;

use crate::kinetics::KineticsParams;
use crate::numcore::{
    integrate, lu_factor_solve, norm_inf_vec, Matrix, NumError, OdeProblem, StepperKind,
    Trajectory,
};
use crate::pencil::{
    assemble_a3, eigensystem_full, eigensystem_simplified3, PairSource, PencilError,
    Simplified3Consts,
};
use crate::statespace::{
    assemble_a, assemble_b, assemble_g, BasisQ, ModelConstants, StateError, StateU,
};

/// Row of L*A whose norm falls below this fraction of the matrix norm is
/// reported as degenerate before regularization.
pub const ROW_DEGENERACY_FRACTION: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum CharError {
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Pencil(#[from] PencilError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("epsilon_reg must be positive (got {0})")]
    NonPositiveEpsilon(f64),
}

pub type Result<T> = std::result::Result<T, CharError>;

/// Constants of the simplified regression system, mirroring the script's
/// constant block; nothing here is hard-coded in the RHS.
#[derive(Debug, Clone)]
pub struct Literal3Consts {
    pub a_cross: f64,
    pub p: f64,
    pub r_gas: f64,
    /// Constant cv-weighted heat capacity (c in the script).
    pub c: f64,
    /// Constant cp-weighted heat capacity (c1 in the script).
    pub c1: f64,
    /// The scalar U multiplying both heat-capacity constants.
    pub u_total: f64,
    pub v1: f64,
    pub v2: f64,
    pub r_prime: f64,
    pub h_const: f64,
    pub t_f: f64,
    /// B in the script (heat-transfer area factor).
    pub b_coeff: f64,
    /// U1 in the script (heat-transfer coefficient).
    pub u1_coeff: f64,
}

impl Literal3Consts {
    pub fn simplified(&self) -> Simplified3Consts {
        Simplified3Consts {
            a_cross: self.a_cross,
            p: self.p,
            r_gas: self.r_gas,
            cv_u: self.c * self.u_total,
            cp_u: self.c1 * self.u_total,
        }
    }
}

#[derive(Debug, Clone)]
pub enum CharMode {
    /// The simplified 3-state system exactly as scripted: x-rows wired to
    /// (sigma_2, sigma_3, sigma_1 + regularizer), state rows eqns4-6.
    PaperLiteral3 {
        consts: Literal3Consts,
        x0: [f64; 3],
        u0: [f64; 3],
    },
    /// The full 8-state system of Eq. (6) with the degenerate seventh
    /// state row regularized by row_reg (see CharSystem).
    Full8 {
        consts: ModelConstants,
        kin: KineticsParams,
        x0: [f64; 8],
        u0: StateU,
    },
}

#[derive(Debug, Clone)]
pub struct CharSystem {
    pub mode: CharMode,
    /// Replacement slowness for eigenvalues with |sigma| < epsilon_reg;
    /// enters only the decoupled x-equations.
    pub epsilon_reg: f64,
    /// Perturbation for the degenerate state row: l7^T (A + row_reg B).
    /// Deliberately independent of epsilon_reg so that sweeping epsilon
    /// leaves the u-trajectory untouched.
    pub row_reg: f64,
}

impl CharSystem {
    pub fn m(&self) -> usize {
        match self.mode {
            CharMode::PaperLiteral3 { .. } => 3,
            CharMode::Full8 { .. } => 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon_reg <= 0.0 {
            return Err(CharError::NonPositiveEpsilon(self.epsilon_reg));
        }
        if self.row_reg <= 0.0 {
            return Err(CharError::NonPositiveEpsilon(self.row_reg));
        }
        if let CharMode::Full8 { consts, .. } = &self.mode {
            consts.validate()?;
        }
        Ok(())
    }
}

/// Event counters shared with the RHS closure; read them after a run.
#[derive(Debug, Default)]
pub struct CharCounters {
    pub rhs_evals: AtomicU64,
    pub row_degenerate: AtomicU64,
    pub pressure_clamps: AtomicU64,
    pub numeric_fallbacks: AtomicU64,
}

impl CharCounters {
    pub fn snapshot(&self) -> CharCountersSnapshot {
        CharCountersSnapshot {
            rhs_evals: self.rhs_evals.load(Ordering::Relaxed),
            row_degenerate: self.row_degenerate.load(Ordering::Relaxed),
            pressure_clamps: self.pressure_clamps.load(Ordering::Relaxed),
            numeric_fallbacks: self.numeric_fallbacks.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CharCountersSnapshot {
    pub rhs_evals: u64,
    pub row_degenerate: u64,
    pub pressure_clamps: u64,
    pub numeric_fallbacks: u64,
}

#[derive(Debug)]
pub struct CharRun {
    pub trajectory: Trajectory,
    pub counters: CharCountersSnapshot,
}

fn regularized_slowness(sigma: f64, epsilon_reg: f64) -> f64 {
    if sigma.abs() < epsilon_reg {
        epsilon_reg
    } else {
        sigma
    }
}

/// ODE problem for the chosen mode, dimension 2m; the layout is
/// [x_1..x_m, u_1..u_{m-1}, T].
pub fn build_rhs(sys: &CharSystem, s0: f64) -> Result<(OdeProblem, Arc<CharCounters>)> {
    sys.validate()?;
    match &sys.mode {
        CharMode::PaperLiteral3 { consts, x0, u0 } => {
            build_rhs_paperliteral3(consts.clone(), *x0, *u0, sys.epsilon_reg, s0)
        }
        CharMode::Full8 { consts, kin, x0, u0 } => build_rhs_full8(
            consts.clone(),
            kin.clone(),
            *x0,
            u0.clone(),
            sys.epsilon_reg,
            sys.row_reg,
            s0,
        ),
    }
}

fn build_rhs_full8(
    consts: ModelConstants,
    kin: KineticsParams,
    x0: [f64; 8],
    u0: StateU,
    epsilon_reg: f64,
    row_reg: f64,
    s0: f64,
) -> Result<(OdeProblem, Arc<CharCounters>)> {
    let counters = Arc::new(CharCounters::default());
    let shared = counters.clone();
    let q = BasisQ::new();
    let mut y0 = x0.to_vec();
    y0.extend_from_slice(&u0.u);
    y0.push(u0.temperature);

    let rhs = Box::new(move |_s: f64, y: &[f64]| -> std::result::Result<Vec<f64>, String> {
        shared.rhs_evals.fetch_add(1, Ordering::Relaxed);
        let mut u = [0.0; 7];
        u.copy_from_slice(&y[8..15]);
        let state = StateU::new(u, y[15]).map_err(|e| e.to_string())?;

        let sys = eigensystem_full(&state, &consts, &q).map_err(|e| e.to_string())?;
        if sys.source[7] == PairSource::NumericFallback {
            shared.numeric_fallbacks.fetch_add(1, Ordering::Relaxed);
        }
        let a = assemble_a(&state, &consts, &q).map_err(|e| e.to_string())?;
        let b = assemble_b(&state, &consts, &q).map_err(|e| e.to_string())?;
        let (g, clamps) = assemble_g(&state, &consts, &kin, &q).map_err(|e| e.to_string())?;
        shared.pressure_clamps.fetch_add(clamps as u64, Ordering::Relaxed);

        // L A with rows l_k^T A; the zero-eigenvalue row is structurally
        // zero and gets the row_reg perturbation after being counted.
        let mut la = Matrix::zeros(8, 8);
        let mut rhs_vec = vec![0.0; 8];
        for k in 0..8 {
            let l = &sys.lvecs[k];
            let row: Vec<f64> = (0..8)
                .map(|c| (0..8).map(|r| l[r] * a.get(r, c)).sum())
                .collect();
            la.set_row(k, &row);
            rhs_vec[k] = l.iter().zip(&g).map(|(x, y)| x * y).sum();
        }
        let scale = la.norm_inf();
        if norm_inf_vec(la.row(6)) < ROW_DEGENERACY_FRACTION * scale {
            shared.row_degenerate.fetch_add(1, Ordering::Relaxed);
        }
        let l7 = &sys.lvecs[6];
        let a_reg = a.add_scaled(&b, row_reg);
        let row7: Vec<f64> = (0..8)
            .map(|c| (0..8).map(|r| l7[r] * a_reg.get(r, c)).sum())
            .collect();
        la.set_row(6, &row7);

        let du = lu_factor_solve(&la, &rhs_vec)
            .map_err(|e| format!("characteristic matrix L*A: {e}"))?;

        let mut dy = Vec::with_capacity(16);
        for k in 0..8 {
            dy.push(1.0 / regularized_slowness(sys.sigma[k], epsilon_reg));
        }
        dy.extend_from_slice(&du);
        Ok(dy)
    });
    Ok((OdeProblem::new(16, s0, y0, rhs), counters))
}

/// The simplified system exactly as scripted: note the plus signs in the
/// first state row and the x-rows keyed to sigma_2, sigma_3, sigma_1.
pub fn build_rhs_paperliteral3(
    consts: Literal3Consts,
    x0: [f64; 3],
    u0: [f64; 3],
    regularizer: f64,
    s0: f64,
) -> Result<(OdeProblem, Arc<CharCounters>)> {
    let counters = Arc::new(CharCounters::default());
    let shared = counters.clone();
    let simplified = consts.simplified();
    let mut y0 = x0.to_vec();
    y0.extend_from_slice(&u0);

    let rhs = Box::new(move |_s: f64, y: &[f64]| -> std::result::Result<Vec<f64>, String> {
        shared.rhs_evals.fetch_add(1, Ordering::Relaxed);
        let (u1, u2, t) = (y[3], y[4], y[5]);
        let sys = eigensystem_simplified3(u1, u2, t, &simplified).map_err(|e| e.to_string())?;
        if sys.source[2] == PairSource::NumericFallback {
            shared.numeric_fallbacks.fetch_add(1, Ordering::Relaxed);
        }

        let r = consts.r_gas;
        let rp = consts.r_prime;
        let g1 = [
            r * t * (u1 * u1 + u1 * u2) * consts.v1 * rp,
            r * t * (u2 * u1 + u2 * u2) * consts.v2 * rp,
            consts.u1_coeff * consts.b_coeff * (consts.t_f - t)
                - u1 * (rp * consts.h_const - consts.v1 * r * t)
                - u2 * (rp * consts.h_const - consts.v2 * r * t),
        ];

        let mut m = Matrix::zeros(3, 3);
        let mut rhs_vec = [0.0; 3];
        // Row 1 of the script (its eqns4): all plus signs, as printed.
        m.set_row(0, &[1.0, u1 / u2, u1 / t]);
        rhs_vec[0] = g1[0];
        // Row 2 (eqns5).
        m.set_row(1, &[u1 / u2, -u1 * u1 / (u2 * u2), -u1 * u1 / (t * u2) - u2 / t]);
        rhs_vec[1] = r * t * u1 * (u1 * u1 + u1 * u2) * consts.v1 * rp / u2
            + r * t * (u1 * u2 + u2 * u2) * consts.v2 * rp;
        // Row 3 (eqns6): l3^T A du/ds = l3^T g1.
        let a3 = assemble_a3(u1, u2, t, &simplified);
        let l3 = &sys.lvecs[2];
        let row3: Vec<f64> = (0..3)
            .map(|c| (0..3).map(|r| l3[r] * a3.get(r, c)).sum())
            .collect();
        m.set_row(2, &row3);
        rhs_vec[2] = l3.iter().zip(&g1).map(|(x, y)| x * y).sum();

        let du = lu_factor_solve(&m, &rhs_vec)
            .map_err(|e| format!("simplified state matrix: {e}"))?;

        Ok(vec![
            1.0 / sys.sigma[1],
            1.0 / sys.sigma[2],
            1.0 / (sys.sigma[0] + regularizer),
            du[0],
            du[1],
            du[2],
        ])
    });
    Ok((OdeProblem::new(6, s0, y0, rhs), counters))
}

/// Integrate the characteristic system over [s_range.0, s_range.1].
pub fn run_characteristics(
    sys: &CharSystem,
    stepper: StepperKind,
    h: f64,
    s_range: (f64, f64),
) -> Result<CharRun> {
    let (problem, counters) = build_rhs(sys, s_range.0)?;
    let trajectory = integrate(&problem, stepper, s_range.1, h)?;
    Ok(CharRun { trajectory, counters: counters.snapshot() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::{ConvForm, StateF, f_to_u};

    fn demo_constants() -> ModelConstants {
        ModelConstants {
            r_gas: 8.314,
            a_cross: 0.01,
            p: 2.0e5,
            cp: [112.0, 37.5, 52.0, 29.3, 30.2, 47.4, 92.0],
            cv: [103.7, 29.2, 43.7, 21.0, 21.9, 39.1, 83.7],
            h_coeff: 50.0,
            beta_area: 80.0,
            gamma_diam: Some(0.05),
            t_furnace: 900.0,
            l1: 1.0,
            conv_form: ConvForm {
                rho_g: 1.0,
                cp_g: 35.0,
                rho_s: 1000.0,
                cp_s: 0.85,
                ua: 50.0,
                g_f: 1.0,
            },
        }
    }

    pub(crate) fn appendix_literal3() -> Literal3Consts {
        Literal3Consts {
            a_cross: 343.0,
            p: 10.0,
            r_gas: 60.22,
            c: 10.0,
            c1: 10.0,
            u_total: 1.0,
            v1: 2.0,
            v2: 3.0,
            r_prime: 1.0,
            h_const: 1.0,
            t_f: 232.0,
            b_coeff: 10.0,
            u1_coeff: 10.0,
        }
    }

    fn full8_system(epsilon_reg: f64, kin: KineticsParams, t0: f64) -> CharSystem {
        let consts = demo_constants();
        let q = BasisQ::new();
        let f = StateF::new([1.0, 2.0, 0.5, 0.3, 0.2, 0.1, 0.4], t0).unwrap();
        let u0 = f_to_u(&f, &q).unwrap();
        CharSystem {
            mode: CharMode::Full8 { consts, kin, x0: [0.0; 8], u0 },
            epsilon_reg,
            row_reg: 1e-5,
        }
    }

    #[test]
    fn zero_source_freezes_state() {
        let sys = full8_system(1e-5, KineticsParams::inert(), 900.0);
        let run = run_characteristics(&sys, StepperKind::Rk4, 0.01, (0.0, 0.1)).unwrap();
        let (_, y_end) = run.trajectory.last();
        let (_, y_start) = &run.trajectory.samples[0];
        for i in 8..16 {
            assert!(
                (y_end[i] - y_start[i]).abs() < 1e-12,
                "state component {i} moved: {} -> {}",
                y_start[i],
                y_end[i]
            );
        }
    }

    #[test]
    fn x7_slope_is_reciprocal_epsilon() {
        let eps = 0.25;
        let sys = full8_system(eps, KineticsParams::inert(), 900.0);
        let run = run_characteristics(&sys, StepperKind::Euler, 0.01, (0.0, 0.05)).unwrap();
        for w in run.trajectory.samples.windows(2) {
            let slope = (w[1].1[6] - w[0].1[6]) / (w[1].0 - w[0].0);
            assert!((slope - 1.0 / eps).abs() < 1e-12);
        }
    }

    #[test]
    fn euler_x_slope_matches_slowness_at_step_start() {
        let mut kin = KineticsParams::inert();
        kin.k_inf = [1e-5, 1e-5, 1e-9, 1e-19];
        let mut sys = full8_system(1e-5, kin, 900.0);
        sys.row_reg = 1.0;
        let (problem, _) = build_rhs(&sys, 0.0).unwrap();
        let run = run_characteristics(&sys, StepperKind::Euler, 1e-6, (0.0, 5e-6)).unwrap();
        for w in run.trajectory.samples.windows(2) {
            // The final clamp onto s_end can be a sub-ulp step; its slope
            // is pure rounding noise.
            if w[1].0 - w[0].0 < 5e-7 {
                continue;
            }
            let dy = (problem.rhs)(w[0].0, &w[0].1).unwrap();
            for k in 0..8 {
                let slope = (w[1].1[k] - w[0].1[k]) / (w[1].0 - w[0].0);
                assert!(
                    (slope - dy[k]).abs() < 1e-9 * dy[k].abs().max(1.0),
                    "k={k} slope={slope} dy={} s={}",
                    dy[k],
                    w[0].0
                );
            }
        }
    }

    #[test]
    fn epsilon_sweep_leaves_u_bitwise_identical() {
        let mut kin = KineticsParams::inert();
        kin.k_inf = [1e-5, 1e-5, 1e-9, 1e-19];
        let runs: Vec<_> = [1e-5, 1.0, 100.0]
            .iter()
            .map(|eps| {
                let mut sys = full8_system(*eps, kin.clone(), 900.0);
                sys.row_reg = 1.0;
                run_characteristics(&sys, StepperKind::Rk4, 1e-6, (0.0, 2e-5)).unwrap()
            })
            .collect();
        for run in &runs[1..] {
            assert_eq!(run.trajectory.samples.len(), runs[0].trajectory.samples.len());
            for (a, b) in run.trajectory.samples.iter().zip(&runs[0].trajectory.samples) {
                for i in 8..16 {
                    assert_eq!(a.1[i].to_bits(), b.1[i].to_bits(), "component {i} differs");
                }
            }
        }
    }

    #[test]
    fn literal3_integrates_over_script_range() {
        let sys = CharSystem {
            mode: CharMode::PaperLiteral3 {
                consts: appendix_literal3(),
                x0: [1e-5, 1.0, 1e-5],
                u0: [1e-5, 1e-5, 1e-5],
            },
            epsilon_reg: 1e6,
            row_reg: 1.0,
        };
        let run = run_characteristics(&sys, StepperKind::Rk4, 1e-3, (1e-5, 10.0)).unwrap();
        let (s_end, y_end) = run.trajectory.last();
        assert!((s_end - 10.0).abs() < 1e-9);
        for v in y_end {
            assert!(v.is_finite());
        }
        assert!(run.counters.rhs_evals > 0);
    }

    #[test]
    fn literal3_rhs_finite_at_initial_point() {
        let (problem, _) = build_rhs_paperliteral3(
            appendix_literal3(),
            [1e-5, 1.0, 1e-5],
            [1e-5, 1e-5, 1e-5],
            1e6,
            1e-5,
        )
        .unwrap();
        let dy = (problem.rhs)(1e-5, &problem.y0).unwrap();
        assert_eq!(dy.len(), 6);
        for v in &dy {
            assert!(v.is_finite());
        }
        // The regularized row advances at 1/(sigma_1 + 1e6) = 1e-6.
        assert!((dy[2] - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn literal3_zero_rates_freeze_molar_rows() {
        let mut consts = appendix_literal3();
        consts.v1 = 0.0;
        consts.v2 = 0.0;
        consts.r_prime = 0.0;
        consts.t_f = 5.0;
        let sys = CharSystem {
            mode: CharMode::PaperLiteral3 {
                consts,
                x0: [0.0; 3],
                u0: [1.0, 2.0, 5.0],
            },
            epsilon_reg: 1e6,
            row_reg: 1.0,
        };
        let run = run_characteristics(&sys, StepperKind::Rk4, 1e-3, (0.0, 0.5)).unwrap();
        let (_, y_end) = run.trajectory.last();
        assert!((y_end[3] - 1.0).abs() < 1e-12);
        assert!((y_end[4] - 2.0).abs() < 1e-12);
        assert!((y_end[5] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn doubling_h_halves_step_count() {
        let sys = full8_system(1e-5, KineticsParams::inert(), 900.0);
        let r1 = run_characteristics(&sys, StepperKind::Euler, 1.0 / 64.0, (0.0, 0.25)).unwrap();
        let r2 = run_characteristics(&sys, StepperKind::Euler, 1.0 / 32.0, (0.0, 0.25)).unwrap();
        assert_eq!(r1.trajectory.accepted, 2 * r2.trajectory.accepted);
    }

    #[test]
    fn regularized_solve_succeeds_despite_singular_a() {
        // det A = 0 at every state, so without the row_reg perturbation
        // the stacked system L A would be singular; the run must proceed
        // and the row monitor stays quiet (l7^T A is not a zero row, the
        // kernel sits in the column space).
        let sys = full8_system(1e-5, KineticsParams::inert(), 900.0);
        let run = run_characteristics(&sys, StepperKind::Euler, 0.01, (0.0, 0.05)).unwrap();
        assert!(run.counters.rhs_evals >= 5);
        assert_eq!(run.counters.row_degenerate, 0);
    }

    #[test]
    fn rejects_non_positive_epsilon() {
        let mut sys = full8_system(1e-5, KineticsParams::inert(), 900.0);
        sys.epsilon_reg = 0.0;
        assert!(matches!(
            run_characteristics(&sys, StepperKind::Euler, 0.01, (0.0, 0.05)),
            Err(CharError::NonPositiveEpsilon(_))
        ));
    }
}

