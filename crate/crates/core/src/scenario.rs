//! Scenario files: the single source of physical constants, initial and
//! boundary data, and solver settings. One TOML file is one scenario,
//! versioned with `schema = 1`. Loading applies defaults and normalizes
//! the file so that load -> echo -> load is the identity.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charsolver::{CharMode, CharSystem, Literal3Consts};
use crate::kinetics::{
    default_stoichiometry, validate_stoichiometry, KineticsParams, SpeciesSet, N_REACTIONS,
    N_SPECIES, T_REF_DEFAULT,
};
use crate::numcore::StepperKind;
use crate::statespace::{f_to_u, BasisQ, ConvForm, ModelConstants, StateF, StateU};

pub const BAR_TO_PA: f64 = 1.0e5;

pub const SCENARIO_SIMPLIFIED3_APPENDIXC: &str =
    include_str!("../scenarios/simplified3-appendixc.toml");
pub const SCENARIO_FULL8_RANDOMIZED: &str = include_str!("../scenarios/full8-randomized.toml");
pub const SCENARIO_ADVECTION_CHECK: &str = include_str!("../scenarios/advection-check.toml");

/// (name, contents) pairs for everything shipped with the crate.
pub const BUNDLED: [(&str, &str); 3] = [
    ("simplified3-appendixC", SCENARIO_SIMPLIFIED3_APPENDIXC),
    ("full8-randomized", SCENARIO_FULL8_RANDOMIZED),
    ("advection-check", SCENARIO_ADVECTION_CHECK),
];

#[derive(Error, Debug)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("missing field: {0}")]
    MissingField(String),
    #[error("invalid {field}: {rule}")]
    Validation { field: String, rule: String },
    #[error("coordinate {coordinate} outside profile range [{lo}, {hi}]")]
    OutOfRange { coordinate: f64, lo: f64, hi: f64 },
    #[error("unsupported schema version {0} (expected 1)")]
    Schema(u32),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, ScenarioError>;

fn invalid(field: &str, rule: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation { field: field.to_string(), rule: rule.into() }
}

/// A spatial or temporal profile: either a constant or a table of
/// strictly increasing (coordinate, value) pairs interpolated linearly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Constant(f64),
    Table(Vec<(f64, f64)>),
}

impl ProfileSpec {
    fn validate(&self, field: &str) -> Result<()> {
        if let ProfileSpec::Table(points) = self {
            if points.len() < 2 {
                return Err(invalid(field, "table needs at least 2 points"));
            }
            for pair in points.windows(2) {
                if pair[1].0 <= pair[0].0 {
                    return Err(invalid(field, "table coordinates must be strictly increasing"));
                }
            }
        }
        Ok(())
    }

    fn covers(&self, lo: f64, hi: f64) -> bool {
        match self {
            ProfileSpec::Constant(_) => true,
            ProfileSpec::Table(points) => {
                points.first().map_or(false, |p| p.0 <= lo)
                    && points.last().map_or(false, |p| p.0 >= hi)
            }
        }
    }
}

/// Evaluate a profile; tables interpolate piecewise-linearly and refuse
/// queries outside their covered range.
pub fn sample_profile(spec: &ProfileSpec, coordinate: f64) -> Result<f64> {
    match spec {
        ProfileSpec::Constant(v) => Ok(*v),
        ProfileSpec::Table(points) => {
            let lo = points.first().expect("validated table").0;
            let hi = points.last().expect("validated table").0;
            if coordinate < lo || coordinate > hi {
                return Err(ScenarioError::OutOfRange { coordinate, lo, hi });
            }
            let idx = points
                .windows(2)
                .position(|w| coordinate <= w[1].0)
                .expect("coordinate within table range");
            let (x0, y0) = points[idx];
            let (x1, y1) = points[idx + 1];
            let frac = (coordinate - x0) / (x1 - x0);
            Ok(y0 + frac * (y1 - y0))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaSection {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Free-form note recording source ambiguities resolved by this file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsSection {
    pub r_gas: f64,
    pub a_cross: f64,
    /// Pressure in bar; exactly one of p_bar / p_pa must be given in the
    /// file, and both appear in the echo.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_bar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_pa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cp: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_coeff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_area: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_diam: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_furnace: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub literal3: Option<Literal3Section>,
}

/// Constant block of the simplified 3-state regression system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Literal3Section {
    pub c: f64,
    pub c1: f64,
    pub u_total: f64,
    pub v1: f64,
    pub v2: f64,
    pub r_prime: f64,
    pub h_const: f64,
    pub t_f: f64,
    pub b_coeff: f64,
    pub u1_coeff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvSection {
    pub rho_g: f64,
    pub cp_g: f64,
    pub rho_s: f64,
    pub cp_s: f64,
    pub ua: f64,
    pub g_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticsSection {
    pub k_inf: Vec<f64>,
    pub e_a: Vec<f64>,
    pub dh: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_ref: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoichSection {
    pub nu: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InitialSection {
    /// Characteristic-coordinate starting positions (one per state).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Starting transformed state; 3 entries (u1, u2, T) in literal3
    /// mode, 7 entries in full mode (temperature0 supplies T).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature0: Option<f64>,
    /// Per-species inlet-profile of molar flows over z.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flows: Option<Vec<ProfileSpec>>,
    /// Temperature profile over z.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<ProfileSpec>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundarySection {
    /// Per-species inlet flows over time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flows_in: Option<Vec<ProfileSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature_in: Option<ProfileSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSection {
    /// "literal3" or "full8".
    pub mode: String,
    /// "euler", "midpoint", "rk4" or "rk45".
    pub stepper: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_reg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_reg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_cells: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cfl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_range: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema: u32,
    pub meta: MetaSection,
    pub constants: ConstantsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conv_form: Option<ConvSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kinetics: Option<KineticsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stoichiometry: Option<StoichSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<BoundarySection>,
    pub solver: SolverSection,
}

/// Parse, normalize (fill defaults, resolve the bar/Pa pair) and validate.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut scenario: Scenario =
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    normalize(&mut scenario)?;
    validate(&scenario)?;
    Ok(scenario)
}

pub fn load_scenario(path: &std::path::Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&text)
}

/// Load one of the bundled scenarios by name.
pub fn bundled_scenario(name: &str) -> Result<Scenario> {
    for (n, text) in BUNDLED {
        if n == name {
            return parse_scenario(text);
        }
    }
    Err(ScenarioError::Io(format!("no bundled scenario named {name}")))
}

/// Normalized TOML text; parsing it again yields an identical Scenario.
pub fn echo(scenario: &Scenario) -> Result<String> {
    toml::to_string_pretty(scenario).map_err(|e| ScenarioError::Io(e.to_string()))
}

fn normalize(s: &mut Scenario) -> Result<()> {
    match (s.constants.p_bar, s.constants.p_pa) {
        // Echoed files carry both units; accept them when consistent.
        (Some(bar), Some(pa)) => {
            if (bar * BAR_TO_PA - pa).abs() > 1e-9 * pa.abs().max(1.0) {
                return Err(invalid("constants.p_bar", "p_bar and p_pa disagree"));
            }
        }
        (Some(bar), None) => s.constants.p_pa = Some(bar * BAR_TO_PA),
        (None, Some(pa)) => s.constants.p_bar = Some(pa / BAR_TO_PA),
        (None, None) => {
            return Err(ScenarioError::MissingField("constants.p_bar (or p_pa)".into()));
        }
    }
    if let Some(kin) = &mut s.kinetics {
        kin.t_ref.get_or_insert(T_REF_DEFAULT);
    }
    s.solver.n_cells.get_or_insert(40);
    s.solver.cfl.get_or_insert(0.9);
    s.solver.epsilon_reg.get_or_insert(1e-5);
    s.solver.row_reg.get_or_insert(1.0);
    Ok(())
}

fn validate(s: &Scenario) -> Result<()> {
    if s.schema != 1 {
        return Err(ScenarioError::Schema(s.schema));
    }
    let c = &s.constants;
    let p = c.p_pa.expect("normalized");
    let positives = [
        ("constants.r_gas", Some(c.r_gas)),
        ("constants.a_cross", Some(c.a_cross)),
        ("constants.p", Some(p)),
        ("constants.h_coeff", c.h_coeff),
        ("constants.beta_area", c.beta_area),
        ("constants.gamma_diam", c.gamma_diam),
        ("constants.t_furnace", c.t_furnace),
        ("constants.l1", c.l1),
    ];
    for (field, value) in positives {
        if let Some(v) = value {
            if !(v > 0.0) {
                return Err(invalid(field, format!("must be positive (got {v})")));
            }
        }
    }
    for (field, arr) in [("constants.cp", &c.cp), ("constants.cv", &c.cv)] {
        if let Some(arr) = arr {
            if arr.len() != N_SPECIES {
                return Err(invalid(field, format!("expected {N_SPECIES} entries")));
            }
            if arr.iter().any(|v| *v <= 0.0) {
                return Err(invalid(field, "entries must be positive"));
            }
        }
    }
    if let Some(kin) = &s.kinetics {
        for (field, arr) in [
            ("kinetics.k_inf", &kin.k_inf),
            ("kinetics.e_a", &kin.e_a),
            ("kinetics.dh", &kin.dh),
        ] {
            if arr.len() != N_REACTIONS {
                return Err(invalid(field, format!("expected {N_REACTIONS} entries")));
            }
        }
        if kin.k_inf.iter().any(|v| *v < 0.0) {
            return Err(invalid("kinetics.k_inf", "entries must be nonnegative"));
        }
        if kin.t_ref.expect("normalized") <= 0.0 {
            return Err(invalid("kinetics.t_ref", "must be positive"));
        }
    }
    if let Some(st) = &s.stoichiometry {
        let nu = stoich_matrix(st)?;
        let species = SpeciesSet::default();
        validate_stoichiometry(&nu, &species)
            .map_err(|e| invalid("stoichiometry.nu", e.to_string()))?;
    }
    let solver = &s.solver;
    if !matches!(solver.mode.as_str(), "literal3" | "full8") {
        return Err(invalid("solver.mode", "expected literal3 or full8"));
    }
    if !matches!(solver.stepper.as_str(), "euler" | "midpoint" | "rk4" | "rk45") {
        return Err(invalid("solver.stepper", "expected euler, midpoint, rk4 or rk45"));
    }
    if let Some(h) = solver.h {
        if !(h > 0.0) {
            return Err(invalid("solver.h", "must be positive"));
        }
    }
    let n_cells = solver.n_cells.expect("normalized");
    if n_cells < 2 {
        return Err(invalid("solver.n_cells", "need at least 2 cells"));
    }
    let cfl = solver.cfl.expect("normalized");
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(invalid("solver.cfl", "must lie in (0, 1]"));
    }
    if !(solver.epsilon_reg.expect("normalized") > 0.0) {
        return Err(invalid("solver.epsilon_reg", "must be positive"));
    }
    if !(solver.row_reg.expect("normalized") > 0.0) {
        return Err(invalid("solver.row_reg", "must be positive"));
    }
    if let Some((a, b)) = solver.s_range {
        if !(b > a) {
            return Err(invalid("solver.s_range", "needs a < b"));
        }
    }
    if let Some(t_end) = solver.t_end {
        if !(t_end > 0.0) {
            return Err(invalid("solver.t_end", "must be positive"));
        }
    }

    if let Some(init) = &s.initial {
        if let Some(flows) = &init.flows {
            if flows.len() != N_SPECIES {
                return Err(invalid("initial.flows", format!("expected {N_SPECIES} profiles")));
            }
            for (j, spec) in flows.iter().enumerate() {
                spec.validate(&format!("initial.flows[{j}]"))?;
            }
        }
        if let Some(tp) = &init.temperature {
            tp.validate("initial.temperature")?;
        }
        if let Some(l1) = c.l1 {
            for (field, spec) in profile_iter(&init.flows, &init.temperature, "initial") {
                if !spec.covers(0.0, l1) {
                    return Err(invalid(&field, format!("table must cover [0, {l1}]")));
                }
            }
        }
    }
    if let Some(bdry) = &s.boundary {
        if let Some(flows) = &bdry.flows_in {
            if flows.len() != N_SPECIES {
                return Err(invalid("boundary.flows_in", format!("expected {N_SPECIES} profiles")));
            }
            for (j, spec) in flows.iter().enumerate() {
                spec.validate(&format!("boundary.flows_in[{j}]"))?;
            }
        }
        if let Some(tp) = &bdry.temperature_in {
            tp.validate("boundary.temperature_in")?;
        }
        if let Some(t_end) = solver.t_end {
            for (field, spec) in profile_iter(&bdry.flows_in, &bdry.temperature_in, "boundary") {
                if !spec.covers(0.0, t_end) {
                    return Err(invalid(&field, format!("table must cover [0, {t_end}]")));
                }
            }
        }
    }
    Ok(())
}

fn profile_iter<'a>(
    flows: &'a Option<Vec<ProfileSpec>>,
    temperature: &'a Option<ProfileSpec>,
    section: &str,
) -> Vec<(String, &'a ProfileSpec)> {
    let mut out = Vec::new();
    if let Some(flows) = flows {
        for (j, spec) in flows.iter().enumerate() {
            out.push((format!("{section} flows[{j}]"), spec));
        }
    }
    if let Some(tp) = temperature {
        out.push((format!("{section} temperature"), tp));
    }
    out
}

fn stoich_matrix(st: &StoichSection) -> Result<[[f64; N_SPECIES]; N_REACTIONS]> {
    if st.nu.len() != N_REACTIONS {
        return Err(invalid("stoichiometry.nu", format!("expected {N_REACTIONS} rows")));
    }
    let mut nu = [[0.0; N_SPECIES]; N_REACTIONS];
    for (i, row) in st.nu.iter().enumerate() {
        if row.len() != N_SPECIES {
            return Err(invalid(
                "stoichiometry.nu",
                format!("row {i} expected {N_SPECIES} entries"),
            ));
        }
        nu[i].copy_from_slice(row);
    }
    Ok(nu)
}

fn array7(field: &str, values: &[f64]) -> Result<[f64; N_SPECIES]> {
    values
        .try_into()
        .map_err(|_| invalid(field, format!("expected {N_SPECIES} entries")))
}

fn array4(field: &str, values: &[f64]) -> Result<[f64; N_REACTIONS]> {
    values
        .try_into()
        .map_err(|_| invalid(field, format!("expected {N_REACTIONS} entries")))
}

impl Scenario {
    fn require<T: Copy>(value: Option<T>, field: &str) -> Result<T> {
        value.ok_or_else(|| ScenarioError::MissingField(field.to_string()))
    }

    pub fn model_constants(&self) -> Result<ModelConstants> {
        let c = &self.constants;
        let conv = self
            .conv_form
            .as_ref()
            .ok_or_else(|| ScenarioError::MissingField("conv_form".into()))?;
        let cp = c.cp.as_ref().ok_or_else(|| ScenarioError::MissingField("constants.cp".into()))?;
        let cv = c.cv.as_ref().ok_or_else(|| ScenarioError::MissingField("constants.cv".into()))?;
        let consts = ModelConstants {
            r_gas: c.r_gas,
            a_cross: c.a_cross,
            p: c.p_pa.expect("normalized"),
            cp: array7("constants.cp", cp)?,
            cv: array7("constants.cv", cv)?,
            h_coeff: Self::require(c.h_coeff, "constants.h_coeff")?,
            beta_area: Self::require(c.beta_area, "constants.beta_area")?,
            gamma_diam: c.gamma_diam,
            t_furnace: Self::require(c.t_furnace, "constants.t_furnace")?,
            l1: Self::require(c.l1, "constants.l1")?,
            conv_form: ConvForm {
                rho_g: conv.rho_g,
                cp_g: conv.cp_g,
                rho_s: conv.rho_s,
                cp_s: conv.cp_s,
                ua: conv.ua,
                g_f: conv.g_f,
            },
        };
        consts.validate().map_err(|e| invalid("constants", e.to_string()))?;
        Ok(consts)
    }

    pub fn kinetics_params(&self) -> Result<KineticsParams> {
        let nu = match &self.stoichiometry {
            Some(st) => stoich_matrix(st)?,
            None => default_stoichiometry(),
        };
        let params = match &self.kinetics {
            None => KineticsParams { nu, ..KineticsParams::inert() },
            Some(kin) => KineticsParams {
                k_inf: array4("kinetics.k_inf", &kin.k_inf)?,
                e_a: array4("kinetics.e_a", &kin.e_a)?,
                dh: array4("kinetics.dh", &kin.dh)?,
                nu,
                t_ref: kin.t_ref.unwrap_or(T_REF_DEFAULT),
            },
        };
        Ok(params)
    }

    pub fn literal3_consts(&self) -> Result<Literal3Consts> {
        let c = &self.constants;
        let lit = c
            .literal3
            .as_ref()
            .ok_or_else(|| ScenarioError::MissingField("constants.literal3".into()))?;
        Ok(Literal3Consts {
            a_cross: c.a_cross,
            p: c.p_pa.expect("normalized"),
            r_gas: c.r_gas,
            c: lit.c,
            c1: lit.c1,
            u_total: lit.u_total,
            v1: lit.v1,
            v2: lit.v2,
            r_prime: lit.r_prime,
            h_const: lit.h_const,
            t_f: lit.t_f,
            b_coeff: lit.b_coeff,
            u1_coeff: lit.u1_coeff,
        })
    }

    pub fn stepper_kind(&self) -> Result<StepperKind> {
        Ok(match self.solver.stepper.as_str() {
            "euler" => StepperKind::Euler,
            "midpoint" => StepperKind::Midpoint,
            "rk4" => StepperKind::Rk4,
            "rk45" => StepperKind::Rk45Adaptive {
                rel_tol: self.solver.rel_tol.unwrap_or(1e-8),
                abs_tol: self.solver.abs_tol.unwrap_or(1e-10),
                h_min: 1e-14,
                h_max: 1.0,
            },
            other => return Err(invalid("solver.stepper", format!("unknown stepper {other}"))),
        })
    }

    pub fn s_range(&self) -> Result<(f64, f64)> {
        self.solver
            .s_range
            .ok_or_else(|| ScenarioError::MissingField("solver.s_range".into()))
    }

    pub fn step_h(&self) -> Result<f64> {
        Self::require(self.solver.h, "solver.h")
    }

    /// Starting flows and temperature at z = 0 (used for inlet states
    /// and as the default characteristic-ray foot point).
    pub fn initial_state_f(&self) -> Result<StateF> {
        let init = self
            .initial
            .as_ref()
            .ok_or_else(|| ScenarioError::MissingField("initial".into()))?;
        let flows_spec = init
            .flows
            .as_ref()
            .ok_or_else(|| ScenarioError::MissingField("initial.flows".into()))?;
        let temp_spec = init
            .temperature
            .as_ref()
            .ok_or_else(|| ScenarioError::MissingField("initial.temperature".into()))?;
        let mut flows = [0.0; N_SPECIES];
        for (j, spec) in flows_spec.iter().enumerate() {
            flows[j] = sample_profile(spec, 0.0)?;
        }
        let t = sample_profile(temp_spec, 0.0)?;
        StateF::new(flows, t).map_err(|e| invalid("initial", e.to_string()))
    }

    /// Assemble the characteristic system selected by solver.mode.
    pub fn char_system(&self) -> Result<CharSystem> {
        let solver = &self.solver;
        let mode = match solver.mode.as_str() {
            "literal3" => {
                let init = self
                    .initial
                    .as_ref()
                    .ok_or_else(|| ScenarioError::MissingField("initial".into()))?;
                let x0 = init
                    .x0
                    .as_ref()
                    .ok_or_else(|| ScenarioError::MissingField("initial.x0".into()))?;
                let u0 = init
                    .u0
                    .as_ref()
                    .ok_or_else(|| ScenarioError::MissingField("initial.u0".into()))?;
                let x0: [f64; 3] = x0
                    .as_slice()
                    .try_into()
                    .map_err(|_| invalid("initial.x0", "expected 3 entries"))?;
                let u0: [f64; 3] = u0
                    .as_slice()
                    .try_into()
                    .map_err(|_| invalid("initial.u0", "expected 3 entries"))?;
                CharMode::PaperLiteral3 { consts: self.literal3_consts()?, x0, u0 }
            }
            "full8" => {
                let consts = self.model_constants()?;
                let kin = self.kinetics_params()?;
                let init = self.initial.as_ref();
                let x0: [f64; 8] = match init.and_then(|i| i.x0.as_ref()) {
                    None => [0.0; 8],
                    Some(v) => v
                        .as_slice()
                        .try_into()
                        .map_err(|_| invalid("initial.x0", "expected 8 entries"))?,
                };
                let u0 = match (init.and_then(|i| i.u0.as_ref()), init.and_then(|i| i.temperature0))
                {
                    (Some(u), Some(t)) => {
                        let u: [f64; 7] = u
                            .as_slice()
                            .try_into()
                            .map_err(|_| invalid("initial.u0", "expected 7 entries"))?;
                        StateU::new(u, t).map_err(|e| invalid("initial.u0", e.to_string()))?
                    }
                    _ => {
                        let f = self.initial_state_f()?;
                        f_to_u(&f, &BasisQ::new())
                            .map_err(|e| invalid("initial", e.to_string()))?
                    }
                };
                CharMode::Full8 { consts, kin, x0, u0 }
            }
            other => return Err(invalid("solver.mode", format!("unknown mode {other}"))),
        };
        Ok(CharSystem {
            mode,
            epsilon_reg: solver.epsilon_reg.expect("normalized"),
            row_reg: solver.row_reg.expect("normalized"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_load_and_round_trip() {
        for (name, text) in BUNDLED {
            let first = parse_scenario(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            let echoed = echo(&first).unwrap();
            let second = parse_scenario(&echoed).unwrap_or_else(|e| panic!("{name} echo: {e}"));
            assert_eq!(first, second, "{name} echo round trip");
        }
    }

    #[test]
    fn appendix_scenario_carries_script_constants() {
        let s = bundled_scenario("simplified3-appendixC").unwrap();
        let lit = s.literal3_consts().unwrap();
        assert_eq!(lit.t_f, 232.0);
        assert_eq!(lit.r_gas, 60.22);
        assert_eq!(lit.a_cross, 343.0);
        assert_eq!(lit.p, 10.0);
        assert_eq!(s.solver.epsilon_reg, Some(1e6));
        assert_eq!(s.s_range().unwrap(), (1e-5, 10.0));
        let sys = s.char_system().unwrap();
        assert_eq!(sys.m(), 3);
    }

    #[test]
    fn full8_scenario_builds_model_and_char_system() {
        let s = bundled_scenario("full8-randomized").unwrap();
        let consts = s.model_constants().unwrap();
        assert!(consts.p > 0.0);
        let kin = s.kinetics_params().unwrap();
        assert!(kin.k_inf.iter().all(|k| *k >= 0.0));
        let sys = s.char_system().unwrap();
        sys.validate().unwrap();
        assert_eq!(sys.m(), 8);
    }

    #[test]
    fn nonpositive_pressure_names_the_field() {
        let text = SCENARIO_SIMPLIFIED3_APPENDIXC.replace("p_pa = 10.0", "p_pa = -1.0");
        let err = parse_scenario(&text).unwrap_err();
        match err {
            ScenarioError::Validation { field, .. } => assert_eq!(field, "constants.p"),
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn both_pressure_units_rejected() {
        let text =
            SCENARIO_SIMPLIFIED3_APPENDIXC.replace("p_pa = 10.0", "p_pa = 10.0\np_bar = 1.0");
        assert!(parse_scenario(&text).is_err());
    }

    #[test]
    fn omitted_t_ref_defaults() {
        let s = bundled_scenario("advection-check").unwrap();
        // advection-check has no kinetics section; inert default still
        // reports the standard reference temperature.
        assert_eq!(s.kinetics_params().unwrap().t_ref, T_REF_DEFAULT);

        let text = SCENARIO_FULL8_RANDOMIZED.replace("t_ref = 773.0\n", "");
        let s = parse_scenario(&text).unwrap();
        assert_eq!(s.kinetics.as_ref().unwrap().t_ref, Some(T_REF_DEFAULT));
    }

    #[test]
    fn pressure_echoes_both_units() {
        let s = bundled_scenario("full8-randomized").unwrap();
        assert!(s.constants.p_bar.is_some());
        assert!(s.constants.p_pa.is_some());
        let echoed = echo(&s).unwrap();
        assert!(echoed.contains("p_bar"));
        assert!(echoed.contains("p_pa"));
    }

    #[test]
    fn sample_profile_behaves() {
        assert_eq!(sample_profile(&ProfileSpec::Constant(5.0), 123.0).unwrap(), 5.0);
        let table = ProfileSpec::Table(vec![(0.0, 1.0), (1.0, 3.0)]);
        assert_eq!(sample_profile(&table, 0.5).unwrap(), 2.0);
        assert!(matches!(
            sample_profile(&table, 1.5),
            Err(ScenarioError::OutOfRange { .. })
        ));
    }

    #[test]
    fn decreasing_table_rejected() {
        let text = SCENARIO_ADVECTION_CHECK.replace(
            "temperature = 1.0",
            "temperature = [[0.0, 1.0], [0.0, 2.0]]",
        );
        assert!(parse_scenario(&text).is_err());
    }

    #[test]
    fn atom_imbalance_names_the_reaction() {
        let extra = "\n[stoichiometry]\nnu = [\
            [-1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0],\
            [-1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0],\
            [0.0, -1.0, 0.0, 1.0, -1.0, 1.0, 0.0],\
            [0.0, -3.0, 0.0, 5.0, 0.0, 2.0, 0.0]]\n";
        let text = format!("{SCENARIO_FULL8_RANDOMIZED}{extra}");
        let err = parse_scenario(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("stoichiometry.nu"), "{msg}");
    }

    #[test]
    fn wrong_schema_rejected() {
        let text = SCENARIO_ADVECTION_CHECK.replace("schema = 1", "schema = 2");
        assert!(matches!(parse_scenario(&text), Err(ScenarioError::Schema(2))));
    }
}
