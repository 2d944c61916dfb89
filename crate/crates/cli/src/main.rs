//! Command-line driver: simulations, sweeps, and verification reports.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 verification failure. No other codes are used.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use esr_core::charsolver::{run_characteristics, CharError, CharRun, CharSystem};
use esr_core::kinetics::{KineticsParams, N_SPECIES, SPECIES_NAMES};
use esr_core::molsolver::{
    step_mol_conservation, step_mol_original, ConsCell, ConsField, ConservationLedger,
    ConservationSystem, Grid1D, MolError, OrigField, OriginalSystem,
};
use esr_core::numcore::{estimate_order, fit_order, NumError, OdeProblem, StepperKind};
use esr_core::pencil::{eigensystem_full, PairSource, PencilError, RESIDUAL_TOL};
use esr_core::scenario::{
    bundled_scenario, echo, load_scenario, sample_profile, ProfileSpec, Scenario, ScenarioError,
};
use esr_core::statespace::{
    concentration_velocity, f_to_u, random_admissible_f, BasisQ, StateF,
};

const EXIT_CONFIG: i32 = 2;
const EXIT_NUMERICAL: i32 = 3;
const EXIT_VERIFICATION: i32 = 4;

enum CliError {
    Config(String),
    Numerical(String),
    Verification(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Verification(_) => EXIT_VERIFICATION,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numerical(m) | CliError::Verification(m) => m,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<CharError> for CliError {
    fn from(e: CharError) -> Self {
        match &e {
            // A failed eigenvector is a broken run invariant, not a bad step.
            CharError::Pencil(PencilError::NoNullVector { .. }) => {
                CliError::Verification(e.to_string())
            }
            CharError::NonPositiveEpsilon(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<MolError> for CliError {
    fn from(e: MolError) -> Self {
        match &e {
            MolError::TooFewCells(_) | MolError::NonPositiveLength(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<NumError> for CliError {
    fn from(e: NumError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "esr", about = "Reformer model simulations and verification reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the characteristic ODE system of the selected scenario.
    SimulateChar(SimulateCharArgs),
    /// Integrate the space-discretized system forward in time.
    SimulateMol(SimulateMolArgs),
    /// Verify the closed-form eigenpairs over random admissible states.
    EigenReport(EigenReportArgs),
    /// Re-run the characteristics under several regularizers and compare.
    EpsilonSweep(EpsilonSweepArgs),
    /// Measure observed convergence orders against theoretical bands.
    ConvergenceReport(ConvergenceReportArgs),
}

#[derive(Args)]
struct SimulateCharArgs {
    /// Scenario file path or bundled scenario name.
    #[arg(long)]
    scenario: String,
    /// Override the scenario's mode (literal3 or full8).
    #[arg(long)]
    mode: Option<String>,
    /// Override the stepper (euler, midpoint, rk4, rk45).
    #[arg(long)]
    stepper: Option<String>,
    /// Override the step size.
    #[arg(long)]
    step: Option<f64>,
    /// Override the slowness regularizer.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Override the integration range, as "A,B".
    #[arg(long)]
    range: Option<String>,
    #[arg(long, default_value = "char_trajectory.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateMolArgs {
    #[arg(long)]
    scenario: String,
    /// Spatial formulation: "original" or "conservation".
    #[arg(long, default_value = "conservation")]
    form: String,
    #[arg(long)]
    cells: Option<usize>,
    #[arg(long)]
    cfl: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long, default_value = "mol_trajectory.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct EigenReportArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct EpsilonSweepArgs {
    #[arg(long)]
    scenario: String,
    /// Comma-separated regularizer values.
    #[arg(long)]
    epsilons: String,
    #[arg(long)]
    stepper: Option<String>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long, default_value = "sweep_out")]
    out: PathBuf,
}

#[derive(Args)]
struct ConvergenceReportArgs {
    /// "exp-decay" or "advection".
    #[arg(long)]
    problem: String,
    #[arg(long, default_value = "euler")]
    stepper: String,
    /// Comma-separated grid list: step denominators for exp-decay
    /// (h = 1/n), cell counts for advection.
    #[arg(long, default_value = "40,80,160")]
    grids: String,
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::SimulateChar(args) => cmd_simulate_char(args),
        Command::SimulateMol(args) => cmd_simulate_mol(args),
        Command::EigenReport(args) => cmd_eigen_report(args),
        Command::EpsilonSweep(args) => cmd_epsilon_sweep(args),
        Command::ConvergenceReport(args) => cmd_convergence_report(args),
    };
    match outcome {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {}", e.message());
            std::process::exit(e.exit_code());
        }
    }
}

fn resolve_scenario(spec: &str) -> CliResult<Scenario> {
    let path = Path::new(spec);
    if path.exists() {
        Ok(load_scenario(path)?)
    } else {
        bundled_scenario(spec)
            .map_err(|_| CliError::Config(format!("no scenario file or bundled scenario '{spec}'")))
    }
}

fn parse_stepper(name: &str) -> CliResult<StepperKind> {
    Ok(match name {
        "euler" => StepperKind::Euler,
        "midpoint" => StepperKind::Midpoint,
        "rk4" => StepperKind::Rk4,
        "rk45" => StepperKind::Rk45Adaptive {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            h_min: 1e-14,
            h_max: 1.0,
        },
        other => {
            return Err(CliError::Config(format!(
                "unknown stepper '{other}' (expected euler, midpoint, rk4 or rk45)"
            )))
        }
    })
}

fn parse_range(text: &str) -> CliResult<(f64, f64)> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        return Err(CliError::Config(format!("range '{text}' must be 'A,B'")));
    }
    let a: f64 = parts[0].trim().parse().map_err(config_err)?;
    let b: f64 = parts[1].trim().parse().map_err(config_err)?;
    if !(b > a) {
        return Err(CliError::Config(format!("range needs A < B (got {a}, {b})")));
    }
    Ok((a, b))
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(config_err)?;
        }
    }
    std::fs::write(path, contents).map_err(config_err)
}

fn csv_row(values: impl IntoIterator<Item = f64>) -> String {
    let mut row = String::new();
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            row.push(',');
        }
        let _ = write!(row, "{v:.16e}");
    }
    row.push('\n');
    row
}

fn print_report(
    scenario: &Scenario,
    command: &str,
    settings: &[(&str, String)],
    warnings: &[String],
    outputs: &[&Path],
    wall: std::time::Duration,
) {
    println!("# run report: {command}");
    println!("scenario: {}", scenario.meta.name);
    for (key, value) in settings {
        println!("{key}: {value}");
    }
    println!("wall_time_s: {:.3}", wall.as_secs_f64());
    if warnings.is_empty() {
        println!("warnings: none");
    } else {
        for w in warnings {
            println!("warning: {w}");
        }
    }
    for path in outputs {
        println!("output: {}", path.display());
    }
    println!("# resolved scenario");
    match echo(scenario) {
        Ok(text) => print!("{text}"),
        Err(e) => println!("(echo failed: {e})"),
    }
}

fn char_warnings(run: &CharRun) -> Vec<String> {
    let mut warnings = Vec::new();
    if run.counters.pressure_clamps > 0 {
        warnings.push(format!("{} pressure clamps", run.counters.pressure_clamps));
    }
    if run.counters.row_degenerate > 0 {
        warnings.push(format!(
            "{} degenerate state-row events",
            run.counters.row_degenerate
        ));
    }
    if run.counters.numeric_fallbacks > 0 {
        warnings.push(format!(
            "{} numeric eigenvector fallbacks",
            run.counters.numeric_fallbacks
        ));
    }
    warnings
}

fn char_csv(run: &CharRun, m: usize) -> String {
    let mut out = String::from("s");
    for k in 1..=m {
        let _ = write!(out, ",x_{k}");
    }
    for k in 1..m {
        let _ = write!(out, ",u_{k}");
    }
    out.push_str(",T\n");
    for (s, y) in &run.trajectory.samples {
        out.push_str(&csv_row(std::iter::once(*s).chain(y.iter().copied())));
    }
    out
}

fn cmd_simulate_char(args: SimulateCharArgs) -> CliResult<()> {
    let start = Instant::now();
    let mut scenario = resolve_scenario(&args.scenario)?;
    if let Some(mode) = &args.mode {
        scenario.solver.mode = mode.clone();
    }
    if let Some(stepper) = &args.stepper {
        scenario.solver.stepper = stepper.clone();
    }
    if let Some(h) = args.step {
        scenario.solver.h = Some(h);
    }
    if let Some(eps) = args.epsilon {
        scenario.solver.epsilon_reg = Some(eps);
    }
    if let Some(range) = &args.range {
        scenario.solver.s_range = Some(parse_range(range)?);
    }

    let sys: CharSystem = scenario.char_system()?;
    sys.validate()?;
    let stepper = scenario.stepper_kind()?;
    let h = scenario.step_h()?;
    let range = scenario.s_range()?;
    let run = run_characteristics(&sys, stepper, h, range)?;

    write_file(&args.out, &char_csv(&run, sys.m()))?;
    print_report(
        &scenario,
        "simulate-char",
        &[
            ("mode", scenario.solver.mode.clone()),
            ("stepper", scenario.solver.stepper.clone()),
            ("steps_accepted", run.trajectory.accepted.to_string()),
            ("steps_rejected", run.trajectory.rejected.to_string()),
            ("rhs_evals", run.counters.rhs_evals.to_string()),
        ],
        &char_warnings(&run),
        &[&args.out],
        start.elapsed(),
    );
    Ok(())
}

/// Sample a profile, clamping queries to the tabulated range so that
/// boundary closures stay total.
fn sample_clamped(spec: &ProfileSpec, x: f64) -> f64 {
    match sample_profile(spec, x) {
        Ok(v) => v,
        Err(_) => {
            if let ProfileSpec::Table(points) = spec {
                let first = points.first().expect("validated table");
                let last = points.last().expect("validated table");
                if x < first.0 {
                    first.1
                } else {
                    last.1
                }
            } else {
                unreachable!("constants never go out of range")
            }
        }
    }
}

struct MolInputs {
    flows0: Vec<ProfileSpec>,
    temperature0: ProfileSpec,
    flows_in: Vec<ProfileSpec>,
    temperature_in: ProfileSpec,
}

fn mol_inputs(scenario: &Scenario) -> CliResult<MolInputs> {
    let missing = |f: &str| CliError::Config(format!("missing field: {f}"));
    let init = scenario.initial.as_ref().ok_or_else(|| missing("initial"))?;
    let bdry = scenario.boundary.as_ref().ok_or_else(|| missing("boundary"))?;
    Ok(MolInputs {
        flows0: init.flows.clone().ok_or_else(|| missing("initial.flows"))?,
        temperature0: init
            .temperature
            .clone()
            .ok_or_else(|| missing("initial.temperature"))?,
        flows_in: bdry.flows_in.clone().ok_or_else(|| missing("boundary.flows_in"))?,
        temperature_in: bdry
            .temperature_in
            .clone()
            .ok_or_else(|| missing("boundary.temperature_in"))?,
    })
}

fn state_at(flows: &[ProfileSpec], temperature: &ProfileSpec, x: f64) -> CliResult<StateF> {
    let mut f = [0.0; N_SPECIES];
    for (j, spec) in flows.iter().enumerate() {
        f[j] = sample_clamped(spec, x);
    }
    StateF::new(f, sample_clamped(temperature, x))
        .map_err(|e| CliError::Numerical(e.to_string()))
}

fn ledger_csv_header() -> String {
    "step,t,species,total,boundary_in,boundary_out,source_integral,residual\n".to_string()
}

fn ledger_csv_rows(step: usize, t: f64, ledger: &ConservationLedger) -> String {
    let residuals = ledger.residuals();
    let mut out = String::new();
    for j in 0..N_SPECIES {
        let _ = write!(out, "{step},{t:.16e},{}", SPECIES_NAMES[j]);
        let _ = write!(
            out,
            ",{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            ledger.totals[j],
            ledger.boundary_in[j],
            ledger.boundary_out[j],
            ledger.source_integral[j],
            residuals[j],
        );
    }
    out
}

const DT_MIN: f64 = 1e-12;

fn cmd_simulate_mol(args: SimulateMolArgs) -> CliResult<()> {
    let start = Instant::now();
    let mut scenario = resolve_scenario(&args.scenario)?;
    if let Some(cells) = args.cells {
        scenario.solver.n_cells = Some(cells);
    }
    if let Some(cfl) = args.cfl {
        scenario.solver.cfl = Some(cfl);
    }
    if let Some(t_end) = args.t_end {
        scenario.solver.t_end = Some(t_end);
    }

    let consts = scenario.model_constants()?;
    let kin: KineticsParams = scenario.kinetics_params()?;
    let n_cells = scenario.solver.n_cells.expect("normalized");
    if n_cells < 2 {
        return Err(CliError::Config(format!(
            "invalid solver.n_cells: need at least 2 cells (got {n_cells})"
        )));
    }
    let cfl = scenario.solver.cfl.expect("normalized");
    let t_end = scenario
        .solver
        .t_end
        .ok_or_else(|| CliError::Config("missing field: solver.t_end".into()))?;
    let stepper = match scenario.stepper_kind()? {
        StepperKind::Rk45Adaptive { .. } => {
            return Err(CliError::Config(
                "the spatial solver needs a fixed-step stepper (euler, midpoint, rk4)".into(),
            ))
        }
        fixed => fixed,
    };
    let grid = Grid1D::new(n_cells, consts.l1)?;
    let inputs = mol_inputs(&scenario)?;

    let mut warnings: Vec<String> = Vec::new();
    let mut trajectory = String::new();
    let mut ledger_file: Option<(PathBuf, String)> = None;

    match args.form.as_str() {
        "conservation" => {
            let k = consts.r_gas / (consts.a_cross * consts.p);
            let to_cell = {
                let consts = consts.clone();
                move |state: &StateF| -> CliResult<ConsCell> {
                    let (c, _v) = concentration_velocity(state, &consts)
                        .map_err(|e| CliError::Numerical(e.to_string()))?;
                    Ok(ConsCell { c, g_conv: k * state.temperature })
                }
            };
            let mut cells = Vec::with_capacity(grid.n_cells);
            for z in &grid.z_centers {
                cells.push(to_cell(&state_at(&inputs.flows0, &inputs.temperature0, *z)?)?);
            }
            let mut field = ConsField { cells };

            let inlet_flows = inputs.flows_in.clone();
            let inlet_temp = inputs.temperature_in.clone();
            let inlet_consts = consts.clone();
            let sys = ConservationSystem {
                grid: grid.clone(),
                consts: consts.clone(),
                kin,
                inlet: Box::new(move |t: f64| {
                    let state = state_at(&inlet_flows, &inlet_temp, t)
                        .unwrap_or_else(|_| StateF::new([1.0; N_SPECIES], 1.0).expect("valid"));
                    let (c, _v) = concentration_velocity(&state, &inlet_consts)
                        .expect("admissible inlet");
                    ConsCell { c, g_conv: k * state.temperature }
                }),
                f_tot_in: {
                    let flows = inputs.flows_in.clone();
                    Box::new(move |t: f64| {
                        flows.iter().map(|spec| sample_clamped(spec, t)).sum()
                    })
                },
            };

            let mut ledger = ConservationLedger::new(&field, &grid, consts.a_cross);
            let mut ledger_text = ledger_csv_header();

            let header: String = std::iter::once("t".to_string())
                .chain((0..grid.n_cells).flat_map(|i| {
                    (0..N_SPECIES)
                        .map(move |j| format!("c{}_{i}", j + 1))
                        .chain(std::iter::once(format!("g_{i}")))
                }))
                .collect::<Vec<_>>()
                .join(",");
            trajectory.push_str(&header);
            trajectory.push('\n');
            let record = |t: f64, field: &ConsField, out: &mut String| {
                out.push_str(&csv_row(std::iter::once(t).chain(
                    field.cells.iter().flat_map(|cell| {
                        cell.c.iter().copied().chain(std::iter::once(cell.g_conv))
                    }),
                )));
            };
            record(0.0, &field, &mut trajectory);

            let mut t = 0.0;
            let mut step = 0usize;
            while t < t_end - 1e-14 {
                let v_max = (sys.f_tot_in)(t)
                    * field
                        .cells
                        .iter()
                        .map(|c| c.g_conv)
                        .fold(0.0f64, f64::max);
                if !(v_max > 0.0) {
                    return Err(CliError::Numerical(format!(
                        "non-positive transport velocity at t = {t}"
                    )));
                }
                let mut dt = (cfl * grid.dz / v_max).min(t_end - t);
                loop {
                    match step_mol_conservation(&sys, &field, t, dt, stepper, cfl, &mut ledger) {
                        Ok(next) => {
                            field = next;
                            break;
                        }
                        Err(MolError::CflViolation { .. }) if dt > DT_MIN * 2.0 => {
                            dt *= 0.5;
                            warnings.push(format!("step {step}: dt halved to {dt:.3e}"));
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
                t += dt;
                step += 1;
                record(t, &field, &mut trajectory);
                ledger_text.push_str(&ledger_csv_rows(step, t, &ledger));
            }
            let ledger_path = args.out.with_extension("ledger.csv");
            ledger_file = Some((ledger_path, ledger_text));
        }
        "original" => {
            let mut cells = Vec::with_capacity(grid.n_cells);
            for z in &grid.z_centers {
                cells.push(state_at(&inputs.flows0, &inputs.temperature0, *z)?);
            }
            let mut field = OrigField { cells };
            let inlet_flows = inputs.flows_in.clone();
            let inlet_temp = inputs.temperature_in.clone();
            let sys = OriginalSystem {
                grid: grid.clone(),
                consts: consts.clone(),
                kin,
                inlet: Box::new(move |t: f64| {
                    state_at(&inlet_flows, &inlet_temp, t)
                        .unwrap_or_else(|_| StateF::new([1.0; N_SPECIES], 1.0).expect("valid"))
                }),
            };

            let header: String = std::iter::once("t".to_string())
                .chain((0..grid.n_cells).flat_map(|i| {
                    (0..N_SPECIES)
                        .map(move |j| format!("f{}_{i}", j + 1))
                        .chain(std::iter::once(format!("T_{i}")))
                }))
                .collect::<Vec<_>>()
                .join(",");
            trajectory.push_str(&header);
            trajectory.push('\n');
            let record = |t: f64, field: &OrigField, out: &mut String| {
                out.push_str(&csv_row(std::iter::once(t).chain(
                    field.cells.iter().flat_map(|cell| {
                        cell.flows
                            .iter()
                            .copied()
                            .chain(std::iter::once(cell.temperature))
                    }),
                )));
            };
            record(0.0, &field, &mut trajectory);

            let mut t = 0.0;
            let mut step = 0usize;
            while t < t_end - 1e-14 {
                let mut v_max = 0.0f64;
                for cell in &field.cells {
                    let (_c, v) = concentration_velocity(cell, &consts)
                        .map_err(|e| CliError::Numerical(e.to_string()))?;
                    v_max = v_max.max(v);
                }
                if !(v_max > 0.0) {
                    return Err(CliError::Numerical(format!(
                        "non-positive transport velocity at t = {t}"
                    )));
                }
                let mut dt = (cfl * grid.dz / v_max).min(t_end - t);
                loop {
                    match step_mol_original(&sys, &field, t, dt, stepper, cfl) {
                        Ok(next) => {
                            field = next;
                            break;
                        }
                        Err(MolError::CflViolation { .. }) if dt > DT_MIN * 2.0 => {
                            dt *= 0.5;
                            warnings.push(format!("step {step}: dt halved to {dt:.3e}"));
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
                t += dt;
                step += 1;
                record(t, &field, &mut trajectory);
            }
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown form '{other}' (expected original or conservation)"
            )))
        }
    }

    write_file(&args.out, &trajectory)?;
    let mut outputs: Vec<&Path> = vec![&args.out];
    if let Some((path, text)) = &ledger_file {
        write_file(path, text)?;
        outputs.push(path);
    }
    print_report(
        &scenario,
        "simulate-mol",
        &[
            ("form", args.form.clone()),
            ("n_cells", n_cells.to_string()),
            ("cfl", cfl.to_string()),
            ("t_end", t_end.to_string()),
            ("stepper", scenario.solver.stepper.clone()),
        ],
        &warnings,
        &outputs,
        start.elapsed(),
    );
    Ok(())
}

fn cmd_eigen_report(args: EigenReportArgs) -> CliResult<()> {
    let start = Instant::now();
    let scenario = resolve_scenario(&args.scenario)?;
    let consts = scenario.model_constants()?;
    if args.samples == 0 {
        return Err(CliError::Config("need at least 1 sample".into()));
    }
    let q = BasisQ::new();
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut max_residual = [0.0f64; 8];
    let mut closed_form = 0usize;
    let mut min_rank = usize::MAX;
    for i in 0..args.samples {
        let f = random_admissible_f(&mut rng);
        let state = f_to_u(&f, &q).map_err(|e| CliError::Numerical(e.to_string()))?;
        let sys = eigensystem_full(&state, &consts, &q)
            .map_err(|e| CliError::Verification(format!("state {i}: {e}")))?;
        for (k, r) in sys.residuals.iter().enumerate() {
            max_residual[k] = max_residual[k].max(*r);
        }
        if sys.source[7] == PairSource::ClosedForm {
            closed_form += 1;
        }
        min_rank = min_rank.min(sys.rank());
    }

    println!("# eigen report");
    println!("scenario: {}", scenario.meta.name);
    println!("samples: {}", args.samples);
    println!("seed: {}", args.seed);
    println!("k,max_residual");
    for (k, r) in max_residual.iter().enumerate() {
        println!("{},{r:.16e}", k + 1);
    }
    println!(
        "pair8_closed_form_fraction: {:.6}",
        closed_form as f64 / args.samples as f64
    );
    println!("min_rank: {min_rank}");
    println!("wall_time_s: {:.3}", start.elapsed().as_secs_f64());

    let worst = max_residual.iter().cloned().fold(0.0f64, f64::max);
    if worst > RESIDUAL_TOL {
        return Err(CliError::Verification(format!(
            "max residual {worst:.3e} exceeds {RESIDUAL_TOL:.0e}"
        )));
    }
    if min_rank != 8 {
        return Err(CliError::Verification(format!(
            "eigenvector rank dropped to {min_rank}"
        )));
    }
    Ok(())
}

fn cmd_epsilon_sweep(args: EpsilonSweepArgs) -> CliResult<()> {
    let start = Instant::now();
    let mut scenario = resolve_scenario(&args.scenario)?;
    if let Some(stepper) = &args.stepper {
        scenario.solver.stepper = stepper.clone();
    }
    if let Some(h) = args.step {
        scenario.solver.h = Some(h);
    }
    let epsilons: Vec<f64> = args
        .epsilons
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(config_err))
        .collect::<CliResult<_>>()?;
    if epsilons.is_empty() {
        return Err(CliError::Config("need at least one epsilon".into()));
    }
    let stepper = scenario.stepper_kind()?;
    let h = scenario.step_h()?;
    let range = scenario.s_range()?;
    let bitwise = stepper.is_fixed_step();
    let mut warnings = Vec::new();
    if !bitwise {
        warnings.push(
            "adaptive stepper: bitwise u-identity downgraded to 1e-9 relative tolerance"
                .to_string(),
        );
    }

    let mut runs: Vec<CharRun> = Vec::new();
    let mut m = 0usize;
    for (i, eps) in epsilons.iter().enumerate() {
        let mut sys = scenario.char_system()?;
        sys.epsilon_reg = *eps;
        sys.validate()?;
        m = sys.m();
        let run = run_characteristics(&sys, stepper, h, range)?;
        let path = args.out.join(format!("trajectory_eps_{i}.csv"));
        write_file(&path, &char_csv(&run, m))?;
        runs.push(run);
    }

    println!("# epsilon sweep");
    println!("scenario: {}", scenario.meta.name);
    println!("stepper: {}", scenario.solver.stepper);
    println!("epsilon,x_m_slope,expected_1_over_eps");
    let mut verification_failures = Vec::new();
    let reference = &runs[0];
    for (run, eps) in runs.iter().zip(&epsilons) {
        // Slope of the regularized characteristic coordinate (the state
        // index m-1 holds x along sigma = 0).
        let samples = &run.trajectory.samples;
        let (s0, y0) = &samples[0];
        let (s1, y1) = samples.last().expect("nonempty");
        let slope = (y1[m - 1] - y0[m - 1]) / (s1 - s0);
        println!("{eps:.16e},{slope:.16e},{:.16e}", 1.0 / eps);

        if samples.len() != reference.trajectory.samples.len() {
            verification_failures.push(format!("eps = {eps}: sample count differs"));
            continue;
        }
        for (a, b) in samples.iter().zip(&reference.trajectory.samples) {
            for comp in m..2 * m {
                let (va, vb) = (a.1[comp], b.1[comp]);
                let identical = if bitwise {
                    va.to_bits() == vb.to_bits()
                } else {
                    (va - vb).abs() <= 1e-9 * vb.abs().max(1.0)
                };
                if !identical {
                    verification_failures.push(format!(
                        "eps = {eps}: u-component {} differs at s = {}",
                        comp - m,
                        a.0
                    ));
                    break;
                }
            }
        }
    }
    for w in &warnings {
        println!("warning: {w}");
    }
    println!("wall_time_s: {:.3}", start.elapsed().as_secs_f64());
    if let Some(first) = verification_failures.first() {
        return Err(CliError::Verification(format!(
            "u-trajectories differ across epsilons: {first}"
        )));
    }
    println!("u_trajectories_identical: true");
    Ok(())
}

fn cmd_convergence_report(args: ConvergenceReportArgs) -> CliResult<()> {
    let stepper = parse_stepper(&args.stepper)?;
    let grids: Vec<f64> = args
        .grids
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(config_err))
        .collect::<CliResult<_>>()?;
    if grids.len() < 3 {
        return Err(CliError::Config("need at least 3 grids".into()));
    }

    let (observed, expected, band) = match args.problem.as_str() {
        "exp-decay" => {
            let hs: Vec<f64> = grids.iter().map(|n| 1.0 / n).collect();
            let factory = || {
                OdeProblem::new(
                    1,
                    0.0,
                    vec![1.0],
                    Box::new(|_s: f64, y: &[f64]| Ok(vec![-y[0]])),
                )
            };
            let exact = |s: f64| vec![(-s).exp()];
            let order = estimate_order(&factory, &exact, stepper, 1.0, &hs)?;
            let expected = stepper.theoretical_order();
            let band = if expected >= 4.0 { 0.2 } else { 0.1 };
            (order, expected, band)
        }
        "advection" => {
            let mut errors = Vec::new();
            let mut hs = Vec::new();
            for n in &grids {
                let cells = *n as usize;
                if cells < 2 {
                    return Err(CliError::Config(format!("grid {n} too small")));
                }
                errors.push(esr_core::molsolver::manufactured_advection_check(cells, 0.5)?);
                hs.push(1.0 / cells as f64);
            }
            (fit_order(&hs, &errors)?, 1.0, 0.2)
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown problem '{other}' (expected exp-decay or advection)"
            )))
        }
    };

    println!("# convergence report");
    println!("problem: {}", args.problem);
    println!("stepper: {}", args.stepper);
    println!("observed_order: {observed:.6}");
    println!("expected_order: {expected} +- {band}");
    if (observed - expected).abs() > band {
        println!("verdict: FAIL");
        return Err(CliError::Verification(format!(
            "observed order {observed:.3} outside {expected} +- {band}"
        )));
    }
    println!("verdict: PASS");
    Ok(())
}
