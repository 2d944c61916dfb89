use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_esr"))
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("esr-cli-test-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

#[test]
fn literal3_scenario_covers_the_range() {
    let dir = workdir("literal3");
    let out = dir.join("traj.csv");
    let output = run(bin()
        .args(["simulate-char", "--scenario", "simplified3-appendixC", "--out"])
        .arg(&out));
    assert_eq!(output.status.code(), Some(0), "{}", String::from_utf8_lossy(&output.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let last = csv.lines().last().unwrap();
    let s_end: f64 = last.split(',').next().unwrap().parse().unwrap();
    assert!((s_end - 10.0).abs() < 1e-9, "trajectory ends at {s_end}");
}

#[test]
fn missing_scenario_is_a_config_error() {
    let output = run(bin().args([
        "simulate-char",
        "--scenario",
        "/definitely/not/here.toml",
        "--out",
        "/dev/null",
    ]));
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn single_cell_grid_is_rejected() {
    let output = run(bin().args([
        "simulate-mol",
        "--scenario",
        "advection-check",
        "--cells",
        "1",
        "--out",
        "/dev/null",
    ]));
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn advection_ledger_closes() {
    let dir = workdir("advection");
    let out = dir.join("adv.csv");
    let output = run(bin()
        .args(["simulate-mol", "--scenario", "advection-check", "--form", "conservation", "--out"])
        .arg(&out));
    assert_eq!(output.status.code(), Some(0), "{}", String::from_utf8_lossy(&output.stderr));
    let ledger = std::fs::read_to_string(dir.join("adv.ledger.csv")).unwrap();
    let mut rows = 0;
    for line in ledger.lines().skip(1) {
        let residual: f64 = line.split(',').last().unwrap().parse().unwrap();
        assert!(residual.abs() <= 1e-10, "ledger residual {residual} too large");
        rows += 1;
    }
    assert!(rows > 0, "ledger has data rows");
}

#[test]
fn full8_runs_in_both_forms() {
    let dir = workdir("full8-forms");
    for form in ["original", "conservation"] {
        let out = dir.join(format!("{form}.csv"));
        let output = run(bin()
            .args(["simulate-mol", "--scenario", "full8-randomized", "--form", form, "--out"])
            .arg(&out));
        assert_eq!(
            output.status.code(),
            Some(0),
            "{form}: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        assert!(out.exists());
    }
}

#[test]
fn inadmissible_initial_state_is_a_numerical_failure() {
    let dir = workdir("inadmissible");
    // u2 = 0 divides the simplified state rows by zero.
    let text = esr_core::scenario::SCENARIO_SIMPLIFIED3_APPENDIXC
        .replace("u0 = [1e-5, 1e-5, 1e-5]", "u0 = [1e-5, 0.0, 1e-5]");
    let path = dir.join("bad.toml");
    std::fs::write(&path, text).unwrap();
    let output = run(bin()
        .args(["simulate-char", "--scenario"])
        .arg(&path)
        .args(["--out"])
        .arg(dir.join("bad.csv")));
    assert_eq!(output.status.code(), Some(3), "{}", String::from_utf8_lossy(&output.stderr));
}

#[test]
fn eigen_report_is_deterministic_and_passes() {
    let mut first = None;
    for _ in 0..2 {
        let output = run(bin().args([
            "eigen-report",
            "--scenario",
            "full8-randomized",
            "--samples",
            "100",
            "--seed",
            "11",
        ]));
        assert_eq!(output.status.code(), Some(0), "{}", String::from_utf8_lossy(&output.stderr));
        // Drop the wall-time line; everything else must match bytewise.
        let body: String = String::from_utf8(output.stdout)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("wall_time_s"))
            .collect::<Vec<_>>()
            .join("\n");
        assert!(body.contains("min_rank: 8"));
        match &first {
            None => first = Some(body),
            Some(prev) => assert_eq!(prev, &body, "report not deterministic"),
        }
    }
}

#[test]
fn epsilon_sweep_passes_and_writes_members() {
    let dir = workdir("sweep");
    let output = run(bin()
        .args([
            "epsilon-sweep",
            "--scenario",
            "full8-randomized",
            "--epsilons",
            "1e-5,1,100",
            "--out",
        ])
        .arg(&dir));
    assert_eq!(output.status.code(), Some(0), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("u_trajectories_identical: true"));
    for i in 0..3 {
        assert!(dir.join(format!("trajectory_eps_{i}.csv")).exists());
    }
}

#[test]
fn convergence_report_passes_bands() {
    for (problem, stepper) in [("exp-decay", "euler"), ("exp-decay", "rk4")] {
        let output = run(bin().args([
            "convergence-report",
            "--problem",
            problem,
            "--stepper",
            stepper,
        ]));
        assert_eq!(
            output.status.code(),
            Some(0),
            "{problem}/{stepper}: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        assert!(String::from_utf8(output.stdout).unwrap().contains("verdict: PASS"));
    }
}
