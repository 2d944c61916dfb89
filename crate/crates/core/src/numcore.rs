//! Small dense linear algebra and explicit ODE integration.
//!
//! Everything here is sized for 8x8 systems and below; matrices are plain
//! row-major `Vec<f64>` with partial-pivoting LU behind the solve and
//! determinant routines.

use thiserror::Error;

pub type Vector = Vec<f64>;

/// Relative pivot magnitude below which a solve refuses to continue.
pub const SINGULARITY_THRESHOLD: f64 = 1e-14;
/// Relative pivot magnitude below which a matrix counts as rank deficient
/// for null-vector extraction. One decade above the solve tolerance.
pub const RANK_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum NumError {
    #[error("matrix dimensions invalid: {0} x {1}")]
    InvalidDimensions(usize, usize),
    #[error("non-finite entry at index {0}")]
    NonFiniteEntry(usize),
    #[error("matrix is singular (pivot {pivot:.3e} below threshold {threshold:.3e})")]
    SingularMatrix { pivot: f64, threshold: f64 },
    #[error("matrix has full numerical rank, no null vector")]
    FullRank,
    #[error("rank deficiency exceeds 1 ({deficient} small pivots)")]
    RankDeficiencyTooHigh { deficient: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("state became non-finite at s = {s} (last good sample kept)")]
    NonFiniteState { s: f64, last_good: (f64, Vector) },
    #[error("adaptive step size underflow at s = {s} (h = {h:.3e} < h_min)")]
    StepUnderflow { s: f64, h: f64 },
    #[error("invalid stepper configuration: {0}")]
    InvalidStepper(String),
    #[error("rhs evaluation failed at s = {s}: {message}")]
    Rhs { s: f64, message: String },
    #[error("need at least 3 halving step sizes for an order estimate")]
    InvalidStepList,
}

pub type Result<T> = std::result::Result<T, NumError>;

/// Dense row-major matrix. Entries are validated finite on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(NumError::InvalidDimensions(rows, cols));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(NumError::NonFiniteEntry(i));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn set_row(&mut self, r: usize, values: &[f64]) {
        self.data[r * self.cols..(r + 1) * self.cols].copy_from_slice(values);
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|r| self.row(r).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vector {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn mat_mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    out.set(r, c, out.get(r, c) + a * other.get(k, c));
                }
            }
        }
        out
    }

    /// self - scale * other, entrywise.
    pub fn sub_scaled(&self, other: &Matrix, scale: f64) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - scale * b)
            .collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    /// self + scale * other, entrywise.
    pub fn add_scaled(&self, other: &Matrix, scale: f64) -> Matrix {
        self.sub_scaled(other, -scale)
    }
}

pub fn norm_inf_vec(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct LuFactors {
    lu: Matrix,
    perm: Vec<usize>,
    sign: f64,
}

/// Partial-pivoting LU. Never fails; callers inspect the pivots.
fn lu_decompose(m: &Matrix) -> LuFactors {
    let n = m.rows;
    let mut lu = m.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;
    for k in 0..n {
        let mut p = k;
        let mut best = lu.get(k, k).abs();
        for r in k + 1..n {
            let v = lu.get(r, k).abs();
            if v > best {
                best = v;
                p = r;
            }
        }
        if p != k {
            for c in 0..n {
                let tmp = lu.get(k, c);
                lu.set(k, c, lu.get(p, c));
                lu.set(p, c, tmp);
            }
            perm.swap(k, p);
            sign = -sign;
        }
        let pivot = lu.get(k, k);
        if pivot == 0.0 {
            continue;
        }
        for r in k + 1..n {
            let factor = lu.get(r, k) / pivot;
            lu.set(r, k, factor);
            for c in k + 1..n {
                lu.set(r, c, lu.get(r, c) - factor * lu.get(k, c));
            }
        }
    }
    LuFactors { lu, perm, sign }
}

fn lu_solve_factored(f: &LuFactors, b: &[f64]) -> Vector {
    let n = f.lu.rows;
    let mut y: Vector = (0..n).map(|i| b[f.perm[i]]).collect();
    for i in 1..n {
        for j in 0..i {
            y[i] -= f.lu.get(i, j) * y[j];
        }
    }
    for i in (0..n).rev() {
        for j in i + 1..n {
            y[i] -= f.lu.get(i, j) * y[j];
        }
        y[i] /= f.lu.get(i, i);
    }
    y
}

/// Solve m x = b by LU with partial pivoting.
///
/// Errors with `SingularMatrix` when any pivot falls below
/// `SINGULARITY_THRESHOLD * ||m||_inf`; for the reactor matrices this means
/// the state has left the admissible region.
pub fn lu_factor_solve(m: &Matrix, b: &[f64]) -> Result<Vector> {
    if m.rows != m.cols {
        return Err(NumError::InvalidDimensions(m.rows, m.cols));
    }
    if b.len() != m.rows {
        return Err(NumError::DimensionMismatch { expected: m.rows, got: b.len() });
    }
    let norm = m.norm_inf();
    let threshold = SINGULARITY_THRESHOLD * norm;
    let f = lu_decompose(m);
    for k in 0..m.rows {
        let pivot = f.lu.get(k, k).abs();
        if pivot < threshold || pivot == 0.0 {
            return Err(NumError::SingularMatrix { pivot, threshold });
        }
    }
    Ok(lu_solve_factored(&f, b))
}

/// Determinant via LU with pivot-sign tracking. Returns 0.0 for matrices
/// that are singular to working precision.
pub fn determinant(m: &Matrix) -> f64 {
    assert_eq!(m.rows, m.cols, "determinant needs a square matrix");
    let threshold = SINGULARITY_THRESHOLD * m.norm_inf();
    let f = lu_decompose(m);
    let mut det = f.sign;
    for k in 0..m.rows {
        let pivot = f.lu.get(k, k);
        if pivot.abs() < threshold {
            return 0.0;
        }
        det *= pivot;
    }
    det
}

/// Numerical rank via LU pivot counting against `RANK_THRESHOLD`.
pub fn numerical_rank(m: &Matrix) -> usize {
    let threshold = RANK_THRESHOLD * m.norm_inf();
    let f = lu_decompose(m);
    (0..m.rows.min(m.cols))
        .filter(|&k| f.lu.get(k, k).abs() >= threshold)
        .count()
}

/// Left null vector of a square matrix with numerical rank deficiency 1:
/// returns l != 0 with l^T m ~ 0, normalized so its last nonzero entry is 1.
pub fn left_null_vector(m: &Matrix) -> Result<Vector> {
    if m.rows != m.cols {
        return Err(NumError::InvalidDimensions(m.rows, m.cols));
    }
    let n = m.rows;
    let threshold = RANK_THRESHOLD * m.norm_inf();
    // l^T m = 0 is m^T l = 0; with m^T = P L U the kernel lives in U.
    let f = lu_decompose(&m.transpose());
    let small: Vec<usize> = (0..n)
        .filter(|&k| f.lu.get(k, k).abs() < threshold)
        .collect();
    match small.len() {
        0 => return Err(NumError::FullRank),
        1 => {}
        d => return Err(NumError::RankDeficiencyTooHigh { deficient: d }),
    }
    let j = small[0];
    let mut l = vec![0.0; n];
    l[j] = 1.0;
    for i in (0..j).rev() {
        let s: f64 = (i + 1..=j).map(|k| f.lu.get(i, k) * l[k]).sum();
        l[i] = -s / f.lu.get(i, i);
    }
    // Normalize the last nonzero entry to 1.
    let last = l
        .iter()
        .rposition(|v| v.abs() > 1e-300)
        .expect("null vector cannot be zero");
    let scale = l[last];
    for v in &mut l {
        *v /= scale;
    }
    Ok(l)
}

/// Right-hand side of an ODE system. The closure may fail, e.g. when an
/// embedded linear solve hits a singular matrix.
pub type RhsFn = Box<dyn Fn(f64, &[f64]) -> std::result::Result<Vector, String> + Send + Sync>;

pub struct OdeProblem {
    pub dimension: usize,
    pub rhs: RhsFn,
    pub s0: f64,
    pub y0: Vector,
}

impl OdeProblem {
    pub fn new(dimension: usize, s0: f64, y0: Vector, rhs: RhsFn) -> Self {
        assert_eq!(y0.len(), dimension);
        Self { dimension, rhs, s0, y0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepperKind {
    Euler,
    Midpoint,
    Rk4,
    Rk45Adaptive { rel_tol: f64, abs_tol: f64, h_min: f64, h_max: f64 },
}

impl StepperKind {
    pub fn is_fixed_step(&self) -> bool {
        !matches!(self, StepperKind::Rk45Adaptive { .. })
    }

    pub fn theoretical_order(&self) -> f64 {
        match self {
            StepperKind::Euler => 1.0,
            StepperKind::Midpoint => 2.0,
            StepperKind::Rk4 => 4.0,
            StepperKind::Rk45Adaptive { .. } => 5.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if let StepperKind::Rk45Adaptive { rel_tol, abs_tol, h_min, h_max } = *self {
            if rel_tol <= 0.0 || abs_tol <= 0.0 {
                return Err(NumError::InvalidStepper("tolerances must be positive".into()));
            }
            if h_min > h_max || h_min <= 0.0 {
                return Err(NumError::InvalidStepper("need 0 < h_min <= h_max".into()));
            }
        }
        Ok(())
    }
}

/// Ordered integration samples plus step bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<(f64, Vector)>,
    pub accepted: usize,
    pub rejected: usize,
}

impl Trajectory {
    pub fn last(&self) -> &(f64, Vector) {
        self.samples.last().expect("trajectory holds at least the initial sample")
    }
}

fn eval(problem: &OdeProblem, s: f64, y: &[f64]) -> Result<Vector> {
    let d = (problem.rhs)(s, y).map_err(|message| NumError::Rhs { s, message })?;
    if d.len() != problem.dimension {
        return Err(NumError::DimensionMismatch { expected: problem.dimension, got: d.len() });
    }
    Ok(d)
}

fn axpy(y: &[f64], h: f64, d: &[f64]) -> Vector {
    y.iter().zip(d).map(|(a, b)| a + h * b).collect()
}

fn fixed_step(problem: &OdeProblem, kind: StepperKind, s: f64, y: &[f64], h: f64) -> Result<Vector> {
    match kind {
        StepperKind::Euler => {
            let k1 = eval(problem, s, y)?;
            Ok(axpy(y, h, &k1))
        }
        StepperKind::Midpoint => {
            let k1 = eval(problem, s, y)?;
            let k2 = eval(problem, s + 0.5 * h, &axpy(y, 0.5 * h, &k1))?;
            Ok(axpy(y, h, &k2))
        }
        StepperKind::Rk4 => {
            let k1 = eval(problem, s, y)?;
            let k2 = eval(problem, s + 0.5 * h, &axpy(y, 0.5 * h, &k1))?;
            let k3 = eval(problem, s + 0.5 * h, &axpy(y, 0.5 * h, &k2))?;
            let k4 = eval(problem, s + h, &axpy(y, h, &k3))?;
            Ok(y.iter()
                .enumerate()
                .map(|(i, v)| v + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                .collect())
        }
        StepperKind::Rk45Adaptive { .. } => unreachable!("adaptive handled separately"),
    }
}

// Fehlberg 4(5) tableau.
const FB_A: [[f64; 5]; 5] = [
    [1.0 / 4.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 32.0, 9.0 / 32.0, 0.0, 0.0, 0.0],
    [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0, 0.0, 0.0],
    [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0, 0.0],
    [-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
];
const FB_C: [f64; 6] = [0.0, 1.0 / 4.0, 3.0 / 8.0, 12.0 / 13.0, 1.0, 1.0 / 2.0];
const FB_B5: [f64; 6] =
    [16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0];
const FB_B4: [f64; 6] =
    [25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -1.0 / 5.0, 0.0];

/// Integrate `problem` from s0 to s_end.
///
/// Fixed-step kinds take `h` literally (the final step is shortened to land
/// on s_end); the adaptive kind uses `h` as its initial step size and keeps
/// the embedded error estimate below max(abs_tol, rel_tol * ||y||_inf).
pub fn integrate(problem: &OdeProblem, stepper: StepperKind, s_end: f64, h: f64) -> Result<Trajectory> {
    stepper.validate()?;
    if s_end <= problem.s0 {
        return Err(NumError::InvalidStepper("s_end must exceed s0".into()));
    }
    if stepper.is_fixed_step() && h <= 0.0 {
        return Err(NumError::InvalidStepper("fixed-step h must be positive".into()));
    }
    let mut s = problem.s0;
    let mut y = problem.y0.clone();
    let mut traj = Trajectory { samples: vec![(s, y.clone())], accepted: 0, rejected: 0 };

    let check_finite = |s: f64, y: &[f64], traj: &Trajectory| -> Result<()> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(NumError::NonFiniteState { s, last_good: traj.last().clone() });
        }
        Ok(())
    };

    match stepper {
        StepperKind::Rk45Adaptive { rel_tol, abs_tol, h_min, h_max } => {
            let mut hs = h.clamp(h_min, h_max);
            while s < s_end {
                if s + hs > s_end {
                    hs = s_end - s;
                }
                let mut k: Vec<Vector> = Vec::with_capacity(6);
                k.push(eval(problem, s, &y)?);
                for i in 0..5 {
                    let mut yi = y.clone();
                    for (j, kj) in k.iter().enumerate() {
                        let a = FB_A[i][j];
                        if a != 0.0 {
                            for (v, d) in yi.iter_mut().zip(kj) {
                                *v += hs * a * d;
                            }
                        }
                    }
                    k.push(eval(problem, s + FB_C[i + 1] * hs, &yi)?);
                }
                let mut y5 = y.clone();
                let mut err = 0.0f64;
                for i in 0..y.len() {
                    let mut d5 = 0.0;
                    let mut d4 = 0.0;
                    for j in 0..6 {
                        d5 += FB_B5[j] * k[j][i];
                        d4 += FB_B4[j] * k[j][i];
                    }
                    y5[i] += hs * d5;
                    err = err.max((hs * (d5 - d4)).abs());
                }
                let tol = abs_tol.max(rel_tol * norm_inf_vec(&y));
                if err <= tol || hs <= h_min {
                    if err > tol {
                        // h_min reached without meeting the tolerance.
                        return Err(NumError::StepUnderflow { s, h: hs });
                    }
                    s += hs;
                    check_finite(s, &y5, &traj)?;
                    y = y5;
                    traj.samples.push((s, y.clone()));
                    traj.accepted += 1;
                } else {
                    traj.rejected += 1;
                }
                let factor = if err > 0.0 { 0.9 * (tol / err).powf(0.2) } else { 2.0 };
                hs = (hs * factor.clamp(0.1, 4.0)).clamp(h_min, h_max);
            }
        }
        _ => {
            while s < s_end {
                let hs = h.min(s_end - s);
                let y_next = fixed_step(problem, stepper, s, &y, hs)?;
                s += hs;
                check_finite(s, &y_next, &traj)?;
                y = y_next;
                traj.samples.push((s, y.clone()));
                traj.accepted += 1;
            }
        }
    }
    Ok(traj)
}

/// Least-squares slope of log(error) against log(h); the observed order
/// of a method given errors measured at matching step sizes.
pub fn fit_order(h_list: &[f64], errors: &[f64]) -> Result<f64> {
    if h_list.len() < 2 || h_list.len() != errors.len() {
        return Err(NumError::InvalidStepList);
    }
    let points: Vec<(f64, f64)> = h_list
        .iter()
        .zip(errors)
        .map(|(h, e)| (h.ln(), e.max(1e-300).ln()))
        .collect();
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    Ok((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

/// Observed convergence order of a stepper against a known solution.
///
/// Runs each step size in `h_list` (at least three, each halving the last)
/// and returns the least-squares slope of log(error at s_end) vs log(h).
pub fn estimate_order(
    problem_factory: &dyn Fn() -> OdeProblem,
    exact: &dyn Fn(f64) -> Vector,
    stepper: StepperKind,
    s_end: f64,
    h_list: &[f64],
) -> Result<f64> {
    if h_list.len() < 3 {
        return Err(NumError::InvalidStepList);
    }
    for w in h_list.windows(2) {
        if (w[1] - 0.5 * w[0]).abs() > 1e-12 * w[0] {
            return Err(NumError::InvalidStepList);
        }
    }
    let mut errors = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let problem = problem_factory();
        let traj = integrate(&problem, stepper, s_end, h)?;
        let (s, y) = traj.last();
        let reference = exact(*s);
        let err: f64 = y
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        errors.push(err);
    }
    fit_order(h_list, &errors)
}
