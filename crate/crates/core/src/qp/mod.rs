//! Dense convex quadratic programming.
//!
//! Problems have the form
//!
//! ```text
//! minimize    ½ xᵀ P x + qᵀ x
//! subject to  A_eq x = b_eq
//!             lb ≤ x ≤ ub        (±∞ allowed)
//! ```
//!
//! [`QpSolver`] prepares everything that depends only on `P`, `A_eq` and the
//! pattern of finite bounds, so that repeated solves with new `q`, `b_eq`
//! (one per MPC step) skip the expensive factorizations. [`solve_qp`] is the
//! one-shot convenience entry point.

mod solver;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use nalgebra::Cholesky;

use crate::{Error, Matrix, Result, Vector};

pub use solver::QpSolver;

/// A dense convex QP. Construct through [`QpProblem::new`], which checks
/// the invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub p: Matrix,
    pub q: Vector,
    pub a_eq: Matrix,
    pub b_eq: Vector,
    pub lb: Vector,
    pub ub: Vector,
}

impl QpProblem {
    pub fn new(p: Matrix, q: Vector, a_eq: Matrix, b_eq: Vector, lb: Vector, ub: Vector) -> Result<Self> {
        let problem = Self { p, q, a_eq, b_eq, lb, ub };
        problem.check_shapes()?;
        check_hessian(&problem.p)?;
        Ok(problem)
    }

    /// Box-constrained problem without equality constraints.
    pub fn boxed(p: Matrix, q: Vector, lb: Vector, ub: Vector) -> Result<Self> {
        let n = q.len();
        Self::new(p, q, Matrix::zeros(0, n), Vector::zeros(0), lb, ub)
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn m_eq(&self) -> usize {
        self.a_eq.nrows()
    }

    pub fn objective(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x)
    }

    pub(crate) fn check_shapes(&self) -> Result<()> {
        let n = self.q.len();
        if n == 0 {
            return Err(Error::Dimension("QP needs at least one variable".into()));
        }
        if self.p.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "P is {}x{}, expected {}x{}",
                self.p.nrows(),
                self.p.ncols(),
                n,
                n
            )));
        }
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return Err(Error::Dimension(format!(
                "A_eq is {}x{} with {} right-hand sides, expected {} columns",
                self.a_eq.nrows(),
                self.a_eq.ncols(),
                self.b_eq.len(),
                n
            )));
        }
        check_bounds(&self.lb, &self.ub, n)?;
        check_finite("q", self.q.as_slice())?;
        check_finite("b_eq", self.b_eq.as_slice())?;
        check_finite("A_eq", self.a_eq.as_slice())
    }

    /// Plain-text dump for cross-checking against external solvers.
    ///
    /// Each block starts with a header line `<name> <rows> <cols>` followed
    /// by one whitespace-separated row per line; infinite bounds print as
    /// `inf` / `-inf`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# dense QP: minimize 1/2 x'Px + q'x s.t. A_eq x = b_eq, lb <= x <= ub");
        let _ = writeln!(out, "# n = {}, m_eq = {}", self.n(), self.m_eq());
        write_block(&mut out, "P", &self.p);
        write_vector(&mut out, "q", &self.q);
        write_block(&mut out, "A_eq", &self.a_eq);
        write_vector(&mut out, "b_eq", &self.b_eq);
        write_vector(&mut out, "lb", &self.lb);
        write_vector(&mut out, "ub", &self.ub);
        out
    }
}

fn write_block(out: &mut String, name: &str, m: &Matrix) {
    let _ = writeln!(out, "{} {} {}", name, m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        let mut sep = "";
        for c in 0..m.ncols() {
            let _ = write!(out, "{}{}", sep, m[(r, c)]);
            sep = " ";
        }
        out.push('\n');
    }
}

fn write_vector(out: &mut String, name: &str, v: &Vector) {
    let _ = writeln!(out, "{} {} 1", name, v.len());
    for x in v.iter() {
        let _ = writeln!(out, "{}", x);
    }
}

fn check_finite(name: &str, xs: &[f64]) -> Result<()> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::Config(format!("{}[{}] is not finite", name, i))),
        None => Ok(()),
    }
}

pub(crate) fn check_bounds(lb: &Vector, ub: &Vector, n: usize) -> Result<()> {
    if lb.len() != n || ub.len() != n {
        return Err(Error::Dimension(format!(
            "bounds have lengths {} and {}, expected {}",
            lb.len(),
            ub.len(),
            n
        )));
    }
    for i in 0..n {
        if lb[i].is_nan() || ub[i].is_nan() || lb[i] > ub[i] || lb[i] == f64::INFINITY || ub[i] == f64::NEG_INFINITY {
            return Err(Error::Config(format!(
                "invalid bounds for variable {}: [{}, {}]",
                i, lb[i], ub[i]
            )));
        }
    }
    Ok(())
}

/// Symmetric to 1e-10 (relative to the largest entry) and no eigenvalue
/// below -1e-8.
pub(crate) fn check_hessian(p: &Matrix) -> Result<()> {
    check_finite("P", p.as_slice())?;
    let scale = p.amax().max(1.0);
    let asym = (p - p.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(Error::Config(format!("P is not symmetric (max asymmetry {:e})", asym)));
    }
    let n = p.nrows();
    let shift = 1e-8 + 1e-13 * scale * n as f64;
    let shifted = Matrix::from_fn(n, n, |i, j| {
        0.5 * (p[(i, j)] + p[(j, i)]) + if i == j { shift } else { 0.0 }
    });
    if Cholesky::new(shifted).is_none() {
        return Err(Error::Config("P has an eigenvalue below -1e-8".into()));
    }
    Ok(())
}

/// Termination state of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum QpStatus {
    Optimal,
    MaxIter,
    Infeasible,
    Unbounded,
}

impl fmt::Display for QpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QpStatus::Optimal => "optimal",
            QpStatus::MaxIter => "max_iter",
            QpStatus::Infeasible => "infeasible",
            QpStatus::Unbounded => "unbounded",
        })
    }
}

/// Solver parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct QpSettings {
    pub tol_abs: f64,
    pub tol_rel: f64,
    /// Cap on ADMM iterations.
    pub max_iter: usize,
    /// Initial ADMM penalty for inequality rows; equality rows use 1e3 times this.
    pub rho: f64,
    /// Proximal term keeping the ADMM linear system definite.
    pub sigma: f64,
    /// Over-relaxation factor in (0, 2).
    pub alpha: f64,
    /// ADMM accuracy at which the first active-set polish is attempted.
    pub admm_eps: f64,
    /// Ruiz equilibration passes (0 disables scaling).
    pub scaling_iters: usize,
    /// Active-set corrections attempted per polish.
    pub polish_iters: usize,
    pub adaptive_rho: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol_abs: 1e-8,
            tol_rel: 1e-8,
            max_iter: 200_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            admm_eps: 1e-4,
            scaling_iters: 15,
            polish_iters: 40,
            adaptive_rho: true,
        }
    }
}

/// Residuals of the optimality conditions at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KktResiduals {
    /// `‖A_eq x − b_eq‖∞`.
    pub eq_residual: f64,
    /// `max(0, lb − x, x − ub)`.
    pub bound_violation: f64,
    /// ∞-norm of the gradient of the Lagrangian projected onto the feasible
    /// directions of the active bounds.
    pub stationarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vector,
    /// Multipliers of the equality constraints (`Px + q + A_eqᵀν + μ = 0`).
    pub nu: Vector,
    /// Multipliers of the bounds: negative at active lower bounds, positive
    /// at active upper bounds, zero elsewhere.
    pub mu: Vector,
    pub status: QpStatus,
    /// ADMM iterations.
    pub iterations: usize,
    /// Linear solves performed while polishing.
    pub polish_steps: usize,
    pub residuals: KktResiduals,
    pub objective: f64,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

/// Solves a QP from scratch.
pub fn solve_qp(problem: &QpProblem, settings: &QpSettings) -> Result<QpSolution> {
    let solver = QpSolver::new(
        problem.p.clone(),
        problem.a_eq.clone(),
        problem.lb.clone(),
        problem.ub.clone(),
        settings.clone(),
    )?;
    solver.solve(&problem.q, &problem.b_eq)
}

/// Residuals of `x` given explicit multipliers.
pub fn kkt_residuals_with_multipliers(problem: &QpProblem, x: &Vector, nu: &Vector) -> KktResiduals {
    let grad = &problem.p * x + &problem.q + problem.a_eq.transpose() * nu;
    let bound_violation = (0..x.len())
        .map(|i| (problem.lb[i] - x[i]).max(x[i] - problem.ub[i]).max(0.0))
        .fold(0.0, f64::max);
    let mut stationarity: f64 = 0.0;
    for i in 0..x.len() {
        let (lo, hi) = (problem.lb[i], problem.ub[i]);
        let at_lo = x[i] <= lo + active_tol(lo);
        let at_hi = x[i] >= hi - active_tol(hi);
        let v = match (at_lo, at_hi) {
            (true, true) => 0.0,
            (true, false) => (-grad[i]).max(0.0),
            (false, true) => grad[i].max(0.0),
            (false, false) => grad[i].abs(),
        };
        stationarity = stationarity.max(v);
    }
    KktResiduals {
        eq_residual: eq_residual(problem, x),
        bound_violation,
        stationarity,
    }
}

fn eq_residual(problem: &QpProblem, x: &Vector) -> f64 {
    if problem.m_eq() == 0 {
        0.0
    } else {
        (&problem.a_eq * x - &problem.b_eq).amax()
    }
}

fn active_tol(bound: f64) -> f64 {
    1e-9 * bound.abs().max(1.0)
}

/// Residuals of `x` with equality multipliers fitted by least squares on the
/// coordinates that are not at a bound.
pub fn kkt_residuals(problem: &QpProblem, x: &Vector) -> Result<KktResiduals> {
    if x.len() != problem.n() {
        return Err(Error::Dimension(format!(
            "point has {} entries, problem has {} variables",
            x.len(),
            problem.n()
        )));
    }
    let m = problem.m_eq();
    let nu = if m == 0 {
        Vector::zeros(0)
    } else {
        let free: Vec<usize> = (0..x.len())
            .filter(|&i| {
                x[i] > problem.lb[i] + active_tol(problem.lb[i])
                    && x[i] < problem.ub[i] - active_tol(problem.ub[i])
            })
            .collect();
        if free.is_empty() {
            Vector::zeros(m)
        } else {
            let g = &problem.p * x + &problem.q;
            let at = problem.a_eq.transpose().select_rows(free.iter());
            let rhs = -g.select_rows(free.iter());
            let pinv = crate::hankel::pinv(&at, crate::hankel::default_rel_tol(at.nrows(), at.ncols()))?;
            pinv * rhs
        }
    };
    Ok(kkt_residuals_with_multipliers(problem, x, &nu))
}

#[cfg(test)]
mod tests;
