//! Predictive controllers.
//!
//! Every controller is built once from an [`IdDataset`] and then plans from
//! an initialization window, a disturbance forecast and a reference, all in
//! normalized coordinates. Stacked trajectory vectors interleave channels per
//! time step, the same order as the Hankel block rows, so an `n × steps`
//! matrix flattens column-major into its stacked vector.
//!
//! Window alignment: at planning time `k` the window holds `u`, `w` for steps
//! `k - t_ini .. k - 1` and the outputs those steps produced (`y` at index
//! `t` is the output measured after `u[t]` acted). The plan covers inputs
//! `k .. k + t_f - 1` and the outputs they produce.

mod arx;
mod basic;
mod bilevel;
mod iv;

use alloc::boxed::Box;
use alloc::format;
use core::fmt;
use core::str::FromStr;

use crate::data::{IdDataset, Scaler};
use crate::qp::{KktResiduals, QpSettings, QpSolution, QpSolver, QpStatus};
use crate::{Error, Matrix, Result, Vector};

pub use arx::{identify_arx, ArxModel, ArxMpc};
pub use basic::HankelDeepc;
pub use bilevel::{causal_mask, BilevelDeepc};
pub use iv::IvDeepc;

/// The five controller variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ControllerKind {
    /// Quadratically regularized DeePC.
    Basic,
    /// Orthogonal-projection DeePC.
    Op,
    /// Bi-level DeePC.
    Bl,
    /// Instrumental-variable DeePC.
    Iv,
    /// MPC on an ARX model.
    Arx,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 5] = [
        ControllerKind::Basic,
        ControllerKind::Op,
        ControllerKind::Bl,
        ControllerKind::Iv,
        ControllerKind::Arx,
    ];

    /// The four controllers of the headline comparison.
    pub const COMPARED: [ControllerKind; 4] = [
        ControllerKind::Op,
        ControllerKind::Bl,
        ControllerKind::Iv,
        ControllerKind::Arx,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Basic => "basic",
            ControllerKind::Op => "op",
            ControllerKind::Bl => "bl",
            ControllerKind::Iv => "iv",
            ControllerKind::Arx => "arx",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ControllerKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown controller '{}' (expected basic, op, bl, iv or arx)", s)))
    }
}

/// Horizons, weights and input bounds shared by all controllers.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ControllerConfig {
    /// Initialization window length in steps.
    pub t_ini: usize,
    /// Prediction horizon in steps.
    pub t_f: usize,
    /// Weight of `‖g‖²` in basic DeePC. Has no default; basic DeePC refuses
    /// to build without it.
    pub lambda: Option<f64>,
    /// Weight of `‖(I - Π) g‖²` in orthogonal-projection DeePC.
    pub lambda_g: f64,
    /// Output-noise relaxation added to `Y_pᵀ Y_p` in bi-level DeePC.
    pub eps_g: f64,
    /// Small quadratic weight on all bi-level decision variables.
    pub tiny_reg: f64,
    /// Input bounds in physical units (W); infinite values disable a side.
    pub u_min: f64,
    pub u_max: f64,
    /// Accept a rank-deficient ARX regressor matrix and use the minimum-norm
    /// least-squares fit. Noise-free data from a plant of lower order than
    /// `t_ini` is always rank deficient. Off by default, so collinear
    /// regressors are reported as an error.
    pub arx_min_norm: bool,
    pub qp: QpSettings,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            t_ini: 6,
            t_f: 48,
            lambda: None,
            lambda_g: 1e5,
            eps_g: 0.03,
            tiny_reg: 1e-10,
            u_min: 0.0,
            u_max: 600.0,
            arx_min_norm: false,
            qp: QpSettings::default(),
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_ini == 0 || self.t_f == 0 {
            return Err(Error::Config(format!(
                "t_ini and t_f must be at least 1, got {} and {}",
                self.t_ini, self.t_f
            )));
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Config(format!("lambda must be positive, got {}", l)));
            }
        }
        if !(self.lambda_g > 0.0 && self.lambda_g.is_finite()) {
            return Err(Error::Config(format!("lambda_g must be positive, got {}", self.lambda_g)));
        }
        if !(self.eps_g >= 0.0 && self.eps_g.is_finite()) {
            return Err(Error::Config(format!("eps_g must be non-negative, got {}", self.eps_g)));
        }
        if !(self.tiny_reg >= 0.0 && self.tiny_reg.is_finite()) {
            return Err(Error::Config(format!("tiny_reg must be non-negative, got {}", self.tiny_reg)));
        }
        if self.u_min.is_nan() || self.u_max.is_nan() || self.u_min > self.u_max {
            return Err(Error::Config(format!(
                "invalid input bounds [{}, {}]",
                self.u_min, self.u_max
            )));
        }
        Ok(())
    }
}

/// Normalized initialization window, one column per step.
#[derive(Debug, Clone, PartialEq)]
pub struct IniWindow {
    pub u: Matrix,
    pub w: Matrix,
    pub y: Matrix,
}

impl IniWindow {
    pub fn new(u: Matrix, w: Matrix, y: Matrix) -> Result<Self> {
        if u.ncols() != w.ncols() || u.ncols() != y.ncols() || u.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "initialization window lengths differ or are zero: u {}, w {}, y {}",
                u.ncols(),
                w.ncols(),
                y.ncols()
            )));
        }
        Ok(Self { u, w, y })
    }

    pub fn len(&self) -> usize {
        self.u.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.u.ncols() == 0
    }
}

/// Scalers of the identification data.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub u: Scaler,
    pub w: Scaler,
    pub y: Scaler,
}

impl Normalization {
    pub fn from_dataset(dataset: &IdDataset) -> Self {
        Self {
            u: dataset.scaler_u.clone(),
            w: dataset.scaler_w.clone(),
            y: dataset.scaler_y.clone(),
        }
    }

    /// Normalizes a physical initialization window.
    pub fn ini(&self, u: &Matrix, w: &Matrix, y: &Matrix) -> Result<IniWindow> {
        self.check(u, w, y)?;
        IniWindow::new(self.u.apply_matrix(u), self.w.apply_matrix(w), self.y.apply_matrix(y))
    }

    fn check(&self, u: &Matrix, w: &Matrix, y: &Matrix) -> Result<()> {
        if u.nrows() != self.u.channels() || w.nrows() != self.w.channels() || y.nrows() != self.y.channels() {
            return Err(Error::Dimension(format!(
                "window has {}/{}/{} channels, scalers expect {}/{}/{}",
                u.nrows(),
                w.nrows(),
                y.nrows(),
                self.u.channels(),
                self.w.channels(),
                self.y.channels()
            )));
        }
        Ok(())
    }
}

/// Multi-step predictor `y = P_u u + p_0` in normalized stacked coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePredictor {
    pub p_u: Matrix,
    pub p_0: Vector,
}

impl AffinePredictor {
    pub fn predict(&self, u: &Vector) -> Result<Vector> {
        if u.len() != self.p_u.ncols() {
            return Err(Error::Dimension(format!(
                "input plan has {} entries, predictor expects {}",
                u.len(),
                self.p_u.ncols()
            )));
        }
        Ok(&self.p_u * u + &self.p_0)
    }
}

/// Solver output and controller-specific internals of one plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanDiagnostics {
    pub status: QpStatus,
    pub iterations: usize,
    pub polish_steps: usize,
    pub residuals: KktResiduals,
    /// `‖y - y_ref‖²` in normalized units.
    pub tracking_cost: f64,
    /// Trajectory-combination vector (Hankel-based controllers).
    pub g: Option<Vector>,
    /// Multipliers of the inner identification problem (bi-level).
    pub kappa: Option<Vector>,
    /// Nominal input and causal disturbance feedback (bi-level).
    pub u_bar: Option<Vector>,
    pub k_gain: Option<Matrix>,
    /// `‖(Y_pᵀY_p + ε_g I) g + Hᵀκ - Y_pᵀ y_ini‖∞` (bi-level).
    pub inner_stationarity: Option<f64>,
}

impl PlanDiagnostics {
    fn from_solution(sol: &QpSolution, tracking_cost: f64) -> Self {
        Self {
            status: sol.status,
            iterations: sol.iterations,
            polish_steps: sol.polish_steps,
            residuals: sol.residuals,
            tracking_cost,
            g: None,
            kappa: None,
            u_bar: None,
            k_gain: None,
            inner_stationarity: None,
        }
    }
}

/// A planned input and output trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    /// Inputs in W, `n_u × t_f`.
    pub u: Matrix,
    /// Predicted outputs in °C, `n_y × t_f`.
    pub y: Matrix,
    pub u_norm: Vector,
    pub y_norm: Vector,
    pub diagnostics: PlanDiagnostics,
}

impl Plan {
    /// The input applied under a receding horizon (first step).
    pub fn first_input(&self) -> f64 {
        self.u[(0, 0)]
    }
}

/// Common interface of all controllers. Planning is a pure function of its
/// arguments, so one controller can serve several threads.
pub trait Controller: Send + Sync + fmt::Debug {
    fn kind(&self) -> ControllerKind;

    fn config(&self) -> &ControllerConfig;

    fn normalization(&self) -> &Normalization;

    /// Plans in normalized coordinates: `w_f` is `n_w × t_f`, `y_ref` is
    /// `n_y × t_f`.
    fn plan(&self, ini: &IniWindow, w_f: &Matrix, y_ref: &Matrix) -> Result<Plan>;

    /// Normalized output prediction for a given stacked input plan, with
    /// the input constraints ignored.
    fn predict(&self, ini: &IniWindow, w_f: &Matrix, u: &Vector) -> Result<Vector>;
}

/// Builds a controller of the requested kind.
pub fn build_controller(
    kind: ControllerKind,
    dataset: &IdDataset,
    config: &ControllerConfig,
) -> Result<Box<dyn Controller>> {
    Ok(match kind {
        ControllerKind::Basic => Box::new(HankelDeepc::basic(dataset, config)?),
        ControllerKind::Op => Box::new(HankelDeepc::orthogonal_projection(dataset, config)?),
        ControllerKind::Bl => Box::new(BilevelDeepc::new(dataset, config)?),
        ControllerKind::Iv => Box::new(IvDeepc::new(dataset, config)?),
        ControllerKind::Arx => Box::new(ArxMpc::new(dataset, config)?),
    })
}

/// Stacked dimensions and checks shared by all controllers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Layout {
    pub n_u: usize,
    pub n_w: usize,
    pub n_y: usize,
    pub t_ini: usize,
    pub t_f: usize,
}

impl Layout {
    pub fn new(dataset: &IdDataset, config: &ControllerConfig) -> Self {
        Self {
            n_u: dataset.n_u(),
            n_w: dataset.n_w(),
            n_y: dataset.n_y(),
            t_ini: config.t_ini,
            t_f: config.t_f,
        }
    }

    pub fn u_len(&self) -> usize {
        self.n_u * self.t_f
    }

    pub fn y_len(&self) -> usize {
        self.n_y * self.t_f
    }

    pub fn check(&self, ini: &IniWindow, w_f: &Matrix) -> Result<()> {
        let want = (self.n_u, self.n_w, self.n_y, self.t_ini);
        let got = (ini.u.nrows(), ini.w.nrows(), ini.y.nrows(), ini.len());
        if want != got || ini.w.ncols() != self.t_ini || ini.y.ncols() != self.t_ini {
            return Err(Error::Dimension(format!(
                "initialization window is {}/{}/{} channels x {} steps, expected {}/{}/{} x {}",
                got.0, got.1, got.2, got.3, want.0, want.1, want.2, want.3
            )));
        }
        if w_f.shape() != (self.n_w, self.t_f) {
            return Err(Error::Dimension(format!(
                "forecast is {}x{}, expected {}x{}",
                w_f.nrows(),
                w_f.ncols(),
                self.n_w,
                self.t_f
            )));
        }
        Ok(())
    }

    pub fn check_ref(&self, y_ref: &Matrix) -> Result<()> {
        if y_ref.shape() != (self.n_y, self.t_f) {
            return Err(Error::Dimension(format!(
                "reference is {}x{}, expected {}x{}",
                y_ref.nrows(),
                y_ref.ncols(),
                self.n_y,
                self.t_f
            )));
        }
        Ok(())
    }

    pub fn check_u(&self, u: &Vector) -> Result<()> {
        if u.len() != self.u_len() {
            return Err(Error::Dimension(format!(
                "input plan has {} entries, expected {}",
                u.len(),
                self.u_len()
            )));
        }
        Ok(())
    }

    /// Normalized lower and upper bounds of the stacked future inputs.
    pub fn input_bounds(&self, norm: &Normalization, config: &ControllerConfig) -> (Vector, Vector) {
        let lb = Vector::from_fn(self.u_len(), |i, _| norm.u.apply_value(i % self.n_u, config.u_min));
        let ub = Vector::from_fn(self.u_len(), |i, _| norm.u.apply_value(i % self.n_u, config.u_max));
        (lb, ub)
    }
}

pub(crate) fn stack(m: &Matrix) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

pub(crate) fn unstack(v: &Vector, channels: usize) -> Matrix {
    Matrix::from_column_slice(channels, v.len() / channels, v.as_slice())
}

/// Solves and turns any non-optimal status into [`Error::Solver`].
pub(crate) fn solve_checked(solver: &QpSolver, q: &Vector, b: &Vector) -> Result<QpSolution> {
    let sol = solver.solve(q, b)?;
    if sol.is_optimal() {
        Ok(sol)
    } else {
        Err(Error::Solver {
            status: sol.status,
            iterations: sol.iterations,
            problem: Box::new(solver.problem(q, b)),
        })
    }
}

/// Assembles a plan from normalized stacked `u`, `y`.
pub(crate) fn make_plan(
    layout: &Layout,
    norm: &Normalization,
    u_norm: Vector,
    y_norm: Vector,
    diagnostics: PlanDiagnostics,
) -> Plan {
    let u = norm.u.invert_matrix(&unstack(&u_norm, layout.n_u));
    let y = norm.y.invert_matrix(&unstack(&y_norm, layout.n_y));
    Plan {
        u,
        y,
        u_norm,
        y_norm,
        diagnostics,
    }
}

/// Tracking QP over the inputs only, through an affine predictor:
/// `min ‖P_u u + p_0 - y_ref‖²` subject to the input box.
pub(crate) fn tracking_hessian(p_u: &Matrix) -> Matrix {
    let h = p_u.tr_mul(p_u) * 2.0;
    (&h + h.transpose()) * 0.5
}

pub(crate) fn tracking_cost(y: &Vector, y_ref: &Vector) -> f64 {
    (y - y_ref).norm_squared()
}
