//! ARX model identification and the MPC built on it.
//!
//! The regressor for the output at step `t` is
//! `φ(t) = [y(t-1) .. y(t-T); u(t-T+1) .. u(t); w(t-T+1) .. w(t)]`
//! (outputs newest first, inputs and disturbances oldest first, channels
//! adjacent within a step), so a window of `T` past outputs predicts the next
//! one from the last `T - 1` past inputs plus the current input.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{
    make_plan, solve_checked, stack, tracking_cost, AffinePredictor, Controller, ControllerConfig, ControllerKind,
    IniWindow, Layout, Normalization, Plan, PlanDiagnostics,
};
use crate::data::{IdDataset, TimeSeries};
use crate::hankel::{default_rel_tol, numerical_rank, pinv};
use crate::qp::QpSolver;
use crate::{Error, Matrix, Result, Vector};

/// Linear ARX model without intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct ArxModel {
    pub t_ini: usize,
    pub n_u: usize,
    pub n_w: usize,
    pub n_y: usize,
    /// `n_regressors × n_y`; column `c` predicts output channel `c`.
    pub theta: Matrix,
}

/// Identifies an ARX model on the normalized dataset.
pub fn identify_arx(dataset: &IdDataset, t_ini: usize, min_norm: bool) -> Result<ArxModel> {
    let (u, w, y) = dataset.normalized()?;
    if min_norm {
        ArxModel::fit_min_norm(&u, &w, &y, t_ini)
    } else {
        ArxModel::fit(&u, &w, &y, t_ini)
    }
}

impl ArxModel {
    pub fn n_regressors(&self) -> usize {
        self.t_ini * (self.n_y + self.n_u + self.n_w)
    }

    /// Ordinary least squares `θ = Φ† Y` on the given series. Collinear
    /// regressors are an error.
    pub fn fit(u: &TimeSeries, w: &TimeSeries, y: &TimeSeries, t_ini: usize) -> Result<Self> {
        Self::fit_impl(u, w, y, t_ini, false)
    }

    /// Minimum-norm least squares, accepting collinear regressors.
    pub fn fit_min_norm(u: &TimeSeries, w: &TimeSeries, y: &TimeSeries, t_ini: usize) -> Result<Self> {
        Self::fit_impl(u, w, y, t_ini, true)
    }

    fn fit_impl(u: &TimeSeries, w: &TimeSeries, y: &TimeSeries, t_ini: usize, min_norm: bool) -> Result<Self> {
        if t_ini == 0 {
            return Err(Error::Config("ARX order must be at least 1".into()));
        }
        if u.len() != w.len() || u.len() != y.len() {
            return Err(Error::Dimension(format!(
                "u, w, y lengths differ: {}, {}, {}",
                u.len(),
                w.len(),
                y.len()
            )));
        }
        let shell = Self {
            t_ini,
            n_u: u.channels(),
            n_w: w.channels(),
            n_y: y.channels(),
            theta: Matrix::zeros(0, 0),
        };
        let n_reg = shell.n_regressors();
        if y.len() <= t_ini + n_reg {
            return Err(Error::Dimension(format!(
                "ARX fit with {} regressors needs more than {} samples, got {}",
                n_reg,
                t_ini + n_reg,
                y.len()
            )));
        }
        let (phi, target) = shell.regression(u.values(), w.values(), y.values());
        let tol = default_rel_tol(phi.nrows(), phi.ncols());
        let rank = numerical_rank(&phi, tol)?;
        if rank < n_reg && !min_norm {
            return Err(Error::Numerical(format!(
                "ARX regressors are collinear (rank {} of {}): {}",
                rank,
                n_reg,
                shell.collinear_names(&phi, tol)?.join(", ")
            )));
        }
        let theta = pinv(&phi, tol)? * target;
        Ok(Self { theta, ..shell })
    }

    /// Regressor matrix and targets for all steps with a full history.
    pub fn regression(&self, u: &Matrix, w: &Matrix, y: &Matrix) -> (Matrix, Matrix) {
        let t = self.t_ini;
        let rows = y.ncols() - t;
        let mut phi = Matrix::zeros(rows, self.n_regressors());
        let mut target = Matrix::zeros(rows, self.n_y);
        for (r, step) in (t..y.ncols()).enumerate() {
            let row = self.regressor(
                |l, c| y[(c, step - l)],
                |l, c| u[(c, step - l)],
                |l, c| w[(c, step - l)],
            );
            phi.row_mut(r).copy_from(&row.transpose());
            for c in 0..self.n_y {
                target[(r, c)] = y[(c, step)];
            }
        }
        (phi, target)
    }

    /// Builds `φ` from lag accessors `(lag, channel) -> value`; outputs are
    /// queried for lags `1..=T`, inputs and disturbances for `0..T`.
    fn regressor(&self, y: impl Fn(usize, usize) -> f64, u: impl Fn(usize, usize) -> f64, w: impl Fn(usize, usize) -> f64) -> Vector {
        let t = self.t_ini;
        let mut phi = Vector::zeros(self.n_regressors());
        for l in 1..=t {
            for c in 0..self.n_y {
                phi[self.y_index(l, c)] = y(l, c);
            }
        }
        for l in 0..t {
            for c in 0..self.n_u {
                phi[self.u_index(l, c)] = u(l, c);
            }
            for c in 0..self.n_w {
                phi[self.w_index(l, c)] = w(l, c);
            }
        }
        phi
    }

    fn y_index(&self, lag: usize, c: usize) -> usize {
        (lag - 1) * self.n_y + c
    }

    fn u_index(&self, lag: usize, c: usize) -> usize {
        self.t_ini * self.n_y + (self.t_ini - 1 - lag) * self.n_u + c
    }

    fn w_index(&self, lag: usize, c: usize) -> usize {
        self.t_ini * (self.n_y + self.n_u) + (self.t_ini - 1 - lag) * self.n_w + c
    }

    fn regressor_name(&self, index: usize) -> String {
        let t = self.t_ini;
        let lag_name = |lag: usize| if lag == 0 { String::from("t") } else { format!("t-{}", lag) };
        if index < t * self.n_y {
            let (l, c) = (index / self.n_y + 1, index % self.n_y);
            format!("y{}[{}]", c, lag_name(l))
        } else if index < t * (self.n_y + self.n_u) {
            let i = index - t * self.n_y;
            format!("u{}[{}]", i % self.n_u, lag_name(t - 1 - i / self.n_u))
        } else {
            let i = index - t * (self.n_y + self.n_u);
            format!("w{}[{}]", i % self.n_w, lag_name(t - 1 - i / self.n_w))
        }
    }

    /// Regressors that do not raise the rank of the columns before them.
    fn collinear_names(&self, phi: &Matrix, tol: f64) -> Result<Vec<String>> {
        let mut kept: Vec<usize> = Vec::new();
        let mut names = Vec::new();
        for j in 0..phi.ncols() {
            kept.push(j);
            let sub = phi.select_columns(kept.iter());
            if numerical_rank(&sub, tol)? < kept.len() {
                kept.pop();
                names.push(self.regressor_name(j));
            }
        }
        Ok(names)
    }

    fn check_window(&self, ini: &IniWindow, w_f: &Matrix) -> Result<()> {
        let ok = ini.len() == self.t_ini
            && ini.u.nrows() == self.n_u
            && ini.w.nrows() == self.n_w
            && ini.y.nrows() == self.n_y
            && w_f.nrows() == self.n_w;
        if !ok {
            return Err(Error::Dimension(format!(
                "window or forecast does not match an ARX model of order {} with {}/{}/{} channels",
                self.t_ini, self.n_u, self.n_w, self.n_y
            )));
        }
        Ok(())
    }

    /// Chains the one-step predictor over the horizon of `w_f` for the
    /// stacked input plan `u`.
    pub fn rollout(&self, ini: &IniWindow, w_f: &Matrix, u: &Vector) -> Result<Vector> {
        self.check_window(ini, w_f)?;
        let t_f = w_f.ncols();
        if u.len() != self.n_u * t_f {
            return Err(Error::Dimension(format!(
                "input plan has {} entries, expected {}",
                u.len(),
                self.n_u * t_f
            )));
        }
        let t = self.t_ini as isize;
        let mut y = Matrix::zeros(self.n_y, t_f);
        for i in 0..t_f {
            let at = |lag: usize| i as isize - lag as isize;
            let phi = self.regressor(
                |l, c| {
                    let s = at(l);
                    if s >= 0 {
                        y[(c, s as usize)]
                    } else {
                        ini.y[(c, (t + s) as usize)]
                    }
                },
                |l, c| {
                    let s = at(l);
                    if s >= 0 {
                        u[s as usize * self.n_u + c]
                    } else {
                        ini.u[(c, (t + s) as usize)]
                    }
                },
                |l, c| {
                    let s = at(l);
                    if s >= 0 {
                        w_f[(c, s as usize)]
                    } else {
                        ini.w[(c, (t + s) as usize)]
                    }
                },
            );
            let next = self.theta.tr_mul(&phi);
            y.column_mut(i).copy_from(&next);
        }
        Ok(stack(&y))
    }
}

/// MPC with the chained ARX predictor as equality constraints on `[u; y]`.
#[derive(Debug)]
pub struct ArxMpc {
    config: ControllerConfig,
    norm: Normalization,
    layout: Layout,
    model: ArxModel,
    /// Response of the outputs to the inputs with zero window and forecast.
    p_u: Matrix,
    solver: QpSolver,
}

impl ArxMpc {
    pub fn new(dataset: &IdDataset, config: &ControllerConfig) -> Result<Self> {
        config.validate()?;
        let model = identify_arx(dataset, config.t_ini, config.arx_min_norm)?;
        Self::from_model(model, dataset, config)
    }

    pub fn from_model(model: ArxModel, dataset: &IdDataset, config: &ControllerConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(dataset, config);
        if model.t_ini != layout.t_ini || model.n_u != layout.n_u || model.n_w != layout.n_w || model.n_y != layout.n_y {
            return Err(Error::Dimension("ARX model does not match the dataset and configuration".into()));
        }
        let norm = Normalization::from_dataset(dataset);
        let (nu, ny) = (layout.u_len(), layout.y_len());
        let zero_ini = IniWindow::new(
            Matrix::zeros(layout.n_u, layout.t_ini),
            Matrix::zeros(layout.n_w, layout.t_ini),
            Matrix::zeros(layout.n_y, layout.t_ini),
        )?;
        let zero_wf = Matrix::zeros(layout.n_w, layout.t_f);
        let mut p_u = Matrix::zeros(ny, nu);
        for j in 0..nu {
            let mut e = Vector::zeros(nu);
            e[j] = 1.0;
            p_u.set_column(j, &model.rollout(&zero_ini, &zero_wf, &e)?);
        }

        // Row (i, c): y_i,c - Σ θ·(future y, u in the regressor) = known part.
        let mut a_eq = Matrix::zeros(ny, nu + ny);
        let t = layout.t_ini;
        for i in 0..layout.t_f {
            for c_out in 0..layout.n_y {
                let row = i * layout.n_y + c_out;
                a_eq[(row, nu + row)] = 1.0;
                for l in 1..=t.min(i) {
                    for c in 0..layout.n_y {
                        a_eq[(row, nu + (i - l) * layout.n_y + c)] -= model.theta[(model.y_index(l, c), c_out)];
                    }
                }
                for l in 0..t.min(i + 1) {
                    for c in 0..layout.n_u {
                        a_eq[(row, (i - l) * layout.n_u + c)] -= model.theta[(model.u_index(l, c), c_out)];
                    }
                }
            }
        }
        let mut hessian = Matrix::zeros(nu + ny, nu + ny);
        for i in nu..nu + ny {
            hessian[(i, i)] = 2.0;
        }
        let mut lb = Vector::from_element(nu + ny, f64::NEG_INFINITY);
        let mut ub = Vector::from_element(nu + ny, f64::INFINITY);
        let (lb_u, ub_u) = layout.input_bounds(&norm, config);
        lb.rows_mut(0, nu).copy_from(&lb_u);
        ub.rows_mut(0, nu).copy_from(&ub_u);
        let solver = QpSolver::new(hessian, a_eq, lb, ub, config.qp.clone())?;
        Ok(Self {
            config: config.clone(),
            norm,
            layout,
            model,
            p_u,
            solver,
        })
    }

    pub fn model(&self) -> &ArxModel {
        &self.model
    }

    /// The unrolled recursion as `y = P_u u + p_0`.
    pub fn predictor(&self, ini: &IniWindow, w_f: &Matrix) -> Result<AffinePredictor> {
        self.layout.check(ini, w_f)?;
        let p_0 = self.model.rollout(ini, w_f, &Vector::zeros(self.layout.u_len()))?;
        Ok(AffinePredictor {
            p_u: self.p_u.clone(),
            p_0,
        })
    }

    /// Right-hand side of the chained constraints: the contribution of the
    /// window and the forecast to every predicted output.
    fn known_part(&self, ini: &IniWindow, w_f: &Matrix) -> Vector {
        let (m, lay) = (&self.model, &self.layout);
        let t = lay.t_ini as isize;
        let mut b = Vector::zeros(lay.y_len());
        for i in 0..lay.t_f {
            let at = |lag: usize| i as isize - lag as isize;
            let phi = m.regressor(
                |l, c| if at(l) >= 0 { 0.0 } else { ini.y[(c, (t + at(l)) as usize)] },
                |l, c| if at(l) >= 0 { 0.0 } else { ini.u[(c, (t + at(l)) as usize)] },
                |l, c| {
                    let s = at(l);
                    if s >= 0 {
                        w_f[(c, s as usize)]
                    } else {
                        ini.w[(c, (t + s) as usize)]
                    }
                },
            );
            b.rows_mut(i * lay.n_y, lay.n_y).copy_from(&m.theta.tr_mul(&phi));
        }
        b
    }
}

impl Controller for ArxMpc {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Arx
    }

    fn config(&self) -> &ControllerConfig {
        &self.config
    }

    fn normalization(&self) -> &Normalization {
        &self.norm
    }

    fn plan(&self, ini: &IniWindow, w_f: &Matrix, y_ref: &Matrix) -> Result<Plan> {
        self.layout.check(ini, w_f)?;
        self.layout.check_ref(y_ref)?;
        let (nu, ny) = (self.layout.u_len(), self.layout.y_len());
        let r = stack(y_ref);
        let mut q = Vector::zeros(nu + ny);
        q.rows_mut(nu, ny).copy_from(&(&r * -2.0));
        let b = self.known_part(ini, w_f);
        let sol = solve_checked(&self.solver, &q, &b)?;
        let u = sol.x.rows(0, nu).into_owned();
        let y = sol.x.rows(nu, ny).into_owned();
        let diag = PlanDiagnostics::from_solution(&sol, tracking_cost(&y, &r));
        Ok(make_plan(&self.layout, &self.norm, u, y, diag))
    }

    fn predict(&self, ini: &IniWindow, w_f: &Matrix, u: &Vector) -> Result<Vector> {
        self.layout.check(ini, w_f)?;
        self.layout.check_u(u)?;
        self.model.rollout(ini, w_f, u)
    }
}
