//! Instrumental-variable DeePC.
//!
//! Projecting the Hankel constraint onto `Ĥᵀ` removes `g` and leaves the
//! multi-step predictor `y = Y_f Ĥ† v̂` with `v̂ = [u_ini; w_ini; y_ini; u; w_f]`.
//! The tracking QP then runs over the inputs only.

use super::basic::require_pe;
use super::{
    make_plan, solve_checked, stack, tracking_cost, tracking_hessian, AffinePredictor, Controller, ControllerConfig,
    ControllerKind, IniWindow, Layout, Normalization, Plan, PlanDiagnostics,
};
use crate::data::IdDataset;
use crate::hankel::{default_rel_tol, pinv, HankelBlocks};
use crate::qp::QpSolver;
use crate::{Matrix, Result, Vector};

#[derive(Debug)]
pub struct IvDeepc {
    config: ControllerConfig,
    norm: Normalization,
    layout: Layout,
    /// `Y_f Ĥ†`.
    g: Matrix,
    /// Columns of `g` acting on the future inputs.
    p_u: Matrix,
    solver: QpSolver,
}

impl IvDeepc {
    pub fn new(dataset: &IdDataset, config: &ControllerConfig) -> Result<Self> {
        config.validate()?;
        let blocks = HankelBlocks::from_dataset(dataset, config.t_ini, config.t_f)?;
        require_pe(&blocks)?;
        let layout = Layout::new(dataset, config);
        let norm = Normalization::from_dataset(dataset);
        let h_hat = blocks.h_hat();
        let g = &blocks.yf * pinv(&h_hat, default_rel_tol(h_hat.nrows(), h_hat.ncols()))?;
        let p_u = g.columns(Self::u_offset(&layout), layout.u_len()).into_owned();
        let (lb, ub) = layout.input_bounds(&norm, config);
        let solver = QpSolver::new(
            tracking_hessian(&p_u),
            Matrix::zeros(0, layout.u_len()),
            lb,
            ub,
            config.qp.clone(),
        )?;
        Ok(Self {
            config: config.clone(),
            norm,
            layout,
            g,
            p_u,
            solver,
        })
    }

    fn u_offset(layout: &Layout) -> usize {
        (layout.n_u + layout.n_w + layout.n_y) * layout.t_ini
    }

    /// The multi-step model `Y_f Ĥ†`.
    pub fn multi_step_model(&self) -> &Matrix {
        &self.g
    }

    /// `y = P_u u + p_0` for the given window and forecast.
    pub fn predictor(&self, ini: &IniWindow, w_f: &Matrix) -> Result<AffinePredictor> {
        self.layout.check(ini, w_f)?;
        let past = [stack(&ini.u), stack(&ini.w), stack(&ini.y)];
        let mut p_0 = Vector::zeros(self.layout.y_len());
        let mut c = 0;
        for part in &past {
            p_0 += self.g.columns(c, part.len()) * part;
            c += part.len();
        }
        let wf = stack(w_f);
        p_0 += self.g.columns(c + self.layout.u_len(), wf.len()) * &wf;
        Ok(AffinePredictor {
            p_u: self.p_u.clone(),
            p_0,
        })
    }
}

impl Controller for IvDeepc {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Iv
    }

    fn config(&self) -> &ControllerConfig {
        &self.config
    }

    fn normalization(&self) -> &Normalization {
        &self.norm
    }

    fn plan(&self, ini: &IniWindow, w_f: &Matrix, y_ref: &Matrix) -> Result<Plan> {
        self.layout.check_ref(y_ref)?;
        let pred = self.predictor(ini, w_f)?;
        let r = stack(y_ref);
        let q = self.p_u.tr_mul(&(&pred.p_0 - &r)) * 2.0;
        let sol = solve_checked(&self.solver, &q, &Vector::zeros(0))?;
        let y = pred.predict(&sol.x)?;
        let diag = PlanDiagnostics::from_solution(&sol, tracking_cost(&y, &r));
        Ok(make_plan(&self.layout, &self.norm, sol.x, y, diag))
    }

    fn predict(&self, ini: &IniWindow, w_f: &Matrix, u: &Vector) -> Result<Vector> {
        self.layout.check_u(u)?;
        self.predictor(ini, w_f)?.predict(u)
    }
}
