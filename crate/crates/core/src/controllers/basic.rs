//! DeePC with the trajectory-combination vector `g` as a decision variable:
//! the quadratically regularized original and the orthogonal-projection
//! variant.
//!
//! Decision vector `[g; u; y]`, constraint `H_full g = [u_ini; w_ini; y_ini;
//! u; w_f; y]`, cost `‖y - y_ref‖² + gᵀ R g` with `R = λ I` (basic) or
//! `R = λ_g (I - Π)` (projection, `Π` the row-space projector of `Ĥ`).

use alloc::format;

use super::{
    make_plan, solve_checked, stack, tracking_cost, Controller, ControllerConfig, ControllerKind, IniWindow, Layout,
    Normalization, Plan, PlanDiagnostics,
};
use crate::data::IdDataset;
use crate::hankel::{check_persistent_excitation, row_space_projector, HankelBlocks};
use crate::qp::{QpSolution, QpSolver};
use crate::{Error, Matrix, Result, Vector};

#[derive(Debug)]
pub struct HankelDeepc {
    kind: ControllerKind,
    config: ControllerConfig,
    norm: Normalization,
    layout: Layout,
    blocks: HankelBlocks,
    /// `Π`, kept for the projection variant.
    projector: Option<Matrix>,
    solver: QpSolver,
    /// Hessian, kept to build the pinned-input solver for predictions.
    hessian: Matrix,
    a_eq: Matrix,
}

pub(crate) fn require_pe(blocks: &HankelBlocks) -> Result<()> {
    let pe = check_persistent_excitation(blocks)?;
    if !pe.pass {
        return Err(Error::Numerical(format!(
            "identification data is not persistently exciting: rank {} of required {}",
            pe.rank, pe.required_rank
        )));
    }
    Ok(())
}

impl HankelDeepc {
    /// Basic DeePC; needs `config.lambda`.
    pub fn basic(dataset: &IdDataset, config: &ControllerConfig) -> Result<Self> {
        let lambda = config
            .lambda
            .ok_or_else(|| Error::Config("basic DeePC needs an explicit lambda".into()))?;
        Self::build(ControllerKind::Basic, dataset, config, lambda)
    }

    /// Orthogonal-projection DeePC with weight `config.lambda_g`.
    pub fn orthogonal_projection(dataset: &IdDataset, config: &ControllerConfig) -> Result<Self> {
        Self::build(ControllerKind::Op, dataset, config, config.lambda_g)
    }

    fn build(kind: ControllerKind, dataset: &IdDataset, config: &ControllerConfig, weight: f64) -> Result<Self> {
        config.validate()?;
        let blocks = HankelBlocks::from_dataset(dataset, config.t_ini, config.t_f)?;
        require_pe(&blocks)?;
        let layout = Layout::new(dataset, config);
        let norm = Normalization::from_dataset(dataset);
        let n_g = blocks.dims.width;
        let (nu, ny) = (layout.u_len(), layout.y_len());
        let n = n_g + nu + ny;

        let projector = match kind {
            ControllerKind::Op => Some(row_space_projector(&blocks.h_hat())?),
            _ => None,
        };
        let mut hessian = Matrix::zeros(n, n);
        match &projector {
            Some(pi) => {
                let mut r = -pi * (2.0 * weight);
                for i in 0..n_g {
                    r[(i, i)] += 2.0 * weight;
                }
                let r = (&r + r.transpose()) * 0.5;
                hessian.view_mut((0, 0), (n_g, n_g)).copy_from(&r);
            }
            None => {
                for i in 0..n_g {
                    hessian[(i, i)] = 2.0 * weight;
                }
            }
        }
        for i in 0..ny {
            hessian[(n_g + nu + i, n_g + nu + i)] = 2.0;
        }

        let h_full = blocks.h_full();
        let mut a_eq = Matrix::zeros(h_full.nrows(), n);
        a_eq.view_mut((0, 0), h_full.shape()).copy_from(&h_full);
        let d = &blocks.dims;
        let uf_row = (d.n_u + d.n_w + d.n_y) * d.t_ini;
        let yf_row = uf_row + (d.n_u + d.n_w) * d.t_f;
        for i in 0..nu {
            a_eq[(uf_row + i, n_g + i)] = -1.0;
        }
        for i in 0..ny {
            a_eq[(yf_row + i, n_g + nu + i)] = -1.0;
        }

        let (lb_u, ub_u) = layout.input_bounds(&norm, config);
        let (lb, ub) = Self::bounds(n_g, &lb_u, &ub_u, ny);
        let solver = QpSolver::new(hessian.clone(), a_eq.clone(), lb, ub, config.qp.clone())?;
        Ok(Self {
            kind,
            config: config.clone(),
            norm,
            layout,
            blocks,
            projector,
            solver,
            hessian,
            a_eq,
        })
    }

    fn bounds(n_g: usize, lb_u: &Vector, ub_u: &Vector, ny: usize) -> (Vector, Vector) {
        let n = n_g + lb_u.len() + ny;
        let mut lb = Vector::from_element(n, f64::NEG_INFINITY);
        let mut ub = Vector::from_element(n, f64::INFINITY);
        lb.rows_mut(n_g, lb_u.len()).copy_from(lb_u);
        ub.rows_mut(n_g, ub_u.len()).copy_from(ub_u);
        (lb, ub)
    }

    pub fn blocks(&self) -> &HankelBlocks {
        &self.blocks
    }

    /// `Π` of the projection variant.
    pub fn projector(&self) -> Option<&Matrix> {
        self.projector.as_ref()
    }

    fn rhs(&self, ini: &IniWindow, w_f: &Matrix, y_ref: Option<&Matrix>) -> (Vector, Vector) {
        let n_g = self.blocks.dims.width;
        let (nu, ny) = (self.layout.u_len(), self.layout.y_len());
        let mut q = Vector::zeros(n_g + nu + ny);
        if let Some(r) = y_ref {
            q.rows_mut(n_g + nu, ny).copy_from(&(stack(r) * -2.0));
        }
        let parts = [stack(&ini.u), stack(&ini.w), stack(&ini.y), Vector::zeros(nu), stack(w_f), Vector::zeros(ny)];
        let mut b = Vector::zeros(self.a_eq.nrows());
        let mut r = 0;
        for p in &parts {
            b.rows_mut(r, p.len()).copy_from(p);
            r += p.len();
        }
        (q, b)
    }

    fn split(&self, sol: &QpSolution) -> (Vector, Vector, Vector) {
        let n_g = self.blocks.dims.width;
        let (nu, ny) = (self.layout.u_len(), self.layout.y_len());
        (
            sol.x.rows(0, n_g).into_owned(),
            sol.x.rows(n_g, nu).into_owned(),
            sol.x.rows(n_g + nu, ny).into_owned(),
        )
    }
}

impl Controller for HankelDeepc {
    fn kind(&self) -> ControllerKind {
        self.kind
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
        let (q, b) = self.rhs(ini, w_f, Some(y_ref));
        let sol = solve_checked(&self.solver, &q, &b)?;
        let (g, u, y) = self.split(&sol);
        let mut diag = PlanDiagnostics::from_solution(&sol, tracking_cost(&y, &stack(y_ref)));
        diag.g = Some(g);
        Ok(make_plan(&self.layout, &self.norm, u, y, diag))
    }

    fn predict(&self, ini: &IniWindow, w_f: &Matrix, u: &Vector) -> Result<Vector> {
        self.layout.check(ini, w_f)?;
        self.layout.check_u(u)?;
        let n_g = self.blocks.dims.width;
        let (lb, ub) = Self::bounds(n_g, u, u, self.layout.y_len());
        // Without a reference the outputs only follow from the constraints.
        let mut hessian = self.hessian.clone();
        for i in n_g + self.layout.u_len()..hessian.nrows() {
            hessian[(i, i)] = 0.0;
        }
        let pinned = QpSolver::new(hessian, self.a_eq.clone(), lb, ub, self.config.qp.clone())?;
        let (q, b) = self.rhs(ini, w_f, None);
        let sol = solve_checked(&pinned, &q, &b)?;
        Ok(self.split(&sol).2)
    }
}
