//! Bi-level DeePC in single-level form.
//!
//! The inner problem identifies `g` by regularized least squares on the
//! initial outputs subject to the exogenous Hankel constraint,
//!
//! ```text
//! min_g ‖Y_p g - y_ini‖² + ε_g ‖g‖²   s.t.  H g = [u_ini; w_ini; u; w_f],
//! H = [U_p; W_p; U_f; W_f],
//! ```
//!
//! and is replaced by its optimality conditions, the block system
//! `M [g; κ] = [Y_pᵀ y_ini; H-rhs]` with `M = [Y_pᵀY_p + ε_g I, Hᵀ; H, 0]`.
//! The outer QP runs over `[g; κ; u; y]` with `y = Y_f g`.
//!
//! The forecast is exact, so the disturbance-feedback term `K w̃_f` acts on a
//! zero forecast error: `u = ū`, and `K` only appears through its small
//! regularization, whose minimizer is `K = 0`. The causal pattern of `K`
//! (strictly lower block-triangular) is exposed by [`causal_mask`].

use alloc::format;

use nalgebra::{Dyn, LU};

use super::basic::require_pe;
use super::{
    make_plan, solve_checked, stack, tracking_cost, AffinePredictor, Controller, ControllerConfig, ControllerKind,
    IniWindow, Layout, Normalization, Plan, PlanDiagnostics,
};
use crate::data::IdDataset;
use crate::hankel::{default_rel_tol, pinv, svd, HankelBlocks};

use crate::qp::QpSolver;
use crate::{Error, Matrix, Result, Vector};

/// Solver for the inner optimality conditions. With `ε_g > 0` this is an LU
/// factorization of `M`. With `ε_g = 0`, `M` is singular by construction
/// (every `g` in the null spaces of both `H` and `Y_p` is free), so the inner
/// problem is solved by a null-space method instead:
/// `g = H† h + N z` with `z` the minimum-norm least-squares fit of
/// `Y_p N z ≈ y_ini - Y_p H† h`.
#[derive(Debug)]
enum InnerSolver {
    Lu(LU<f64, Dyn, Dyn>),
    NullSpace {
        h_pinv: Matrix,
        null: Matrix,
        /// `(Y_p N)†`.
        fit: Matrix,
        /// `(Hᵀ)†`, recovering `κ` from the stationarity row.
        ht_pinv: Matrix,
    },
}

impl InnerSolver {
    fn null_space(h: &Matrix, yp: &Matrix) -> Result<Self> {
        let svd = svd(h)?;
        let tol = default_rel_tol(h.nrows(), h.ncols());
        let cut = svd.singular_values.max() * tol;
        let rank = svd.singular_values.iter().filter(|&&s| s > cut).count();
        // Complete the row-space basis to find the null space.
        let v_t = svd.v_t.as_ref().expect("v_t requested");
        let n = h.ncols();
        let mut basis = Matrix::zeros(n, n);
        let keep: alloc::vec::Vec<usize> = (0..svd.singular_values.len()).filter(|&k| svd.singular_values[k] > cut).collect();
        basis.columns_mut(0, rank).copy_from(&v_t.select_rows(keep.iter()).transpose());
        let q = {
            let mut seed = basis.clone();
            for j in rank..n {
                seed[(j, j)] = 1.0;
            }
            seed.qr().q()
        };
        let null = q.columns(rank, n - rank).into_owned();
        let h_pinv = pinv(h, tol)?;
        let yn = yp * &null;
        let fit = pinv(&yn, default_rel_tol(yn.nrows(), yn.ncols()))?;
        let ht_pinv = h_pinv.transpose();
        Ok(InnerSolver::NullSpace {
            h_pinv,
            null,
            fit,
            ht_pinv,
        })
    }

    /// Returns `(g, κ)` for the stacked outputs `y_ini` and the Hankel
    /// right-hand side `h`.
    fn solve(&self, yp: &Matrix, gram: &Matrix, y_ini: &Vector, h: &Vector) -> Result<(Vector, Vector)> {
        match self {
            InnerSolver::Lu(lu) => {
                let n_g = gram.nrows();
                let mut rhs = Vector::zeros(n_g + h.len());
                rhs.rows_mut(0, n_g).copy_from(&yp.tr_mul(y_ini));
                rhs.rows_mut(n_g, h.len()).copy_from(h);
                let sol = lu
                    .solve(&rhs)
                    .ok_or_else(|| Error::Numerical("bi-level block matrix is singular".into()))?;
                Ok((sol.rows(0, n_g).into_owned(), sol.rows(n_g, h.len()).into_owned()))
            }
            InnerSolver::NullSpace {
                h_pinv,
                null,
                fit,
                ht_pinv,
            } => {
                let g0 = h_pinv * h;
                let z = fit * (y_ini - yp * &g0);
                let g = g0 + null * z;
                let kappa = ht_pinv * (yp.tr_mul(y_ini) - gram * &g);
                Ok((g, kappa))
            }
        }
    }
}

#[derive(Debug)]
pub struct BilevelDeepc {
    config: ControllerConfig,
    norm: Normalization,
    layout: Layout,
    blocks: HankelBlocks,
    /// `[U_p; W_p; U_f; W_f]`.
    h: Matrix,
    /// `Y_pᵀ Y_p + ε_g I`.
    gram: Matrix,
    inner: InnerSolver,
    /// Input part of the predictor, independent of the window.
    p_u: Matrix,
    solver: QpSolver,
}

/// Allowed nonzeros of the disturbance feedback `K` (`n_u t_f × n_w t_f`):
/// input step `i` may only use disturbance steps before `i`.
pub fn causal_mask(n_u: usize, n_w: usize, t_f: usize) -> Matrix {
    Matrix::from_fn(n_u * t_f, n_w * t_f, |r, c| if c / n_w < r / n_u { 1.0 } else { 0.0 })
}

impl BilevelDeepc {
    pub fn new(dataset: &IdDataset, config: &ControllerConfig) -> Result<Self> {
        config.validate()?;
        let blocks = HankelBlocks::from_dataset(dataset, config.t_ini, config.t_f)?;
        require_pe(&blocks)?;
        let layout = Layout::new(dataset, config);
        let norm = Normalization::from_dataset(dataset);
        let h = blocks.exogenous();
        let n_g = blocks.dims.width;
        let r_h = h.nrows();

        let mut gram = blocks.yp.tr_mul(&blocks.yp);
        for i in 0..n_g {
            gram[(i, i)] += config.eps_g;
        }
        let gram = (&gram + gram.transpose()) * 0.5;

        let inner = if config.eps_g > 0.0 {
            let mut m = Matrix::zeros(n_g + r_h, n_g + r_h);
            m.view_mut((0, 0), (n_g, n_g)).copy_from(&gram);
            m.view_mut((0, n_g), (n_g, r_h)).copy_from(&h.transpose());
            m.view_mut((n_g, 0), (r_h, n_g)).copy_from(&h);
            let lu = LU::new(m);
            let diag = lu.u().diagonal().abs();
            let (lo, hi) = (diag.min(), diag.max());
            if !(lo > 1e-13 * hi) {
                return Err(Error::Numerical(format!(
                    "bi-level block matrix is numerically singular (pivot ratio {:e}); increase eps_g or use more data",
                    lo / hi
                )));
            }
            InnerSolver::Lu(lu)
        } else {
            InnerSolver::null_space(&h, &blocks.yp)?
        };

        let (nu, ny) = (layout.u_len(), layout.y_len());
        let uf_row = (layout.n_u + layout.n_w) * layout.t_ini;
        let mut p_u = Matrix::zeros(ny, nu);
        let zero_y = Vector::zeros(layout.n_y * layout.t_ini);
        for i in 0..nu {
            let mut e = Vector::zeros(r_h);
            e[uf_row + i] = 1.0;
            let (g, _) = inner.solve(&blocks.yp, &gram, &zero_y, &e)?;
            p_u.set_column(i, &(&blocks.yf * g));
        }

        // QP over [g; κ; u; y].
        let n = n_g + r_h + nu + ny;
        let rows = n_g + r_h + ny;
        let mut a_eq = Matrix::zeros(rows, n);
        a_eq.view_mut((0, 0), (n_g, n_g)).copy_from(&gram);
        a_eq.view_mut((0, n_g), (n_g, r_h)).copy_from(&h.transpose());
        a_eq.view_mut((n_g, 0), (r_h, n_g)).copy_from(&h);
        for i in 0..nu {
            a_eq[(n_g + uf_row + i, n_g + r_h + i)] = -1.0;
        }
        a_eq.view_mut((n_g + r_h, 0), (ny, n_g)).copy_from(&blocks.yf);
        for i in 0..ny {
            a_eq[(n_g + r_h + i, n_g + r_h + nu + i)] = -1.0;
        }
        let mut hessian = Matrix::zeros(n, n);
        for i in 0..n_g + r_h + nu {
            hessian[(i, i)] = 2.0 * config.tiny_reg;
        }
        for i in n_g + r_h + nu..n {
            hessian[(i, i)] = 2.0;
        }
        let mut lb = Vector::from_element(n, f64::NEG_INFINITY);
        let mut ub = Vector::from_element(n, f64::INFINITY);
        let (lb_u, ub_u) = layout.input_bounds(&norm, config);
        lb.rows_mut(n_g + r_h, nu).copy_from(&lb_u);
        ub.rows_mut(n_g + r_h, nu).copy_from(&ub_u);
        let solver = QpSolver::new(hessian, a_eq, lb, ub, config.qp.clone())?;

        Ok(Self {
            config: config.clone(),
            norm,
            layout,
            blocks,
            h,
            gram,
            inner,
            p_u,
            solver,
        })
    }

    /// Right-hand side `[u_ini; w_ini; u; w_f]` of the Hankel constraint.
    fn hankel_rhs(&self, ini: &IniWindow, w_f: &Matrix, u: Option<&Vector>) -> Vector {
        let zeros = Vector::zeros(self.layout.u_len());
        let parts = [stack(&ini.u), stack(&ini.w), u.cloned().unwrap_or(zeros), stack(w_f)];
        let mut rhs = Vector::zeros(self.h.nrows());
        let mut r = 0;
        for p in &parts {
            rhs.rows_mut(r, p.len()).copy_from(p);
            r += p.len();
        }
        rhs
    }

    /// `y = P_u u + p_0` from the inner optimality conditions.
    pub fn predictor(&self, ini: &IniWindow, w_f: &Matrix) -> Result<AffinePredictor> {
        self.layout.check(ini, w_f)?;
        let (g, _) = self.inner.solve(&self.blocks.yp, &self.gram, &stack(&ini.y), &self.hankel_rhs(ini, w_f, None))?;
        let p_0 = &self.blocks.yf * g;
        Ok(AffinePredictor {
            p_u: self.p_u.clone(),
            p_0,
        })
    }

    /// Solves the inner problem for a fixed input plan, returning `(g, κ)`.
    pub fn inner_solution(&self, ini: &IniWindow, w_f: &Matrix, u: &Vector) -> Result<(Vector, Vector)> {
        self.layout.check(ini, w_f)?;
        self.layout.check_u(u)?;
        self.inner
            .solve(&self.blocks.yp, &self.gram, &stack(&ini.y), &self.hankel_rhs(ini, w_f, Some(u)))
    }

    /// `‖(Y_pᵀY_p + ε_g I) g + Hᵀκ - Y_pᵀ y_ini‖∞`.
    pub fn inner_stationarity(&self, ini: &IniWindow, g: &Vector, kappa: &Vector) -> f64 {
        let r = &self.gram * g + self.h.tr_mul(kappa) - self.blocks.yp.tr_mul(&stack(&ini.y));
        r.amax()
    }

    pub fn blocks(&self) -> &HankelBlocks {
        &self.blocks
    }
}

impl Controller for BilevelDeepc {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Bl
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
        let n_g = self.blocks.dims.width;
        let r_h = self.h.nrows();
        let (nu, ny) = (self.layout.u_len(), self.layout.y_len());
        let r = stack(y_ref);
        let mut q = Vector::zeros(n_g + r_h + nu + ny);
        q.rows_mut(n_g + r_h + nu, ny).copy_from(&(&r * -2.0));
        let mut b = Vector::zeros(n_g + r_h + ny);
        b.rows_mut(0, n_g).copy_from(&self.blocks.yp.tr_mul(&stack(&ini.y)));
        b.rows_mut(n_g, r_h).copy_from(&self.hankel_rhs(ini, w_f, None));
        let sol = solve_checked(&self.solver, &q, &b)?;

        let g = sol.x.rows(0, n_g).into_owned();
        let kappa = sol.x.rows(n_g, r_h).into_owned();
        let u = sol.x.rows(n_g + r_h, nu).into_owned();
        let y = sol.x.rows(n_g + r_h + nu, ny).into_owned();
        let mut diag = PlanDiagnostics::from_solution(&sol, tracking_cost(&y, &r));
        diag.inner_stationarity = Some(self.inner_stationarity(ini, &g, &kappa));
        diag.g = Some(g);
        diag.kappa = Some(kappa);
        diag.u_bar = Some(u.clone());
        diag.k_gain = Some(Matrix::zeros(nu, self.layout.n_w * self.layout.t_f));
        Ok(make_plan(&self.layout, &self.norm, u, y, diag))
    }

    fn predict(&self, ini: &IniWindow, w_f: &Matrix, u: &Vector) -> Result<Vector> {
        self.layout.check_u(u)?;
        self.predictor(ini, w_f)?.predict(u)
    }
}
