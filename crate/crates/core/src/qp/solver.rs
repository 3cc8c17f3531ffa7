//! ADMM with exact active-set polishing.
//!
//! The iteration is the operator-splitting scheme of OSQP specialised to
//! equality rows plus simple bounds, run on a Ruiz-equilibrated copy of the
//! problem. Once ADMM reaches a moderate accuracy its bound duals give an
//! active-set guess; the polish step then solves the equality-constrained
//! KKT system on that active set exactly and corrects the guess
//! (primal-dual active set) until the optimality conditions hold.
//!
//! Everything that depends only on `P`, `A_eq` and the bound pattern is
//! factored once in [`QpSolver::new`]:
//!
//! * the ADMM matrix `P + σI + ρ_eq AᵀA + diag(ρ_box)` for the default `ρ`,
//! * an LU of the regularized KKT matrix `[P + δI, Aᵀ; A, −δI]`, together
//!   with its solves against every bounded coordinate, so that fixing any
//!   subset of bounded variables costs one extra small dense solve (Schur
//!   complement) instead of a new factorization.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, Dyn, LU};

use super::{check_bounds, check_hessian, kkt_residuals_with_multipliers, QpProblem, QpSettings, QpSolution, QpStatus};
use crate::{Error, Matrix, Result, Vector};

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;
const CHECK_EVERY: usize = 10;
const KKT_DELTA: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BoxKind {
    Free,
    Lower,
    Upper,
    Both,
    Fixed,
}

impl BoxKind {
    fn of(lb: f64, ub: f64) -> Self {
        match (lb.is_finite(), ub.is_finite()) {
            (false, false) => BoxKind::Free,
            (true, false) => BoxKind::Lower,
            (false, true) => BoxKind::Upper,
            (true, true) if lb == ub => BoxKind::Fixed,
            (true, true) => BoxKind::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Active {
    No,
    Lower,
    Upper,
}

struct KktCache {
    lu: LU<f64, Dyn, Dyn>,
    /// Bounded coordinates, in increasing order.
    bounded: Vec<usize>,
    /// Position of each coordinate in `bounded`.
    slot: Vec<Option<usize>>,
    /// `K⁻¹ E_bᵀ` for the regularized KKT matrix `K`.
    w: Matrix,
    /// `E_b K⁻¹ E_bᵀ`.
    g: Matrix,
}

/// A QP with fixed `P`, `A_eq` and bounds, prepared for repeated solves with
/// varying `q` and `b_eq`.
pub struct QpSolver {
    settings: QpSettings,
    n: usize,
    m: usize,
    p: Matrix,
    a: Matrix,
    lb: Vector,
    ub: Vector,
    kinds: Vec<BoxKind>,
    // Equilibrated problem: P̄ = c D P D, Ā = E A D, x = D x̄.
    d: Vector,
    e: Vector,
    c: f64,
    ps: Matrix,
    as_: Matrix,
    ata: Matrix,
    lbs: Vector,
    ubs: Vector,
    base: Cholesky<f64, Dyn>,
    kkt: KktCache,
}

impl core::fmt::Debug for QpSolver {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("QpSolver")
            .field("n", &self.n)
            .field("m_eq", &self.m)
            .field("bounded", &self.kkt.bounded.len())
            .finish()
    }
}

struct AdmmState {
    x: Vector,
    zb: Vector,
    ye: Vector,
    yb: Vector,
    dx: Vector,
    dye: Vector,
    dyb: Vector,
}

enum AdmmOutcome {
    Converged,
    Budget,
    Infeasible,
    Unbounded,
}

impl QpSolver {
    pub fn new(p: Matrix, a_eq: Matrix, lb: Vector, ub: Vector, settings: QpSettings) -> Result<Self> {
        let n = p.nrows();
        let m = a_eq.nrows();
        if n == 0 || p.ncols() != n {
            return Err(Error::Dimension("P must be square and nonempty".into()));
        }
        if a_eq.ncols() != n {
            return Err(Error::Dimension(alloc::format!(
                "A_eq has {} columns, expected {}",
                a_eq.ncols(),
                n
            )));
        }
        check_bounds(&lb, &ub, n)?;
        check_hessian(&p)?;
        if a_eq.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("A_eq has non-finite entries".into()));
        }
        if !(settings.alpha > 0.0 && settings.alpha < 2.0 && settings.rho > 0.0 && settings.sigma > 0.0) {
            return Err(Error::Config("QP settings need 0 < alpha < 2, rho > 0, sigma > 0".into()));
        }
        let kinds: Vec<BoxKind> = (0..n).map(|i| BoxKind::of(lb[i], ub[i])).collect();

        let (d, e, c, ps, as_) = equilibrate(&p, &a_eq, settings.scaling_iters);
        let lbs = Vector::from_fn(n, |i, _| lb[i] / d[i]);
        let ubs = Vector::from_fn(n, |i, _| ub[i] / d[i]);
        let ata = as_.tr_mul(&as_);

        let mut solver = Self {
            n,
            m,
            p,
            a: a_eq,
            lb,
            ub,
            kinds,
            d,
            e,
            c,
            ps,
            as_,
            ata,
            lbs,
            ubs,
            base: Cholesky::new(Matrix::identity(1, 1)).expect("1x1 identity"),
            kkt: KktCache {
                lu: LU::new(Matrix::identity(1, 1)),
                bounded: Vec::new(),
                slot: Vec::new(),
                w: Matrix::zeros(0, 0),
                g: Matrix::zeros(0, 0),
            },
            settings,
        };
        solver.base = solver.admm_factor(solver.settings.rho)?;
        solver.kkt = solver.kkt_cache()?;
        Ok(solver)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m_eq(&self) -> usize {
        self.m
    }

    pub fn settings(&self) -> &QpSettings {
        &self.settings
    }

    /// The full problem for given `q`, `b_eq` (used for failure dumps).
    pub fn problem(&self, q: &Vector, b_eq: &Vector) -> QpProblem {
        QpProblem {
            p: self.p.clone(),
            q: q.clone(),
            a_eq: self.a.clone(),
            b_eq: b_eq.clone(),
            lb: self.lb.clone(),
            ub: self.ub.clone(),
        }
    }

    fn rho_box(&self, rho: f64, i: usize) -> f64 {
        match self.kinds[i] {
            BoxKind::Free => RHO_MIN,
            BoxKind::Fixed => RHO_EQ_FACTOR * rho,
            _ => rho,
        }
    }

    fn admm_factor(&self, rho: f64) -> Result<Cholesky<f64, Dyn>> {
        let mut k = &self.ata * (RHO_EQ_FACTOR * rho) + &self.ps;
        for i in 0..self.n {
            k[(i, i)] += self.settings.sigma + self.rho_box(rho, i);
        }
        Cholesky::new(k).ok_or_else(|| Error::Numerical("ADMM system is not positive definite".into()))
    }

    fn kkt_cache(&self) -> Result<KktCache> {
        let (n, m) = (self.n, self.m);
        let mut k = Matrix::zeros(n + m, n + m);
        k.view_mut((0, 0), (n, n)).copy_from(&self.ps);
        k.view_mut((n, 0), (m, n)).copy_from(&self.as_);
        k.view_mut((0, n), (n, m)).copy_from(&self.as_.transpose());
        for i in 0..n {
            k[(i, i)] += KKT_DELTA;
        }
        for i in n..n + m {
            k[(i, i)] = -KKT_DELTA;
        }
        let lu = LU::new(k);
        let bounded: Vec<usize> = (0..n).filter(|&i| self.kinds[i] != BoxKind::Free).collect();
        let mut slot = vec![None; n];
        for (s, &i) in bounded.iter().enumerate() {
            slot[i] = Some(s);
        }
        let mut w = Matrix::zeros(n + m, bounded.len());
        for (s, &i) in bounded.iter().enumerate() {
            w[(i, s)] = 1.0;
        }
        if !bounded.is_empty() && !lu.solve_mut(&mut w) {
            return Err(Error::Numerical("regularized KKT matrix is singular".into()));
        }
        let g = w.select_rows(bounded.iter());
        Ok(KktCache {
            lu,
            bounded,
            slot,
            w,
            g,
        })
    }

    /// Solves with the bounds given at construction.
    pub fn solve(&self, q: &Vector, b_eq: &Vector) -> Result<QpSolution> {
        if q.len() != self.n || b_eq.len() != self.m {
            return Err(Error::Dimension(alloc::format!(
                "q has {} entries and b_eq {}, expected {} and {}",
                q.len(),
                b_eq.len(),
                self.n,
                self.m
            )));
        }
        if q.iter().chain(b_eq.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Config("q and b_eq must be finite".into()));
        }
        let qs = Vector::from_fn(self.n, |i, _| self.c * self.d[i] * q[i]);
        let bs = Vector::from_fn(self.m, |i, _| self.e[i] * b_eq[i]);

        let tol = self.settings.tol_abs.min(self.settings.tol_rel);
        let mut eps = self.settings.admm_eps.max(tol);
        let floor = tol * 1e-3;
        let mut state = AdmmState {
            x: Vector::zeros(self.n),
            zb: Vector::from_fn(self.n, |i, _| 0f64.clamp(self.lbs[i], self.ubs[i])),
            ye: Vector::zeros(self.m),
            yb: Vector::zeros(self.n),
            dx: Vector::zeros(self.n),
            dye: Vector::zeros(self.m),
            dyb: Vector::zeros(self.n),
        };
        let mut rho = self.settings.rho;
        let mut local: Option<Cholesky<f64, Dyn>> = None;
        let mut iterations = 0;
        let mut polish_steps = 0;
        loop {
            let outcome = self.admm(&qs, &bs, &mut state, &mut rho, &mut local, eps, &mut iterations)?;
            match outcome {
                AdmmOutcome::Infeasible => return Ok(self.unsolved(q, b_eq, &state, QpStatus::Infeasible, iterations, polish_steps)),
                AdmmOutcome::Unbounded => return Ok(self.unsolved(q, b_eq, &state, QpStatus::Unbounded, iterations, polish_steps)),
                AdmmOutcome::Converged | AdmmOutcome::Budget => {}
            }
            if let Some(sol) = self.polish(q, b_eq, &qs, &bs, &state, iterations, &mut polish_steps) {
                return Ok(sol);
            }
            let plain = self.admm_solution(q, b_eq, &state, iterations, polish_steps);
            if plain.is_optimal() {
                return Ok(plain);
            }
            if matches!(outcome, AdmmOutcome::Budget) || eps <= floor {
                return Ok(QpSolution {
                    status: QpStatus::MaxIter,
                    ..plain
                });
            }
            eps = (eps * 1e-2).max(floor);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn admm(
        &self,
        qs: &Vector,
        bs: &Vector,
        st: &mut AdmmState,
        rho: &mut f64,
        local: &mut Option<Cholesky<f64, Dyn>>,
        eps: f64,
        iterations: &mut usize,
    ) -> Result<AdmmOutcome> {
        let (n, m) = (self.n, self.m);
        let sigma = self.settings.sigma;
        let alpha = self.settings.alpha;
        let mut rho_b = Vector::from_fn(n, |i, _| self.rho_box(*rho, i));
        let mut rho_e = RHO_EQ_FACTOR * *rho;
        let mut adaptations = 0;
        let mut since_check = 0;
        loop {
            if *iterations >= self.settings.max_iter {
                return Ok(AdmmOutcome::Budget);
            }
            *iterations += 1;
            since_check += 1;

            // rhs = σx − q + Āᵀ(ρ_e b − y_e) + ρ_b∘z_b − y_b
            let mut rhs = &st.x * sigma - qs;
            if m > 0 {
                let t = bs * rho_e - &st.ye;
                rhs += self.as_.tr_mul(&t);
            }
            for i in 0..n {
                rhs[i] += rho_b[i] * st.zb[i] - st.yb[i];
            }
            let factor = local.as_ref().unwrap_or(&self.base);
            factor.solve_mut(&mut rhs);
            let xt = rhs;

            for i in 0..n {
                let xn = alpha * xt[i] + (1.0 - alpha) * st.x[i];
                st.dx[i] = xn - st.x[i];
                st.x[i] = xn;
            }
            if m > 0 {
                let zt = &self.as_ * &xt;
                for i in 0..m {
                    let dy = rho_e * alpha * (zt[i] - bs[i]);
                    st.dye[i] = dy;
                    st.ye[i] += dy;
                }
            }
            for i in 0..n {
                let v = alpha * xt[i] + (1.0 - alpha) * st.zb[i];
                let z = (v + st.yb[i] / rho_b[i]).clamp(self.lbs[i], self.ubs[i]);
                let dy = rho_b[i] * (v - z);
                st.dyb[i] = dy;
                st.yb[i] += dy;
                st.zb[i] = z;
            }

            if since_check < CHECK_EVERY {
                continue;
            }
            since_check = 0;

            let (r_prim, prim_scale, r_dual, dual_scale) = self.admm_residuals(qs, bs, st);
            let eps_prim = eps + eps * prim_scale;
            let eps_dual = eps + eps * dual_scale;
            if r_prim <= eps_prim && r_dual <= eps_dual {
                return Ok(AdmmOutcome::Converged);
            }
            if self.primal_infeasible(bs, st) {
                return Ok(AdmmOutcome::Infeasible);
            }
            if self.dual_infeasible(qs, st) {
                return Ok(AdmmOutcome::Unbounded);
            }
            if self.settings.adaptive_rho && adaptations < 8 && *iterations > 2 * CHECK_EVERY {
                let ratio = (r_prim / prim_scale.max(1e-30)) / (r_dual / dual_scale.max(1e-30)).max(1e-30);
                let new_rho = (*rho * libm::sqrt(ratio)).clamp(RHO_MIN, RHO_MAX);
                if new_rho > 5.0 * *rho || new_rho < 0.2 * *rho {
                    *rho = new_rho;
                    adaptations += 1;
                    *local = Some(self.admm_factor(new_rho)?);
                    rho_b = Vector::from_fn(n, |i, _| self.rho_box(new_rho, i));
                    rho_e = RHO_EQ_FACTOR * new_rho;
                }
            }
        }
    }

    /// Unscaled primal and dual residuals with their normalizing magnitudes.
    fn admm_residuals(&self, qs: &Vector, bs: &Vector, st: &AdmmState) -> (f64, f64, f64, f64) {
        let (n, m) = (self.n, self.m);
        let mut r_prim: f64 = 0.0;
        let mut prim_scale: f64 = 0.0;
        if m > 0 {
            let ax = &self.as_ * &st.x;
            for i in 0..m {
                r_prim = r_prim.max(((ax[i] - bs[i]) / self.e[i]).abs());
                prim_scale = prim_scale.max((ax[i] / self.e[i]).abs()).max((bs[i] / self.e[i]).abs());
            }
        }
        for i in 0..n {
            if self.kinds[i] != BoxKind::Free {
                r_prim = r_prim.max((self.d[i] * (st.x[i] - st.zb[i])).abs());
                prim_scale = prim_scale.max((self.d[i] * st.x[i]).abs());
            }
        }
        let px = &self.ps * &st.x;
        let aty = if m > 0 { self.as_.tr_mul(&st.ye) } else { Vector::zeros(n) };
        let mut r_dual: f64 = 0.0;
        let mut dual_scale: f64 = 0.0;
        for i in 0..n {
            let un = 1.0 / (self.c * self.d[i]);
            r_dual = r_dual.max(((px[i] + qs[i] + aty[i] + st.yb[i]) * un).abs());
            dual_scale = dual_scale
                .max((px[i] * un).abs())
                .max((qs[i] * un).abs())
                .max((aty[i] * un).abs())
                .max((st.yb[i] * un).abs());
        }
        (r_prim, prim_scale, r_dual, dual_scale)
    }

    fn primal_infeasible(&self, bs: &Vector, st: &AdmmState) -> bool {
        let eps = 1e-6;
        let norm = st.dye.amax().max(if self.n > 0 { st.dyb.amax() } else { 0.0 });
        if norm < 1e-10 {
            return false;
        }
        let mut at = if self.m > 0 { self.as_.tr_mul(&st.dye) } else { Vector::zeros(self.n) };
        at += &st.dyb;
        if at.amax() > eps * norm {
            return false;
        }
        let mut support = bs.dot(&st.dye);
        for i in 0..self.n {
            let dy = st.dyb[i];
            if dy > eps * norm {
                if !self.ubs[i].is_finite() {
                    return false;
                }
                support += self.ubs[i] * dy;
            } else if dy < -eps * norm {
                if !self.lbs[i].is_finite() {
                    return false;
                }
                support += self.lbs[i] * dy;
            }
        }
        support < -eps * norm
    }

    fn dual_infeasible(&self, qs: &Vector, st: &AdmmState) -> bool {
        let eps = 1e-6;
        let norm = st.dx.amax();
        if norm < 1e-10 {
            return false;
        }
        if (&self.ps * &st.dx).amax() > eps * norm || qs.dot(&st.dx) > -eps * norm {
            return false;
        }
        if self.m > 0 && (&self.as_ * &st.dx).amax() > eps * norm {
            return false;
        }
        (0..self.n).all(|i| {
            let v = st.dx[i];
            (v <= eps * norm || !self.ubs[i].is_finite()) && (v >= -eps * norm || !self.lbs[i].is_finite())
        })
    }

    /// Active-set polish; returns an optimal solution or `None`.
    #[allow(clippy::too_many_arguments)]
    fn polish(
        &self,
        q: &Vector,
        b_eq: &Vector,
        qs: &Vector,
        bs: &Vector,
        st: &AdmmState,
        iterations: usize,
        steps: &mut usize,
    ) -> Option<QpSolution> {
        let n = self.n;
        let mut active = vec![Active::No; n];
        for &i in &self.kkt.bounded {
            active[i] = match self.kinds[i] {
                BoxKind::Fixed => Active::Lower,
                _ if self.lbs[i].is_finite() && st.zb[i] - self.lbs[i] < -st.yb[i] => Active::Lower,
                _ if self.ubs[i].is_finite() && self.ubs[i] - st.zb[i] < st.yb[i] => Active::Upper,
                _ => Active::No,
            };
        }
        let mu_tol = 1e-11 * (1.0 + qs.amax());
        let mut rhs = Vector::zeros(n + self.m);
        for i in 0..n {
            rhs[i] = -qs[i];
        }
        for i in 0..self.m {
            rhs[n + i] = bs[i];
        }
        for _ in 0..self.settings.polish_iters {
            *steps += 1;
            let fixed: Vec<(usize, f64)> = self
                .kkt
                .bounded
                .iter()
                .filter_map(|&i| match active[i] {
                    Active::Lower => Some((i, self.lbs[i])),
                    Active::Upper => Some((i, self.ubs[i])),
                    Active::No => None,
                })
                .collect();
            let (xi, mu) = self.kkt_solve(&rhs, &fixed)?;
            let mut changed = false;
            let mut mu_full = Vector::zeros(n);
            for (k, &(i, _)) in fixed.iter().enumerate() {
                mu_full[i] = mu[k];
            }
            for &i in &self.kkt.bounded {
                match active[i] {
                    _ if self.kinds[i] == BoxKind::Fixed => {}
                    Active::Lower if mu_full[i] > mu_tol => {
                        active[i] = Active::No;
                        changed = true;
                    }
                    Active::Upper if mu_full[i] < -mu_tol => {
                        active[i] = Active::No;
                        changed = true;
                    }
                    Active::No => {
                        let x = xi[i];
                        if x < self.lbs[i] - 1e-11 * (1.0 + self.lbs[i].abs()) {
                            active[i] = Active::Lower;
                            changed = true;
                        } else if x > self.ubs[i] + 1e-11 * (1.0 + self.ubs[i].abs()) {
                            active[i] = Active::Upper;
                            changed = true;
                        }
                    }
                    _ => {}
                }
            }
            if changed {
                continue;
            }
            let mut x = Vector::from_fn(n, |i, _| self.d[i] * xi[i]);
            for &(i, _) in &fixed {
                x[i] = if active[i] == Active::Upper { self.ub[i] } else { self.lb[i] };
            }
            let nu = Vector::from_fn(self.m, |i, _| self.e[i] * xi[n + i] / self.c);
            let mu = Vector::from_fn(n, |i, _| mu_full[i] / (self.d[i] * self.c));
            let sol = self.finish(q, b_eq, x, nu, mu, iterations, *steps);
            return if sol.is_optimal() { Some(sol) } else { None };
        }
        None
    }

    /// Solves `[P̄ Āᵀ E_Sᵀ; Ā 0 0; E_S 0 0] [x; ν; μ] = [rhs; s]` for the
    /// fixed coordinates `S` with values `s`, by Schur complement on the
    /// cached regularized factorization plus iterative refinement.
    fn kkt_solve(&self, rhs: &Vector, fixed: &[(usize, f64)]) -> Option<(Vector, Vector)> {
        let n = self.n;
        let k = fixed.len();
        let slots: Vec<usize> = fixed.iter().map(|&(i, _)| self.kkt.slot[i].expect("bounded")).collect();
        let s = Vector::from_iterator(k, fixed.iter().map(|&(_, v)| v));
        let schur = if k > 0 {
            let mut g = Matrix::from_fn(k, k, |a, b| self.kkt.g[(slots[a], slots[b])]);
            for a in 0..k {
                g[(a, a)] += KKT_DELTA;
            }
            Some(LU::new(g))
        } else {
            None
        };
        let solve_reg = |r1: &Vector, r2: &Vector| -> Option<(Vector, Vector)> {
            let mut t = r1.clone();
            if !self.kkt.lu.solve_mut(&mut t) {
                return None;
            }
            let mut mu = Vector::zeros(k);
            if let Some(lu) = &schur {
                let mut rm = Vector::from_fn(k, |a, _| t[fixed[a].0] - r2[a]);
                if !lu.solve_mut(&mut rm) {
                    return None;
                }
                for (a, &sl) in slots.iter().enumerate() {
                    t.axpy(-rm[a], &self.kkt.w.column(sl), 1.0);
                }
                mu = rm;
            }
            Some((t, mu))
        };
        let (mut xi, mut mu) = solve_reg(rhs, &s)?;
        let scale = rhs.amax().max(s.amax()).max(1.0);
        for _ in 0..30 {
            let (r1, r2) = self.kkt_residual(rhs, &s, fixed, &xi, &mu);
            let res = r1.amax().max(r2.amax());
            if !res.is_finite() {
                return None;
            }
            if res <= 1e-15 * scale {
                break;
            }
            let (dxi, dmu) = solve_reg(&r1, &r2)?;
            xi += dxi;
            mu += dmu;
        }
        let _ = n;
        Some((xi, mu))
    }

    fn kkt_residual(&self, rhs: &Vector, s: &Vector, fixed: &[(usize, f64)], xi: &Vector, mu: &Vector) -> (Vector, Vector) {
        let (n, m) = (self.n, self.m);
        let x = xi.rows(0, n);
        let nu = xi.rows(n, m);
        let mut top = &self.ps * x;
        if m > 0 {
            top += self.as_.tr_mul(&nu);
        }
        for (a, &(i, _)) in fixed.iter().enumerate() {
            top[i] += mu[a];
        }
        let mut r1 = rhs.clone();
        for i in 0..n {
            r1[i] -= top[i];
        }
        if m > 0 {
            let ax = &self.as_ * x;
            for i in 0..m {
                r1[n + i] -= ax[i];
            }
        }
        let r2 = Vector::from_fn(fixed.len(), |a, _| s[a] - xi[fixed[a].0]);
        (r1, r2)
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(&self, q: &Vector, b_eq: &Vector, x: Vector, nu: Vector, mu: Vector, iterations: usize, polish_steps: usize) -> QpSolution {
        let view = self.problem_view(q, b_eq);
        let residuals = kkt_residuals_with_multipliers(&view, &x, &nu);
        let px = &self.p * &x;
        let aty = if self.m > 0 { self.a.tr_mul(&nu) } else { Vector::zeros(self.n) };
        let ax = if self.m > 0 { &self.a * &x } else { Vector::zeros(0) };
        let (tol_a, tol_r) = (self.settings.tol_abs, self.settings.tol_rel);
        let eq_ok = residuals.eq_residual <= tol_a + tol_r * amax(&ax).max(amax(b_eq));
        let bound_ok = residuals.bound_violation <= tol_a + tol_r * amax(&x);
        let stat_ok = residuals.stationarity <= tol_a + tol_r * amax(&px).max(amax(q)).max(amax(&aty)).max(amax(&mu));
        let objective = 0.5 * x.dot(&px) + q.dot(&x);
        QpSolution {
            x,
            nu,
            mu,
            status: if eq_ok && bound_ok && stat_ok { QpStatus::Optimal } else { QpStatus::MaxIter },
            iterations,
            polish_steps,
            residuals,
            objective,
        }
    }

    fn admm_solution(&self, q: &Vector, b_eq: &Vector, st: &AdmmState, iterations: usize, polish_steps: usize) -> QpSolution {
        let x = Vector::from_fn(self.n, |i, _| self.d[i] * st.x[i]);
        let nu = Vector::from_fn(self.m, |i, _| self.e[i] * st.ye[i] / self.c);
        let mu = Vector::from_fn(self.n, |i, _| st.yb[i] / (self.d[i] * self.c));
        self.finish(q, b_eq, x, nu, mu, iterations, polish_steps)
    }

    fn unsolved(&self, q: &Vector, b_eq: &Vector, st: &AdmmState, status: QpStatus, iterations: usize, polish_steps: usize) -> QpSolution {
        QpSolution {
            status,
            ..self.admm_solution(q, b_eq, st, iterations, polish_steps)
        }
    }

    fn problem_view(&self, q: &Vector, b_eq: &Vector) -> QpProblem {
        // Cheap enough next to a solve; keeps one residual implementation.
        self.problem(q, b_eq)
    }
}

fn amax(v: &Vector) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.amax()
    }
}

/// Ruiz equilibration of `[P Aᵀ; A 0]` followed by cost scaling.
/// Returns `(D, E, c, c·D P D, E A D)`.
fn equilibrate(p: &Matrix, a: &Matrix, iters: usize) -> (Vector, Vector, f64, Matrix, Matrix) {
    let (n, m) = (p.nrows(), a.nrows());
    let mut d = Vector::from_element(n, 1.0);
    let mut e = Vector::from_element(m, 1.0);
    let mut ps = p.clone();
    let mut as_ = a.clone();
    let clamp = |v: f64| {
        if v < 1e-4 {
            1.0
        } else {
            v.min(1e4)
        }
    };
    for _ in 0..iters {
        let mut dd = Vector::zeros(n);
        for j in 0..n {
            let mut cn = ps.column(j).amax();
            if m > 0 {
                cn = cn.max(as_.column(j).amax());
            }
            dd[j] = 1.0 / libm::sqrt(clamp(cn));
        }
        let de = Vector::from_fn(m, |i, _| 1.0 / libm::sqrt(clamp(as_.row(i).amax())));
        for j in 0..n {
            for i in 0..n {
                ps[(i, j)] *= dd[i] * dd[j];
            }
            for i in 0..m {
                as_[(i, j)] *= de[i] * dd[j];
            }
        }
        d.component_mul_assign(&dd);
        e.component_mul_assign(&de);
    }
    let mean_col = if n > 0 {
        (0..n).map(|j| ps.column(j).amax()).sum::<f64>() / n as f64
    } else {
        1.0
    };
    let c = 1.0 / clamp(mean_col);
    ps *= c;
    (d, e, c, ps, as_)
}
