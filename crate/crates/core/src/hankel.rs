//! Block Hankel matrices and the linear algebra built on them.
//!
//! Block rows interleave channels per time step: for a series with `c`
//! channels, rows `k*c .. (k+1)*c` of column `j` hold every channel at step
//! `j + k`. This is the same order in which trajectory vectors such as
//! `[u_ini; w_ini; y_ini; u; w_f]` are stacked.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::SVD;

use crate::data::{IdDataset, TimeSeries};
use crate::{Error, Matrix, Result};

/// Default relative tolerance for numerical rank and pseudo-inverses:
/// `1e-10 * max(rows, cols)`, applied relative to the largest singular value.
pub fn default_rel_tol(rows: usize, cols: usize) -> f64 {
    1e-10 * rows.max(cols) as f64
}

/// Depth-`depth` block Hankel matrix of a `channels × steps` block.
pub fn hankel_matrix(values: &Matrix, depth: usize) -> Result<Matrix> {
    let (channels, steps) = values.shape();
    if depth == 0 {
        return Err(Error::Dimension("Hankel depth must be at least 1".into()));
    }
    if steps < depth {
        return Err(Error::Dimension(format!(
            "Hankel depth {} needs at least {} samples, series has {}",
            depth, depth, steps
        )));
    }
    let width = steps - depth + 1;
    let data = values.as_slice();
    let rows = channels * depth;
    let mut h = Matrix::zeros(rows, width);
    for j in 0..width {
        h.column_mut(j)
            .copy_from_slice(&data[j * channels..j * channels + rows]);
    }
    Ok(h)
}

/// Depth-`depth` block Hankel matrix of a time series.
pub fn build_hankel(series: &TimeSeries, depth: usize) -> Result<Matrix> {
    hankel_matrix(series.values(), depth)
}

/// Sizes shared by all blocks of a [`HankelBlocks`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HankelDims {
    pub n_u: usize,
    pub n_w: usize,
    pub n_y: usize,
    pub t_ini: usize,
    pub t_f: usize,
    /// Number of columns, `T - (t_ini + t_f) + 1`.
    pub width: usize,
}

impl HankelDims {
    pub fn depth(&self) -> usize {
        self.t_ini + self.t_f
    }

    /// Rows of `[U_p; W_p; Y_p; U_f; W_f]`.
    pub fn hat_rows(&self) -> usize {
        (self.n_u + self.n_w + self.n_y) * self.t_ini + (self.n_u + self.n_w) * self.t_f
    }

    /// Rows of the full stack including `Y_f`.
    pub fn full_rows(&self) -> usize {
        self.hat_rows() + self.n_y * self.t_f
    }

    /// Rows of the exogenous stack `[U_p; W_p; U_f; W_f]`.
    pub fn exogenous_rows(&self) -> usize {
        (self.n_u + self.n_w) * self.depth()
    }
}

/// Past/future splits of the input, disturbance and output Hankel matrices
/// of one (normalized) identification dataset.
#[derive(Debug, Clone)]
pub struct HankelBlocks {
    pub up: Matrix,
    pub wp: Matrix,
    pub yp: Matrix,
    pub uf: Matrix,
    pub wf: Matrix,
    pub yf: Matrix,
    pub dims: HankelDims,
}

/// The vertical stacks used by the controllers.
#[derive(Debug, Clone)]
pub struct StackedHankel {
    /// `[U_p; W_p; Y_p; U_f; W_f]`.
    pub h_hat: Matrix,
    /// `[h_hat; Y_f]`.
    pub h_full: Matrix,
}

impl HankelBlocks {
    /// Splits the Hankel matrices of the normalized dataset.
    pub fn from_dataset(dataset: &IdDataset, t_ini: usize, t_f: usize) -> Result<Self> {
        let (u, w, y) = dataset.normalized()?;
        Self::from_series(&u, &w, &y, t_ini, t_f)
    }

    /// Splits the Hankel matrices of raw series without normalizing them.
    pub fn from_series(
        u: &TimeSeries,
        w: &TimeSeries,
        y: &TimeSeries,
        t_ini: usize,
        t_f: usize,
    ) -> Result<Self> {
        if t_ini == 0 || t_f == 0 {
            return Err(Error::Config(format!(
                "t_ini and t_f must be at least 1, got {} and {}",
                t_ini, t_f
            )));
        }
        if u.len() != w.len() || u.len() != y.len() {
            return Err(Error::Dimension(format!(
                "u, w, y lengths differ: {}, {}, {}",
                u.len(),
                w.len(),
                y.len()
            )));
        }
        let depth = t_ini + t_f;
        let split = |series: &TimeSeries| -> Result<(Matrix, Matrix)> {
            let h = build_hankel(series, depth)?;
            let c = series.channels();
            Ok((
                h.rows(0, c * t_ini).into_owned(),
                h.rows(c * t_ini, c * t_f).into_owned(),
            ))
        };
        let (up, uf) = split(u)?;
        let (wp, wf) = split(w)?;
        let (yp, yf) = split(y)?;
        let dims = HankelDims {
            n_u: u.channels(),
            n_w: w.channels(),
            n_y: y.channels(),
            t_ini,
            t_f,
            width: up.ncols(),
        };
        Ok(Self {
            up,
            wp,
            yp,
            uf,
            wf,
            yf,
            dims,
        })
    }

    /// `[U_p; W_p; Y_p; U_f; W_f]`.
    pub fn h_hat(&self) -> Matrix {
        vstack(&[&self.up, &self.wp, &self.yp, &self.uf, &self.wf])
    }

    /// `[U_p; W_p; Y_p; U_f; W_f; Y_f]`.
    pub fn h_full(&self) -> Matrix {
        vstack(&[&self.up, &self.wp, &self.yp, &self.uf, &self.wf, &self.yf])
    }

    /// `[U_p; W_p; U_f; W_f]`, the matrix that must have full row rank.
    pub fn exogenous(&self) -> Matrix {
        vstack(&[&self.up, &self.wp, &self.uf, &self.wf])
    }

    pub fn stacked(&self) -> StackedHankel {
        StackedHankel {
            h_hat: self.h_hat(),
            h_full: self.h_full(),
        }
    }
}

/// Convenience alias of [`HankelBlocks::from_dataset`].
pub fn split_blocks(dataset: &IdDataset, t_ini: usize, t_f: usize) -> Result<HankelBlocks> {
    HankelBlocks::from_dataset(dataset, t_ini, t_f)
}

/// Stacks matrices with equal column counts on top of each other.
pub fn vstack(blocks: &[&Matrix]) -> Matrix {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack: column counts differ");
        out.rows_mut(r, b.nrows()).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// Outcome of a persistency-of-excitation check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeReport {
    pub rank: usize,
    pub required_rank: usize,
    pub pass: bool,
}

/// Checks that `[U_p; W_p; U_f; W_f]` has full row rank, i.e. that inputs and
/// disturbances are persistently exciting of order `t_ini + t_f`.
pub fn check_persistent_excitation(blocks: &HankelBlocks) -> Result<PeReport> {
    let h = blocks.exogenous();
    let required_rank = blocks.dims.exogenous_rows();
    let rank = numerical_rank(&h, default_rel_tol(h.nrows(), h.ncols()))?;
    Ok(PeReport {
        rank,
        required_rank,
        pass: rank == required_rank,
    })
}

/// Thin SVD with both factors. Wide matrices are decomposed through their
/// transpose: nalgebra loses accuracy on the small singular values of wide
/// inputs (relative errors near 1e-1 at condition 1e7 on a 6x9 example).
pub(crate) fn svd(m: &Matrix) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    if m.is_empty() {
        return Err(Error::Dimension("SVD of an empty matrix".into()));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    let fail = || Error::Numerical("SVD did not converge".into());
    if m.nrows() >= m.ncols() {
        return SVD::try_new(m.clone(), true, true, f64::EPSILON, 0).ok_or_else(fail);
    }
    let t = SVD::try_new(m.transpose(), true, true, f64::EPSILON, 0).ok_or_else(fail)?;
    Ok(SVD {
        u: t.v_t.map(|v| v.transpose()),
        v_t: t.u.map(|u| u.transpose()),
        singular_values: t.singular_values,
    })
}

fn cutoff(sv: &nalgebra::DVector<f64>, rel_tol: f64) -> f64 {
    sv.iter().copied().fold(0.0, f64::max) * rel_tol
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(m: &Matrix, rel_tol: f64) -> Result<usize> {
    let s = svd(m)?;
    let cut = cutoff(&s.singular_values, rel_tol);
    Ok(s.singular_values.iter().filter(|&&x| x > cut).count())
}

/// Moore-Penrose pseudo-inverse via SVD; singular values at or below
/// `rel_tol * sigma_max` are treated as zero.
pub fn pinv(m: &Matrix, rel_tol: f64) -> Result<Matrix> {
    let s = svd(m)?;
    let cut = cutoff(&s.singular_values, rel_tol);
    let u = s.u.as_ref().expect("u requested");
    let v_t = s.v_t.as_ref().expect("v_t requested");
    let mut out = Matrix::zeros(m.ncols(), m.nrows());
    for (k, &sigma) in s.singular_values.iter().enumerate() {
        if sigma > cut {
            // out += v_k u_k^T / sigma
            out.ger(1.0 / sigma, &v_t.row(k).transpose(), &u.column(k), 1.0);
        }
    }
    Ok(out)
}

/// Orthogonal projector onto the row space of `m`, `pinv(m) * m`, computed
/// as `V_r V_r^T` from the leading right singular vectors.
pub fn row_space_projector(m: &Matrix) -> Result<Matrix> {
    let s = svd(m)?;
    let cut = cutoff(&s.singular_values, default_rel_tol(m.nrows(), m.ncols()));
    let v_t = s.v_t.as_ref().expect("v_t requested");
    let keep: Vec<usize> = (0..s.singular_values.len())
        .filter(|&k| s.singular_values[k] > cut)
        .collect();
    let vr = v_t.select_rows(keep.iter());
    Ok(vr.transpose() * vr)
}
