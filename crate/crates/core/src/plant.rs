//! Third-order single-zone building model used as ground truth.
//!
//! States are the zone air temperature, an internal wall and an external
//! wall. The input is heating power in W; disturbances are ambient
//! temperature, solar radiation and internal gains. One step is 600 s.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, Matrix1x3, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BuildingModel {
    pub a: Matrix3<f64>,
    pub b: Vector3<f64>,
    pub e: Matrix3<f64>,
    pub c: Matrix1x3<f64>,
}

impl Default for BuildingModel {
    fn default() -> Self {
        #[rustfmt::skip]
        let a = Matrix3::new(
            0.8511, 0.0541, 0.0707,
            0.1293, 0.8635, 0.0055,
            0.0989, 0.0032, 0.7541,
        );
        let b = Vector3::new(0.0035, 0.0003, 0.0002);
        #[rustfmt::skip]
        let e = Matrix3::new(
            22.2170, 1.7912, 42.2123,
            1.5376, 0.6944, 2.9214,
            103.1813, 0.1032, 196.0444,
        ) * 1e-3;
        let c = Matrix1x3::new(1.0, 0.0, 0.0);
        Self { a, b, e, c }
    }
}

impl BuildingModel {
    /// One step `x+ = A x + B u + E w`, returning `(x+, C x)`.
    pub fn step(&self, x: &Vector3<f64>, u: f64, w: &Vector3<f64>) -> Result<(Vector3<f64>, f64)> {
        if !u.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "plant inputs must be finite, got u = {}, w = {:?}",
                u,
                w.as_slice()
            )));
        }
        let y = self.output(x);
        Ok((self.a * x + self.b * u + self.e * w, y))
    }

    pub fn output(&self, x: &Vector3<f64>) -> f64 {
        (self.c * x)[0]
    }

    /// Steady state `(I - A)^-1 (B u + E w)` under constant inputs.
    pub fn steady_state(&self, u: f64, w: &Vector3<f64>) -> Result<Vector3<f64>> {
        let lhs = Matrix3::identity() - self.a;
        lhs.lu()
            .solve(&(self.b * u + self.e * w))
            .ok_or_else(|| Error::Numerical("I - A is singular; plant has no steady state".into()))
    }

    /// Runs the plant from `x0` under `u` (length `T`) and `w` (`3 × T`).
    /// Returns the outputs `C x_{t+1}`, i.e. the output produced after each
    /// input has acted, and the final state.
    pub fn simulate(&self, x0: &Vector3<f64>, u: &[f64], w: &DMatrix<f64>) -> Result<(Vec<f64>, Vector3<f64>)> {
        if w.nrows() != 3 || w.ncols() != u.len() {
            return Err(Error::Dimension(format!(
                "disturbance block is {}x{}, expected 3x{}",
                w.nrows(),
                w.ncols(),
                u.len()
            )));
        }
        let mut x = *x0;
        let mut y = Vec::with_capacity(u.len());
        for (t, &ut) in u.iter().enumerate() {
            let wt = Vector3::new(w[(0, t)], w[(1, t)], w[(2, t)]);
            x = self.step(&x, ut, &wt)?.0;
            y.push(self.output(&x));
        }
        Ok((y, x))
    }

    /// Largest eigenvalue modulus of `A`.
    pub fn spectral_radius(&self) -> f64 {
        self.a
            .complex_eigenvalues()
            .iter()
            .map(|l| libm::hypot(l.re, l.im))
            .fold(0.0, f64::max)
    }
}

/// Seeded uniform measurement noise on `[-amplitude, amplitude]`.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    rng: ChaCha8Rng,
    amplitude: f64,
}

impl NoiseSource {
    /// Measurement noise amplitude in K used by all experiments.
    pub const DEFAULT_AMPLITUDE: f64 = 0.05;

    pub fn new(seed: u64, amplitude: f64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            amplitude: amplitude.abs(),
        }
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn sample(&mut self) -> f64 {
        // Draw even when the amplitude is zero so streams stay aligned.
        let r: f64 = self.rng.random_range(-1.0..=1.0);
        r * self.amplitude
    }

    /// Adds one noise sample to a true output.
    pub fn measure(&mut self, y_true: f64) -> f64 {
        y_true + self.sample()
    }
}
