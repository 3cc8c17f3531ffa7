//! Time-series containers, normalization and deterministic signal generators.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Matrix, Result};

/// Sampling period used by every experiment, in seconds (10 minutes).
pub const STEP_SECONDS: u32 = 600;

/// Steps per simulated day at [`STEP_SECONDS`].
pub const STEPS_PER_DAY: usize = 144;

/// A multichannel sampled signal.
///
/// `values` is `channels × steps`; column `t` holds every channel at step
/// `t`, so the column-major storage interleaves channels per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Matrix,
    step_seconds: u32,
    names: Vec<String>,
}

impl TimeSeries {
    pub fn new(values: Matrix, step_seconds: u32, names: Vec<String>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "time series needs at least one channel and one step, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if step_seconds == 0 {
            return Err(Error::Config("step_seconds must be positive".into()));
        }
        if names.len() != values.nrows() {
            return Err(Error::Dimension(format!(
                "{} channel names for {} channels",
                names.len(),
                values.nrows()
            )));
        }
        Ok(Self {
            values,
            step_seconds,
            names,
        })
    }

    /// Builds a series from per-channel sample vectors of equal length.
    pub fn from_channels(names: &[&str], channels: &[Vec<f64>]) -> Result<Self> {
        let steps = channels.first().map_or(0, Vec::len);
        if let Some((i, c)) = channels.iter().enumerate().find(|(_, c)| c.len() != steps) {
            return Err(Error::Dimension(format!(
                "channel {} has {} samples, expected {}",
                i,
                c.len(),
                steps
            )));
        }
        let values = Matrix::from_fn(channels.len(), steps, |c, t| channels[c][t]);
        Self::new(
            values,
            STEP_SECONDS,
            names.iter().map(|s| s.to_string()).collect(),
        )
    }

    /// Single-channel convenience constructor.
    pub fn scalar(name: &str, samples: &[f64]) -> Result<Self> {
        Self::from_channels(&[name], &[samples.to_vec()])
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn step_seconds(&self) -> u32 {
        self.step_seconds
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn channels(&self) -> usize {
        self.values.nrows()
    }

    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }

    /// Samples of one channel.
    pub fn channel(&self, index: usize) -> Vec<f64> {
        self.values.row(index).iter().copied().collect()
    }

    /// All channels at one step.
    pub fn at(&self, step: usize) -> Vec<f64> {
        self.values.column(step).iter().copied().collect()
    }

    /// Steps `start..end` as a new series.
    pub fn window(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::Dimension(format!(
                "window {}..{} out of range for {} steps",
                start,
                end,
                self.len()
            )));
        }
        Self::new(
            self.values.columns(start, end - start).into_owned(),
            self.step_seconds,
            self.names.clone(),
        )
    }

    /// Keeps only the listed channels, in the given order.
    pub fn select(&self, channels: &[usize]) -> Result<Self> {
        if let Some(&bad) = channels.iter().find(|&&c| c >= self.channels()) {
            return Err(Error::Dimension(format!(
                "channel {} out of range ({} channels)",
                bad,
                self.channels()
            )));
        }
        let values = Matrix::from_fn(channels.len(), self.len(), |r, t| {
            self.values[(channels[r], t)]
        });
        Self::new(
            values,
            self.step_seconds,
            channels.iter().map(|&c| self.names[c].clone()).collect(),
        )
    }

    fn with_values(&self, values: Matrix) -> Self {
        Self {
            values,
            step_seconds: self.step_seconds,
            names: self.names.clone(),
        }
    }
}

/// Per-channel affine normalization `(x - offset) / scale`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Scaler {
    offset: Vec<f64>,
    scale: Vec<f64>,
}

impl Scaler {
    pub fn new(offset: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        if offset.len() != scale.len() {
            return Err(Error::Dimension(format!(
                "{} offsets for {} scales",
                offset.len(),
                scale.len()
            )));
        }
        if let Some(i) = scale.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Config(format!(
                "scale of channel {} must be positive and finite, got {}",
                i, scale[i]
            )));
        }
        Ok(Self { offset, scale })
    }

    pub fn identity(channels: usize) -> Self {
        Self {
            offset: alloc::vec![0.0; channels],
            scale: alloc::vec![1.0; channels],
        }
    }

    /// Fits offset = sample mean and scale = sample standard deviation
    /// (`n - 1` denominator) per channel.
    pub fn fit(series: &TimeSeries) -> Result<Self> {
        let n = series.len();
        if n < 2 {
            return Err(Error::Config(format!(
                "fitting a scaler needs at least 2 samples, got {}",
                n
            )));
        }
        let mut offset = Vec::with_capacity(series.channels());
        let mut scale = Vec::with_capacity(series.channels());
        for (c, row) in series.values().row_iter().enumerate() {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
            let std = libm::sqrt(var);
            if !(std > 1e-12 * mean.abs().max(1.0)) {
                return Err(Error::Config(format!(
                    "channel '{}' has zero variance and cannot be normalized",
                    series.names()[c]
                )));
            }
            offset.push(mean);
            scale.push(std);
        }
        Ok(Self { offset, scale })
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn channels(&self) -> usize {
        self.offset.len()
    }

    pub fn apply_value(&self, channel: usize, x: f64) -> f64 {
        (x - self.offset[channel]) / self.scale[channel]
    }

    pub fn invert_value(&self, channel: usize, z: f64) -> f64 {
        z * self.scale[channel] + self.offset[channel]
    }

    pub fn apply(&self, series: &TimeSeries) -> Result<TimeSeries> {
        self.check(series)?;
        Ok(series.with_values(self.apply_matrix(series.values())))
    }

    pub fn invert(&self, series: &TimeSeries) -> Result<TimeSeries> {
        self.check(series)?;
        Ok(series.with_values(self.invert_matrix(series.values())))
    }

    /// Normalizes a `channels × steps` block.
    pub fn apply_matrix(&self, values: &Matrix) -> Matrix {
        Matrix::from_fn(values.nrows(), values.ncols(), |c, t| {
            self.apply_value(c, values[(c, t)])
        })
    }

    pub fn invert_matrix(&self, values: &Matrix) -> Matrix {
        Matrix::from_fn(values.nrows(), values.ncols(), |c, t| {
            self.invert_value(c, values[(c, t)])
        })
    }

    fn check(&self, series: &TimeSeries) -> Result<()> {
        if series.channels() != self.channels() {
            return Err(Error::Dimension(format!(
                "series has {} channels, scaler has {}",
                series.channels(),
                self.channels()
            )));
        }
        Ok(())
    }
}

/// Identification data: inputs, observed disturbances and outputs of common
/// length, with scalers fitted on this data.
///
/// Alignment convention: `y` at index `t` is the output measured after `u`
/// and `w` at index `t` have acted on the plant, i.e. the first output that
/// `u[t]` can influence.
#[derive(Debug, Clone)]
pub struct IdDataset {
    pub u: TimeSeries,
    pub w: TimeSeries,
    pub y: TimeSeries,
    pub scaler_u: Scaler,
    pub scaler_w: Scaler,
    pub scaler_y: Scaler,
}

impl IdDataset {
    pub fn new(u: TimeSeries, w: TimeSeries, y: TimeSeries) -> Result<Self> {
        if u.len() != w.len() || u.len() != y.len() {
            return Err(Error::Dimension(format!(
                "u, w, y lengths differ: {}, {}, {}",
                u.len(),
                w.len(),
                y.len()
            )));
        }
        let scaler_u = Scaler::fit(&u)?;
        let scaler_w = Scaler::fit(&w)?;
        let scaler_y = Scaler::fit(&y)?;
        Ok(Self {
            u,
            w,
            y,
            scaler_u,
            scaler_w,
            scaler_y,
        })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn n_u(&self) -> usize {
        self.u.channels()
    }

    pub fn n_w(&self) -> usize {
        self.w.channels()
    }

    pub fn n_y(&self) -> usize {
        self.y.channels()
    }

    /// The normalized `(u, w, y)` series.
    pub fn normalized(&self) -> Result<(TimeSeries, TimeSeries, TimeSeries)> {
        Ok((
            self.scaler_u.apply(&self.u)?,
            self.scaler_w.apply(&self.w)?,
            self.scaler_y.apply(&self.y)?,
        ))
    }
}

/// Piecewise-constant setpoint schedule: `(start_step, setpoint)` pairs.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReferenceSchedule {
    entries: Vec<(usize, f64)>,
}

impl ReferenceSchedule {
    pub fn new(entries: Vec<(usize, f64)>) -> Result<Self> {
        match entries.first() {
            None => return Err(Error::Config("reference schedule is empty".into())),
            Some(&(start, _)) if start != 0 => {
                return Err(Error::Config(format!(
                    "reference schedule must start at step 0, starts at {}",
                    start
                )))
            }
            _ => {}
        }
        if entries.windows(2).any(|p| p[1].0 <= p[0].0) {
            return Err(Error::Config(
                "reference schedule start steps must be strictly increasing".into(),
            ));
        }
        if entries.iter().any(|(_, v)| !v.is_finite()) {
            return Err(Error::Config("reference setpoints must be finite".into()));
        }
        Ok(Self { entries })
    }

    /// Alternates between `low` and `high` every `period` steps, starting
    /// with `low`, over `steps` steps.
    pub fn alternating(steps: usize, period: usize, low: f64, high: f64) -> Result<Self> {
        if period == 0 {
            return Err(Error::Config("reference period must be positive".into()));
        }
        let entries = (0..steps.max(1))
            .step_by(period)
            .enumerate()
            .map(|(i, s)| (s, if i % 2 == 0 { low } else { high }))
            .collect();
        Self::new(entries)
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn value_at(&self, step: usize) -> f64 {
        let idx = self.entries.partition_point(|&(s, _)| s <= step);
        self.entries[idx - 1].1
    }
}

/// I.i.d. uniform excitation on `[lo, hi]`, deterministic in `seed`.
pub fn generate_excitation(steps: usize, seed: u64, lo: f64, hi: f64) -> Result<TimeSeries> {
    if !(lo < hi) {
        return Err(Error::Config(format!(
            "excitation bounds must satisfy lo < hi, got [{}, {}]",
            lo, hi
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<f64> = (0..steps).map(|_| rng.random_range(lo..=hi)).collect();
    TimeSeries::scalar("u", &samples)
}

/// Parameters of the synthetic weather generator.
///
/// The deterministic part is a diurnal ambient sinusoid, a daylight
/// half-sine of solar radiation and a constant internal-gains level. The
/// jitter terms add seeded randomness so that identification data is rich
/// enough; set them to zero for the pure periodic profile.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct WeatherParams {
    /// Mean ambient temperature, °C.
    pub amb_mean: f64,
    /// Amplitude of the diurnal ambient swing, K.
    pub amb_amp: f64,
    /// Step of the day (0..144) at which ambient temperature peaks.
    pub t_peak: f64,
    /// Peak of the solar channel at noon.
    pub sol_max: f64,
    /// Constant internal-gains level. The channel is unitless.
    pub gains_level: f64,
    /// Approximate standard deviation of the AR(1) ambient perturbation, K.
    pub ambient_jitter: f64,
    /// Largest fraction of solar radiation removed by clouds.
    pub solar_jitter: f64,
    /// AR(1) coefficient of the cloud cover in `[0, 1)`; 0 gives independent
    /// clouds at every step.
    pub cloud_persistence: f64,
    /// Amplitude of uniform noise on the internal-gains channel.
    pub gains_jitter: f64,
    pub seed: u64,
}

impl Default for WeatherParams {
    fn default() -> Self {
        Self {
            amb_mean: -2.0,
            amb_amp: 4.0,
            t_peak: 84.0,
            sol_max: 330.0,
            gains_level: 2.0,
            ambient_jitter: 0.5,
            solar_jitter: 0.5,
            cloud_persistence: 0.8,
            gains_jitter: 0.0,
            seed: 11,
        }
    }
}

/// Channel names of [`generate_weather`] output.
pub const WEATHER_CHANNELS: [&str; 3] = ["ambient", "solar", "gains"];

/// Three-channel weather: ambient temperature, solar radiation, internal
/// gains. Pure function of `(steps, params)`.
pub fn generate_weather(steps: usize, params: &WeatherParams) -> Result<TimeSeries> {
    if !(0.0..1.0).contains(&params.cloud_persistence) {
        return Err(Error::Config(format!(
            "cloud_persistence must be in [0, 1), got {}",
            params.cloud_persistence
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let day = STEPS_PER_DAY as f64;
    let mut ambient = Vec::with_capacity(steps);
    let mut solar = Vec::with_capacity(steps);
    let mut gains = Vec::with_capacity(steps);
    let mut drift = 0.0;
    let mut cloud = 0.5;
    for t in 0..steps {
        // Three draws per step keep the channels' streams aligned regardless
        // of which jitters are enabled.
        let (e_amb, e_sol, e_gain): (f64, f64, f64) = (
            rng.random_range(-1.0..=1.0),
            rng.random_range(0.0..=1.0),
            rng.random_range(-1.0..=1.0),
        );
        // AR(1) with stationary standard deviation close to ambient_jitter.
        drift = 0.9 * drift + 0.4 * params.ambient_jitter * e_amb;
        let tf = t as f64;
        ambient.push(params.amb_mean + params.amb_amp * libm::cos(2.0 * PI * (tf - params.t_peak) / day) + drift);

        let phase = (t % STEPS_PER_DAY) as f64;
        let clear = (params.sol_max * libm::sin(PI * (phase - 36.0) / 72.0)).max(0.0);
        cloud = params.cloud_persistence * cloud + (1.0 - params.cloud_persistence) * e_sol;
        solar.push(clear * (1.0 - params.solar_jitter * cloud));

        gains.push(params.gains_level + params.gains_jitter * e_gain);
    }
    TimeSeries::from_channels(&WEATHER_CHANNELS, &[ambient, solar, gains])
}

/// Expands a setpoint schedule over `steps` steps.
pub fn generate_reference(steps: usize, schedule: &ReferenceSchedule) -> Result<TimeSeries> {
    let values: Vec<f64> = (0..steps).map(|t| schedule.value_at(t)).collect();
    TimeSeries::scalar("y_ref", &values)
}
