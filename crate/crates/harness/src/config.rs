//! Experiment configuration, read from and written to TOML.
//!
//! Every field has a default, so an empty file is a valid configuration.
//! `deepc print-config` writes the defaults with these comments stripped.

use std::fs;
use std::path::{Path, PathBuf};

use deepc_core::controllers::{ControllerConfig, ControllerKind};
use deepc_core::data::{ReferenceSchedule, WeatherParams, STEPS_PER_DAY};
use deepc_core::plant::NoiseSource;
use deepc_core::Error;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// Identification experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Length of the identification experiment in steps (576 = 4 days).
    pub steps: usize,
    /// Seed of the uniform excitation input.
    pub excitation_seed: u64,
    /// Excitation bounds in W.
    pub u_lo: f64,
    pub u_hi: f64,
    /// Seed of the measurement noise on the identification outputs.
    pub noise_seed: u64,
    /// Internal gains during identification. Unset follows the top-level
    /// `gains` switch.
    pub gains: Option<bool>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            steps: 576,
            excitation_seed: 1,
            u_lo: 0.0,
            u_hi: 600.0,
            noise_seed: 7,
            gains: None,
        }
    }
}

/// Closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Number of closed-loop steps (432 = 3 days).
    pub steps: usize,
    /// Seed of the measurement noise, shared by all controllers.
    pub noise_seed: u64,
    /// Measurement noise amplitude in K; samples are uniform on ±amplitude.
    pub noise_amplitude: f64,
    /// Steps excluded from the KPIs as settling time (18 = 3 h).
    pub settle_steps: usize,
    /// Steps at the end of the run averaged into the steady-state tracking
    /// error (144 = the last day).
    pub bias_window: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            steps: 3 * STEPS_PER_DAY,
            noise_seed: 42,
            noise_amplitude: NoiseSource::DEFAULT_AMPLITUDE,
            settle_steps: 18,
            bias_window: STEPS_PER_DAY,
        }
    }
}

/// Piecewise-constant temperature reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    /// Explicit `(start_step, setpoint °C)` pairs. When empty, the
    /// alternating schedule below is used.
    pub schedule: Vec<(usize, f64)>,
    /// Steps between setpoint changes of the alternating schedule (36 = 6 h).
    pub period: usize,
    /// Setpoints of the alternating schedule, starting with `low`.
    pub low: f64,
    pub high: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            schedule: Vec::new(),
            period: 36,
            low: 20.0,
            high: 22.0,
        }
    }
}

impl ReferenceConfig {
    /// The schedule covering `steps` steps.
    pub fn schedule(&self, steps: usize) -> Result<ReferenceSchedule, Error> {
        if self.schedule.is_empty() {
            ReferenceSchedule::alternating(steps, self.period, self.low, self.high)
        } else {
            ReferenceSchedule::new(self.schedule.clone())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory for `trajectory.csv`, `kpis.json` and failure dumps.
    pub dir: PathBuf,
    /// Write the wall-clock `solve_ms` column. Everything else in the
    /// trajectory is a deterministic function of the configuration.
    pub timing_column: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            timing_column: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    /// Weather generator; shared by identification and closed loop.
    pub weather: WeatherParams,
    /// Internal gains switched on. When false the gains channel is zero in
    /// both the identification data and the closed loop.
    pub gains: bool,
    /// Pass the internal-gains channel to the controllers. By default they
    /// only see ambient temperature and solar radiation, and the gains act
    /// as an unobserved, biased disturbance.
    pub gains_observed: bool,
    /// Controllers run by `compare`.
    pub controllers: Vec<ControllerKind>,
    /// Run the controllers of `compare` on parallel threads.
    pub parallel: bool,
    pub controller: ControllerConfig,
    pub sim: SimConfig,
    pub reference: ReferenceConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            weather: WeatherParams::default(),
            gains: true,
            gains_observed: false,
            controllers: ControllerKind::COMPARED.to_vec(),
            parallel: true,
            controller: ControllerConfig::default(),
            sim: SimConfig::default(),
            reference: ReferenceConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    /// Weather parameters of the closed loop, with the gains switch applied.
    pub fn effective_weather(&self) -> WeatherParams {
        self.weather_with_gains(self.gains)
    }

    /// Weather parameters of the identification experiment.
    pub fn identification_weather(&self) -> WeatherParams {
        self.weather_with_gains(self.dataset.gains.unwrap_or(self.gains))
    }

    fn weather_with_gains(&self, gains: bool) -> WeatherParams {
        let mut w = self.weather.clone();
        if !gains {
            w.gains_level = 0.0;
            w.gains_jitter = 0.0;
        }
        w
    }

    /// Weather channels handed to the controllers.
    pub fn observed_channels(&self) -> Vec<usize> {
        if self.gains_observed {
            vec![0, 1, 2]
        } else {
            vec![0, 1]
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.controller.validate()?;
        if !(self.dataset.u_lo < self.dataset.u_hi) {
            return Err(Error::Config(format!(
                "excitation bounds must satisfy u_lo < u_hi, got [{}, {}]",
                self.dataset.u_lo, self.dataset.u_hi
            )));
        }
        let depth = self.controller.t_ini + self.controller.t_f;
        if self.dataset.steps < depth {
            return Err(Error::Config(format!(
                "identification length {} is shorter than t_ini + t_f = {}",
                self.dataset.steps, depth
            )));
        }
        if self.sim.steps <= self.sim.settle_steps + 2 {
            return Err(Error::Config(format!(
                "simulation of {} steps leaves no KPI window after {} settling steps",
                self.sim.steps, self.sim.settle_steps
            )));
        }
        if self.sim.bias_window == 0 || self.sim.bias_window > self.sim.steps - self.sim.settle_steps {
            return Err(Error::Config(format!(
                "bias_window must be in 1..={}, got {}",
                self.sim.steps - self.sim.settle_steps,
                self.sim.bias_window
            )));
        }
        if !(self.sim.noise_amplitude >= 0.0 && self.sim.noise_amplitude.is_finite()) {
            return Err(Error::Config(format!(
                "noise amplitude must be finite and non-negative, got {}",
                self.sim.noise_amplitude
            )));
        }
        if self.controllers.is_empty() {
            return Err(Error::Config("no controllers selected".into()));
        }
        if self.controllers.contains(&ControllerKind::Basic) && self.controller.lambda.is_none() {
            return Err(Error::Config("basic DeePC needs controller.lambda".into()));
        }
        self.reference.schedule(self.sim.steps)?;
        Ok(())
    }
}
