//! Shared inputs of a closed-loop experiment: weather, reference and the
//! identification dataset.
//!
//! Time runs in one absolute index. Steps `0..dataset.steps` are the
//! identification experiment. The closed loop starts right after it: the
//! plant is reset to the steady state under zero heating and the weather at
//! that step, then runs `t_ini` steps with zero heating to fill the first
//! initialization window, and then `sim.steps` controlled steps.
//!
//! Output `y[t]` is the zone temperature after input `u[t]` has acted, i.e.
//! `C x[t+1]`.

use deepc_core::controllers::{build_controller, Controller, ControllerKind};
use deepc_core::data::{generate_excitation, generate_reference, generate_weather, IdDataset, TimeSeries};
use deepc_core::hankel::{check_persistent_excitation, HankelBlocks, PeReport};
use deepc_core::plant::{BuildingModel, NoiseSource};
use deepc_core::Matrix;
use nalgebra::Vector3;

use crate::{ExperimentConfig, HarnessError};

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ExperimentConfig,
    pub model: BuildingModel,
    /// All three weather channels over the identification and closed-loop
    /// periods plus one forecast horizon.
    pub weather: TimeSeries,
    /// Weather during identification; differs from `weather` only in the
    /// gains channel, when `dataset.gains` overrides `gains`.
    pub id_weather: TimeSeries,
    /// Identification input, true and measured outputs.
    pub id_u: Vec<f64>,
    pub id_y_true: Vec<f64>,
    pub id_y_meas: Vec<f64>,
    /// Identification data restricted to the observed weather channels.
    pub dataset: IdDataset,
    /// Reference over the closed loop plus one horizon, °C.
    pub reference: Vec<f64>,
}

impl Scenario {
    pub fn new(config: &ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let c = &config.controller;
        let total = config.dataset.steps + c.t_ini + config.sim.steps + c.t_f;
        let weather = generate_weather(total, &config.effective_weather())?;
        let model = BuildingModel::default();

        let n_id = config.dataset.steps;
        let id_u = generate_excitation(n_id, config.dataset.excitation_seed, config.dataset.u_lo, config.dataset.u_hi)?
            .channel(0);
        // Same seed, so only the gains channel can differ from `weather`.
        let id_weather = generate_weather(n_id, &config.identification_weather())?;
        let w_id = id_weather.values().clone();
        let x0 = model.steady_state(0.0, &weather_at(&id_weather, 0))?;
        let (id_y_true, _) = model.simulate(&x0, &id_u, &w_id)?;
        let mut noise = NoiseSource::new(config.dataset.noise_seed, config.sim.noise_amplitude);
        let id_y_meas: Vec<f64> = id_y_true.iter().map(|&y| noise.measure(y)).collect();

        let w_obs = id_weather.select(&config.observed_channels())?;
        let dataset = IdDataset::new(
            TimeSeries::scalar("u", &id_u)?,
            w_obs,
            TimeSeries::scalar("y", &id_y_meas)?,
        )?;

        let ref_len = config.sim.steps + c.t_f;
        let reference = generate_reference(ref_len, &config.reference.schedule(ref_len)?)?.channel(0);
        Ok(Self {
            config: config.clone(),
            model,
            weather,
            id_weather,
            id_u,
            id_y_true,
            id_y_meas,
            dataset,
            reference,
        })
    }

    /// Absolute index of the first closed-loop (pre-roll) step.
    pub fn loop_start(&self) -> usize {
        self.config.dataset.steps
    }

    pub fn weather_at(&self, t: usize) -> Vector3<f64> {
        weather_at(&self.weather, t)
    }

    /// Observed weather channels over `[start, start + len)`.
    pub fn observed_weather(&self, start: usize, len: usize) -> Matrix {
        let v = self.weather.values();
        let ch = self.config.observed_channels();
        Matrix::from_fn(ch.len(), len, |r, c| v[(ch[r], start + c)])
    }

    pub fn pe_report(&self) -> Result<PeReport, HarnessError> {
        let blocks = HankelBlocks::from_dataset(&self.dataset, self.config.controller.t_ini, self.config.controller.t_f)?;
        Ok(check_persistent_excitation(&blocks)?)
    }

    pub fn build(&self, kind: ControllerKind) -> Result<Box<dyn Controller>, HarnessError> {
        Ok(build_controller(kind, &self.dataset, &self.config.controller)?)
    }
}

fn weather_at(weather: &TimeSeries, t: usize) -> Vector3<f64> {
    let v = weather.values();
    Vector3::new(v[(0, t)], v[(1, t)], v[(2, t)])
}
