//! Receding-horizon closed loop.

use std::time::Instant;

use deepc_core::controllers::{Controller, ControllerKind, IniWindow, Plan};
use deepc_core::plant::NoiseSource;
use deepc_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::kpi::{compute_kpis, KpiRecord};
use crate::{HarnessError, Scenario};

/// One closed-loop step. `y_true` and `y_meas` are the zone temperature
/// after `u` has acted for one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub y_ref: f64,
    pub y_true: f64,
    pub y_meas: f64,
    pub u: f64,
    pub ambient: f64,
    pub solar: f64,
    pub gains: f64,
    pub solve_ms: f64,
    pub status: String,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub controller: ControllerKind,
    pub records: Vec<StepRecord>,
    pub kpis: KpiRecord,
}

/// What the controller saw at one step, in normalized coordinates.
#[derive(Debug)]
pub struct StepContext<'a> {
    pub step: usize,
    pub ini: &'a IniWindow,
    pub w_f: &'a Matrix,
    pub y_ref: &'a Matrix,
}

pub fn run_closed_loop(scenario: &Scenario, controller: &dyn Controller) -> Result<SimResult, HarnessError> {
    run_closed_loop_with(scenario, controller, |_, _| Ok(()))
}

/// Runs the closed loop and calls `observe` with every plan before its first
/// input is applied. An error from `observe` aborts the run.
pub fn run_closed_loop_with(
    scenario: &Scenario,
    controller: &dyn Controller,
    mut observe: impl FnMut(&StepContext<'_>, &Plan) -> Result<(), HarnessError>,
) -> Result<SimResult, HarnessError> {
    let cfg = &scenario.config;
    let (t_ini, t_f) = (cfg.controller.t_ini, cfg.controller.t_f);
    let model = &scenario.model;
    let norm = controller.normalization();
    let start = scenario.loop_start();
    let mut noise = NoiseSource::new(cfg.sim.noise_seed, cfg.sim.noise_amplitude);

    let mut x = model.steady_state(0.0, &scenario.weather_at(start))?;
    let mut u_hist = Vec::with_capacity(t_ini + cfg.sim.steps);
    let mut y_hist = Vec::with_capacity(t_ini + cfg.sim.steps);
    for t in start..start + t_ini {
        x = model.step(&x, 0.0, &scenario.weather_at(t))?.0;
        u_hist.push(0.0);
        y_hist.push(noise.measure(model.output(&x)));
    }

    let kind = controller.kind();
    let fail = |step: usize| move |source| HarnessError::Step {
        controller: kind.to_string(),
        step,
        source,
    };
    let mut records = Vec::with_capacity(cfg.sim.steps);
    for k in 0..cfg.sim.steps {
        let t = start + t_ini + k;
        let h = u_hist.len();
        let ini = norm
            .ini(
                &Matrix::from_row_slice(1, t_ini, &u_hist[h - t_ini..]),
                &scenario.observed_weather(t - t_ini, t_ini),
                &Matrix::from_row_slice(1, t_ini, &y_hist[h - t_ini..]),
            )
            .map_err(fail(k))?;
        let w_f = norm.w.apply_matrix(&scenario.observed_weather(t, t_f));
        let y_ref = norm.y.apply_matrix(&Matrix::from_row_slice(1, t_f, &scenario.reference[k..k + t_f]));

        let clock = Instant::now();
        let plan = controller.plan(&ini, &w_f, &y_ref).map_err(fail(k))?;
        let solve_ms = clock.elapsed().as_secs_f64() * 1e3;
        observe(
            &StepContext {
                step: k,
                ini: &ini,
                w_f: &w_f,
                y_ref: &y_ref,
            },
            &plan,
        )?;

        let u = plan.first_input();
        let w = scenario.weather_at(t);
        x = model.step(&x, u, &w)?.0;
        let y_true = model.output(&x);
        let y_meas = noise.measure(y_true);
        u_hist.push(u);
        y_hist.push(y_meas);
        records.push(StepRecord {
            t: k,
            y_ref: scenario.reference[k],
            y_true,
            y_meas,
            u,
            ambient: w[0],
            solar: w[1],
            gains: w[2],
            solve_ms,
            status: plan.diagnostics.status.to_string(),
        });
    }
    let kpis = compute_kpis(&records, cfg.sim.settle_steps, cfg.sim.bias_window)?;
    Ok(SimResult {
        controller: kind,
        records,
        kpis,
    })
}
