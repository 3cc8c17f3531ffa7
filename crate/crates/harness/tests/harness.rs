use deepc_core::controllers::{identify_arx, ControllerKind, Normalization};
use deepc_core::data::{generate_excitation, generate_weather, IdDataset, TimeSeries, WeatherParams, STEPS_PER_DAY};
use deepc_core::plant::{BuildingModel, NoiseSource};
use deepc_core::{Matrix, Vector};
use deepc_harness::io::{read_trajectory, write_trajectory};
use deepc_harness::sim::run_closed_loop_with;
use deepc_harness::{run_closed_loop, ExperimentConfig, HarnessError, Scenario};
use nalgebra::Vector3;

fn short_config(steps: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.sim.steps = steps;
    c.sim.bias_window = 5;
    c
}

#[test]
fn empty_config_is_the_default() {
    let c = ExperimentConfig::from_toml("").unwrap();
    assert_eq!(c, ExperimentConfig::default());
    let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
    assert_eq!(back, c);
}

#[test]
fn config_keys_are_checked() {
    assert!(ExperimentConfig::from_toml("gains_obsreved = true").is_err());
    assert!(ExperimentConfig::from_toml("[controller]\nt_f = 0").is_err());
    assert!(ExperimentConfig::from_toml("[controller]\nt_ini = 0").is_err());
    assert!(ExperimentConfig::from_toml("controllers = [\"basic\"]").is_err());
    assert!(ExperimentConfig::from_toml("controllers = [\"basic\"]\n[controller]\nlambda = 10.0").is_ok());
    assert!(ExperimentConfig::from_toml("controllers = [\"mpc\"]").is_err());
}

#[test]
fn default_identification_data_is_persistently_exciting() {
    let s = Scenario::new(&ExperimentConfig::default()).unwrap();
    let pe = s.pe_report().unwrap();
    assert!(pe.pass, "rank {} of {}", pe.rank, pe.required_rank);
    assert_eq!(pe.required_rank, 3 * 54);
    assert_eq!(s.dataset.len(), 576);
    assert_eq!(s.dataset.n_w(), 2);
}

#[test]
fn observed_gains_with_a_constant_level_cannot_be_normalized() {
    let mut c = ExperimentConfig::default();
    c.gains_observed = true;
    let err = Scenario::new(&c).unwrap_err();
    assert_eq!(err.category(), "config");
    assert!(err.to_string().contains("gains"), "{}", err);
    c.weather.gains_jitter = 0.5;
    let s = Scenario::new(&c).unwrap();
    assert_eq!(s.dataset.n_w(), 3);
}

/// Zone temperature under zero heating from the default weather.
fn open_loop(params: &WeatherParams, days: usize) -> Vec<f64> {
    let model = BuildingModel::default();
    let n = days * STEPS_PER_DAY;
    let w = generate_weather(n, params).unwrap();
    let x0 = model
        .steady_state(0.0, &Vector3::new(w.values()[(0, 0)], w.values()[(1, 0)], w.values()[(2, 0)]))
        .unwrap();
    model.simulate(&x0, &vec![0.0; n], w.values()).unwrap().0
}

#[test]
fn open_loop_temperature_is_plausible() {
    let y = open_loop(&WeatherParams::default(), 5);
    assert!(y.iter().all(|&t| t > -10.0 && t < 40.0));
}

#[test]
fn solar_gains_raise_the_zone_by_five_to_ten_kelvin() {
    let days = 5;
    let base = WeatherParams::default();
    let dark = WeatherParams { sol_max: 0.0, ..base.clone() };
    let (sun, no_sun) = (open_loop(&base, days), open_loop(&dark, days));
    let last = (days - 1) * STEPS_PER_DAY;
    let rise = (last..days * STEPS_PER_DAY)
        .map(|t| sun[t] - no_sun[t])
        .fold(f64::MIN, f64::max);
    assert!((5.0..=10.0).contains(&rise), "rise {}", rise);
    // The clear-sky profile is the upper end.
    let clear = WeatherParams { solar_jitter: 0.0, ..base };
    let clear_rise = (last..days * STEPS_PER_DAY)
        .map(|t| open_loop(&clear, days)[t] - no_sun[t])
        .fold(f64::MIN, f64::max);
    assert!((5.0..=10.0).contains(&clear_rise), "clear-sky rise {}", clear_rise);
}

#[test]
fn arx_open_loop_prediction_beats_the_noise_level() {
    // Identify on the first 576 steps, predict 48 steps ahead on the next 300.
    let (n_id, extra, t_ini, t_f) = (576, 300, 6, 48);
    let total = n_id + extra;
    let model = BuildingModel::default();
    let w = generate_weather(total, &WeatherParams::default()).unwrap();
    let u = generate_excitation(total, 1, 0.0, 600.0).unwrap().channel(0);
    let wv = w.values();
    let x0 = model.steady_state(0.0, &Vector3::new(wv[(0, 0)], wv[(1, 0)], wv[(2, 0)])).unwrap();
    let (y_true, _) = model.simulate(&x0, &u, wv).unwrap();
    let mut noise = NoiseSource::new(7, NoiseSource::DEFAULT_AMPLITUDE);
    let y_meas: Vec<f64> = y_true.iter().map(|&y| noise.measure(y)).collect();
    let w_obs = w.select(&[0, 1]).unwrap();
    let dataset = IdDataset::new(
        TimeSeries::scalar("u", &u[..n_id]).unwrap(),
        w_obs.window(0, n_id).unwrap(),
        TimeSeries::scalar("y", &y_meas[..n_id]).unwrap(),
    )
    .unwrap();
    let arx = identify_arx(&dataset, t_ini, false).unwrap();
    let norm = Normalization::from_dataset(&dataset);
    let wo = w_obs.values();

    let mut sq = 0.0;
    let mut count = 0;
    for k in (n_id + t_ini..total - t_f).step_by(6) {
        let ini = norm
            .ini(
                &Matrix::from_row_slice(1, t_ini, &u[k - t_ini..k]),
                &wo.columns(k - t_ini, t_ini).into_owned(),
                &Matrix::from_row_slice(1, t_ini, &y_meas[k - t_ini..k]),
            )
            .unwrap();
        let w_f = norm.w.apply_matrix(&wo.columns(k, t_f).into_owned());
        let u_f = Vector::from_iterator(t_f, (k..k + t_f).map(|t| norm.u.apply_value(0, u[t])));
        let pred = arx.rollout(&ini, &w_f, &u_f).unwrap();
        for i in 0..t_f {
            let truth = norm.y.apply_value(0, y_true[k + i]);
            sq += (pred[i] - truth).powi(2);
            count += 1;
        }
    }
    let rmse = (sq / count as f64).sqrt();
    let noise_std = NoiseSource::DEFAULT_AMPLITUDE / 3f64.sqrt() / norm.y.scale()[0];
    assert!(rmse < noise_std, "48-step RMSE {:e} vs noise std {:e}", rmse, noise_std);
}

#[test]
fn zero_length_horizon_is_rejected() {
    let mut c = ExperimentConfig::default();
    c.controller.t_f = 0;
    assert_eq!(Scenario::new(&c).unwrap_err().category(), "config");
}

#[test]
fn receding_horizon_applies_the_first_planned_input() {
    let s = Scenario::new(&short_config(40)).unwrap();
    let c = s.build(ControllerKind::Iv).unwrap();
    let mut firsts = Vec::new();
    let r = run_closed_loop_with(&s, c.as_ref(), |ctx, plan| {
        assert_eq!(ctx.step, firsts.len());
        assert_eq!(ctx.ini.len(), 6);
        assert_eq!(ctx.w_f.ncols(), 48);
        assert_eq!(plan.u.ncols(), 48);
        firsts.push(plan.first_input());
        Ok(())
    })
    .unwrap();
    assert_eq!(r.records.len(), 40);
    for (rec, u0) in r.records.iter().zip(&firsts) {
        assert_eq!(rec.u, *u0);
        assert_eq!(rec.status, "optimal");
        assert!((-1e-6..=600.0 + 1e-6).contains(&rec.u));
        assert!((rec.y_meas - rec.y_true).abs() <= 0.05);
    }
}

#[test]
fn observer_errors_abort_the_run() {
    let s = Scenario::new(&short_config(30)).unwrap();
    let c = s.build(ControllerKind::Iv).unwrap();
    let err = run_closed_loop_with(&s, c.as_ref(), |ctx, _| {
        if ctx.step == 3 {
            Err(deepc_core::Error::Numerical("stop".into()).into())
        } else {
            Ok(())
        }
    })
    .unwrap_err();
    assert!(matches!(err, HarnessError::Core(_)));
}

#[test]
fn runs_are_deterministic_and_round_trip_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let s = Scenario::new(&short_config(30)).unwrap();
    let c = s.build(ControllerKind::Arx).unwrap();
    let a = run_closed_loop(&s, c.as_ref()).unwrap();
    let b = run_closed_loop(&Scenario::new(&short_config(30)).unwrap(), s.build(ControllerKind::Arx).unwrap().as_ref())
        .unwrap();
    let (pa, pb) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    write_trajectory(&pa, &a.records, false).unwrap();
    write_trajectory(&pb, &b.records, false).unwrap();
    assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());

    let pc = dir.path().join("c.csv");
    write_trajectory(&pc, &a.records, true).unwrap();
    let back = read_trajectory(&pc).unwrap();
    assert_eq!(back, a.records);
    let back = read_trajectory(&pa).unwrap();
    assert!(back.iter().all(|r| r.solve_ms == 0.0));
    assert_eq!(back.len(), a.records.len());
}

#[test]
fn closed_loop_noise_is_shared_between_controllers() {
    let s = Scenario::new(&short_config(25)).unwrap();
    let iv = run_closed_loop(&s, s.build(ControllerKind::Iv).unwrap().as_ref()).unwrap();
    let arx = run_closed_loop(&s, s.build(ControllerKind::Arx).unwrap().as_ref()).unwrap();
    for (a, b) in iv.records.iter().zip(&arx.records) {
        assert!(((a.y_meas - a.y_true) - (b.y_meas - b.y_true)).abs() < 1e-12);
        assert_eq!((a.ambient, a.solar, a.gains, a.y_ref), (b.ambient, b.solar, b.gains, b.y_ref));
    }
}

#[test]
fn reading_a_malformed_trajectory_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    std::fs::write(&p, "t,y_ref\n0,1\n").unwrap();
    assert_eq!(read_trajectory(&p).unwrap_err().category(), "format");
    std::fs::write(
        &p,
        "t,y_ref,y_true,y_meas,u,ambient,solar,gains,status\n0,20,x,20,0,0,0,0,optimal\n",
    )
    .unwrap();
    assert_eq!(read_trajectory(&p).unwrap_err().category(), "format");
    assert_eq!(read_trajectory(&dir.path().join("missing.csv")).unwrap_err().category(), "io");
}
