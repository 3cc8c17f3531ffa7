//! CSV and JSON files written and read by the CLI.

use std::fs::{self, File};
use std::path::Path;

use deepc_core::controllers::ControllerKind;
use serde::Serialize;

use crate::kpi::KpiRecord;
use crate::sim::StepRecord;
use crate::{Comparison, HarnessError, Scenario};

const TRAJECTORY_COLUMNS: [&str; 10] = [
    "t", "y_ref", "y_true", "y_meas", "u", "ambient", "solar", "gains", "solve_ms", "status",
];

pub fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn create(path: &Path) -> Result<File, HarnessError> {
    File::create(path).map_err(|e| HarnessError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> HarnessError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => HarnessError::io(path, io),
        other => HarnessError::format(path, format!("{:?}", other)),
    }
}

/// Writes the per-step records. Without `timing` the `solve_ms` column is
/// left out and the file is a deterministic function of the configuration.
pub fn write_trajectory(path: &Path, records: &[StepRecord], timing: bool) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let header: Vec<&str> = TRAJECTORY_COLUMNS
        .iter()
        .copied()
        .filter(|c| timing || *c != "solve_ms")
        .collect();
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for r in records {
        let mut row = vec![
            r.t.to_string(),
            r.y_ref.to_string(),
            r.y_true.to_string(),
            r.y_meas.to_string(),
            r.u.to_string(),
            r.ambient.to_string(),
            r.solar.to_string(),
            r.gains.to_string(),
        ];
        if timing {
            row.push(r.solve_ms.to_string());
        }
        row.push(r.status.clone());
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Reads a trajectory written by [`write_trajectory`]. A missing `solve_ms`
/// column reads as zero.
pub fn read_trajectory(path: &Path) -> Result<Vec<StepRecord>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let required = |name: &str| col(name).ok_or_else(|| HarnessError::format(path, format!("missing column '{}'", name)));
    let idx = [
        required("t")?,
        required("y_ref")?,
        required("y_true")?,
        required("y_meas")?,
        required("u")?,
        required("ambient")?,
        required("solar")?,
        required("gains")?,
    ];
    let (solve, status) = (col("solve_ms"), col("status"));
    let mut out = Vec::new();
    for (line, row) in r.records().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let num = |i: usize| -> Result<f64, HarnessError> {
            let field = row.get(i).unwrap_or("");
            field
                .parse()
                .map_err(|_| HarnessError::format(path, format!("row {}: '{}' is not a number", line + 1, field)))
        };
        out.push(StepRecord {
            t: num(idx[0])? as usize,
            y_ref: num(idx[1])?,
            y_true: num(idx[2])?,
            y_meas: num(idx[3])?,
            u: num(idx[4])?,
            ambient: num(idx[5])?,
            solar: num(idx[6])?,
            gains: num(idx[7])?,
            solve_ms: match solve {
                Some(i) => num(i)?,
                None => 0.0,
            },
            status: status.and_then(|i| row.get(i)).unwrap_or("").to_string(),
        });
    }
    Ok(out)
}

/// Identification data: input, all weather channels, true and measured
/// output.
pub fn write_identification(path: &Path, scenario: &Scenario) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["t", "u", "ambient", "solar", "gains", "y_true", "y_meas"])
        .map_err(|e| csv_error(path, e))?;
    for t in 0..scenario.id_u.len() {
        let wt = scenario.id_weather.at(t);
        w.write_record([
            t.to_string(),
            scenario.id_u[t].to_string(),
            wt[0].to_string(),
            wt[1].to_string(),
            wt[2].to_string(),
            scenario.id_y_true[t].to_string(),
            scenario.id_y_meas[t].to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::format(path, e))?;
    fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
}

#[derive(Debug, Serialize)]
pub struct KpiEntry<'a> {
    pub controller: ControllerKind,
    #[serde(flatten)]
    pub kpis: Option<&'a KpiRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct KpiReport<'a> {
    pub seeds: Seeds,
    pub controllers: Vec<KpiEntry<'a>>,
}

/// Every seed that influences a run.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Seeds {
    pub excitation: u64,
    pub identification_noise: u64,
    pub weather: u64,
    pub closed_loop_noise: u64,
}

impl Seeds {
    pub fn of(scenario: &Scenario) -> Self {
        let c = &scenario.config;
        Self {
            excitation: c.dataset.excitation_seed,
            identification_noise: c.dataset.noise_seed,
            weather: c.weather.seed,
            closed_loop_noise: c.sim.noise_seed,
        }
    }
}

impl<'a> KpiReport<'a> {
    pub fn from_comparison(cmp: &'a Comparison) -> Self {
        Self {
            seeds: Seeds::of(&cmp.scenario),
            controllers: cmp
                .runs
                .iter()
                .map(|(kind, run)| match run {
                    Ok(r) => KpiEntry {
                        controller: *kind,
                        kpis: Some(&r.kpis),
                        error: None,
                    },
                    Err(e) => KpiEntry {
                        controller: *kind,
                        kpis: None,
                        error: Some(e.to_string()),
                    },
                })
                .collect(),
        }
    }
}
