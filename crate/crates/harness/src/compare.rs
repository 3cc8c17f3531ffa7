//! Runs several controllers on one scenario.

use std::fmt::Write;
use std::thread;

use deepc_core::controllers::ControllerKind;

use crate::sim::{run_closed_loop, SimResult};
use crate::{ExperimentConfig, HarnessError, Scenario};

/// Per-controller outcomes in the order of `config.controllers`. A failing
/// controller does not stop the others.
#[derive(Debug)]
pub struct Comparison {
    pub scenario: Scenario,
    pub runs: Vec<(ControllerKind, Result<SimResult, HarnessError>)>,
}

pub fn compare_controllers(config: &ExperimentConfig) -> Result<Comparison, HarnessError> {
    let scenario = Scenario::new(config)?;
    let run = |kind: ControllerKind| -> Result<SimResult, HarnessError> {
        let controller = scenario.build(kind)?;
        run_closed_loop(&scenario, controller.as_ref())
    };
    let runs = if config.parallel {
        thread::scope(|s| {
            let handles: Vec<_> = config
                .controllers
                .iter()
                .map(|&kind| (kind, s.spawn(move || run(kind))))
                .collect();
            handles
                .into_iter()
                .map(|(kind, h)| (kind, h.join().expect("controller thread panicked")))
                .collect()
        })
    } else {
        config.controllers.iter().map(|&kind| (kind, run(kind))).collect()
    };
    Ok(Comparison { scenario, runs })
}

impl Comparison {
    pub fn get(&self, kind: ControllerKind) -> Option<&Result<SimResult, HarnessError>> {
        self.runs.iter().find(|(k, _)| *k == kind).map(|(_, r)| r)
    }

    /// The successful run of `kind`, or its error.
    pub fn result(&self, kind: ControllerKind) -> Result<&SimResult, String> {
        match self.get(kind) {
            Some(Ok(r)) => Ok(r),
            Some(Err(e)) => Err(format!("{}: {}", kind, e)),
            None => Err(format!("{} was not run", kind)),
        }
    }

    /// Markdown table with one row per controller.
    pub fn markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "| controller | RMSE [K] | smoothness | mean error [K] | mean solve [ms] | max solve [ms] |"
        );
        let _ = writeln!(out, "|---|---|---|---|---|---|");
        for (kind, run) in &self.runs {
            match run {
                Ok(r) => {
                    let k = &r.kpis;
                    let _ = writeln!(
                        out,
                        "| {} | {:.4} | {:.4}{} | {:+.4} | {:.2} | {:.2} |",
                        kind,
                        k.rmse_k,
                        k.smoothness,
                        if k.smoothness_undefined { " (constant u)" } else { "" },
                        k.mean_error_k,
                        k.mean_solve_ms,
                        k.max_solve_ms
                    );
                }
                Err(e) => {
                    let _ = writeln!(out, "| {} | failed: {} | | | | |", kind, e);
                }
            }
        }
        out
    }
}
