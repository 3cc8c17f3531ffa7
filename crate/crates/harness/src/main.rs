use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use deepc_core::controllers::ControllerKind;
use deepc_harness::io::{self, KpiEntry, KpiReport, Seeds};
use deepc_harness::{compare_controllers, compute_kpis, run_closed_loop, ExperimentConfig, HarnessError, Scenario};

/// Closed-loop building temperature control with data-enabled predictive
/// controllers.
#[derive(Debug, Parser)]
#[command(name = "deepc", version)]
struct Cli {
    /// TOML experiment configuration; defaults apply to missing keys.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the identification dataset, check persistency of excitation and
    /// write identification.csv.
    GenData,
    /// Run one controller in closed loop.
    Simulate {
        #[arg(long)]
        controller: ControllerKind,
        /// Regularization weight for basic DeePC.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Run all configured controllers on the same scenario.
    Compare,
    /// Recompute KPIs from a trajectory CSV.
    Kpis {
        trajectory: PathBuf,
        #[arg(long)]
        settle_steps: Option<usize>,
        #[arg(long)]
        bias_window: Option<usize>,
    },
    /// Print the effective configuration as TOML.
    PrintConfig,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {}", e.category(), e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = cli.out {
        config.output.dir = out;
    }
    match cli.command {
        Command::PrintConfig => {
            print!("{}", config.to_toml());
            Ok(())
        }
        Command::GenData => gen_data(&config),
        Command::Simulate { controller, lambda } => {
            if lambda.is_some() {
                config.controller.lambda = lambda;
            }
            config.controllers = vec![controller];
            simulate(&config, controller)
        }
        Command::Compare => compare(&config),
        Command::Kpis {
            trajectory,
            settle_steps,
            bias_window,
        } => {
            let records = io::read_trajectory(&trajectory)?;
            let kpis = compute_kpis(
                &records,
                settle_steps.unwrap_or(config.sim.settle_steps),
                bias_window.unwrap_or(config.sim.bias_window),
            )?;
            println!("{}", serde_json::to_string_pretty(&kpis).expect("KPIs serialize"));
            Ok(())
        }
    }
}

fn gen_data(config: &ExperimentConfig) -> Result<(), HarnessError> {
    let scenario = Scenario::new(config)?;
    let pe = scenario.pe_report()?;
    io::ensure_dir(&config.output.dir)?;
    let path = config.output.dir.join("identification.csv");
    io::write_identification(&path, &scenario)?;
    println!(
        "{} steps written to {}; persistency of excitation: rank {} of {} ({})",
        scenario.id_u.len(),
        path.display(),
        pe.rank,
        pe.required_rank,
        if pe.pass { "pass" } else { "FAIL" }
    );
    if !pe.pass {
        return Err(deepc_core::Error::Numerical(format!(
            "identification data are not persistently exciting (rank {} of {})",
            pe.rank, pe.required_rank
        ))
        .into());
    }
    Ok(())
}

fn simulate(config: &ExperimentConfig, kind: ControllerKind) -> Result<(), HarnessError> {
    let dir = &config.output.dir;
    io::ensure_dir(dir)?;
    let scenario = Scenario::new(config)?;
    let result = scenario
        .build(kind)
        .and_then(|c| run_closed_loop(&scenario, c.as_ref()))
        .inspect_err(|e| dump_problem(dir, e, false))?;
    io::write_trajectory(&dir.join("trajectory.csv"), &result.records, config.output.timing_column)?;
    let report = KpiReport {
        seeds: Seeds::of(&scenario),
        controllers: vec![KpiEntry {
            controller: kind,
            kpis: Some(&result.kpis),
            error: None,
        }],
    };
    io::write_json(&dir.join("kpis.json"), &report)?;
    let k = &result.kpis;
    println!(
        "{}: RMSE {:.4} K, smoothness {:.4}, mean error {:+.4} K, mean solve {:.2} ms",
        kind, k.rmse_k, k.smoothness, k.mean_error_k, k.mean_solve_ms
    );
    Ok(())
}

fn compare(config: &ExperimentConfig) -> Result<(), HarnessError> {
    let dir = &config.output.dir;
    io::ensure_dir(dir)?;
    let cmp = compare_controllers(config)?;
    for (kind, run) in &cmp.runs {
        match run {
            Ok(r) => io::write_trajectory(
                &dir.join(format!("trajectory_{}.csv", kind)),
                &r.records,
                config.output.timing_column,
            )?,
            Err(e) => dump_problem(dir, e, true),
        }
    }
    io::write_json(&dir.join("kpis.json"), &KpiReport::from_comparison(&cmp))?;
    let table = cmp.markdown();
    fs::write(dir.join("kpis.md"), &table).map_err(|e| HarnessError::Io {
        path: dir.join("kpis.md"),
        source: e,
    })?;
    print!("{}", table);
    match cmp.runs.iter().find_map(|(_, r)| r.as_ref().err()) {
        Some(_) => Err(cmp.runs.into_iter().find_map(|(_, r)| r.err()).expect("a run failed")),
        None => Ok(()),
    }
}

/// Writes `problem_dump.txt` when the error carries the failed QP. Runs of
/// several controllers use `problem_dump_<controller>.txt`.
fn dump_problem(dir: &Path, e: &HarnessError, per_controller: bool) {
    let Some(problem) = e.problem() else { return };
    let name = match e {
        HarnessError::Step { controller, .. } if per_controller => format!("problem_dump_{}.txt", controller),
        _ => "problem_dump.txt".into(),
    };
    let path = dir.join(name);
    let mut text = format!("# {}\n", e);
    text.push_str(&problem.dump());
    match fs::write(&path, text) {
        Ok(()) => eprintln!("failed QP written to {}", path.display()),
        Err(io) => eprintln!("could not write {}: {}", path.display(), io),
    }
}
