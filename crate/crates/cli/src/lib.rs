//! Scenario-driven front end for `rigidity_core`.
//!
//! A run loads a JSON scenario, executes one experiment and writes its
//! artifacts together with a `report.json` into the output directory.

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;
pub mod selftest;

use std::path::Path;
use std::time::Instant;

pub use config::{Experiment, ScenarioConfig};
pub use error::CliError;
pub use report::{ExperimentReport, RunReport, Status};

/// Runs the scenario's experiment and writes artifacts and the report into
/// `out_dir`. Numerical aborts are recorded in the report; only
/// configuration and output errors are returned.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunReport, CliError> {
    let experiment = cfg.experiment.ok_or_else(|| CliError::Config {
        pointer: "/experiment".into(),
        message: "no experiment given".into(),
    })?;
    std::fs::create_dir_all(out_dir)?;
    let start = Instant::now();
    let result = experiments::run(cfg, experiment);
    let wall_time_s = start.elapsed().as_secs_f64();
    let report = match result {
        Ok(outcome) => {
            let mut artifacts = Vec::with_capacity(outcome.artifacts.len());
            for (name, content) in &outcome.artifacts {
                let path = out_dir.join(name);
                std::fs::write(&path, content)?;
                artifacts.push(path);
            }
            let status = if outcome.passed && outcome.failures.is_empty() {
                Status::Ok
            } else {
                Status::Failed
            };
            ExperimentReport {
                experiment: experiment.name().into(),
                status,
                wall_time_s,
                artifacts,
                summary: outcome.summary,
                failures: outcome.failures,
                error: None,
            }
        }
        Err(e @ CliError::Numeric(_)) => ExperimentReport {
            experiment: experiment.name().into(),
            status: Status::Error,
            wall_time_s,
            artifacts: Vec::new(),
            summary: serde_json::Value::Null,
            failures: Vec::new(),
            error: Some(e.to_string()),
        },
        Err(e) => return Err(e),
    };
    let run = RunReport {
        seed: cfg.seed,
        output_dir: out_dir.to_path_buf(),
        experiments: vec![report],
    };
    run.write(out_dir)?;
    Ok(run)
}
