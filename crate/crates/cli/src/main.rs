use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use rigidity_cli::{run_scenario, CliError, Experiment, ScenarioConfig, Status};

/// Run a boundary rigidity experiment from a JSON scenario.
#[derive(Debug, Parser)]
#[command(name = "rigidity", version)]
struct Args {
    /// Experiment to run.
    #[arg(value_enum)]
    experiment: Experiment,
    /// Scenario file. Optional for `selftest`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the scenario's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed; overrides the scenario's `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn load(args: &Args) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => ScenarioConfig::load(path)?,
        None if args.experiment == Experiment::Selftest => ScenarioConfig::bare(Experiment::Selftest),
        None => {
            return Err(CliError::Config {
                pointer: String::new(),
                message: format!("`{}` needs --config", args.experiment.name()),
            })
        }
    };
    match cfg.experiment {
        Some(e) if e != args.experiment => {
            return Err(CliError::Config {
                pointer: "/experiment".into(),
                message: format!("scenario is for `{}`, not `{}`", e.name(), args.experiment.name()),
            })
        }
        _ => cfg.experiment = Some(args.experiment),
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = load(&args).and_then(|cfg| {
        let out = args
            .out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out").join(args.experiment.name()));
        run_scenario(&cfg, &out)
    });
    match result {
        Ok(run) => {
            for e in &run.experiments {
                eprintln!("{}: {:?} in {:.2}s", e.experiment, e.status, e.wall_time_s);
                if let Some(err) = &e.error {
                    eprintln!("  {err}");
                }
                for f in &e.failures {
                    eprintln!("  {}", f.error);
                }
            }
            println!("{}", run.output_dir.join("report.json").display());
            if run.experiments.iter().any(|e| e.status == Status::Error) {
                ExitCode::from(3)
            } else if run.ok() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
