//! Run reports and the failure ledger.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    /// The experiment ran but some of its checks did not pass.
    Failed,
    /// The experiment aborted.
    Error,
}

/// One per-sample failure together with the input that caused it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub input: serde_json::Value,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub status: Status,
    pub wall_time_s: f64,
    pub artifacts: Vec<PathBuf>,
    pub summary: serde_json::Value,
    pub failures: Vec<Failure>,
    /// Set when the experiment aborted.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub experiments: Vec<ExperimentReport>,
}

impl RunReport {
    pub fn ok(&self) -> bool {
        self.experiments.iter().all(|e| e.status == Status::Ok)
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join("report.json");
        std::fs::write(&path, serde_json::to_string_pretty(self).unwrap_or_default() + "\n")?;
        Ok(path)
    }
}

/// What an experiment hands back to the harness, which writes the files.
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<(String, String)>,
    pub summary: serde_json::Value,
    pub failures: Vec<Failure>,
    /// Whether the experiment's own checks passed.
    pub passed: bool,
}

impl Outcome {
    pub fn new(summary: serde_json::Value) -> Self {
        Self {
            summary,
            passed: true,
            ..Self::default()
        }
    }

    pub fn artifact(mut self, name: &str, content: String) -> Self {
        self.artifacts.push((name.to_string(), content));
        self
    }

    pub fn json_artifact(self, name: &str, value: &impl Serialize) -> Self {
        let text = serde_json::to_string_pretty(value).unwrap_or_default() + "\n";
        self.artifact(name, text)
    }
}
