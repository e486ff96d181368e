//! Scenario files.
//!
//! A scenario names a catalog metric, optional domain overrides, one
//! experiment with its settings, numerical tolerances and a seed. Unknown
//! keys are rejected everywhere, and errors carry the JSON pointer of the
//! offending value.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use rigidity_core::metric::{build_catalog, CatalogEntry, DomainSpec, Params};
use rigidity_core::Numerics;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Experiment {
    Trace,
    ScatterTable,
    ConvertScattering,
    RecoverTau,
    RecoverJet,
    JetLinearity,
    TimesepGrid,
    LightconeId,
    ExteriorReconstruct,
    VerifyIsometry,
    Selftest,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Trace => "trace",
            Experiment::ScatterTable => "scatter_table",
            Experiment::ConvertScattering => "convert_scattering",
            Experiment::RecoverTau => "recover_tau",
            Experiment::RecoverJet => "recover_jet",
            Experiment::JetLinearity => "jet_linearity",
            Experiment::TimesepGrid => "timesep_grid",
            Experiment::LightconeId => "lightcone_id",
            Experiment::ExteriorReconstruct => "exterior_reconstruct",
            Experiment::VerifyIsometry => "verify_isometry",
            Experiment::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    pub name: String,
    #[serde(default)]
    pub params: Params,
}

/// Which domain accompanies the metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    /// The domain shipped with the catalog entry.
    #[default]
    Catalog,
    /// The whole chart, without boundary.
    Whole,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    pub name: DomainKind,
    pub collar_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub metric: Option<MetricConfig>,
    #[serde(default)]
    pub domain: DomainConfig,
    pub experiment: Option<Experiment>,
    /// Experiment-specific settings, validated by the experiment itself.
    #[serde(default)]
    pub settings: serde_json::Value,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    /// A configuration that only names an experiment.
    pub fn bare(experiment: Experiment) -> Self {
        Self {
            metric: None,
            domain: DomainConfig::default(),
            experiment: Some(experiment),
            settings: serde_json::Value::Null,
            numerics: Numerics::default(),
            seed: 0,
            output_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = parse(text, "")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            pointer: String::new(),
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.numerics.validate().map_err(|field| CliError::Config {
            pointer: format!("/numerics/{}", field.replace('.', "/")),
            message: "tolerances must be positive".into(),
        })?;
        if let Some(w) = self.domain.collar_width {
            if !(w > 0.0 && w.is_finite()) {
                return Err(CliError::Config {
                    pointer: "/domain/collar_width".into(),
                    message: format!("collar width must be positive, got {w}"),
                });
            }
        }
        Ok(())
    }

    /// The catalog entry with the configured domain.
    pub fn entry(&self) -> Result<CatalogEntry, CliError> {
        let m = self.metric.as_ref().ok_or_else(|| CliError::Config {
            pointer: "/metric".into(),
            message: "this experiment needs a metric".into(),
        })?;
        let mut entry = build_catalog(&m.name, &m.params).map_err(|e| CliError::Config {
            pointer: "/metric".into(),
            message: e.to_string(),
        })?;
        if self.domain.name == DomainKind::Whole {
            entry.domain = DomainSpec::whole(entry.metric.dim());
        }
        if let Some(w) = self.domain.collar_width {
            entry.domain = entry.domain.with_collar(w);
        }
        Ok(entry)
    }

    /// Experiment settings deserialized strictly; `null` means all defaults.
    pub fn settings<T: DeserializeOwned + Default>(&self) -> Result<T, CliError> {
        if self.settings.is_null() {
            return Ok(T::default());
        }
        parse_value(self.settings.clone(), "/settings")
    }

    /// Like [`Self::settings`] for settings without defaults.
    pub fn required_settings<T: DeserializeOwned>(&self) -> Result<T, CliError> {
        parse_value(self.settings.clone(), "/settings")
    }
}

fn pointer_of(path: &serde_path_to_error::Path, prefix: &str) -> String {
    use serde_path_to_error::Segment;
    let mut out = prefix.to_string();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    out
}

fn parse<T: DeserializeOwned>(text: &str, prefix: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
        pointer: pointer_of(e.path(), prefix),
        message: e.inner().to_string(),
    })
}

fn parse_value<T: DeserializeOwned>(value: serde_json::Value, prefix: &str) -> Result<T, CliError> {
    serde_path_to_error::deserialize(value).map_err(|e| CliError::Config {
        pointer: pointer_of(e.path(), prefix),
        message: e.inner().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected_with_a_pointer() {
        let err = ScenarioConfig::from_json(r#"{"metric": {"name": "minkowski", "colour": 1}}"#).unwrap_err();
        match err {
            CliError::Config { pointer, .. } => assert_eq!(pointer, "/metric/colour"),
            other => panic!("{other:?}"),
        }
        let err = ScenarioConfig::from_json(r#"{"numerics": {"ode_tol": -1.0}}"#).unwrap_err();
        match err {
            CliError::Config { pointer, .. } => assert_eq!(pointer, "/numerics/ode_tol"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nested_errors_point_at_the_value() {
        let err = ScenarioConfig::from_json(r#"{"numerics": {"chain": {"rtol": "x"}}}"#).unwrap_err();
        match err {
            CliError::Config { pointer, .. } => assert_eq!(pointer, "/numerics/chain/rtol"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn experiment_names_match_the_schema() {
        for e in Experiment::value_variants() {
            let json = serde_json::to_value(e).unwrap();
            assert_eq!(json.as_str(), Some(e.name()));
        }
    }
}
