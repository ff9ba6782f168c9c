//! Run configuration: one TOML file drives every command.
//!
//! Keys are grouped by section and may be written either as tables or as
//! dotted keys, so these two files are equivalent:
//!
//! ```toml
//! [env]
//! soc_min = 0.2
//! ```
//!
//! ```toml
//! env.soc_min = 0.2
//! ```
//!
//! Every key is optional and unknown keys are rejected. When `run.seed` is
//! set it replaces the component seeds (`scenario.rng_seed`, `ppo.seed`,
//! `explain.seed` and the evaluation reset seed) with values derived by
//! [`crate::seed::sub_seed`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::EnvConfig;
use crate::explain::ExplainConfig;
use crate::metrics::DEFAULT_RATED_CYCLES;
use crate::ppo::PpoConfig;
use crate::scenario::ScenarioConfig;
use crate::seed::sub_seed;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration:\n{}", format_fields(.0))]
    Invalid(Vec<(String, String)>),
}

fn format_fields(errs: &[(String, String)]) -> String {
    errs.iter()
        .map(|(f, m)| format!("  {f}: {m}"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Master seed; when present it overrides every component seed.
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub run_id: String,
    /// Scenario CSV to use instead of the synthetic generator.
    pub scenario_path: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: None,
            output_dir: PathBuf::from("runs"),
            run_id: "default".into(),
            scenario_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Equivalent full cycles the battery is rated for.
    pub rated_cycles: f64,
    /// Trailing window (in updates) for the reward-curve summary.
    pub convergence_window: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            rated_cycles: DEFAULT_RATED_CYCLES,
            convergence_window: 10,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub scenario: ScenarioConfig,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub explain: ExplainConfig,
    pub report: ReportConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: "<string>".into(),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: shown.clone(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: shown,
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    /// Field-level problems across all sections; empty when valid.
    pub fn validate(&self) -> Vec<(String, String)> {
        let mut errs = self.scenario.validate();
        errs.extend(self.env.validate());
        errs.extend(self.ppo.validate());
        errs.extend(self.explain.validate());
        if self.run.run_id.is_empty() || self.run.run_id.contains(['/', '\\']) {
            errs.push((
                "run.run_id".into(),
                format!(
                    "must be a non-empty name without path separators, got {:?}",
                    self.run.run_id
                ),
            ));
        }
        if !(self.report.rated_cycles > 0.0 && self.report.rated_cycles.is_finite()) {
            errs.push((
                "report.rated_cycles".into(),
                format!("must be positive, got {}", self.report.rated_cycles),
            ));
        }
        if self.report.convergence_window == 0 {
            errs.push((
                "report.convergence_window".into(),
                "must be positive".into(),
            ));
        }
        errs
    }

    pub fn validated(self) -> Result<Self, ConfigError> {
        let errs = self.validate();
        if errs.is_empty() {
            Ok(self)
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }

    /// Applies the master seed, if any, to every component.
    pub fn resolve_seeds(mut self) -> Self {
        if let Some(master) = self.run.seed {
            self.scenario.rng_seed = sub_seed(master, "scenario");
            self.ppo.seed = sub_seed(master, "ppo");
            self.explain.seed = sub_seed(master, "explain");
        }
        self
    }

    /// Reset seed for evaluation episodes.
    pub fn eval_seed(&self) -> u64 {
        self.run.seed.map_or(0, |m| sub_seed(m, "eval"))
    }

    pub fn run_dir(&self) -> PathBuf {
        self.run.output_dir.join(&self.run.run_id)
    }
}
