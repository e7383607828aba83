//! Campaign configuration and the declarative policy config file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::Granularity;
use crate::policy::{EngineKind, OrbConfig, PolicyConfigError, ProtectedMimeSet};
use crate::synth::SynthOptions;

/// Environment variable overriding the default policy config path.
pub const CONFIG_ENV: &str = "POLICYFUZZ_CONFIG";

const DEFAULT_POLICY_TOML: &str = include_str!("../config/default-policy.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse policy config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Policy(#[from] PolicyConfigError),
    #[error("invalid budget {0:?}; use e.g. \"30s\", \"1500ms\" or \"500it\"")]
    BadBudget(String),
    #[error("workers must be >= 1")]
    NoWorkers,
    #[error("engine list must be non-empty")]
    NoEngines,
}

#[derive(Debug, Deserialize)]
struct PolicyFile {
    engines: Vec<String>,
    protected: ProtectedFile,
    orb: OrbConfig,
}

#[derive(Debug, Deserialize)]
struct ProtectedFile {
    json: BTreeSet<String>,
    xml: BTreeSet<String>,
    html: BTreeSet<String>,
    plain: BTreeSet<String>,
}

/// Parsed and validated policy configuration: which engines run and the
/// tables they consult.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub engines: Vec<EngineKind>,
    pub protected: ProtectedMimeSet,
    pub orb: OrbConfig,
}

impl PolicyConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let file: PolicyFile = toml::from_str(text)?;
        let protected = ProtectedMimeSet {
            json_types: file.protected.json,
            xml_types: file.protected.xml,
            html_types: file.protected.html,
            plain_types: file.protected.plain,
        };
        protected.validate()?;
        file.orb.validate()?;
        let engines = file
            .engines
            .iter()
            .map(|id| EngineKind::from_id(id))
            .collect::<Result<Vec<_>, _>>()?;
        if engines.is_empty() {
            return Err(ConfigError::NoEngines);
        }
        Ok(Self {
            engines,
            protected,
            orb: file.orb,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Resolve in order: explicit path, `POLICYFUZZ_CONFIG`, built-in default.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        if let Some(path) = explicit {
            return Self::from_file(path);
        }
        if let Ok(env_path) = std::env::var(CONFIG_ENV) {
            return Self::from_file(Path::new(&env_path));
        }
        Self::from_toml(DEFAULT_POLICY_TOML)
    }
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self::from_toml(DEFAULT_POLICY_TOML).expect("built-in policy config parses")
    }
}

/// Wall-clock and/or iteration limit; the campaign stops at whichever is
/// reached first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub max_time_ms: Option<u64>,
    pub max_iterations: Option<u64>,
}

impl Budget {
    pub fn time(d: Duration) -> Self {
        Budget {
            max_time_ms: Some(d.as_millis() as u64),
            max_iterations: None,
        }
    }

    pub fn iterations(n: u64) -> Self {
        Budget {
            max_time_ms: None,
            max_iterations: Some(n),
        }
    }

    /// Parse `"30s"`, `"1500ms"` or `"500it"`.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let bad = || ConfigError::BadBudget(text.to_string());
        let parse_num = |digits: &str| digits.parse::<u64>().map_err(|_| bad());
        if let Some(d) = text.strip_suffix("ms") {
            let n = parse_num(d)?;
            if n == 0 {
                return Err(bad());
            }
            Ok(Budget {
                max_time_ms: Some(n),
                max_iterations: None,
            })
        } else if let Some(d) = text.strip_suffix("it") {
            let n = parse_num(d)?;
            if n == 0 {
                return Err(bad());
            }
            Ok(Budget::iterations(n))
        } else if let Some(d) = text.strip_suffix('s') {
            let n = parse_num(d)?;
            if n == 0 {
                return Err(bad());
            }
            Ok(Budget {
                max_time_ms: Some(n * 1000),
                max_iterations: None,
            })
        } else {
            Err(bad())
        }
    }

    pub fn max_time(&self) -> Option<Duration> {
        self.max_time_ms.map(Duration::from_millis)
    }
}

impl Default for Budget {
    fn default() -> Self {
        // Mirrors the default three-minute fuzzing window per app.
        Budget::time(Duration::from_secs(180))
    }
}

/// Everything a `run` invocation needs.
#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub apps_dir: PathBuf,
    pub budget: Budget,
    pub workers: usize,
    pub rng_seed: u64,
    pub granularity: Granularity,
    pub policy: PolicyConfig,
    pub synth: SynthOptions,
}

impl CampaignConfig {
    pub fn new(apps_dir: impl Into<PathBuf>) -> Self {
        Self {
            apps_dir: apps_dir.into(),
            budget: Budget::default(),
            workers: 1,
            rng_seed: 1,
            granularity: Granularity::Table,
            policy: PolicyConfig::default(),
            synth: SynthOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.workers == 0 {
            return Err(ConfigError::NoWorkers);
        }
        if self.policy.engines.is_empty() {
            return Err(ConfigError::NoEngines);
        }
        if self.budget.max_time_ms.is_none() && self.budget.max_iterations.is_none() {
            return Err(ConfigError::BadBudget("empty".into()));
        }
        Ok(())
    }
}
