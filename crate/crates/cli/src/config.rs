//! TOML pipeline configuration: one file describes the environment, every
//! training stage, and the candidate lists, so a run is reproducible from
//! the config plus a seed.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use orl_core::cql::CqlConfig;
use orl_core::ddqn::DdqnConfig;
use orl_core::env::{LanderConfig, RewardSpec, StateSpaceSpec};
use orl_core::ope::FqeConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub env: LanderConfig,
    pub ddqn: DdqnConfig,
    pub cql: CqlConfig,
    pub fqe: FqeConfig,
    #[serde(rename = "state_space")]
    pub state_spaces: Vec<StateSpaceSpec>,
    #[serde(rename = "reward")]
    pub rewards: Vec<RewardSpec>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            output_dir: PathBuf::from("runs"),
            seeds: vec![0, 1, 2],
            env: LanderConfig::default(),
            ddqn: DdqnConfig::default(),
            cql: CqlConfig::default(),
            fqe: FqeConfig::default(),
            state_spaces: StateSpaceSpec::lander_candidates(),
            rewards: RewardSpec::lander_candidates(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config file {}: {e}", path.display()))
        })?;
        let config: PipelineConfig = toml::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::Validation("seeds list is empty".into()));
        }
        let mut names: Vec<&str> = self.state_spaces.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Validation("duplicate state-space candidate names".into()));
        }
        let mut rnames: Vec<&str> = self.rewards.iter().map(|r| r.name.as_str()).collect();
        rnames.sort_unstable();
        if rnames.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Validation("duplicate reward candidate names".into()));
        }
        self.ddqn
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        self.cql
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        self.fqe
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        for r in &self.rewards {
            r.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        }
        Ok(())
    }

    pub fn state_space(&self, name: &str) -> Result<&StateSpaceSpec, CliError> {
        self.state_spaces.iter().find(|s| s.name == name).ok_or_else(|| {
            CliError::Usage(format!(
                "unknown state-space candidate '{name}' (configured: {})",
                self.state_spaces.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join(", ")
            ))
        })
    }

    pub fn reward(&self, name: &str) -> Result<&RewardSpec, CliError> {
        self.rewards.iter().find(|r| r.name == name).ok_or_else(|| {
            CliError::Usage(format!(
                "unknown reward candidate '{name}' (configured: {})",
                self.rewards.iter().map(|r| r.name.as_str()).collect::<Vec<_>>().join(", ")
            ))
        })
    }

    pub fn hash(&self) -> String {
        orl_core::config_hash(self)
    }

    /// `runs/<config-hash>/<seed>/`, created on demand.
    pub fn run_dir(&self, seed: u64) -> Result<PathBuf, CliError> {
        let dir = self.output_dir.join(self.hash()).join(seed.to_string());
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
        Ok(dir)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Seed precedence: explicit flag, then ORL_SEED, then first configured seed.
pub fn resolve_seed(flag: Option<u64>, config: &PipelineConfig) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Ok(v) = std::env::var("ORL_SEED") {
        return v
            .parse()
            .map_err(|_| CliError::Usage(format!("ORL_SEED '{v}' is not an integer")));
    }
    Ok(config.seeds[0])
}
