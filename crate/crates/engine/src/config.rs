//! The `engine.json` configuration file.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tailor_core::{
    AcceptanceCounts, BetaPrior, CognitiveModel, Counts, OptionId, ProfileId, PromptCatalog,
    PromptTemplate, UtilityParams,
};

use crate::json::{self, SchemaError};

pub const CONFIG_VERSION: u32 = 1;
pub const DEFAULT_API_KEY_ENV: &str = "TAILOR_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("unsupported config version {0}, expected {CONFIG_VERSION}")]
    Version(u32),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    /// Deterministic backend; `response`, when set, is returned verbatim
    /// instead of the digest echo.
    Mock {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        response: Option<String>,
    },
    /// OpenAI-compatible chat-completions endpoint.
    Http {
        endpoint: String,
        model: String,
        /// Name of the environment variable holding the bearer token.
        #[serde(default = "default_api_key_env")]
        api_key_env: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Mock { response: None }
    }
}

fn default_api_key_env() -> String {
    DEFAULT_API_KEY_ENV.to_string()
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_profile() -> ProfileId {
    ProfileId(1)
}

pub type Bootstrap = BTreeMap<ProfileId, BTreeMap<OptionId, Counts>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub version: u32,
    pub catalog: PromptCatalog,
    pub cognitive_model: CognitiveModel,
    #[serde(default)]
    pub utility: UtilityParams,
    #[serde(default)]
    pub prior: BetaPrior,
    /// Counts from past experience, applied before the feedback log.
    #[serde(default)]
    pub bootstrap: Bootstrap,
    pub template: PromptTemplate,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default = "default_profile")]
    pub default_profile: ProfileId,
}

impl EngineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: Self = json::parse(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        if self.version != CONFIG_VERSION {
            return Err(ConfigError::Version(self.version));
        }
        let report = self.cognitive_model.validate();
        if !report.is_ok() {
            return Err(invalid(&report));
        }
        self.catalog.validate(&self.cognitive_model.skills).map_err(|e| invalid(&e))?;
        let catalog_ids: Vec<ProfileId> = self.catalog.profiles.iter().map(|p| p.id).collect();
        let model_ids: Vec<ProfileId> = self.cognitive_model.profiles.iter().map(|p| p.profile).collect();
        if catalog_ids != model_ids {
            return Err(ConfigError::Invalid(format!(
                "catalog profiles {catalog_ids:?} differ from cognitive-model profiles {model_ids:?}"
            )));
        }
        self.template.validate(&self.catalog).map_err(|e| invalid(&e))?;
        self.utility.validate().map_err(|e| invalid(&e))?;
        if !self.prior.is_valid() {
            return Err(ConfigError::Invalid("prior parameters must be positive and finite".into()));
        }
        if self.catalog.profile(self.default_profile).is_none() {
            return Err(ConfigError::Invalid(format!("default profile {} is not in the catalog", self.default_profile)));
        }
        self.base_counts()?;
        Ok(())
    }

    /// Zero counts plus the configured bootstrap.
    pub fn base_counts(&self) -> Result<AcceptanceCounts, ConfigError> {
        AcceptanceCounts::bootstrapped(&self.catalog, &self.bootstrap)
            .map_err(|e| ConfigError::Invalid(format!("bootstrap: {e}")))
    }

    /// Hash of everything other than the cognitive model and the ledger
    /// that feeds the policy: utility parameters, prior and catalog.
    pub fn params_hash(&self) -> String {
        json::content_hash(&(&self.utility, &self.prior, &self.catalog))
    }
}
