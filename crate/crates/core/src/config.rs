//! Run configuration files (TOML).
//!
//! ```toml
//! [env]
//! family = "cartpole"
//!
//! [wr2l]
//! epsilon = 0.05
//! outer_iters = 30
//!
//! [eval]
//! episodes_per_point = 20
//!
//! [io]
//! seed = 7
//! out_dir = "runs/cartpole"
//! ```
//!
//! Unknown keys are rejected at every level. Omitted values take the
//! defaults from [`crate::defaults`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envs::EnvSettings;
use crate::error::{Error, Result};
use crate::harness::GridSpec;
use crate::robust::Wr2lConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Hessian cache to reuse instead of estimating at startup.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hessian_cache: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wr2l: Option<Wr2lConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<GridSpec>,
    #[serde(default)]
    pub io: IoConfig,
}

impl RunConfig {
    pub fn new(env: EnvSettings) -> Self {
        Self {
            env,
            wr2l: None,
            eval: None,
            io: IoConfig::default(),
        }
    }

    /// Parses and validates. Parse errors carry the line and key at fault.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |section: &str, e: Error| Error::Config(format!("[{section}] {e}"));
        self.env.validate().map_err(|e| wrap("env", e))?;
        if let Some(w) = &self.wr2l {
            w.validate().map_err(|e| wrap("wr2l", e))?;
        }
        Ok(())
    }

    /// The `[wr2l]` section, which training requires.
    pub fn wr2l(&self) -> Result<&Wr2lConfig> {
        self.wr2l
            .as_ref()
            .ok_or_else(|| Error::Config("missing section [wr2l] (with at least `epsilon`)".into()))
    }

    /// The `[eval]` section, or defaults when absent.
    pub fn eval_spec(&self) -> GridSpec {
        self.eval.clone().unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_epsilon_is_named() {
        let err = RunConfig::from_toml_str("[env]\nfamily = \"cartpole\"\n[wr2l]\nouter_iters = 3\n").unwrap_err();
        assert!(err.to_string().contains("epsilon"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml_str("[env]\nfamily = \"cartpole\"\ncolour = 3\n").unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
        assert!(RunConfig::from_toml_str("[env]\nfamily = \"cartpole\"\n[wr2l]\nepsilon = 0.1\n[wr2l.ppo]\nclip = 0.1\n").is_err());
    }
}
