//! Tool configuration: a TOML file named by `VACGRIP_CONFIG` (or
//! `--config`), overridden by command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pneumatics::{MaterialTable, PneumaticParams, PneumaticsError};

pub const CONFIG_ENV: &str = "VACGRIP_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Pneumatics(#[from] PneumaticsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub pneumatic: PneumaticParams,
    /// Material table file replacing the built-in one.
    pub materials: Option<PathBuf>,
    /// Named scene files, e.g. `task1 = "scenes/task1.scene"`.
    pub scenes: BTreeMap<String, PathBuf>,
    pub rate_hz: f64,
    pub snapshot_hz: f64,
    pub port: u16,
    pub host: String,
    pub seed_base: u64,
    pub trials: usize,
    pub static_dir: Option<PathBuf>,
    pub episode_dir: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            pneumatic: PneumaticParams::default(),
            materials: None,
            scenes: BTreeMap::new(),
            rate_hz: 30.0,
            snapshot_hz: 20.0,
            port: 8080,
            host: "127.0.0.1".into(),
            seed_base: 0,
            trials: 15,
            static_dir: None,
            episode_dir: None,
        }
    }
}

impl Config {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// `explicit`, else `VACGRIP_CONFIG`, else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.pneumatic.validate()?;
        for (name, v) in [("rate_hz", self.rate_hz), ("snapshot_hz", self.snapshot_hz)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::Invalid(format!("{name} must be > 0")));
            }
        }
        if self.trials == 0 {
            return Err(ConfigError::Invalid("trials must be >= 1".into()));
        }
        if let Some(p) = &self.materials {
            MaterialTable::load(p)?;
        }
        Ok(())
    }

    pub fn material_table(&self) -> Result<MaterialTable, ConfigError> {
        Ok(match &self.materials {
            Some(p) => MaterialTable::load(p)?,
            None => MaterialTable::default(),
        })
    }

    /// A scene name from the `scenes` table, else the name itself.
    pub fn scene_spec(&self, name: &str) -> String {
        self.scenes
            .get(name)
            .map_or_else(|| name.to_owned(), |p| p.to_string_lossy().into_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = Config::from_toml_str("port = 9000\n[scenes]\ntask1 = \"a.scene\"\n").unwrap();
        assert_eq!(cfg.port, 9000);
        assert_eq!(cfg.rate_hz, 30.0);
        assert_eq!(cfg.scene_spec("task1"), "a.scene");
        assert_eq!(cfg.scene_spec("task2"), "task2");
    }

    #[test]
    fn rejects_bad_values_and_unknown_keys() {
        assert!(matches!(Config::from_toml_str("rate_hz = 0.0"), Err(ConfigError::Invalid(_))));
        assert!(Config::from_toml_str("colour = 1").is_err());
        assert!(Config::from_toml_str("materials = \"/nonexistent/materials.toml\"").is_err());
    }
}
