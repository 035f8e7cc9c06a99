//! Application configuration: one TOML file, located by `--config` or the
//! `BIAE_CONFIG` environment variable, with command-line overrides applied
//! by the caller.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::Split;
use crate::dialogue::DEFAULT_TURN_CAP;
use crate::error::{Error, Result};
use crate::train::TrainConfig;

pub const CONFIG_ENV: &str = "BIAE_CONFIG";
/// Overrides `data_dir` when set.
pub const DATA_DIR_ENV: &str = "BIAE_SHARC_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub host: String,
    pub port: u16,
    pub turn_cap: usize,
    /// Session files are written here when set.
    pub session_dir: Option<PathBuf>,
    /// `template`, or `retrieval` to fit a nearest-neighbour generator on
    /// the training split at startup.
    pub generator: String,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            turn_cap: DEFAULT_TURN_CAP,
            session_dir: None,
            generator: "template".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    /// Directory holding `sharc_train.json` and `sharc_dev.json`.
    pub data_dir: PathBuf,
    pub labels_path: PathBuf,
    pub checkpoint: PathBuf,
    pub output_dir: PathBuf,
    pub train: TrainConfig,
    pub serve: ServeConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            data_dir: "data".into(),
            labels_path: "artifacts/labels.json".into(),
            checkpoint: "artifacts/checkpoint.json".into(),
            output_dir: "artifacts".into(),
            train: TrainConfig::default(),
            serve: ServeConfig::default(),
        }
    }
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.train.validate()?;
        if config.serve.turn_cap == 0 {
            return Err(Error::Config("serve.turn_cap must be positive".into()));
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Reads `explicit` if given, else the file named by `BIAE_CONFIG`, else
    /// the defaults. `BIAE_SHARC_DIR` then overrides the data directory.
    pub fn load(explicit: Option<&Path>) -> Result<Self> {
        let from_env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        let mut config = match explicit.map(Path::to_path_buf).or(from_env) {
            Some(path) => Self::from_file(&path)?,
            None => Self::default(),
        };
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
            config.data_dir = dir.into();
        }
        Ok(config)
    }

    pub fn split_path(&self, split: Split) -> PathBuf {
        split.path_in(&self.data_dir)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }
}

/// The train and dev files in `dir`, if both exist.
pub fn find_dataset(dir: &Path) -> Option<(PathBuf, PathBuf)> {
    let train = Split::Train.path_in(dir);
    let dev = Split::Dev.path_in(dir);
    (train.is_file() && dev.is_file()).then_some((train, dev))
}
