//! Run configuration: one TOML document shared by training and benchmarking.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::BenchmarkConfig;
use crate::learner::{Method, TrainConfig};
use crate::testbench::Problem;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: String,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Method and seed come from the top level; the block carries the rest.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: BenchmarkConfig,
}

fn default_method() -> Method {
    Method::PAgpr
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if let Some(train) = table.get("train").and_then(|t| t.as_table()) {
            for key in ["seed", "method"] {
                if train.contains_key(key) {
                    return Err(Error::Config(format!("`train.{key}` is not allowed; set `{key}` at the top level")));
                }
            }
        }
        let mut cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.train.method = cfg.method;
        cfg.train.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        let mut table = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(train) = table.get_mut("train").and_then(|t| t.as_table_mut()) {
            train.remove("seed");
            train.remove("method");
        }
        toml::to_string_pretty(&table).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn problem(&self) -> Result<Problem> {
        Problem::by_name(&self.problem)
    }

    pub fn validate(&self) -> Result<()> {
        self.problem()?;
        self.train.validate()?;
        self.eval.validate()
    }
}
