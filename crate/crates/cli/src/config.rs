//! Config files: the core `[model]`, `[train]` and `[loss]` tables plus an
//! optional `[task]` table with defaults for the inference subcommands.

use std::path::Path;

use contimo::training::RunConfig;
use contimo::{Error, Result};
use serde::Deserialize;

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskTable {
    pub scale: Option<f64>,
    /// `[start, length]`.
    pub gap: Option<(usize, usize)>,
    /// `[t_min, t_max]`.
    pub range: Option<(f64, f64)>,
    pub count: Option<usize>,
    pub fps: Option<f64>,
    /// Degradation factors for `evaluate`.
    pub scales: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default)]
pub struct CliConfig {
    pub run: RunConfig,
    pub task: TaskTable,
}

impl CliConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let task = match table.remove("task") {
            Some(value) => value.try_into().map_err(|e: toml::de::Error| Error::Config(format!("[task]: {e}")))?,
            None => TaskTable::default(),
        };
        let rest = toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self { run: RunConfig::from_toml(&rest)?, task })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                Self::from_toml(&text)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_task_from_run_tables() {
        let cfg = CliConfig::from_toml("[model]\nharmonics = 4\n[task]\nscale = 2.5\ngap = [3, 5]\n").unwrap();
        assert_eq!(cfg.run.model.harmonics, 4);
        assert_eq!(cfg.task.scale, Some(2.5));
        assert_eq!(cfg.task.gap, Some((3, 5)));
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(matches!(CliConfig::from_toml("[task]\nscael = 2\n"), Err(Error::Config(_))));
        assert!(matches!(CliConfig::from_toml("[train]\nepoch = 2\n"), Err(Error::Config(_))));
        assert!(matches!(CliConfig::from_toml("[train]\nepochs = -2\n"), Err(Error::Config(_))));
    }
}
