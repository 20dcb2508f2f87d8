//! Flat key=value run configuration.
//!
//! The optional config file holds one `key = value` pair per line with `#`
//! comments; keys use the same names as the command-line flags (with `-`
//! separators). Flags override file values, which override built-in
//! defaults, and the effective settings are echoed into the metrics JSON.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;

use crate::{CommonArgs, Failure};

#[derive(Debug, Default, Clone)]
pub struct RunConfig {
    values: HashMap<String, String>,
}

impl RunConfig {
    pub fn load(path: &Option<PathBuf>) -> Result<Self, Failure> {
        let mut config = RunConfig::default();
        if let Some(path) = path {
            let text = fs::read_to_string(path).map_err(|e| {
                Failure::usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    Failure::usage(format!(
                        "{}:{}: expected key = value",
                        path.display(),
                        lineno + 1
                    ))
                })?;
                config
                    .values
                    .insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(config)
    }

    pub fn apply_common(&mut self, common: &CommonArgs) {
        self.set_opt("dataset", common.dataset.as_ref().map(|p| p.display().to_string()));
        self.set_opt("out", common.out.as_ref().map(|p| p.display().to_string()));
        self.set_opt("seed", common.seed.map(|v| v.to_string()));
        self.set_opt("workers", common.workers.map(|v| v.to_string()));
    }

    pub fn set_opt(&mut self, key: &str, value: Option<String>) {
        if let Some(value) = value {
            self.values.insert(key.to_string(), value);
        }
    }

    pub fn str_or(&self, key: &str, default: &str) -> String {
        self.values
            .get(key)
            .cloned()
            .unwrap_or_else(|| default.to_string())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, Failure> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| {
                Failure::usage(format!("config key `{key}` has invalid value `{raw}`"))
            }),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, Failure> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64, Failure> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, Failure> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    pub fn f64_opt(&self, key: &str) -> Result<Option<f64>, Failure> {
        self.parse(key)
    }

    /// Required path-valued key.
    pub fn path(&self, key: &str) -> Result<PathBuf, Failure> {
        self.values
            .get(key)
            .map(PathBuf::from)
            .ok_or_else(|| Failure::usage(format!("missing required setting `{key}`")))
    }

    pub fn path_or(&self, key: &str, default: &std::path::Path) -> PathBuf {
        self.values
            .get(key)
            .map(PathBuf::from)
            .unwrap_or_else(|| default.to_path_buf())
    }

    pub fn path_opt(&self, key: &str) -> Option<PathBuf> {
        self.values.get(key).map(PathBuf::from)
    }

    /// Effective settings for the metrics echo, sorted by key.
    pub fn echo(&self) -> HashMap<String, String> {
        self.values.clone()
    }
}
