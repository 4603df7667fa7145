//! Flat `key = value` configuration files with `#` comments.
//!
//! No nesting, no quoting: one assignment per line, keys are
//! lowercase-with-underscores, and every error names the offending key
//! so the binary can exit with code 2 and a usable message.

use crate::ConfigError;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::new(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                )));
            };
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(ConfigError::new(format!("line {}: empty key", lineno + 1)));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(ConfigError::new(format!("duplicate key `{key}`")));
            }
        }
        Ok(Self { values })
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ConfigError::new(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    /// CLI flags override file values through this.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    /// Reject keys outside the allowed set, naming the stray key.
    pub fn check_allowed(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        for key in self.values.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(ConfigError::new(format!("unknown config key `{key}`")));
            }
        }
        Ok(())
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn require_str(&self, key: &str) -> Result<&str, ConfigError> {
        self.get_str(key)
            .ok_or_else(|| ConfigError::new(format!("missing config key `{key}`")))
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.get_str(key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|_| {
                ConfigError::new(format!("invalid value for key `{key}`: `{raw}` is not an integer"))
            }),
        }
    }

    pub fn get_usize(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.get_str(key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|_| {
                ConfigError::new(format!("invalid value for key `{key}`: `{raw}` is not an integer"))
            }),
        }
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.get_str(key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|_| {
                ConfigError::new(format!("invalid value for key `{key}`: `{raw}` is not a number"))
            }),
        }
    }

    /// Value restricted to a fixed set of choices.
    pub fn get_choice(
        &self,
        key: &str,
        default: &str,
        choices: &[&str],
    ) -> Result<String, ConfigError> {
        let raw = self.get_str(key).unwrap_or(default);
        if choices.contains(&raw) {
            Ok(raw.to_string())
        } else {
            Err(ConfigError::new(format!(
                "invalid value for key `{key}`: `{raw}` (expected one of {})",
                choices.join(", ")
            )))
        }
    }

    pub fn get_path(&self, key: &str) -> Option<PathBuf> {
        self.get_str(key).map(PathBuf::from)
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf, ConfigError> {
        Ok(PathBuf::from(self.require_str(key)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_assignments_and_comments() {
        let cfg = Config::parse("# comment\nseed = 7\n\nname = mse-grid\n").unwrap();
        assert_eq!(cfg.get_u64("seed", 0).unwrap(), 7);
        assert_eq!(cfg.get_str("name"), Some("mse-grid"));
    }

    #[test]
    fn errors_name_the_offending_key() {
        let cfg = Config::parse("seed = abc").unwrap();
        let err = cfg.get_u64("seed", 0).unwrap_err();
        assert!(err.0.contains("`seed`"), "{}", err.0);

        let cfg = Config::parse("mystery = 1").unwrap();
        let err = cfg.check_allowed(&["seed"]).unwrap_err();
        assert!(err.0.contains("`mystery`"), "{}", err.0);

        let err = cfg.require_str("absent").unwrap_err();
        assert!(err.0.contains("`absent`"), "{}", err.0);
    }

    #[test]
    fn malformed_lines_are_rejected_with_line_numbers() {
        let err = Config::parse("seed = 1\nbroken line\n").unwrap_err();
        assert!(err.0.contains("line 2"), "{}", err.0);
        assert!(Config::parse("a = 1\na = 2").is_err());
    }
}
