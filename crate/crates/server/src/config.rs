use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use civicsense_core::geo::DEFAULT_CELL_SIZE;
use civicsense_core::trust::DEFAULT_THRESHOLD;
use serde::Deserialize;

/// Anonymous submissions allowed per source address per minute.
pub const DEFAULT_ANONYMOUS_RATE_LIMIT: u32 = 10;
pub const DEFAULT_SESSION_TTL_SECS: i64 = 24 * 60 * 60;
pub const DEFAULT_CREDENTIAL_ITERATIONS: u32 = 100_000;

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct AdminSeed {
    pub name: String,
    pub credential: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub listen: SocketAddr,
    pub data_dir: PathBuf,
    /// Community validation threshold.
    pub threshold: f64,
    pub default_cell_size: f64,
    /// 0 disables the limit.
    pub anonymous_rate_limit: u32,
    pub session_ttl_secs: i64,
    pub credential_iterations: u32,
    /// Admin accounts created at startup if their name is still free.
    pub bootstrap_admins: Vec<AdminSeed>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            listen: ([127, 0, 0, 1], 8080).into(),
            data_dir: PathBuf::from("data"),
            threshold: DEFAULT_THRESHOLD,
            default_cell_size: DEFAULT_CELL_SIZE,
            anonymous_rate_limit: DEFAULT_ANONYMOUS_RATE_LIMIT,
            session_ttl_secs: DEFAULT_SESSION_TTL_SECS,
            credential_iterations: DEFAULT_CREDENTIAL_ITERATIONS,
            bootstrap_admins: Vec::new(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("environment variable {var}: {reason}")]
    Env { var: &'static str, reason: String },
    #[error("invalid setting {0}")]
    Invalid(&'static str),
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Loads the file (if given), then applies `CIVICSENSE_*` overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                Self::from_toml(&text)?
            }
            None => Config::default(),
        };
        config.apply_env(|k| std::env::var(k).ok())?;
        config.check()?;
        Ok(config)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(var: &'static str, value: String) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e: T::Err| ConfigError::Env {
                var,
                reason: e.to_string(),
            })
        }

        if let Some(v) = get("CIVICSENSE_LISTEN") {
            self.listen = parse("CIVICSENSE_LISTEN", v)?;
        }
        if let Some(v) = get("CIVICSENSE_DATA_DIR") {
            self.data_dir = PathBuf::from(v);
        }
        if let Some(v) = get("CIVICSENSE_THRESHOLD") {
            self.threshold = parse("CIVICSENSE_THRESHOLD", v)?;
        }
        if let Some(v) = get("CIVICSENSE_CELL_SIZE") {
            self.default_cell_size = parse("CIVICSENSE_CELL_SIZE", v)?;
        }
        if let Some(v) = get("CIVICSENSE_ANON_RATE_LIMIT") {
            self.anonymous_rate_limit = parse("CIVICSENSE_ANON_RATE_LIMIT", v)?;
        }
        if let Some(v) = get("CIVICSENSE_SESSION_TTL_SECS") {
            self.session_ttl_secs = parse("CIVICSENSE_SESSION_TTL_SECS", v)?;
        }
        Ok(())
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if !self.threshold.is_finite() {
            return Err(ConfigError::Invalid("threshold"));
        }
        if civicsense_core::geo::check_cell_size(self.default_cell_size).is_err() {
            return Err(ConfigError::Invalid("default_cell_size"));
        }
        if self.session_ttl_secs <= 0 {
            return Err(ConfigError::Invalid("session_ttl_secs"));
        }
        if self.credential_iterations == 0 {
            return Err(ConfigError::Invalid("credential_iterations"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn file_values_and_env_overrides() {
        let mut c = Config::from_toml(
            r#"
            listen = "0.0.0.0:9000"
            data_dir = "/var/lib/civicsense"
            threshold = 2.0
            anonymous_rate_limit = 3

            [[bootstrap_admins]]
            name = "ops"
            credential = "correct horse"
            "#,
        )
        .unwrap();
        assert_eq!(c.threshold, 2.0);
        assert_eq!(c.default_cell_size, DEFAULT_CELL_SIZE);
        assert_eq!(c.bootstrap_admins.len(), 1);

        let env = HashMap::from([("CIVICSENSE_THRESHOLD", "1.25"), ("CIVICSENSE_CELL_SIZE", "0.01")]);
        c.apply_env(|k| env.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(c.threshold, 1.25);
        assert_eq!(c.default_cell_size, 0.01);
        assert_eq!(c.anonymous_rate_limit, 3);
    }

    #[test]
    fn bad_values_are_reported() {
        assert!(Config::from_toml("thresh = 1").is_err());
        let mut c = Config::default();
        assert!(c
            .apply_env(|k| (k == "CIVICSENSE_THRESHOLD").then(|| "lots".to_string()))
            .is_err());
        c.default_cell_size = 0.0;
        assert!(c.check().is_err());
    }
}
