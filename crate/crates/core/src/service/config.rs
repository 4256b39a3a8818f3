//! TOML configuration for a token service process.
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! key_file = "ts.key"
//! rules_path = "rules.json"
//! counter_path = "counter"
//! owner_secret = "change-me"
//! validation_state = "chain.json"
//!
//! [[contracts]]
//! address = "0x…"
//! methods = ["withdraw()", "addBalance()"]
//! one_time = ["withdraw"]
//! expiry = 3600
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::KeyPair;
use crate::rules::load_rules;
use crate::sim::{Simulator, StateDump};
use crate::token::Address;

use super::{ContractPolicy, FileCounter, OneTimePolicy, SystemClock, TokenService, DEFAULT_EXPIRY_SECS};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("config: {0}")]
    Parse(String),
    #[error("config: {0}")]
    Invalid(String),
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_expiry() -> u32 {
    DEFAULT_EXPIRY_SECS
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    /// Hex secret key. Takes precedence over `key_file`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secret_key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules_path: Option<PathBuf>,
    /// Without a counter file the counter lives in memory only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counter_path: Option<PathBuf>,
    #[serde(default)]
    pub counter_fsync: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner_secret: Option<String>,
    #[serde(default = "default_expiry")]
    pub default_expiry: u32,
    /// Simulator dump that validators run against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_state: Option<PathBuf>,
    #[serde(default)]
    pub contracts: Vec<ContractConfig>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractConfig {
    pub address: Address,
    /// Canonical method signatures, e.g. `withdraw(uint256)`.
    #[serde(default)]
    pub methods: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expiry: Option<u32>,
    #[serde(default)]
    pub method_expiry: BTreeMap<String, u32>,
    /// Method names issued as one-time tokens; `*` for every token.
    #[serde(default)]
    pub one_time: Vec<String>,
    #[serde(default)]
    pub heads: Vec<Address>,
}

impl ContractConfig {
    pub fn policy(&self) -> ContractPolicy {
        let mut p = ContractPolicy::with_methods(self.methods.iter().map(String::as_str));
        p.expiry = self.expiry;
        p.method_expiry = self.method_expiry.clone();
        p.one_time = OneTimePolicy::from_names(self.one_time.iter().cloned());
        p.heads = self.heads.clone();
        p
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.to_owned(), msg: e.to_string() })
}

impl ServiceConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Loads a config file and makes its relative paths absolute.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::parse(&read(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.key_file, &mut cfg.rules_path, &mut cfg.counter_path, &mut cfg.validation_state]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn keypair(&self) -> Result<KeyPair, ConfigError> {
        let hex = match (&self.secret_key, &self.key_file) {
            (Some(k), _) => k.clone(),
            (None, Some(path)) => read(path)?,
            (None, None) => return Err(ConfigError::Invalid("one of `secret_key` or `key_file` is required".into())),
        };
        KeyPair::from_secret_hex(hex.trim()).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn build_service(&self) -> Result<TokenService, ConfigError> {
        let mut b = TokenService::builder(self.keypair()?)
            .clock(Arc::new(SystemClock))
            .default_expiry(self.default_expiry);
        if let Some(path) = &self.rules_path {
            if path.exists() {
                b = b.rules(load_rules(&read(path)?).map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?);
            }
            b = b.rules_path(path);
        }
        if let Some(path) = &self.counter_path {
            let c = FileCounter::open(path, self.counter_fsync).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            b = b.counter(Box::new(c));
        }
        if let Some(secret) = &self.owner_secret {
            b = b.owner_secret(secret);
        }
        if let Some(path) = &self.validation_state {
            let dump: StateDump = serde_json::from_str(&read(path)?)
                .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
            let sim = Simulator::from_dump(&dump).map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
            b = b.validation_state(sim);
        }
        for c in &self.contracts {
            b = b.contract(c.address, c.policy());
        }
        Ok(b.build())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::token::{MethodId, TokenRequest};

    #[test]
    fn loads_and_builds() {
        let dir = tempfile::tempdir().unwrap();
        let key = KeyPair::from_seed(b"cfg");
        fs::write(dir.path().join("ts.key"), key.secret_hex()).unwrap();
        let sender = Address([1; 20]);
        fs::write(dir.path().join("rules.json"), format!(r#"{{"sender":{{"whitelist":["{sender}"]}}}}"#)).unwrap();
        let contract = Address([2; 20]);
        let text = format!(
            r#"
listen = "127.0.0.1:0"
key_file = "ts.key"
rules_path = "rules.json"
counter_path = "counter"
owner_secret = "s3cret"

[[contracts]]
address = "{contract}"
methods = ["withdraw()"]
one_time = ["withdraw"]
[contracts.method_expiry]
withdraw = 10
"#
        );
        let path = dir.path().join("ts.toml");
        fs::write(&path, text).unwrap();
        let cfg = ServiceConfig::load(&path).unwrap();
        assert_eq!(cfg.rules_path.as_deref(), Some(dir.path().join("rules.json").as_path()));
        assert_eq!(ServiceConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        let ts = cfg.build_service().unwrap();
        assert_eq!(ts.address(), key.address());
        let req = TokenRequest::method_token(contract, sender, MethodId::from_signature("withdraw()"));
        let issued = ts.issue(&req).unwrap();
        assert_eq!(issued.token.index, 1);
        assert_eq!(issued.expires_at, ts.now() + 10);
        assert_eq!(fs::read_to_string(dir.path().join("counter")).unwrap(), "1");
        assert!(ts.authorize(Some("s3cret")).is_ok());
    }

    #[test]
    fn rejects_unknown_fields_and_missing_key() {
        assert!(ServiceConfig::parse("bogus = 1").is_err());
        let cfg = ServiceConfig::parse("").unwrap();
        assert_eq!(cfg.listen, "127.0.0.1:8080");
        assert_eq!(cfg.default_expiry, DEFAULT_EXPIRY_SECS);
        assert!(cfg.keypair().is_err());
    }
}
