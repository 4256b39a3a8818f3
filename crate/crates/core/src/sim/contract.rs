//! Contract fixture interface.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::crypto::keccak256;
use crate::token::{Address, ArgPair, MethodId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Visibility {
    External,
    Public,
    Internal,
    Private,
}

impl Visibility {
    /// Reachable by a message call, and therefore guarded.
    pub fn is_entry(self) -> bool {
        matches!(self, Visibility::External | Visibility::Public)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodDef {
    pub name: &'static str,
    /// Canonical signature, e.g. `deposit(uint256)`; its digest gives the selector.
    pub signature: &'static str,
    pub visibility: Visibility,
}

impl MethodDef {
    pub const fn new(name: &'static str, signature: &'static str, visibility: Visibility) -> Self {
        MethodDef { name, signature, visibility }
    }

    pub fn selector(&self) -> MethodId {
        MethodId::from_signature(self.signature)
    }
}

/// Abnormal termination of a call; reverts the whole transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trap {
    pub reason: String,
    /// `contract.method` where the trap was raised, when known.
    pub site: Option<String>,
}

impl Trap {
    pub fn new(reason: impl Into<String>) -> Self {
        Trap { reason: reason.into(), site: None }
    }

    pub fn at(mut self, site: impl Into<String>) -> Self {
        if self.site.is_none() {
            self.site = Some(site.into());
        }
        self
    }
}

impl fmt::Display for Trap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.site {
            Some(site) => write!(f, "{} at {site}", self.reason),
            None => f.write_str(&self.reason),
        }
    }
}

impl std::error::Error for Trap {}

/// Key/value contract storage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Storage(pub BTreeMap<String, Vec<u8>>);

impl Storage {
    pub fn get(&self, key: &str) -> Option<&[u8]> {
        self.0.get(key).map(Vec::as_slice)
    }

    pub fn set(&mut self, key: impl Into<String>, value: Vec<u8>) {
        self.0.insert(key.into(), value);
    }

    pub fn get_u128(&self, key: &str) -> u128 {
        self.get(key)
            .and_then(|v| <[u8; 16]>::try_from(v).ok())
            .map(u128::from_be_bytes)
            .unwrap_or(0)
    }

    pub fn set_u128(&mut self, key: impl Into<String>, v: u128) {
        self.set(key, v.to_be_bytes().to_vec());
    }

    pub fn get_address(&self, key: &str) -> Option<Address> {
        self.get(key).and_then(Address::from_slice)
    }

    pub fn get_bool(&self, key: &str) -> bool {
        self.get(key).is_some_and(|v| v.first() == Some(&1))
    }

    pub fn set_bool(&mut self, key: impl Into<String>, v: bool) {
        self.set(key, vec![v as u8]);
    }

    /// Order-independent digest of the storage contents.
    pub fn digest(&self) -> [u8; 32] {
        let mut buf = Vec::new();
        for (k, v) in &self.0 {
            buf.extend_from_slice(&(k.len() as u32).to_be_bytes());
            buf.extend_from_slice(k.as_bytes());
            buf.extend_from_slice(&(v.len() as u32).to_be_bytes());
            buf.extend_from_slice(v);
        }
        keccak256(&buf)
    }
}

/// Host-language contract implementation. Code is stateless; all state
/// lives in [`Storage`] and account balances, so instances can be dumped
/// and restored by `kind`.
pub trait ContractCode: Send + Sync {
    fn kind(&self) -> &'static str;

    fn methods(&self) -> Vec<MethodDef>;

    /// Constructor; writes initial storage from deployment parameters.
    fn init(&self, _storage: &mut Storage, _params: &[ArgPair]) -> Result<(), Trap> {
        Ok(())
    }

    fn execute(&self, env: &mut super::Env<'_>, method: &str, args: &[ArgPair]) -> Result<Vec<u8>, Trap>;

    /// Anonymous method run on plain value transfers. Accepts the value by default.
    fn fallback(&self, _env: &mut super::Env<'_>) -> Result<Vec<u8>, Trap> {
        Ok(Vec::new())
    }
}

pub(crate) fn arg<'a>(args: &'a [ArgPair], name: &str) -> Result<&'a str, Trap> {
    args.iter()
        .find(|a| a.name == name)
        .map(|a| a.value.as_str())
        .ok_or_else(|| Trap::new(format!("missing argument `{name}`")))
}

pub(crate) fn arg_u128(args: &[ArgPair], name: &str) -> Result<u128, Trap> {
    arg(args, name)?
        .parse()
        .map_err(|_| Trap::new(format!("argument `{name}` is not an unsigned integer")))
}
