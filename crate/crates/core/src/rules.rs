//! Access control rules: per-scope whitelists and blacklists plus the names
//! of validators to run before issuing method-scoped tokens.
//!
//! The document format is
//!
//! ```json
//! {
//!   "sender":   { "whitelist": ["0x366c..."] },
//!   "method":   { "methodA": { "blacklist": ["0xba7f..."] } },
//!   "argument": { "argA": { "whitelist": ["0x3540..."] } },
//!   "validators": ["nversion", "ecf"]
//! }
//! ```
//!
//! Evaluation is default-deny: a request is granted only if at least one list
//! scope applies to it and none of the applicable scopes rejects it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::token::{Address, TokenRequest, TokenType};
use crate::validators;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RulesError {
    #[error("rule document parse error: {0}")]
    ParseError(String),
    #[error("scope `{0}` carries both a whitelist and a blacklist")]
    BothListsInOneScope(String),
    #[error("unknown validator `{0}`")]
    UnknownValidator(String),
    #[error("no such scope `{0}`")]
    NoSuchScope(String),
    #[error("invalid scope path `{0}`")]
    BadScopePath(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ListMode {
    Whitelist,
    Blacklist,
}

impl ListMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ListMode::Whitelist => "whitelist",
            ListMode::Blacklist => "blacklist",
        }
    }
}

impl FromStr for ListMode {
    type Err = RulesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "whitelist" => Ok(ListMode::Whitelist),
            "blacklist" => Ok(ListMode::Blacklist),
            other => Err(RulesError::BadScopePath(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListRule {
    pub mode: ListMode,
    pub entries: BTreeSet<String>,
}

impl ListRule {
    pub fn new(mode: ListMode) -> Self {
        ListRule { mode, entries: BTreeSet::new() }
    }

    pub fn allows(&self, key: &str) -> bool {
        let member = self.entries.contains(key);
        match self.mode {
            ListMode::Whitelist => member,
            ListMode::Blacklist => !member,
        }
    }
}

/// A versioned rule snapshot. Snapshots are immutable; updates produce a new
/// snapshot with a higher version.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RuleSet {
    pub version: u64,
    pub sender: Option<ListRule>,
    pub method: BTreeMap<String, ListRule>,
    pub argument: BTreeMap<String, ListRule>,
    pub validators: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub allow: bool,
    /// `"ok"`, or the path of the single rule or validator that denied.
    pub reason: String,
    #[serde(rename = "rulesVersion")]
    pub rules_version: u64,
}

impl Decision {
    fn allow(version: u64) -> Self {
        Decision { allow: true, reason: "ok".into(), rules_version: version }
    }

    fn deny(reason: String, version: u64) -> Self {
        Decision { allow: false, reason, rules_version: version }
    }
}

/// Where an update applies, e.g. `method.withdraw.blacklist`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ScopePath {
    Sender(ListMode),
    Method(String, ListMode),
    Argument(String, ListMode),
    Validators,
}

impl FromStr for ScopePath {
    type Err = RulesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || RulesError::BadScopePath(s.to_owned());
        if s == "validators" {
            return Ok(ScopePath::Validators);
        }
        let (section, rest) = s.split_once('.').ok_or_else(bad)?;
        match section {
            "sender" => Ok(ScopePath::Sender(rest.parse().map_err(|_| bad())?)),
            "method" | "argument" => {
                let (name, mode) = rest.rsplit_once('.').ok_or_else(bad)?;
                if name.is_empty() {
                    return Err(bad());
                }
                let mode = mode.parse().map_err(|_| bad())?;
                Ok(if section == "method" {
                    ScopePath::Method(name.to_owned(), mode)
                } else {
                    ScopePath::Argument(name.to_owned(), mode)
                })
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for ScopePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScopePath::Sender(m) => write!(f, "sender.{}", m.as_str()),
            ScopePath::Method(n, m) => write!(f, "method.{n}.{}", m.as_str()),
            ScopePath::Argument(n, m) => write!(f, "argument.{n}.{}", m.as_str()),
            ScopePath::Validators => f.write_str("validators"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateOp {
    Add,
    Remove,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScope {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    whitelist: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    blacklist: Option<Vec<String>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    version: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sender: Option<RawScope>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    method: BTreeMap<String, RawScope>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    argument: BTreeMap<String, RawScope>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    validators: Vec<String>,
}

fn canonical_address(entry: &str) -> Result<String, RulesError> {
    Address::from_str(entry.trim())
        .map(|a| a.to_string())
        .map_err(|e| RulesError::ParseError(e.to_string()))
}

/// Argument values that look like addresses compare case-insensitively.
fn canonical_value(entry: &str) -> String {
    match Address::from_str(entry) {
        Ok(a) => a.to_string(),
        Err(_) => entry.to_owned(),
    }
}

fn convert_scope(
    name: &str,
    raw: RawScope,
    canon: impl Fn(&str) -> Result<String, RulesError>,
) -> Result<ListRule, RulesError> {
    let (mode, entries) = match (raw.whitelist, raw.blacklist) {
        (Some(_), Some(_)) => return Err(RulesError::BothListsInOneScope(name.to_owned())),
        (Some(w), None) => (ListMode::Whitelist, w),
        (None, Some(b)) => (ListMode::Blacklist, b),
        (None, None) => return Err(RulesError::ParseError(format!("scope `{name}` has no list"))),
    };
    let entries = entries.iter().map(|e| canon(e)).collect::<Result<_, _>>()?;
    Ok(ListRule { mode, entries })
}

fn check_validator(name: &str) -> Result<(), RulesError> {
    if validators::KNOWN.contains(&name) {
        Ok(())
    } else {
        Err(RulesError::UnknownValidator(name.to_owned()))
    }
}

pub fn load_rules(document: &str) -> Result<RuleSet, RulesError> {
    let raw: RawDocument = serde_json::from_str(document).map_err(|e| RulesError::ParseError(e.to_string()))?;
    let sender = raw
        .sender
        .map(|s| convert_scope("sender", s, canonical_address))
        .transpose()?;
    let method = raw
        .method
        .into_iter()
        .map(|(name, s)| {
            let rule = convert_scope(&format!("method.{name}"), s, canonical_address)?;
            Ok((name, rule))
        })
        .collect::<Result<_, RulesError>>()?;
    let argument = raw
        .argument
        .into_iter()
        .map(|(name, s)| {
            let rule = convert_scope(&format!("argument.{name}"), s, |e| Ok(canonical_value(e)))?;
            Ok((name, rule))
        })
        .collect::<Result<_, RulesError>>()?;
    for v in &raw.validators {
        check_validator(v)?;
    }
    Ok(RuleSet { version: raw.version.unwrap_or(0), sender, method, argument, validators: raw.validators })
}

fn raw_scope(rule: &ListRule) -> RawScope {
    let entries = Some(rule.entries.iter().cloned().collect());
    match rule.mode {
        ListMode::Whitelist => RawScope { whitelist: entries, blacklist: None },
        ListMode::Blacklist => RawScope { whitelist: None, blacklist: entries },
    }
}

impl RuleSet {
    /// Serializes back to the document format, including the version.
    pub fn to_document(&self) -> String {
        let raw = RawDocument {
            version: Some(self.version),
            sender: self.sender.as_ref().map(raw_scope),
            method: self.method.iter().map(|(k, v)| (k.clone(), raw_scope(v))).collect(),
            argument: self.argument.iter().map(|(k, v)| (k.clone(), raw_scope(v))).collect(),
            validators: self.validators.clone(),
        };
        serde_json::to_string_pretty(&raw).expect("rule document serializes")
    }

    pub fn is_empty(&self) -> bool {
        self.sender.is_none() && self.method.is_empty() && self.argument.is_empty()
    }
}

fn upsert(slot: &mut Option<ListRule>, path: &ScopePath, mode: ListMode, op: UpdateOp, entry: String) -> Result<(), RulesError> {
    match op {
        UpdateOp::Add => {
            let rule = slot.get_or_insert_with(|| ListRule::new(mode));
            if rule.mode != mode {
                return Err(RulesError::BothListsInOneScope(path.to_string()));
            }
            rule.entries.insert(entry);
        }
        UpdateOp::Remove => match slot {
            Some(rule) if rule.mode == mode => {
                rule.entries.remove(&entry);
            }
            _ => return Err(RulesError::NoSuchScope(path.to_string())),
        },
    }
    Ok(())
}

fn update_named(
    map: &mut BTreeMap<String, ListRule>,
    name: &str,
    path: &ScopePath,
    mode: ListMode,
    op: UpdateOp,
    entry: String,
) -> Result<(), RulesError> {
    let mut slot = map.remove(name);
    let result = upsert(&mut slot, path, mode, op, entry);
    if let Some(rule) = slot {
        map.insert(name.to_owned(), rule);
    }
    result
}

/// Applies one add/remove and returns the next version of the rules.
pub fn update_rules(rs: &RuleSet, op: UpdateOp, scope: &ScopePath, entry: &str) -> Result<RuleSet, RulesError> {
    let mut next = rs.clone();
    match scope {
        ScopePath::Sender(mode) => {
            let entry = canonical_address(entry)?;
            upsert(&mut next.sender, scope, *mode, op, entry)?;
        }
        ScopePath::Method(name, mode) => {
            let entry = canonical_address(entry)?;
            update_named(&mut next.method, name, scope, *mode, op, entry)?;
        }
        ScopePath::Argument(name, mode) => {
            update_named(&mut next.argument, name, scope, *mode, op, canonical_value(entry))?;
        }
        ScopePath::Validators => {
            check_validator(entry)?;
            match op {
                UpdateOp::Add if !next.validators.iter().any(|v| v == entry) => next.validators.push(entry.to_owned()),
                UpdateOp::Add => {}
                UpdateOp::Remove => next.validators.retain(|v| v != entry),
            }
        }
    }
    next.version = rs.version + 1;
    Ok(next)
}

/// Evaluates the list scopes only. `method_name` is the human-readable name
/// of the requested selector, when the contract registry knows it; method
/// scopes may be keyed by that name or by the selector's hex form.
pub fn evaluate(req: &TokenRequest, rs: &RuleSet, method_name: Option<&str>) -> Decision {
    evaluate_with(req, rs, method_name, |_| None)
}

/// Full evaluation: sender scope, method scope, argument scopes, the
/// default-deny check, then each configured validator in order. The
/// validator callback returns `Some(detail)` on failure.
pub fn evaluate_with(
    req: &TokenRequest,
    rs: &RuleSet,
    method_name: Option<&str>,
    mut run_validator: impl FnMut(&str) -> Option<String>,
) -> Decision {
    let mut applied = false;
    let sender = req.sender.to_string();
    if let Some(rule) = &rs.sender {
        applied = true;
        if !rule.allows(&sender) {
            return Decision::deny(format!("sender.{}", rule.mode.as_str()), rs.version);
        }
    }
    if matches!(req.token_type, TokenType::Method | TokenType::Argument) {
        if let Some(method) = req.method {
            let by_name = method_name.and_then(|n| rs.method.get_key_value(n));
            let selector = method.to_string();
            if let Some((key, rule)) = by_name.or_else(|| rs.method.get_key_value(&selector)) {
                applied = true;
                if !rule.allows(&sender) {
                    return Decision::deny(format!("method.{key}.{}", rule.mode.as_str()), rs.version);
                }
            }
        }
    }
    if req.token_type == TokenType::Argument {
        for arg in &req.args {
            if let Some(rule) = rs.argument.get(&arg.name) {
                applied = true;
                if !rule.allows(&canonical_value(&arg.value)) {
                    return Decision::deny(format!("argument.{}.{}", arg.name, rule.mode.as_str()), rs.version);
                }
            }
        }
    }
    if !applied {
        return Decision::deny("default.deny".into(), rs.version);
    }
    if req.token_type != TokenType::Super {
        for name in &rs.validators {
            if run_validator(name).is_some() {
                return Decision::deny(format!("validator.{name}"), rs.version);
            }
        }
    }
    Decision::allow(rs.version)
}
