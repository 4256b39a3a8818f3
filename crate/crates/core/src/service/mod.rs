//! The token service: evaluates requests against the current rules and
//! runtime validators, then issues signed tokens.

pub mod clock;
pub mod config;
pub mod counter;
pub mod http;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{self, KeyPair, VerifyingKey};
use crate::rules::{self, Decision, RuleSet, RulesError, ScopePath, UpdateOp};
use crate::sim::{SimulatedCall, Simulator};
use crate::token::{encode_req_payload, signing_payload, Address, MethodId, Token, TokenError, TokenRequest, TokenType, NO_INDEX};
use crate::validators::{self, ValidatorVerdict};

pub use clock::{Clock, ManualClock, SystemClock};
pub use counter::{CounterStore, FileCounter, MemoryCounter, PersistenceFailure};

pub const DEFAULT_EXPIRY_SECS: u32 = 3600;

/// Which tokens for a contract are issued as one-time tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum OneTimePolicy {
    #[default]
    Never,
    Always,
    /// Method and Argument tokens for the named methods.
    Methods(BTreeSet<String>),
}

impl OneTimePolicy {
    /// Builds a policy from config entries, where `*` means every token.
    pub fn from_names<I: IntoIterator<Item = S>, S: Into<String>>(names: I) -> Self {
        let names: BTreeSet<String> = names.into_iter().map(Into::into).collect();
        if names.contains("*") {
            OneTimePolicy::Always
        } else if names.is_empty() {
            OneTimePolicy::Never
        } else {
            OneTimePolicy::Methods(names)
        }
    }

    fn applies(&self, token_type: TokenType, method: Option<&str>) -> bool {
        match self {
            OneTimePolicy::Never => false,
            OneTimePolicy::Always => true,
            OneTimePolicy::Methods(names) => token_type != TokenType::Super && method.is_some_and(|m| names.contains(m)),
        }
    }
}

/// Per-contract issuance policy.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContractPolicy {
    /// Selector to method name. When empty, names come from the validation
    /// chain's copy of the contract.
    pub methods: BTreeMap<MethodId, String>,
    pub expiry: Option<u32>,
    pub method_expiry: BTreeMap<String, u32>,
    pub one_time: OneTimePolicy,
    /// Heads compared by the n-version validator.
    pub heads: Vec<Address>,
}

impl ContractPolicy {
    pub fn with_methods<'a>(signatures: impl IntoIterator<Item = &'a str>) -> Self {
        let methods = signatures
            .into_iter()
            .map(|sig| {
                let name = sig.split('(').next().unwrap_or(sig).to_owned();
                (MethodId::from_signature(sig), name)
            })
            .collect();
        ContractPolicy { methods, ..ContractPolicy::default() }
    }

    pub fn one_time(mut self, policy: OneTimePolicy) -> Self {
        self.one_time = policy;
        self
    }

    pub fn expiry(mut self, secs: u32) -> Self {
        self.expiry = Some(secs);
        self
    }

    pub fn heads(mut self, heads: Vec<Address>) -> Self {
        self.heads = heads;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issued {
    pub token: Token,
    pub expires_at: u32,
    pub one_time: bool,
    pub rules_version: u64,
}

/// Wire form of an issued token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IssueResponse {
    pub token: String,
    pub expires_at: u32,
    pub one_time: bool,
}

impl From<&Issued> for IssueResponse {
    fn from(i: &Issued) -> Self {
        IssueResponse { token: i.token.to_hex(), expires_at: i.expires_at, one_time: i.one_time }
    }
}

impl IssueResponse {
    pub fn token(&self) -> Result<Token, TokenError> {
        Token::from_hex(&self.token)
    }
}

#[derive(Debug, Error)]
pub enum IssueError {
    #[error("malformed request: {0}")]
    Shape(#[from] TokenError),
    /// `reason` is the rule or validator path; `detail` stays server-side.
    #[error("denied: {reason}")]
    Denied { reason: String, detail: Option<String> },
    #[error(transparent)]
    Persistence(#[from] PersistenceFailure),
}

impl IssueError {
    pub fn status(&self) -> u16 {
        match self {
            IssueError::Shape(_) => 400,
            IssueError::Denied { .. } => 403,
            IssueError::Persistence(_) => 500,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            IssueError::Shape(_) => "malformed",
            IssueError::Denied { .. } => "denied",
            IssueError::Persistence(_) => "internal",
        }
    }

    pub fn reason(&self) -> String {
        match self {
            IssueError::Denied { reason, .. } => reason.clone(),
            other => other.to_string(),
        }
    }
}

#[derive(Debug, Error)]
pub enum AdminError {
    #[error("unauthorized")]
    Unauthorized,
    #[error(transparent)]
    Rules(#[from] RulesError),
    #[error("rules persistence failed: {0}")]
    Persistence(String),
}

impl AdminError {
    pub fn status(&self) -> u16 {
        match self {
            AdminError::Unauthorized => 401,
            AdminError::Rules(_) => 400,
            AdminError::Persistence(_) => 500,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LatencyStats {
    pub runs: u64,
    pub failures: u64,
    #[serde(with = "micros")]
    pub total: Duration,
    #[serde(with = "micros")]
    pub max: Duration,
}

impl LatencyStats {
    pub fn mean(&self) -> Duration {
        if self.runs == 0 {
            Duration::ZERO
        } else {
            self.total / self.runs as u32
        }
    }
}

mod micros {
    use serde::Serializer;
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u128(d.as_micros())
    }
}

/// One evaluated request, kept when auditing is enabled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditRecord {
    pub request: TokenRequest,
    pub rules_version: u64,
    pub allowed: bool,
    pub reason: String,
}

/// A token request with an optional hint naming the top-level call the
/// client intends to make, which validators simulate instead of a direct
/// call to the guarded contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "EnvelopeWire")]
pub struct RequestEnvelope {
    #[serde(flatten)]
    pub request: TokenRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry: Option<EntryCall>,
}

/// Flat form of [`RequestEnvelope`]; `flatten` is slow to deserialize.
#[derive(Deserialize)]
struct EnvelopeWire {
    #[serde(rename = "type")]
    token_type: TokenType,
    #[serde(rename = "cAddr")]
    contract: Address,
    #[serde(rename = "sAddr")]
    sender: Address,
    #[serde(rename = "methodId", default)]
    method: Option<MethodId>,
    #[serde(default)]
    args: Vec<crate::token::ArgPair>,
    #[serde(default)]
    entry: Option<EntryCall>,
}

impl From<EnvelopeWire> for RequestEnvelope {
    fn from(w: EnvelopeWire) -> Self {
        let request = TokenRequest { token_type: w.token_type, contract: w.contract, sender: w.sender, method: w.method, args: w.args };
        RequestEnvelope { request, entry: w.entry }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryCall {
    pub contract: Address,
    pub method: MethodId,
    #[serde(default)]
    pub args: Vec<crate::token::ArgPair>,
    #[serde(default)]
    pub value: u128,
}

impl From<TokenRequest> for RequestEnvelope {
    fn from(request: TokenRequest) -> Self {
        RequestEnvelope { request, entry: None }
    }
}

pub struct TokenService {
    key: KeyPair,
    rules: RwLock<Arc<RuleSet>>,
    rules_writer: Mutex<Option<PathBuf>>,
    counter: Box<dyn CounterStore>,
    clock: Arc<dyn Clock>,
    registry: BTreeMap<Address, ContractPolicy>,
    default_expiry: u32,
    validation: RwLock<Arc<Simulator>>,
    owner_secret: Option<String>,
    stats: Mutex<BTreeMap<String, LatencyStats>>,
    audit: Option<Mutex<Vec<AuditRecord>>>,
}

impl std::fmt::Debug for TokenService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TokenService")
            .field("address", &self.key.address())
            .field("rules_version", &self.rules_snapshot().version)
            .field("counter", &self.counter.current())
            .finish_non_exhaustive()
    }
}

pub struct ServiceBuilder {
    key: KeyPair,
    rules: RuleSet,
    rules_path: Option<PathBuf>,
    counter: Box<dyn CounterStore>,
    clock: Arc<dyn Clock>,
    registry: BTreeMap<Address, ContractPolicy>,
    default_expiry: u32,
    validation: Simulator,
    owner_secret: Option<String>,
    audit: bool,
}

impl ServiceBuilder {
    pub fn rules(mut self, rules: RuleSet) -> Self {
        self.rules = rules;
        self
    }

    /// File the rules are written to after every owner update.
    pub fn rules_path(mut self, path: impl Into<PathBuf>) -> Self {
        self.rules_path = Some(path.into());
        self
    }

    pub fn counter(mut self, counter: Box<dyn CounterStore>) -> Self {
        self.counter = counter;
        self
    }

    pub fn clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn contract(mut self, address: Address, policy: ContractPolicy) -> Self {
        self.registry.insert(address, policy);
        self
    }

    pub fn default_expiry(mut self, secs: u32) -> Self {
        self.default_expiry = secs;
        self
    }

    /// Chain state the validators simulate against.
    pub fn validation_state(mut self, sim: Simulator) -> Self {
        self.validation = sim;
        self
    }

    pub fn owner_secret(mut self, secret: impl Into<String>) -> Self {
        self.owner_secret = Some(secret.into());
        self
    }

    pub fn audit(mut self, on: bool) -> Self {
        self.audit = on;
        self
    }

    pub fn build(self) -> TokenService {
        TokenService {
            key: self.key,
            rules: RwLock::new(Arc::new(self.rules)),
            rules_writer: Mutex::new(self.rules_path),
            counter: self.counter,
            clock: self.clock,
            registry: self.registry,
            default_expiry: self.default_expiry,
            validation: RwLock::new(Arc::new(self.validation)),
            owner_secret: self.owner_secret,
            stats: Mutex::new(BTreeMap::new()),
            audit: self.audit.then(|| Mutex::new(Vec::new())),
        }
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

impl TokenService {
    pub fn builder(key: KeyPair) -> ServiceBuilder {
        ServiceBuilder {
            key,
            rules: RuleSet::default(),
            rules_path: None,
            counter: Box::new(MemoryCounter::default()),
            clock: Arc::new(SystemClock),
            registry: BTreeMap::new(),
            default_expiry: DEFAULT_EXPIRY_SECS,
            validation: Simulator::new(),
            owner_secret: None,
            audit: false,
        }
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        self.key.public()
    }

    pub fn address(&self) -> Address {
        self.key.address()
    }

    pub fn rules_snapshot(&self) -> Arc<RuleSet> {
        self.rules.read().expect("rules lock").clone()
    }

    pub fn counter_value(&self) -> u128 {
        self.counter.current()
    }

    pub fn now(&self) -> u32 {
        self.clock.now()
    }

    pub fn policy(&self, contract: &Address) -> Option<&ContractPolicy> {
        self.registry.get(contract)
    }

    pub fn set_validation_state(&self, sim: Simulator) {
        *self.validation.write().expect("validation lock") = Arc::new(sim);
    }

    pub fn validator_stats(&self) -> BTreeMap<String, LatencyStats> {
        self.stats.lock().expect("stats lock").clone()
    }

    pub fn audit_log(&self) -> Vec<AuditRecord> {
        self.audit.as_ref().map(|a| a.lock().expect("audit lock").clone()).unwrap_or_default()
    }

    fn method_name(&self, contract: &Address, method: Option<MethodId>, sim: &Simulator) -> Option<String> {
        let method = method?;
        if let Some(name) = self.registry.get(contract).and_then(|p| p.methods.get(&method)) {
            return Some(name.clone());
        }
        sim.contract(contract).and_then(|c| c.methods.get(&method)).map(|m| m.name.to_owned())
    }

    fn lifetime(&self, contract: &Address, method: Option<&str>) -> u32 {
        let policy = self.registry.get(contract);
        method
            .and_then(|m| policy.and_then(|p| p.method_expiry.get(m)))
            .copied()
            .or_else(|| policy.and_then(|p| p.expiry))
            .unwrap_or(self.default_expiry)
    }

    fn run_validator(&self, name: &str, req: &TokenRequest, entry: Option<&EntryCall>, sim: &Simulator) -> ValidatorVerdict {
        let direct = SimulatedCall {
            contract: req.contract,
            method: req.method.unwrap_or_default(),
            args: req.args.clone(),
            caller: req.sender,
            value: 0,
        };
        let (verdict, took) = validators::timed(|| match name {
            validators::ECF => {
                let call = entry
                    .map(|e| SimulatedCall {
                        contract: e.contract,
                        method: e.method,
                        args: e.args.clone(),
                        caller: req.sender,
                        value: e.value,
                    })
                    .unwrap_or_else(|| direct.clone());
                validators::ecf_check(&call, sim)
            }
            validators::NVERSION => {
                let heads = self.registry.get(&req.contract).map(|p| p.heads.as_slice()).unwrap_or(&[]);
                validators::nversion_uniform(&direct, heads, sim)
            }
            other => Ok(ValidatorVerdict { pass: false, detail: format!("unknown validator `{other}`") }),
        });
        let verdict = verdict.unwrap_or_else(|e| ValidatorVerdict { pass: false, detail: e.to_string() });
        let mut stats = self.stats.lock().expect("stats lock");
        let s = stats.entry(name.to_owned()).or_default();
        s.runs += 1;
        s.failures += u64::from(!verdict.pass);
        s.total += took;
        s.max = s.max.max(took);
        verdict
    }

    /// Shape check, rules, then validators, all against one rules snapshot.
    fn decide(&self, env: &RequestEnvelope, rs: &RuleSet, sim: &Simulator) -> Result<Option<String>, IssueError> {
        let req = &env.request;
        req.check_shape()?;
        let name = self.method_name(&req.contract, req.method, sim);
        let mut detail = None;
        let decision: Decision = rules::evaluate_with(req, rs, name.as_deref(), |v| {
            let verdict = self.run_validator(v, req, env.entry.as_ref(), sim);
            if verdict.pass {
                None
            } else {
                detail = Some(verdict.detail.clone());
                Some(verdict.detail)
            }
        });
        if let Some(audit) = &self.audit {
            audit.lock().expect("audit lock").push(AuditRecord {
                request: req.clone(),
                rules_version: decision.rules_version,
                allowed: decision.allow,
                reason: decision.reason.clone(),
            });
        }
        if decision.allow {
            Ok(name)
        } else {
            Err(IssueError::Denied { reason: decision.reason, detail })
        }
    }

    fn sign(&self, req: &TokenRequest, method_name: Option<&str>, index: i128, rules_version: u64) -> Result<Issued, IssueError> {
        let expires_at = self.clock.now().saturating_add(self.lifetime(&req.contract, method_name));
        let payload = signing_payload(req.token_type, expires_at, index, &encode_req_payload(req)?);
        let signature = crypto::sign(&self.key, &payload);
        Ok(Issued {
            token: Token { token_type: req.token_type, expire: expires_at, index, signature },
            expires_at,
            one_time: index != NO_INDEX,
            rules_version,
        })
    }

    fn is_one_time(&self, req: &TokenRequest, method_name: Option<&str>) -> bool {
        self.registry.get(&req.contract).is_some_and(|p| p.one_time.applies(req.token_type, method_name))
    }

    pub fn issue(&self, req: &TokenRequest) -> Result<Issued, IssueError> {
        self.issue_envelope(&RequestEnvelope { request: req.clone(), entry: None })
    }

    pub fn issue_envelope(&self, env: &RequestEnvelope) -> Result<Issued, IssueError> {
        let rs = self.rules_snapshot();
        let sim = self.validation.read().expect("validation lock").clone();
        let name = self.decide(env, &rs, &sim)?;
        let index = if self.is_one_time(&env.request, name.as_deref()) {
            i128::try_from(self.counter.next()?).map_err(|_| PersistenceFailure("counter overflow".into()))?
        } else {
            NO_INDEX
        };
        self.sign(&env.request, name.as_deref(), index, rs.version)
    }

    /// Issues a batch against a single rules snapshot. One-time indexes for
    /// the whole batch are reserved with one persisted counter write.
    pub fn issue_batch(&self, batch: &[RequestEnvelope]) -> Vec<Result<Issued, IssueError>> {
        let rs = self.rules_snapshot();
        let sim = self.validation.read().expect("validation lock").clone();
        let decided: Vec<Result<(Option<String>, bool), IssueError>> = batch
            .iter()
            .map(|env| {
                self.decide(env, &rs, &sim).map(|name| {
                    let one_time = self.is_one_time(&env.request, name.as_deref());
                    (name, one_time)
                })
            })
            .collect();
        let wanted = decided.iter().filter(|d| matches!(d, Ok((_, true)))).count() as u64;
        let mut next_index = match wanted {
            0 => Ok(0),
            n => self.counter.reserve(n).map(|first| first as i128),
        };
        batch
            .iter()
            .zip(decided)
            .map(|(env, d)| {
                let (name, one_time) = d?;
                let index = if one_time {
                    let i = next_index.as_ref().map_err(|e| PersistenceFailure(e.0.clone()))?;
                    let index = *i;
                    next_index = Ok(index + 1);
                    index
                } else {
                    NO_INDEX
                };
                self.sign(&env.request, name.as_deref(), index, rs.version)
            })
            .collect()
    }

    pub fn authorize(&self, bearer: Option<&str>) -> Result<(), AdminError> {
        match (&self.owner_secret, bearer) {
            (Some(secret), Some(given)) if constant_time_eq(secret.as_bytes(), given.as_bytes()) => Ok(()),
            _ => Err(AdminError::Unauthorized),
        }
    }

    fn install(&self, path: &Option<PathBuf>, next: RuleSet) -> Result<u64, AdminError> {
        if let Some(path) = path {
            counter::write_atomic(path, next.to_document().as_bytes(), false)
                .map_err(|e| AdminError::Persistence(format!("{}: {e}", path.display())))?;
        }
        let version = next.version;
        *self.rules.write().expect("rules lock") = Arc::new(next);
        Ok(version)
    }

    /// Applies one add/remove. Returns the new rules version.
    pub fn update_rules(&self, bearer: Option<&str>, op: UpdateOp, scope: &ScopePath, entry: &str) -> Result<u64, AdminError> {
        self.authorize(bearer)?;
        let path = self.rules_writer.lock().expect("rules writer");
        let next = rules::update_rules(&self.rules_snapshot(), op, scope, entry)?;
        self.install(&path, next)
    }

    /// Replaces the whole rule document. The new version is one past the
    /// current version, or the document's own version if that is higher.
    pub fn put_rules(&self, bearer: Option<&str>, document: &str) -> Result<u64, AdminError> {
        self.authorize(bearer)?;
        let path = self.rules_writer.lock().expect("rules writer");
        let mut next = rules::load_rules(document)?;
        next.version = next.version.max(self.rules_snapshot().version + 1);
        self.install(&path, next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::load_rules;
    use crate::token::ArgPair;

    const OWNER: &str = "owner-secret";

    fn sender() -> Address {
        Address([0x11; 20])
    }

    fn contract() -> Address {
        Address([0xcc; 20])
    }

    fn withdraw() -> MethodId {
        MethodId::from_signature("withdraw(uint256)")
    }

    fn service(rules: &str, policy: ContractPolicy) -> TokenService {
        TokenService::builder(KeyPair::from_seed(b"ts"))
            .rules(load_rules(rules).unwrap())
            .clock(Arc::new(ManualClock::new(1_000)))
            .contract(contract(), policy)
            .owner_secret(OWNER)
            .build()
    }

    fn open_rules() -> String {
        format!(r#"{{"sender": {{"whitelist": ["{}"]}}}}"#, sender())
    }

    fn verifies(ts: &TokenService, req: &TokenRequest, issued: &Issued) -> bool {
        let payload = signing_payload(issued.token.token_type, issued.token.expire, issued.token.index, &encode_req_payload(req).unwrap());
        crypto::verify(&ts.verifying_key(), &payload, &issued.token.signature)
    }

    #[test]
    fn whitelisted_sender_gets_verifiable_super_token() {
        let ts = service(&open_rules(), ContractPolicy::default());
        let req = TokenRequest::super_token(contract(), sender());
        let issued = ts.issue(&req).unwrap();
        assert_eq!(issued.expires_at, 1_000 + DEFAULT_EXPIRY_SECS);
        assert_eq!(issued.token.index, NO_INDEX);
        assert!(!issued.one_time);
        assert!(verifies(&ts, &req, &issued));
        let wire = IssueResponse::from(&issued);
        assert_eq!(wire.token().unwrap(), issued.token);
    }

    #[test]
    fn denial_carries_reason_only() {
        let ts = service(&open_rules(), ContractPolicy::default());
        let err = ts.issue(&TokenRequest::super_token(contract(), Address([2; 20]))).unwrap_err();
        assert_eq!(err.status(), 403);
        assert_eq!(err.reason(), "sender.whitelist");
        let empty = service("{}", ContractPolicy::default());
        assert_eq!(empty.issue(&TokenRequest::super_token(contract(), sender())).unwrap_err().reason(), "default.deny");
    }

    #[test]
    fn shape_errors_are_400() {
        let ts = service(&open_rules(), ContractPolicy::default());
        let mut req = TokenRequest::super_token(contract(), sender());
        req.method = Some(withdraw());
        assert_eq!(ts.issue(&req).unwrap_err().status(), 400);
    }

    #[test]
    fn one_time_indexes_are_consecutive_from_one() {
        let policy = ContractPolicy::with_methods(["withdraw(uint256)"]).one_time(OneTimePolicy::from_names(["withdraw"]));
        let ts = service(&open_rules(), policy);
        let req = TokenRequest::argument_token(contract(), sender(), withdraw(), vec![ArgPair::new("amount", "5")]);
        let a = ts.issue(&req).unwrap();
        let b = ts.issue(&req).unwrap();
        assert_eq!((a.token.index, b.token.index), (1, 2));
        assert!(a.one_time && verifies(&ts, &req, &b));
        // Super tokens are not covered by a per-method policy.
        assert_eq!(ts.issue(&TokenRequest::super_token(contract(), sender())).unwrap().token.index, NO_INDEX);
    }

    #[test]
    fn batch_reserves_indexes_once() {
        let policy = ContractPolicy::default().one_time(OneTimePolicy::Always);
        let ts = service(&open_rules(), policy);
        let ok = RequestEnvelope::from(TokenRequest::super_token(contract(), sender()));
        let denied = RequestEnvelope::from(TokenRequest::super_token(contract(), Address([3; 20])));
        let out = ts.issue_batch(&[ok.clone(), denied, ok.clone(), ok]);
        let indexes: Vec<_> = out.iter().map(|r| r.as_ref().map(|i| i.token.index).ok()).collect();
        assert_eq!(indexes, vec![Some(1), None, Some(2), Some(3)]);
        assert_eq!(ts.counter_value(), 3);
    }

    #[test]
    fn expiry_overrides() {
        let mut policy = ContractPolicy::with_methods(["withdraw(uint256)"]).expiry(60);
        policy.method_expiry.insert("withdraw".into(), 5);
        let ts = service(&open_rules(), policy);
        assert_eq!(ts.issue(&TokenRequest::super_token(contract(), sender())).unwrap().expires_at, 1_060);
        assert_eq!(ts.issue(&TokenRequest::method_token(contract(), sender(), withdraw())).unwrap().expires_at, 1_005);
    }

    #[test]
    fn owner_updates_take_effect() {
        let ts = service("{}", ContractPolicy::default());
        let req = TokenRequest::super_token(contract(), sender());
        assert!(ts.issue(&req).is_err());
        let scope: ScopePath = "sender.whitelist".parse().unwrap();
        assert!(matches!(ts.update_rules(None, UpdateOp::Add, &scope, &sender().to_string()), Err(AdminError::Unauthorized)));
        assert!(matches!(ts.update_rules(Some("nope"), UpdateOp::Add, &scope, &sender().to_string()), Err(AdminError::Unauthorized)));
        let v = ts.update_rules(Some(OWNER), UpdateOp::Add, &scope, &sender().to_string()).unwrap();
        assert_eq!(v, 1);
        assert_eq!(ts.issue(&req).unwrap().rules_version, 1);
        let v = ts.put_rules(Some(OWNER), "{}").unwrap();
        assert_eq!(v, 2);
        assert!(ts.issue(&req).is_err());
    }

    #[test]
    fn rules_are_persisted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rules.json");
        let ts = TokenService::builder(KeyPair::from_seed(b"ts")).owner_secret(OWNER).rules_path(&path).build();
        ts.update_rules(Some(OWNER), UpdateOp::Add, &"method.withdraw.blacklist".parse().unwrap(), &sender().to_string())
            .unwrap();
        let stored = load_rules(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(stored, *ts.rules_snapshot());
    }

    #[test]
    fn unauthenticated_service_rejects_all_updates() {
        let ts = TokenService::builder(KeyPair::from_seed(b"ts")).build();
        assert!(ts.authorize(Some("")).is_err());
        assert!(ts.authorize(None).is_err());
    }

    #[test]
    fn nversion_without_heads_denies() {
        let rules = format!(r#"{{"sender": {{"whitelist": ["{}"]}}, "validators": ["nversion"]}}"#, sender());
        let ts = service(&rules, ContractPolicy::default());
        let err = ts.issue(&TokenRequest::method_token(contract(), sender(), withdraw())).unwrap_err();
        assert_eq!(err.reason(), "validator.nversion");
        assert!(matches!(err, IssueError::Denied { detail: Some(_), .. }));
        assert_eq!(ts.validator_stats()["nversion"].failures, 1);
        // Validators do not run for Super tokens.
        assert!(ts.issue(&TokenRequest::super_token(contract(), sender())).is_ok());
    }

    #[test]
    fn envelope_json_shape() {
        let json = format!(r#"{{"type":"method","cAddr":"{}","sAddr":"{}","methodId":"{}"}}"#, contract(), sender(), withdraw());
        let env: RequestEnvelope = serde_json::from_str(&json).unwrap();
        assert_eq!(env.request, TokenRequest::method_token(contract(), sender(), withdraw()));
        assert!(env.entry.is_none());
    }
}
