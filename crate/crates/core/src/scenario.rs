//! Scripted end-to-end scenarios: a JSON document describing genesis
//! accounts and contracts, a token service configuration, and a list of
//! steps with expectations. Each run starts from a fresh service and chain,
//! so runs are replayable.
//!
//! Labels name accounts and contracts; `$label` inside a string expands to
//! the labelled address.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::client::{self, ClientError, TxCall};
use crate::crypto::{keccak256, KeyPair};
use crate::rules::{load_rules, ScopePath, UpdateOp};
use crate::service::{ContractPolicy, EntryCall, ManualClock, OneTimePolicy, RequestEnvelope, TokenService};
use crate::sim::{fixtures, Deployment, Guard, Receipt, Simulator, TxStatus};
use crate::token::{Address, ArgPair, MethodId, Token, TokenRequest, TokenType};

const OWNER: &str = "scenario-owner";

/// Scenarios bundled with the crate, by name.
pub const SHIPPED: [(&str, &str); 3] = [
    ("reentrancy_blocked", include_str!("../scenarios/reentrancy_blocked.json")),
    ("token_miss", include_str!("../scenarios/token_miss.json")),
    ("call_chain", include_str!("../scenarios/call_chain.json")),
];

pub fn shipped(name: &str) -> Option<&'static str> {
    SHIPPED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario does not parse: {0}")]
    Parse(String),
    #[error("scenario setup failed: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    /// Genesis time for both the chain and the service clock.
    #[serde(default)]
    pub time: u32,
    /// Externally owned accounts and their starting balances.
    #[serde(default)]
    pub accounts: BTreeMap<String, u64>,
    #[serde(default)]
    pub contracts: Vec<ContractSpec>,
    #[serde(default)]
    pub service: ServiceSpec,
    #[serde(default)]
    pub steps: Vec<Step>,
}

fn default_bits() -> u64 {
    64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct ContractSpec {
    pub label: String,
    pub kind: String,
    #[serde(default)]
    pub guarded: bool,
    #[serde(default = "default_bits")]
    pub bitmap_bits: u64,
    #[serde(default)]
    pub balance: u64,
    #[serde(default)]
    pub params: Vec<ArgPair>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct ServiceSpec {
    /// Rule document; `$label` strings are expanded.
    #[serde(default)]
    pub rules: Option<Value>,
    #[serde(default)]
    pub default_expiry: Option<u32>,
    #[serde(default)]
    pub policies: Vec<PolicySpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct PolicySpec {
    pub contract: String,
    #[serde(default)]
    pub expiry: Option<u32>,
    #[serde(default)]
    pub one_time: Vec<String>,
    #[serde(default)]
    pub heads: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct TokenSpec {
    #[serde(rename = "type")]
    pub token_type: TokenType,
    pub contract: String,
    /// Method signature, e.g. `withdraw()`.
    #[serde(default)]
    pub method: Option<String>,
    #[serde(default)]
    pub args: Vec<ArgPair>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TokenRef {
    Saved { saved: String },
    Fresh(TokenSpec),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct RequestExpect {
    #[serde(default)]
    pub issued: Option<bool>,
    #[serde(default)]
    pub reason: Option<String>,
    #[serde(default)]
    pub index: Option<i64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct SendExpect {
    /// `ok` or `reverted`.
    #[serde(default)]
    pub status: Option<String>,
    /// Substring of the revert detail.
    #[serde(default)]
    pub detail: Option<String>,
    #[serde(default)]
    pub sig_verifies: Option<u64>,
    /// A fresh token request is expected to be refused with this reason.
    #[serde(default)]
    pub token_denied: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cmp {
    #[serde(default)]
    pub eq: Option<u64>,
    #[serde(default)]
    pub gt: Option<u64>,
    #[serde(default)]
    pub gte: Option<u64>,
    #[serde(default)]
    pub lt: Option<u64>,
}

impl Cmp {
    fn check(&self, v: u128) -> bool {
        let w = u128::from;
        self.eq.is_none_or(|x| v == w(x))
            && self.gt.is_none_or(|x| v > w(x))
            && self.gte.is_none_or(|x| v >= w(x))
            && self.lt.is_none_or(|x| v < w(x))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub enum Assertion {
    /// Native balance of an account or contract.
    Balance {
        of: String,
        #[serde(flatten)]
        cmp: Cmp,
    },
    /// `balance[who]` as recorded in a bank or ledger contract.
    Recorded {
        contract: String,
        who: String,
        #[serde(flatten)]
        cmp: Cmp,
    },
    Unchanged { snapshot: String },
    Changed { snapshot: String },
    /// The service's one-time counter.
    Counter(Cmp),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "camelCase", deny_unknown_fields)]
pub enum Step {
    Request {
        from: String,
        token: TokenSpec,
        #[serde(default)]
        entry: Option<EntrySpec>,
        #[serde(default)]
        save: Option<String>,
        #[serde(default)]
        expect: Option<RequestExpect>,
    },
    Send {
        from: String,
        to: String,
        #[serde(default)]
        method: Option<String>,
        #[serde(default)]
        args: Vec<ArgPair>,
        #[serde(default)]
        value: u64,
        #[serde(default)]
        tokens: Vec<TokenRef>,
        #[serde(default)]
        expect: Option<SendExpect>,
    },
    Advance {
        seconds: u32,
    },
    Rules {
        action: UpdateOp,
        scope: String,
        entry: String,
    },
    /// Records a contract's storage and balance under `name`.
    Snapshot {
        name: String,
        contract: String,
    },
    Assert {
        #[serde(flatten)]
        what: Assertion,
    },
}

impl Step {
    fn op(&self) -> &'static str {
        match self {
            Step::Request { .. } => "request",
            Step::Send { .. } => "send",
            Step::Advance { .. } => "advance",
            Step::Rules { .. } => "rules",
            Step::Snapshot { .. } => "snapshot",
            Step::Assert { .. } => "assert",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntrySpec {
    pub contract: String,
    pub method: String,
    #[serde(default)]
    pub args: Vec<ArgPair>,
    #[serde(default)]
    pub value: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepOutcome {
    pub index: usize,
    pub op: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub steps: Vec<StepOutcome>,
    pub passed: bool,
}

impl fmt::Display for ScenarioReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.steps {
            writeln!(f, "  [{}] {:>2} {:<8} {}", if s.pass { "ok" } else { "FAIL" }, s.index, s.op, s.detail)?;
        }
        write!(f, "scenario {}: {}", self.name, if self.passed { "pass" } else { "FAIL" })
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }
}

fn account_key(label: &str) -> KeyPair {
    KeyPair::from_seed(format!("scenario/{label}").as_bytes())
}

struct Runner {
    ts: TokenService,
    sim: Simulator,
    clock: ManualClock,
    keys: BTreeMap<String, KeyPair>,
    labels: BTreeMap<String, Address>,
    saved: BTreeMap<String, (Address, Token)>,
    snapshots: BTreeMap<String, (Address, [u8; 32], u128)>,
}

type StepResult = Result<String, String>;

fn expand_value(v: &mut Value, labels: &BTreeMap<String, Address>) -> Result<(), String> {
    match v {
        Value::String(s) if s.starts_with('$') => {
            let a = labels.get(&s[1..]).ok_or_else(|| format!("unknown label `{s}`"))?;
            *s = a.to_string();
        }
        Value::Array(items) => items.iter_mut().try_for_each(|i| expand_value(i, labels))?,
        Value::Object(map) => map.values_mut().try_for_each(|i| expand_value(i, labels))?,
        _ => {}
    }
    Ok(())
}

impl Runner {
    fn address(&self, name: &str) -> Result<Address, String> {
        let label = name.strip_prefix('$').unwrap_or(name);
        match self.labels.get(label) {
            Some(a) => Ok(*a),
            None => name.parse().map_err(|_| format!("unknown label `{name}`")),
        }
    }

    fn key(&self, label: &str) -> Result<&KeyPair, String> {
        self.keys.get(label.strip_prefix('$').unwrap_or(label)).ok_or_else(|| format!("`{label}` is not an account"))
    }

    fn expand_args(&self, args: &[ArgPair]) -> Result<Vec<ArgPair>, String> {
        args.iter()
            .map(|a| {
                let value = if a.value.starts_with('$') { self.address(&a.value)?.to_string() } else { a.value.clone() };
                Ok(ArgPair::new(a.name.clone(), value))
            })
            .collect()
    }

    fn setup(sc: &Scenario) -> Result<Runner, ScenarioError> {
        let setup = |e: String| ScenarioError::Setup(e);
        let clock = ManualClock::new(sc.time);
        let mut sim = Simulator::new();
        sim.set_time(sc.time).map_err(|e| setup(e.to_string()))?;
        let mut keys = BTreeMap::new();
        let mut labels = BTreeMap::new();
        for (label, balance) in &sc.accounts {
            let key = account_key(label);
            sim.create_account(key.address(), u128::from(*balance));
            labels.insert(label.clone(), key.address());
            keys.insert(label.clone(), key);
        }
        let ts_key = KeyPair::from_seed(format!("scenario-ts/{}", sc.name).as_bytes());
        for c in &sc.contracts {
            let code = fixtures::code_for(&c.kind).ok_or_else(|| setup(format!("unknown contract kind `{}`", c.kind)))?;
            let mut params = Vec::new();
            for p in &c.params {
                let value = match p.value.strip_prefix('$') {
                    Some(l) => labels.get(l).ok_or_else(|| setup(format!("unknown label `{}`", p.value)))?.to_string(),
                    None => p.value.clone(),
                };
                params.push(ArgPair::new(p.name.clone(), value));
            }
            let mut dep = Deployment::new(code).params(params).balance(u128::from(c.balance));
            if c.guarded {
                dep = dep.guarded(Guard::new(Arc::new(ts_key.public()), c.bitmap_bits));
            }
            let addr = sim.register_contract(dep).map_err(|e| setup(format!("{}: {e}", c.label)))?;
            if labels.insert(c.label.clone(), addr).is_some() {
                return Err(setup(format!("duplicate label `{}`", c.label)));
            }
        }

        let mut b = TokenService::builder(ts_key).clock(Arc::new(clock.clone())).owner_secret(OWNER);
        if let Some(doc) = &sc.service.rules {
            let mut doc = doc.clone();
            expand_value(&mut doc, &labels).map_err(setup)?;
            b = b.rules(load_rules(&doc.to_string()).map_err(|e| setup(e.to_string()))?);
        }
        if let Some(e) = sc.service.default_expiry {
            b = b.default_expiry(e);
        }
        for p in &sc.service.policies {
            let addr = *labels.get(&p.contract).ok_or_else(|| setup(format!("unknown label `{}`", p.contract)))?;
            let heads = p
                .heads
                .iter()
                .map(|h| labels.get(h).copied().ok_or_else(|| setup(format!("unknown label `{h}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            let policy = ContractPolicy { expiry: p.expiry, one_time: OneTimePolicy::from_names(p.one_time.iter().cloned()), heads, ..Default::default() };
            b = b.contract(addr, policy);
        }
        Ok(Runner { ts: b.build(), sim, clock, keys, labels, saved: BTreeMap::new(), snapshots: BTreeMap::new() })
    }

    fn token_request(&self, from: &Address, spec: &TokenSpec) -> Result<TokenRequest, String> {
        Ok(TokenRequest {
            token_type: spec.token_type,
            contract: self.address(&spec.contract)?,
            sender: *from,
            method: spec.method.as_deref().map(MethodId::from_signature),
            args: self.expand_args(&spec.args)?,
        })
    }

    fn issue(&self, env: &RequestEnvelope) -> Result<crate::service::Issued, crate::service::IssueError> {
        self.ts.set_validation_state(self.sim.clone());
        self.ts.issue_envelope(env)
    }

    fn contract_fingerprint(&self, addr: &Address) -> Result<([u8; 32], u128), String> {
        let c = self.sim.contract(addr).ok_or_else(|| format!("{addr} is not a contract"))?;
        Ok((c.storage.digest(), self.sim.balance(addr)))
    }

    fn request(&mut self, from: &str, spec: &TokenSpec, entry: Option<&EntrySpec>, save: Option<&str>, expect: Option<&RequestExpect>) -> StepResult {
        let sender = self.key(from)?.address();
        let request = self.token_request(&sender, spec)?;
        let entry = entry
            .map(|e| -> Result<EntryCall, String> {
                Ok(EntryCall {
                    contract: self.address(&e.contract)?,
                    method: MethodId::from_signature(&e.method),
                    args: self.expand_args(&e.args)?,
                    value: u128::from(e.value),
                })
            })
            .transpose()?;
        let contract = request.contract;
        let out = self.issue(&RequestEnvelope { request, entry });
        let expect = expect.cloned().unwrap_or_default();
        match out {
            Ok(issued) => {
                if expect.issued == Some(false) || expect.reason.is_some() {
                    return Err(format!("token issued (index {}) but a denial was expected", issued.token.index));
                }
                if let Some(i) = expect.index {
                    if issued.token.index != i128::from(i) {
                        return Err(format!("index {} != expected {i}", issued.token.index));
                    }
                }
                if let Some(name) = save {
                    self.saved.insert(name.to_owned(), (contract, issued.token));
                }
                Ok(format!("issued, index {}", issued.token.index))
            }
            Err(e) => {
                let reason = e.reason();
                if expect.issued == Some(true) || expect.index.is_some() {
                    return Err(format!("denied ({reason}) but issuance was expected"));
                }
                match &expect.reason {
                    Some(r) if *r != reason => Err(format!("denied with `{reason}`, expected `{r}`")),
                    _ => Ok(format!("denied: {reason}")),
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn send(&mut self, from: &str, to: &str, method: Option<&str>, args: &[ArgPair], value: u64, tokens: &[TokenRef], expect: Option<&SendExpect>) -> StepResult {
        let key = self.key(from)?.clone();
        let call = TxCall {
            target: self.address(to)?,
            method: method.map(MethodId::from_signature),
            args: self.expand_args(args)?,
            value: u128::from(value),
        };
        let expect = expect.cloned().unwrap_or_default();
        let mut array = Vec::new();
        for t in tokens {
            match t {
                TokenRef::Saved { saved } => array.push(*self.saved.get(saved).ok_or_else(|| format!("no saved token `{saved}`"))?),
                TokenRef::Fresh(spec) => {
                    let request = self.token_request(&key.address(), spec)?;
                    let entry = call.method.map(|m| EntryCall { contract: call.target, method: m, args: call.args.clone(), value: call.value });
                    match self.issue(&RequestEnvelope { request: request.clone(), entry }) {
                        Ok(i) => array.push((request.contract, i.token)),
                        Err(e) => {
                            let reason = e.reason();
                            return match &expect.token_denied {
                                Some(r) if *r == reason => Ok(format!("token for {} denied: {reason}", spec.contract)),
                                Some(r) => Err(format!("token denied with `{reason}`, expected `{r}`")),
                                None => Err(format!("token for {} denied: {reason}", spec.contract)),
                            };
                        }
                    }
                }
            }
        }
        if let Some(r) = &expect.token_denied {
            return Err(format!("every token was issued, expected denial `{r}`"));
        }
        let receipt = client::send_with_tokens(&mut self.sim, &key, &array, &call).map_err(|e: ClientError| e.to_string())?;
        check_receipt(&receipt, &expect)
    }

    fn assert(&self, what: &Assertion) -> StepResult {
        let (ok, detail) = match what {
            Assertion::Balance { of, cmp } => {
                let v = self.sim.balance(&self.address(of)?);
                (cmp.check(v), format!("balance of {of} = {v}"))
            }
            Assertion::Recorded { contract, who, cmp } => {
                let v = fixtures::recorded_balance(&self.sim, &self.address(contract)?, &self.address(who)?);
                (cmp.check(v), format!("{contract} records {v} for {who}"))
            }
            Assertion::Unchanged { snapshot } | Assertion::Changed { snapshot } => {
                let (addr, digest, balance) = self.snapshots.get(snapshot).ok_or_else(|| format!("no snapshot `{snapshot}`"))?;
                let same = self.contract_fingerprint(addr)? == (*digest, *balance);
                let want_same = matches!(what, Assertion::Unchanged { .. });
                (same == want_same, format!("snapshot {snapshot}: {}", if same { "unchanged" } else { "changed" }))
            }
            Assertion::Counter(cmp) => {
                let v = self.ts.counter_value();
                (cmp.check(v), format!("counter = {v}"))
            }
        };
        if ok {
            Ok(detail)
        } else {
            Err(detail)
        }
    }

    fn step(&mut self, step: &Step) -> StepResult {
        match step {
            Step::Request { from, token, entry, save, expect } => self.request(from, token, entry.as_ref(), save.as_deref(), expect.as_ref()),
            Step::Send { from, to, method, args, value, tokens, expect } => {
                self.send(from, to, method.as_deref(), args, *value, tokens, expect.as_ref())
            }
            Step::Advance { seconds } => {
                let t = self.sim.now().saturating_add(*seconds);
                self.sim.set_time(t).map_err(|e| e.to_string())?;
                self.clock.set(t);
                Ok(format!("time = {t}"))
            }
            Step::Rules { action, scope, entry } => {
                let scope: ScopePath = scope.parse().map_err(|e: crate::rules::RulesError| e.to_string())?;
                let entry = if entry.starts_with('$') { self.address(entry)?.to_string() } else { entry.clone() };
                let v = self.ts.update_rules(Some(OWNER), *action, &scope, &entry).map_err(|e| e.to_string())?;
                Ok(format!("rules version {v}"))
            }
            Step::Snapshot { name, contract } => {
                let addr = self.address(contract)?;
                let (digest, balance) = self.contract_fingerprint(&addr)?;
                self.snapshots.insert(name.clone(), (addr, digest, balance));
                Ok(format!("{name} = {contract} {}", hex::encode(&keccak256(&digest)[..4])))
            }
            Step::Assert { what } => self.assert(what),
        }
    }
}

fn check_receipt(r: &Receipt, expect: &SendExpect) -> StepResult {
    let status = match &r.status {
        TxStatus::Ok => "ok",
        TxStatus::Reverted(_) => "reverted",
    };
    let detail = r.detail.clone().unwrap_or_default();
    let summary = format!("{status}, {} frames, {} sig checks{}", r.trace.len(), r.cost.sig_verifies, if detail.is_empty() { String::new() } else { format!(": {detail}") });
    let wanted = expect.status.as_deref().unwrap_or("ok");
    if wanted != status {
        return Err(format!("expected {wanted}, got {summary}"));
    }
    if let Some(d) = &expect.detail {
        if !detail.contains(d.as_str()) {
            return Err(format!("revert detail lacks `{d}`: {summary}"));
        }
    }
    if let Some(n) = expect.sig_verifies {
        if r.cost.sig_verifies != n {
            return Err(format!("expected {n} sig checks: {summary}"));
        }
    }
    Ok(summary)
}

pub fn run_scenario(sc: &Scenario) -> Result<ScenarioReport, ScenarioError> {
    let mut runner = Runner::setup(sc)?;
    let steps: Vec<StepOutcome> = sc
        .steps
        .iter()
        .enumerate()
        .map(|(i, step)| {
            let (pass, detail) = match runner.step(step) {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            StepOutcome { index: i + 1, op: step.op().to_owned(), pass, detail }
        })
        .collect();
    let passed = steps.iter().all(|s| s.pass);
    Ok(ScenarioReport { name: sc.name.clone(), steps, passed })
}

pub fn run_scenario_text(text: &str) -> Result<ScenarioReport, ScenarioError> {
    run_scenario(&Scenario::parse(text)?)
}
