//! Deterministic ledger and message-call simulator.
//!
//! Contracts are host-language fixtures ([`ContractCode`]) rather than
//! bytecode. A transaction is signed by its origin account, checked against
//! the account nonce, then executed as a tree of message calls. Any trap,
//! including a failed token guard, restores the pre-transaction state; only
//! the origin nonce and block height advance.

mod contract;
mod dump;
pub mod fixtures;
mod guard;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{self, keccak256, KeyPair, Signature};
use crate::token::{decode_args, encode_args, Address, ArgPair, MethodId};

pub use contract::{ContractCode, MethodDef, Storage, Trap, Visibility};
pub use dump::{AccountDump, ContractDump, GuardDump, StateDump};
pub use guard::{
    reconstruct_signed_data, verify_token_onchain, Guard, GuardOutcome, TxContext, SIG_VERIFY_UNITS,
    STORAGE_WRITE_UNITS, WORD_UNITS,
};

pub const DEFAULT_MAX_DEPTH: u32 = 64;
pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("clock cannot move backwards from {now} to {requested}")]
    ClockRegression { now: u32, requested: u32 },
    #[error("address {0} already in use")]
    AddressInUse(Address),
    #[error("unknown contract kind `{0}`")]
    UnknownKind(String),
    #[error("constructor trapped: {0}")]
    Init(Trap),
    #[error("bad state dump: {0}")]
    BadDump(String),
}

/// Rejections that keep a transaction out of the block entirely.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TxError {
    #[error("transaction signature does not match origin")]
    BadSignature,
    #[error("nonce {got} already used (account nonce is {expected})")]
    NonceUsed { expected: u64, got: u64 },
    #[error("nonce {got} is ahead of account nonce {expected}")]
    NonceGap { expected: u64, got: u64 },
    #[error("no contract at {0}")]
    UnknownContract(Address),
    #[error("malformed transaction encoding: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub max_depth: u32,
    pub max_steps: u64,
}

impl Limits {
    pub const DEFAULT: Limits = Limits { max_depth: DEFAULT_MAX_DEPTH, max_steps: DEFAULT_MAX_STEPS };
}

/// Per-transaction operation counts; an abstract stand-in for gas.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CostMeter {
    pub sig_verifies: u64,
    pub storage_writes: u64,
    pub bytes_parsed: u64,
    /// Weighted total of the work done by token guards alone.
    pub guard_units: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceFrame {
    pub depth: u32,
    pub contract: Address,
    pub method: String,
    pub msg_sender: Address,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub from: Address,
    pub to: Address,
    pub amount: u128,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub balance: u128,
    pub nonce: u64,
}

#[derive(Clone)]
pub struct ContractInstance {
    pub address: Address,
    pub code: Arc<dyn ContractCode>,
    pub methods: Arc<BTreeMap<MethodId, MethodDef>>,
    pub storage: Storage,
    pub guard: Option<Guard>,
}

impl ContractInstance {
    pub fn kind(&self) -> &'static str {
        self.code.kind()
    }

    pub fn method_by_name(&self, name: &str) -> Option<(MethodId, &MethodDef)> {
        self.methods.iter().find(|(_, d)| d.name == name).map(|(s, d)| (*s, d))
    }
}

impl std::fmt::Debug for ContractInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ContractInstance")
            .field("address", &self.address)
            .field("kind", &self.kind())
            .field("storage", &self.storage)
            .field("guard", &self.guard)
            .finish()
    }
}

#[derive(Debug, Clone, Default)]
struct World {
    accounts: BTreeMap<Address, Account>,
    contracts: BTreeMap<Address, ContractInstance>,
    height: u64,
    clock: u32,
    deployed: u64,
}

/// A contract to register.
pub struct Deployment {
    pub code: Arc<dyn ContractCode>,
    pub params: Vec<ArgPair>,
    pub guard: Option<Guard>,
    pub balance: u128,
    /// Fixed address; a fresh one is derived when `None`.
    pub address: Option<Address>,
}

impl Deployment {
    pub fn new(code: Arc<dyn ContractCode>) -> Self {
        Deployment { code, params: Vec::new(), guard: None, balance: 0, address: None }
    }

    pub fn params(mut self, params: Vec<ArgPair>) -> Self {
        self.params = params;
        self
    }

    pub fn guarded(mut self, guard: Guard) -> Self {
        self.guard = Some(guard);
        self
    }

    pub fn balance(mut self, balance: u128) -> Self {
        self.balance = balance;
        self
    }

    pub fn at(mut self, address: Address) -> Self {
        self.address = Some(address);
        self
    }
}

/// A signed transaction from an externally owned account.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub origin: Address,
    pub nonce: u64,
    pub target: Address,
    /// `None` sends value to the target's fallback.
    pub method: Option<MethodId>,
    pub calldata: Vec<u8>,
    pub value: u128,
    pub token_array: Vec<u8>,
    pub signature: Signature,
}

impl Transaction {
    #[allow(clippy::too_many_arguments)]
    pub fn signed(
        key: &KeyPair,
        nonce: u64,
        target: Address,
        method: Option<MethodId>,
        args: &[ArgPair],
        value: u128,
        token_array: Vec<u8>,
    ) -> Self {
        let mut tx = Transaction {
            origin: key.address(),
            nonce,
            target,
            method,
            calldata: encode_args(args),
            value,
            token_array,
            signature: Signature([0; 65]),
        };
        tx.signature = crypto::sign(key, &tx.signing_bytes());
        tx
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut out = b"smacs-tx".to_vec();
        out.extend_from_slice(&self.origin.0);
        out.extend_from_slice(&self.nonce.to_be_bytes());
        out.extend_from_slice(&self.target.0);
        match self.method {
            Some(m) => {
                out.push(1);
                out.extend_from_slice(&m.0);
            }
            None => out.push(0),
        }
        out.extend_from_slice(&self.value.to_be_bytes());
        out.extend_from_slice(&(self.calldata.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.calldata);
        out.extend_from_slice(&(self.token_array.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.token_array);
        out
    }

    /// Wire form: signing bytes followed by the 65-byte signature.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.signing_bytes();
        out.extend_from_slice(&self.signature.0);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TxError> {
        let bad = |m: &str| TxError::Malformed(m.to_owned());
        let mut r = bytes.strip_prefix(b"smacs-tx".as_slice()).ok_or_else(|| bad("missing tag"))?;
        fn take<'a>(r: &mut &'a [u8], n: usize) -> Result<&'a [u8], TxError> {
            if r.len() < n {
                return Err(TxError::Malformed("truncated".into()));
            }
            let (head, tail) = r.split_at(n);
            *r = tail;
            Ok(head)
        }
        let origin = Address::from_slice(take(&mut r, 20)?).unwrap();
        let nonce = u64::from_be_bytes(take(&mut r, 8)?.try_into().unwrap());
        let target = Address::from_slice(take(&mut r, 20)?).unwrap();
        let method = match take(&mut r, 1)?[0] {
            0 => None,
            1 => Some(MethodId(take(&mut r, 4)?.try_into().unwrap())),
            _ => return Err(bad("bad method flag")),
        };
        let value = u128::from_be_bytes(take(&mut r, 16)?.try_into().unwrap());
        let len = u32::from_be_bytes(take(&mut r, 4)?.try_into().unwrap()) as usize;
        let calldata = take(&mut r, len)?.to_vec();
        let len = u32::from_be_bytes(take(&mut r, 4)?.try_into().unwrap()) as usize;
        let token_array = take(&mut r, len)?.to_vec();
        let signature = Signature::from_slice(take(&mut r, 65)?).map_err(|e| bad(&e.to_string()))?;
        if !r.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(Transaction { origin, nonce, target, method, calldata, value, token_array, signature })
    }

    pub fn hash(&self) -> [u8; 32] {
        keccak256(&self.to_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "lowercase")]
pub enum TxStatus {
    Ok,
    Reverted(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Receipt {
    #[serde(flatten)]
    pub status: TxStatus,
    #[serde(with = "hex_bytes")]
    pub return_value: Vec<u8>,
    pub trace: Vec<TraceFrame>,
    pub cost: CostMeter,
    /// Trap site and detail for reverted transactions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Receipt {
    pub fn is_ok(&self) -> bool {
        self.status == TxStatus::Ok
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("0x{}", hex::encode(v)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s.trim_start_matches("0x")).map_err(serde::de::Error::custom)
    }
}

/// A call to run on a private copy of the chain, for validators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulatedCall {
    pub contract: Address,
    pub method: MethodId,
    pub args: Vec<ArgPair>,
    pub caller: Address,
    #[serde(default)]
    pub value: u128,
}

/// What a simulated call did. The post-state is the simulator copy the
/// call ran on; the original is untouched.
#[derive(Debug, Clone)]
pub struct CallReport {
    pub result: Result<Vec<u8>, Trap>,
    pub trace: Vec<TraceFrame>,
    pub transfers: Vec<Transfer>,
    pub post: Simulator,
}

#[derive(Debug, Clone)]
pub struct Simulator {
    world: World,
    limits: Limits,
}

impl Default for Simulator {
    fn default() -> Self {
        Simulator::new()
    }
}

impl Simulator {
    pub fn new() -> Self {
        Simulator::with_limits(Limits::DEFAULT)
    }

    pub fn with_limits(limits: Limits) -> Self {
        Simulator { world: World::default(), limits }
    }

    pub fn limits(&self) -> Limits {
        self.limits
    }

    pub fn now(&self) -> u32 {
        self.world.clock
    }

    /// Moves the logical clock forward; it never goes back.
    pub fn set_time(&mut self, t: u32) -> Result<(), SimError> {
        if t < self.world.clock {
            return Err(SimError::ClockRegression { now: self.world.clock, requested: t });
        }
        self.world.clock = t;
        Ok(())
    }

    pub fn height(&self) -> u64 {
        self.world.height
    }

    pub fn create_account(&mut self, address: Address, balance: u128) {
        self.world.accounts.entry(address).or_default().balance += balance;
    }

    pub fn account(&self, address: &Address) -> Account {
        self.world.accounts.get(address).copied().unwrap_or_default()
    }

    pub fn balance(&self, address: &Address) -> u128 {
        self.account(address).balance
    }

    pub fn total_balance(&self) -> u128 {
        self.world.accounts.values().map(|a| a.balance).sum()
    }

    pub fn contract(&self, address: &Address) -> Option<&ContractInstance> {
        self.world.contracts.get(address)
    }

    pub fn contracts(&self) -> impl Iterator<Item = &ContractInstance> {
        self.world.contracts.values()
    }

    pub fn register_contract(&mut self, dep: Deployment) -> Result<Address, SimError> {
        let address = match dep.address {
            Some(a) => a,
            None => loop {
                self.world.deployed += 1;
                let a = Address::derive(&format!("smacs-contract:{}", self.world.deployed));
                if !self.world.contracts.contains_key(&a) && !self.world.accounts.contains_key(&a) {
                    break a;
                }
            },
        };
        if self.world.contracts.contains_key(&address) {
            return Err(SimError::AddressInUse(address));
        }
        let mut storage = Storage::default();
        dep.code.init(&mut storage, &dep.params).map_err(SimError::Init)?;
        let methods = dep.code.methods().into_iter().map(|d| (d.selector(), d)).collect();
        self.world.contracts.insert(
            address,
            ContractInstance { address, code: dep.code, methods: Arc::new(methods), storage, guard: dep.guard },
        );
        self.create_account(address, dep.balance);
        Ok(address)
    }

    /// Replaces a contract's guard, e.g. to attach one after deployment.
    pub fn set_guard(&mut self, address: &Address, guard: Option<Guard>) -> Result<(), TxError> {
        let c = self.world.contracts.get_mut(address).ok_or(TxError::UnknownContract(*address))?;
        c.guard = guard;
        Ok(())
    }

    pub fn submit_transaction(&mut self, tx: &Transaction) -> Result<Receipt, TxError> {
        match crypto::recover(&tx.signing_bytes(), &tx.signature) {
            Some(pk) if pk.address() == tx.origin => {}
            _ => return Err(TxError::BadSignature),
        }
        let expected = self.account(&tx.origin).nonce;
        if tx.nonce < expected {
            return Err(TxError::NonceUsed { expected, got: tx.nonce });
        }
        if tx.nonce > expected {
            return Err(TxError::NonceGap { expected, got: tx.nonce });
        }
        if !self.world.contracts.contains_key(&tx.target) {
            return Err(TxError::UnknownContract(tx.target));
        }
        self.world.accounts.entry(tx.origin).or_default().nonce += 1;
        self.world.height += 1;

        let snapshot = self.world.clone();
        let mut exec = Exec::new(std::mem::take(&mut self.world), self.limits, tx.origin, tx.token_array.clone(), true);
        let result = exec.message_call(tx.origin, tx.target, tx.method, tx.calldata.clone(), tx.value, 0);
        let Exec { world, meter, trace, .. } = exec;
        let (status, return_value, detail) = match result {
            Ok(rv) => {
                self.world = world;
                (TxStatus::Ok, rv, None)
            }
            Err(trap) => {
                self.world = snapshot;
                (TxStatus::Reverted(trap.reason.clone()), Vec::new(), Some(trap.to_string()))
            }
        };
        Ok(Receipt { status, return_value, trace, cost: meter, detail })
    }

    /// Runs a call on a private copy with guards disabled.
    pub fn simulate(&self, call: &SimulatedCall) -> CallReport {
        let mut copy = self.clone();
        let mut exec = Exec::new(std::mem::take(&mut copy.world), self.limits, call.caller, Vec::new(), false);
        let result = exec.message_call(
            call.caller,
            call.contract,
            Some(call.method),
            encode_args(&call.args),
            call.value,
            0,
        );
        let Exec { world, trace, transfers, .. } = exec;
        copy.world = world;
        CallReport { result, trace, transfers, post: copy }
    }

    pub fn dump(&self) -> StateDump {
        dump::dump(self)
    }

    pub fn from_dump(d: &StateDump) -> Result<Self, SimError> {
        dump::load(d)
    }

    /// Digest over the full state dump; equal digests mean equal states.
    pub fn state_digest(&self) -> [u8; 32] {
        keccak256(&serde_json::to_vec(&self.dump()).expect("dump serializes"))
    }
}

/// Execution of one transaction or simulated call over a detached world.
struct Exec {
    world: World,
    limits: Limits,
    origin: Address,
    token_array: Vec<u8>,
    enforce_guards: bool,
    meter: CostMeter,
    trace: Vec<TraceFrame>,
    transfers: Vec<Transfer>,
    steps: u64,
}

impl Exec {
    fn new(world: World, limits: Limits, origin: Address, token_array: Vec<u8>, enforce_guards: bool) -> Self {
        Exec {
            world,
            limits,
            origin,
            token_array,
            enforce_guards,
            meter: CostMeter::default(),
            trace: Vec::new(),
            transfers: Vec::new(),
            steps: 0,
        }
    }

    fn step(&mut self, n: u64) -> Result<(), Trap> {
        self.steps += n;
        if self.steps > self.limits.max_steps {
            return Err(Trap::new(format!("step limit {} exceeded", self.limits.max_steps)));
        }
        Ok(())
    }

    fn move_value(&mut self, from: Address, to: Address, amount: u128) -> Result<(), Trap> {
        if amount == 0 {
            return Ok(());
        }
        let src = self.world.accounts.entry(from).or_default();
        if src.balance < amount {
            return Err(Trap::new(format!("insufficient balance in {from}")));
        }
        src.balance -= amount;
        self.world.accounts.entry(to).or_default().balance += amount;
        self.transfers.push(Transfer { from, to, amount });
        Ok(())
    }

    fn message_call(
        &mut self,
        caller: Address,
        target: Address,
        selector: Option<MethodId>,
        data: Vec<u8>,
        value: u128,
        depth: u32,
    ) -> Result<Vec<u8>, Trap> {
        if depth > self.limits.max_depth {
            return Err(Trap::new(format!("call depth limit {} exceeded", self.limits.max_depth)));
        }
        self.step(1)?;
        self.move_value(caller, target, value)?;
        let Some(inst) = self.world.contracts.get(&target) else {
            return Ok(Vec::new());
        };
        let code = Arc::clone(&inst.code);
        let (method, visibility) = match selector {
            None => ("fallback", Visibility::External),
            Some(sel) => match inst.methods.get(&sel) {
                Some(def) => (def.name, def.visibility),
                None => return Err(Trap::new(format!("unknown method {sel}")).at(format!("{target}"))),
            },
        };
        let site = format!("{}.{method}", code.kind());
        if !visibility.is_entry() {
            return Err(Trap::new("method is not externally callable").at(site));
        }
        self.trace.push(TraceFrame { depth, contract: target, method: method.to_owned(), msg_sender: caller });

        if self.enforce_guards {
            let ctx = TxContext { origin: self.origin, msg_sender: caller, msg_sig: selector, msg_data: data.clone(), depth };
            let now = self.world.clock;
            let inst = self.world.contracts.get_mut(&target).expect("contract present");
            if let Some(guard) = inst.guard.as_mut() {
                let outcome = verify_token_onchain(&ctx, &target, guard, &self.token_array, now, &mut self.meter);
                if !outcome.passed() {
                    return Err(Trap::new("token").at(format!("{site} ({})", outcome.as_str())));
                }
            }
        }

        let args = if selector.is_some() {
            decode_args(&data).map_err(|e| Trap::new(e.to_string()).at(site.clone()))?
        } else {
            Vec::new()
        };
        let mut env = Env { exec: self, this: target, msg_sender: caller, msg_sig: selector, msg_data: data, value, depth, code: Arc::clone(&code) };
        let out = if selector.is_some() { code.execute(&mut env, method, &args) } else { code.fallback(&mut env) };
        out.map_err(|t| t.at(site))
    }
}

/// Execution environment handed to contract code for one frame.
pub struct Env<'a> {
    exec: &'a mut Exec,
    this: Address,
    msg_sender: Address,
    msg_sig: Option<MethodId>,
    msg_data: Vec<u8>,
    value: u128,
    depth: u32,
    code: Arc<dyn ContractCode>,
}

impl Env<'_> {
    pub fn this(&self) -> Address {
        self.this
    }

    pub fn msg_sender(&self) -> Address {
        self.msg_sender
    }

    pub fn origin(&self) -> Address {
        self.exec.origin
    }

    pub fn msg_value(&self) -> u128 {
        self.value
    }

    pub fn msg_sig(&self) -> Option<MethodId> {
        self.msg_sig
    }

    pub fn msg_data(&self) -> &[u8] {
        &self.msg_data
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn now(&self) -> u32 {
        self.exec.world.clock
    }

    pub fn step(&mut self, n: u64) -> Result<(), Trap> {
        self.exec.step(n)
    }

    pub fn storage(&self) -> &Storage {
        &self.exec.world.contracts[&self.this].storage
    }

    pub fn load_u128(&mut self, key: &str) -> Result<u128, Trap> {
        self.step(1)?;
        Ok(self.storage().get_u128(key))
    }

    pub fn load_bool(&mut self, key: &str) -> Result<bool, Trap> {
        self.step(1)?;
        Ok(self.storage().get_bool(key))
    }

    pub fn load_address(&mut self, key: &str) -> Result<Option<Address>, Trap> {
        self.step(1)?;
        Ok(self.storage().get_address(key))
    }

    pub fn store(&mut self, key: &str, value: Vec<u8>) -> Result<(), Trap> {
        self.step(1)?;
        self.exec.meter.storage_writes += 1;
        self.exec.world.contracts.get_mut(&self.this).expect("frame contract").storage.set(key, value);
        Ok(())
    }

    pub fn store_u128(&mut self, key: &str, v: u128) -> Result<(), Trap> {
        self.store(key, v.to_be_bytes().to_vec())
    }

    pub fn store_bool(&mut self, key: &str, v: bool) -> Result<(), Trap> {
        self.store(key, vec![v as u8])
    }

    pub fn balance_of(&self, addr: &Address) -> u128 {
        self.exec.world.accounts.get(addr).map(|a| a.balance).unwrap_or(0)
    }

    /// Message call to `method` (by name) on `target`, forwarding the
    /// transaction's token array.
    pub fn call(&mut self, target: Address, method: &str, args: &[ArgPair], value: u128) -> Result<Vec<u8>, Trap> {
        let selector = self
            .exec
            .world
            .contracts
            .get(&target)
            .and_then(|c| c.method_by_name(method))
            .map(|(sel, _)| sel)
            .ok_or_else(|| Trap::new(format!("no method `{method}` at {target}")))?;
        self.exec.message_call(self.this, target, Some(selector), encode_args(args), value, self.depth + 1)
    }

    /// Plain value transfer; runs the receiver's fallback if it is a contract.
    pub fn send(&mut self, target: Address, value: u128) -> Result<Vec<u8>, Trap> {
        self.exec.message_call(self.this, target, None, Vec::new(), value, self.depth + 1)
    }

    /// Call into this contract's own method without a message call; no guard
    /// runs and any visibility is allowed.
    pub fn call_internal(&mut self, method: &str, args: &[ArgPair]) -> Result<Vec<u8>, Trap> {
        self.step(1)?;
        let code = Arc::clone(&self.code);
        code.execute(self, method, args)
    }
}
