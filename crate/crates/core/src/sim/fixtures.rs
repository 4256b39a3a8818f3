//! Contract fixtures: an echo contract, the re-entrancy `Bank`/`Attacker`
//! pair, N-version heads, and a relay used to build call chains.

use std::sync::Arc;

use crate::token::{Address, ArgPair};

use super::contract::{arg, arg_u128, ContractCode, MethodDef, Storage, Trap, Visibility};
use super::{Deployment, Env, Guard, SimError, Simulator};

use Visibility::Public;

fn balance_key(who: &Address) -> String {
    format!("balance:{who}")
}

/// Returns its calldata.
pub struct Echo;

impl ContractCode for Echo {
    fn kind(&self) -> &'static str {
        "echo"
    }

    fn methods(&self) -> Vec<MethodDef> {
        vec![MethodDef::new("echo", "echo(bytes)", Visibility::External)]
    }

    fn execute(&self, env: &mut Env<'_>, _method: &str, _args: &[ArgPair]) -> Result<Vec<u8>, Trap> {
        Ok(env.msg_data().to_vec())
    }
}

/// Deposit bank whose `withdraw` pays out before zeroing the balance.
pub struct Bank;

impl ContractCode for Bank {
    fn kind(&self) -> &'static str {
        "bank"
    }

    fn methods(&self) -> Vec<MethodDef> {
        vec![
            MethodDef::new("addBalance", "addBalance()", Public),
            MethodDef::new("withdraw", "withdraw()", Public),
        ]
    }

    fn execute(&self, env: &mut Env<'_>, method: &str, _args: &[ArgPair]) -> Result<Vec<u8>, Trap> {
        let key = balance_key(&env.msg_sender());
        match method {
            "addBalance" => {
                let current = env.load_u128(&key)?;
                env.store_u128(&key, current + env.msg_value())?;
                Ok(Vec::new())
            }
            "withdraw" => {
                let amount = env.load_u128(&key)?;
                env.send(env.msg_sender(), amount)?;
                env.store_u128(&key, 0)?;
                Ok(Vec::new())
            }
            other => Err(Trap::new(format!("bank has no method {other}"))),
        }
    }
}

/// Exploits [`Bank`] through its fallback when `isAttack` is set.
pub struct Attacker;

impl ContractCode for Attacker {
    fn kind(&self) -> &'static str {
        "attacker"
    }

    fn methods(&self) -> Vec<MethodDef> {
        vec![
            MethodDef::new("deposit", "deposit()", Public),
            MethodDef::new("withdraw", "withdraw()", Public),
        ]
    }

    fn init(&self, storage: &mut Storage, params: &[ArgPair]) -> Result<(), Trap> {
        let bank: Address = arg(params, "bank")?.parse().map_err(|e| Trap::new(format!("bank: {e}")))?;
        let is_attack = arg(params, "isAttack")? == "true";
        storage.set("bank", bank.0.to_vec());
        storage.set_bool("isAttack", is_attack);
        Ok(())
    }

    fn execute(&self, env: &mut Env<'_>, method: &str, _args: &[ArgPair]) -> Result<Vec<u8>, Trap> {
        let bank = env.load_address("bank")?.ok_or_else(|| Trap::new("attacker has no bank"))?;
        match method {
            "deposit" => env.call(bank, "addBalance", &[], 2),
            "withdraw" => env.call(bank, "withdraw", &[], 0),
            other => Err(Trap::new(format!("attacker has no method {other}"))),
        }
    }

    fn fallback(&self, env: &mut Env<'_>) -> Result<Vec<u8>, Trap> {
        if env.load_bool("isAttack")? {
            env.store_bool("isAttack", false)?;
            let bank = env.load_address("bank")?.ok_or_else(|| Trap::new("attacker has no bank"))?;
            env.call(bank, "withdraw", &[], 0)?;
        }
        Ok(Vec::new())
    }
}

/// Counter head: `count += amount`.
pub struct Counter;

impl ContractCode for Counter {
    fn kind(&self) -> &'static str {
        "counter"
    }

    fn methods(&self) -> Vec<MethodDef> {
        vec![MethodDef::new("increment", "increment(uint256)", Public)]
    }

    fn execute(&self, env: &mut Env<'_>, _method: &str, args: &[ArgPair]) -> Result<Vec<u8>, Trap> {
        let amount = arg_u128(args, "amount")?;
        let next = env.load_u128("count")? + amount;
        env.store_u128("count", next)?;
        Ok(next.to_be_bytes().to_vec())
    }
}

/// Independent counter head that adds one at a time.
pub struct CounterLoop;

impl ContractCode for CounterLoop {
    fn kind(&self) -> &'static str {
        "counter-loop"
    }

    fn methods(&self) -> Vec<MethodDef> {
        Counter.methods()
    }

    fn execute(&self, env: &mut Env<'_>, _method: &str, args: &[ArgPair]) -> Result<Vec<u8>, Trap> {
        let amount = arg_u128(args, "amount")?;
        let mut count = env.load_u128("count")?;
        for _ in 0..amount {
            env.step(1)?;
            count += 1;
        }
        env.store_u128("count", count)?;
        Ok(count.to_be_bytes().to_vec())
    }
}

/// Ledger head: `balance[msg.sender] += amount`. The `off_by_one` variant
/// adds one extra unit.
pub struct Ledger {
    pub off_by_one: bool,
}

impl ContractCode for Ledger {
    fn kind(&self) -> &'static str {
        if self.off_by_one {
            "ledger-offbyone"
        } else {
            "ledger"
        }
    }

    fn methods(&self) -> Vec<MethodDef> {
        vec![MethodDef::new("deposit", "deposit(uint256)", Public)]
    }

    fn execute(&self, env: &mut Env<'_>, _method: &str, args: &[ArgPair]) -> Result<Vec<u8>, Trap> {
        let amount = arg_u128(args, "amount")?;
        let key = balance_key(&env.msg_sender());
        let next = env.load_u128(&key)? + amount + u128::from(self.off_by_one);
        env.store_u128(&key, next)?;
        Ok(next.to_be_bytes().to_vec())
    }
}

/// Counts hits and forwards the same call to `next`, if set.
pub struct Relay;

impl ContractCode for Relay {
    fn kind(&self) -> &'static str {
        "relay"
    }

    fn methods(&self) -> Vec<MethodDef> {
        vec![
            MethodDef::new("relay", "relay(uint256)", Public),
            MethodDef::new("bump", "bump()", Visibility::Internal),
        ]
    }

    fn init(&self, storage: &mut Storage, params: &[ArgPair]) -> Result<(), Trap> {
        if let Ok(next) = arg(params, "next") {
            let next: Address = next.parse().map_err(|e| Trap::new(format!("next: {e}")))?;
            storage.set("next", next.0.to_vec());
        }
        Ok(())
    }

    fn execute(&self, env: &mut Env<'_>, method: &str, args: &[ArgPair]) -> Result<Vec<u8>, Trap> {
        match method {
            "bump" => {
                let hits = env.load_u128("hits")? + 1;
                env.store_u128("hits", hits)?;
                Ok(hits.to_be_bytes().to_vec())
            }
            "relay" => {
                let out = env.call_internal("bump", &[])?;
                if let Some(next) = env.load_address("next")? {
                    env.call(next, "relay", args, 0)?;
                }
                Ok(out)
            }
            other => Err(Trap::new(format!("relay has no method {other}"))),
        }
    }
}

/// Code for a fixture kind, used when restoring state dumps.
pub fn code_for(kind: &str) -> Option<Arc<dyn ContractCode>> {
    let code: Arc<dyn ContractCode> = match kind {
        "echo" => Arc::new(Echo),
        "bank" => Arc::new(Bank),
        "attacker" => Arc::new(Attacker),
        "counter" => Arc::new(Counter),
        "counter-loop" => Arc::new(CounterLoop),
        "ledger" => Arc::new(Ledger { off_by_one: false }),
        "ledger-offbyone" => Arc::new(Ledger { off_by_one: true }),
        "relay" => Arc::new(Relay),
        _ => return None,
    };
    Some(code)
}

pub const KINDS: [&str; 8] = ["echo", "bank", "attacker", "counter", "counter-loop", "ledger", "ledger-offbyone", "relay"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BankAttacker {
    pub bank: Address,
    pub attacker: Address,
}

/// Registers `Bank` (optionally guarded) and an `Attacker` aimed at it.
pub fn bank_attacker_fixture(sim: &mut Simulator, bank_guard: Option<Guard>, is_attack: bool) -> Result<BankAttacker, SimError> {
    let mut dep = Deployment::new(Arc::new(Bank));
    dep.guard = bank_guard;
    let bank = sim.register_contract(dep)?;
    let attacker = sim.register_contract(Deployment::new(Arc::new(Attacker)).params(vec![
        ArgPair::new("bank", bank.to_string()),
        ArgPair::new("isAttack", is_attack.to_string()),
    ]))?;
    Ok(BankAttacker { bank, attacker })
}

/// Registers `depth` relays linked head to tail and returns their
/// addresses in call order.
pub fn relay_chain(sim: &mut Simulator, depth: usize, guard: impl Fn() -> Option<Guard>) -> Result<Vec<Address>, SimError> {
    let mut chain = Vec::with_capacity(depth);
    let mut next: Option<Address> = None;
    for _ in 0..depth {
        let params = next.map(|n| vec![ArgPair::new("next", n.to_string())]).unwrap_or_default();
        let mut dep = Deployment::new(Arc::new(Relay)).params(params);
        dep.guard = guard();
        let addr = sim.register_contract(dep)?;
        chain.push(addr);
        next = Some(addr);
    }
    chain.reverse();
    Ok(chain)
}

/// Reads `balance[who]` from a `Bank` or `Ledger` contract's storage.
pub fn recorded_balance(sim: &Simulator, contract: &Address, who: &Address) -> u128 {
    sim.contract(contract).map(|c| c.storage.get_u128(&balance_key(who))).unwrap_or(0)
}
