use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bitmap::{BitmapDump, BitmapState};
use crate::crypto::VerifyingKey;
use crate::token::Address;

use super::contract::Storage;
use super::{fixtures, ContractInstance, Guard, Limits, SimError, Simulator, World};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountDump {
    pub address: Address,
    pub balance: u128,
    pub nonce: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardDump {
    pub scheme: String,
    pub key: String,
    pub bitmap: BitmapDump,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractDump {
    pub address: Address,
    pub kind: String,
    /// Storage values as hex.
    pub storage: BTreeMap<String, String>,
    pub guard: Option<GuardDump>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StateDump {
    pub accounts: Vec<AccountDump>,
    pub contracts: Vec<ContractDump>,
    pub height: u64,
    pub clock: u32,
    #[serde(default)]
    pub deployed: u64,
    #[serde(default)]
    pub limits: Option<Limits>,
}

pub(super) fn dump(sim: &Simulator) -> StateDump {
    let w = &sim.world;
    StateDump {
        accounts: w
            .accounts
            .iter()
            .map(|(a, acc)| AccountDump { address: *a, balance: acc.balance, nonce: acc.nonce })
            .collect(),
        contracts: w
            .contracts
            .values()
            .map(|c| ContractDump {
                address: c.address,
                kind: c.kind().to_owned(),
                storage: c.storage.0.iter().map(|(k, v)| (k.clone(), hex::encode(v))).collect(),
                guard: c.guard.as_ref().map(|g| GuardDump {
                    scheme: g.verifier.scheme().to_owned(),
                    key: g.verifier.to_hex(),
                    bitmap: g.bitmap.dump(),
                }),
            })
            .collect(),
        height: w.height,
        clock: w.clock,
        deployed: w.deployed,
        limits: Some(sim.limits),
    }
}

pub(super) fn load(d: &StateDump) -> Result<Simulator, SimError> {
    let mut world = World { height: d.height, clock: d.clock, deployed: d.deployed, ..World::default() };
    for a in &d.accounts {
        world.accounts.insert(a.address, super::Account { balance: a.balance, nonce: a.nonce });
    }
    for c in &d.contracts {
        let code = fixtures::code_for(&c.kind).ok_or_else(|| SimError::UnknownKind(c.kind.clone()))?;
        let storage = c
            .storage
            .iter()
            .map(|(k, v)| hex::decode(v).map(|v| (k.clone(), v)))
            .collect::<Result<BTreeMap<_, _>, _>>()
            .map_err(|e| SimError::BadDump(format!("storage of {}: {e}", c.address)))?;
        let guard = match &c.guard {
            None => None,
            Some(g) => {
                if g.scheme != VerifyingKey::SCHEME {
                    return Err(SimError::BadDump(format!("unsupported signature scheme `{}`", g.scheme)));
                }
                let key = VerifyingKey::from_hex(&g.key).map_err(|e| SimError::BadDump(e.to_string()))?;
                let bitmap = BitmapState::from_dump(&g.bitmap).map_err(|e| SimError::BadDump(e.to_string()))?;
                Some(Guard { verifier: Arc::new(key), bitmap })
            }
        };
        let methods = code.methods().into_iter().map(|m| (m.selector(), m)).collect();
        world.contracts.insert(
            c.address,
            ContractInstance { address: c.address, code, methods: Arc::new(methods), storage: Storage(storage), guard },
        );
    }
    Ok(Simulator { world, limits: d.limits.unwrap_or(Limits::DEFAULT) })
}
