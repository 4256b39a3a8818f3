use std::sync::Arc;

use smacs_core::client::{send_with_tokens, TxCall};
use smacs_core::crypto::{KeyPair, Signer};
use smacs_core::sim::fixtures::{self, recorded_balance, relay_chain};
use smacs_core::sim::{Deployment, Guard, Limits, Simulator, StateDump, Transaction, TxError, TxStatus};
use smacs_core::token::{
    encode_req_payload, signing_payload, Address, ArgPair, MethodId, Token, TokenRequest, NO_INDEX,
};

const NOW: u32 = 10_000;

/// Mints tokens straight from a key, bypassing the rule engine.
struct Minter {
    key: KeyPair,
    next: i128,
}

impl Minter {
    fn new() -> Self {
        Minter { key: KeyPair::from_seed(b"sim/ts"), next: 1 }
    }

    fn guard(&self, bits: u64) -> Guard {
        Guard::new(self.key.verifier(), bits)
    }

    fn mint(&mut self, req: &TokenRequest, expire: u32, one_time: bool) -> Token {
        let index = if one_time {
            self.next += 1;
            self.next - 1
        } else {
            NO_INDEX
        };
        let payload = signing_payload(req.token_type, expire, index, &encode_req_payload(req).unwrap());
        Token { token_type: req.token_type, expire, index, signature: self.key.sign(&payload) }
    }
}

fn relay() -> MethodId {
    MethodId::from_signature("relay(uint256)")
}

fn chain(depth: usize, m: &Minter) -> (Simulator, KeyPair, Vec<Address>) {
    let alice = KeyPair::from_seed(b"sim/alice");
    let mut sim = Simulator::new();
    sim.set_time(NOW).unwrap();
    sim.create_account(alice.address(), 100);
    let relays = relay_chain(&mut sim, depth, || Some(m.guard(16))).unwrap();
    (sim, alice, relays)
}

fn hits(sim: &Simulator, c: &Address) -> u128 {
    sim.contract(c).unwrap().storage.get_u128("hits")
}

#[test]
fn failed_link_rolls_back_whole_chain_and_bitmap_marks() {
    let mut m = Minter::new();
    let (mut sim, alice, relays) = chain(3, &m);
    let args = vec![ArgPair::new("n", "1")];
    let tokens: Vec<(Address, Token)> = relays
        .iter()
        .map(|c| (*c, m.mint(&TokenRequest::argument_token(*c, alice.address(), relay(), args.clone()), NOW + 60, true)))
        .collect();
    let call = TxCall { target: relays[0], method: Some(relay()), args: args.clone(), value: 0 };
    let before = sim.state_digest();
    let r = send_with_tokens(&mut sim, &alice, &tokens[..2], &call).unwrap();
    assert!(matches!(r.status, TxStatus::Reverted(_)));
    assert_eq!(r.cost.sig_verifies, 2);
    assert!(relays.iter().all(|c| hits(&sim, c) == 0));
    for c in &relays {
        assert_eq!(sim.contract(c).unwrap().guard.as_ref().unwrap().bitmap.cells().count_ones(), 0);
    }
    assert_ne!(sim.state_digest(), before, "nonce still advances");
    assert_eq!(sim.account(&alice.address()).nonce, 1);

    // The same one-time tokens are still good once the chain is complete.
    let r = send_with_tokens(&mut sim, &alice, &tokens, &call).unwrap();
    assert!(r.is_ok(), "{r:?}");
    assert!(relays.iter().all(|c| hits(&sim, c) == 1));
    let r = send_with_tokens(&mut sim, &alice, &tokens, &call).unwrap();
    assert!(r.detail.unwrap().contains("already used"));
}

#[test]
fn token_for_one_contract_does_not_open_another() {
    let mut m = Minter::new();
    let (mut sim, alice, relays) = chain(2, &m);
    let t = m.mint(&TokenRequest::super_token(relays[0], alice.address()), NOW + 60, false);
    // Filed under the second relay's address but signed for the first.
    let tokens = [(relays[0], t), (relays[1], t)];
    let r = send_with_tokens(&mut sim, &alice, &tokens, &TxCall { target: relays[0], method: Some(relay()), args: vec![], value: 0 }).unwrap();
    assert!(r.detail.unwrap().contains("bad signature"));
}

#[test]
fn expiry_is_checked_against_chain_time() {
    let mut m = Minter::new();
    let (mut sim, alice, relays) = chain(1, &m);
    let t = m.mint(&TokenRequest::method_token(relays[0], alice.address(), relay()), NOW + 5, false);
    let call = TxCall { target: relays[0], method: Some(relay()), args: vec![], value: 0 };
    assert!(send_with_tokens(&mut sim, &alice, &[(relays[0], t)], &call).unwrap().is_ok());
    sim.set_time(NOW + 5).unwrap();
    assert!(send_with_tokens(&mut sim, &alice, &[(relays[0], t)], &call).unwrap().is_ok());
    sim.set_time(NOW + 6).unwrap();
    let r = send_with_tokens(&mut sim, &alice, &[(relays[0], t)], &call).unwrap();
    assert!(r.detail.unwrap().contains("expired"));
    assert!(sim.set_time(NOW).is_err());
}

#[test]
fn transaction_admission_errors() {
    let m = Minter::new();
    let (mut sim, alice, relays) = chain(1, &m);
    let tx = |nonce| Transaction::signed(&alice, nonce, relays[0], Some(relay()), &[], 0, vec![0, 0]);
    assert!(matches!(sim.submit_transaction(&tx(3)), Err(TxError::NonceGap { expected: 0, got: 3 })));

    let mut forged = tx(0);
    forged.calldata = vec![1, 2, 3];
    assert_eq!(sim.submit_transaction(&forged), Err(TxError::BadSignature));
    let mut stolen = tx(0);
    stolen.origin = Address::derive("sim/mallory");
    assert_eq!(sim.submit_transaction(&stolen), Err(TxError::BadSignature));

    let nowhere = Transaction::signed(&alice, 0, Address::derive("sim/nowhere"), None, &[], 0, vec![]);
    assert!(matches!(sim.submit_transaction(&nowhere), Err(TxError::UnknownContract(_))));
    // Rejected transactions leave the nonce alone.
    assert_eq!(sim.account(&alice.address()).nonce, 0);

    let wire = tx(0).to_bytes();
    assert_eq!(Transaction::from_bytes(&wire).unwrap(), tx(0));
    let mut long = wire.clone();
    long.push(0);
    assert!(Transaction::from_bytes(&long).is_err());
    assert!(Transaction::from_bytes(&wire[..wire.len() - 1]).is_err());
}

#[test]
fn depth_limit_reverts() {
    let alice = KeyPair::from_seed(b"sim/alice");
    let mut sim = Simulator::with_limits(Limits { max_depth: 3, ..Limits::DEFAULT });
    sim.create_account(alice.address(), 1);
    let relays = relay_chain(&mut sim, 5, || None).unwrap();
    let call = TxCall { target: relays[0], method: Some(relay()), args: vec![], value: 0 };
    let r = send_with_tokens(&mut sim, &alice, &[], &call).unwrap();
    assert!(matches!(r.status, TxStatus::Reverted(_)), "{r:?}");
    assert!(relays.iter().all(|c| hits(&sim, c) == 0));

    let relays = relay_chain(&mut sim, 3, || None).unwrap();
    let call = TxCall { target: relays[0], method: Some(relay()), args: vec![], value: 0 };
    assert!(send_with_tokens(&mut sim, &alice, &[], &call).unwrap().is_ok());
}

#[test]
fn unguarded_bank_is_drained_by_reentry() {
    let alice = KeyPair::from_seed(b"sim/alice");
    let mallory = KeyPair::from_seed(b"sim/mallory");
    let mut sim = Simulator::new();
    sim.create_account(alice.address(), 100);
    sim.create_account(mallory.address(), 1);
    let fx = fixtures::bank_attacker_fixture(&mut sim, None, true).unwrap();
    sim.create_account(fx.attacker, 2);
    let total = sim.total_balance();
    for (key, call) in [
        (&alice, TxCall::new(fx.bank, "addBalance()", vec![]).value(40)),
        (&mallory, TxCall::new(fx.attacker, "deposit()", vec![])),
        (&mallory, TxCall::new(fx.attacker, "withdraw()", vec![])),
    ] {
        assert!(send_with_tokens(&mut sim, key, &[], &call).unwrap().is_ok());
    }
    assert_eq!(sim.balance(&fx.attacker), 4);
    assert_eq!(sim.balance(&fx.bank), 38);
    // The bank still owes alice 40 but holds less.
    assert_eq!(recorded_balance(&sim, &fx.bank, &alice.address()), 40);
    assert_eq!(sim.total_balance(), total);
}

#[test]
fn state_dump_round_trip_preserves_behaviour() {
    let mut m = Minter::new();
    let (mut sim, alice, relays) = chain(2, &m);
    let echo = sim.register_contract(Deployment::new(Arc::new(fixtures::Echo)).guarded(m.guard(8))).unwrap();
    let args = vec![ArgPair::new("n", "4")];
    let call = TxCall { target: relays[0], method: Some(relay()), args: args.clone(), value: 0 };
    for _ in 0..3 {
        let tokens: Vec<_> = relays
            .iter()
            .map(|c| (*c, m.mint(&TokenRequest::argument_token(*c, alice.address(), relay(), args.clone()), NOW + 60, true)))
            .collect();
        assert!(send_with_tokens(&mut sim, &alice, &tokens, &call).unwrap().is_ok());
    }

    let text = serde_json::to_string_pretty(&sim.dump()).unwrap();
    let dump: StateDump = serde_json::from_str(&text).unwrap();
    let mut copy = Simulator::from_dump(&dump).unwrap();
    assert_eq!(copy.state_digest(), sim.state_digest());
    assert_eq!(copy.dump(), sim.dump());

    let stale: Vec<_> = relays
        .iter()
        .map(|c| (*c, m.mint(&TokenRequest::argument_token(*c, alice.address(), relay(), args.clone()), NOW + 60, true)))
        .collect();
    let echo_token = m.mint(&TokenRequest::super_token(echo, alice.address()), NOW + 60, false);
    let echo_call = TxCall::new(echo, "echo(bytes)", vec![ArgPair::new("data", "x")]);
    for s in [&mut sim, &mut copy] {
        let a = send_with_tokens(s, &alice, &stale, &call).unwrap();
        let b = send_with_tokens(s, &alice, &stale, &call).unwrap();
        let c = send_with_tokens(s, &alice, &[(echo, echo_token)], &echo_call).unwrap();
        assert!(a.is_ok() && !b.is_ok() && c.is_ok());
    }
    assert_eq!(copy.state_digest(), sim.state_digest());
}
