use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion, Throughput};
use smacs_core::client::{send_with_tokens, TxCall};
use smacs_core::crypto::Signer;
use smacs_core::service::RequestEnvelope;
use smacs_core::sim::fixtures::relay_chain;
use smacs_core::sim::{Guard, Simulator};
use smacs_core::throughput::{Fixture, Workload};
use smacs_core::token::{encode_req_payload, signing_payload, Token, TokenRequest, NO_INDEX};
use smacs_core::{BitmapState, KeyPair, MethodId};

fn issuance(c: &mut Criterion) {
    let fx = Fixture::in_memory();
    let mut g = c.benchmark_group("issue");
    for w in [Workload::Super, Workload::Method, Workload::Argument, Workload::ArgumentOneTime] {
        let mut i = 0;
        g.bench_function(w.name(), |b| {
            b.iter(|| {
                i += 1;
                fx.service.issue(&fx.request(w, i)).unwrap()
            })
        });
    }
    for batch in [10usize, 100] {
        let envs: Vec<RequestEnvelope> = fx.envelopes(Workload::Argument, batch);
        g.throughput(Throughput::Elements(batch as u64));
        g.bench_with_input(BenchmarkId::new("batch", batch), &envs, |b, envs| b.iter(|| fx.service.issue_batch(envs)));
    }
    g.finish();
}

fn codec(c: &mut Criterion) {
    let fx = Fixture::in_memory();
    let token = fx.service.issue(&fx.request(Workload::ArgumentOneTime, 0)).unwrap().token;
    let bytes = token.encode();
    c.bench_function("token/encode", |b| b.iter(|| black_box(&token).encode()));
    c.bench_function("token/decode", |b| b.iter(|| Token::decode(black_box(&bytes)).unwrap()));
}

fn bitmap(c: &mut Criterion) {
    let mut g = c.benchmark_group("bitmap");
    for n in [64u64, 1024, 126_000] {
        g.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            let mut bm = BitmapState::new(n).unwrap();
            let mut i = 0;
            b.iter(|| {
                i += 1;
                bm.check_and_mark(i)
            })
        });
        // Indexes arrive out of order within a window of n.
        g.bench_with_input(BenchmarkId::new("shuffled", n), &n, |b, &n| {
            let mut bm = BitmapState::new(n).unwrap();
            let mut i = 0u64;
            b.iter(|| {
                i += 1;
                let j = i - i % 8 + (i * 5) % 8;
                bm.check_and_mark(j.saturating_sub(n / 2))
            })
        });
    }
    g.finish();
}

fn call_chain(c: &mut Criterion) {
    let ts = KeyPair::from_seed(b"bench/ts");
    let alice = KeyPair::from_seed(b"bench/alice");
    let relay = MethodId::from_signature("relay(uint256)");
    let mut g = c.benchmark_group("call_chain");
    for depth in [1usize, 2, 4] {
        let mut sim = Simulator::new();
        sim.set_time(1_000).unwrap();
        sim.create_account(alice.address(), 1);
        let relays = relay_chain(&mut sim, depth, || Some(Guard::new(ts.verifier(), 64))).unwrap();
        let tokens: Vec<_> = relays
            .iter()
            .map(|c| {
                let req = TokenRequest::method_token(*c, alice.address(), relay);
                let payload = signing_payload(req.token_type, u32::MAX, NO_INDEX, &encode_req_payload(&req).unwrap());
                (*c, Token { token_type: req.token_type, expire: u32::MAX, index: NO_INDEX, signature: ts.sign(&payload) })
            })
            .collect();
        let call = TxCall { target: relays[0], method: Some(relay), args: vec![], value: 0 };
        g.bench_function(BenchmarkId::from_parameter(depth), |b| {
            b.iter_batched(
                || sim.clone(),
                |mut s| {
                    let r = send_with_tokens(&mut s, &alice, &tokens, &call).unwrap();
                    assert!(r.is_ok());
                    r
                },
                BatchSize::SmallInput,
            )
        });
    }
    g.finish();
}

criterion_group!(benches, issuance, codec, bitmap, call_chain);
criterion_main!(benches);
