//! Token issuance throughput. For each batch size the harness sends
//! envelopes of `batch` requests to a fresh service and reports requests
//! per second. A batch of one goes through `POST /v1/token`, larger batches
//! through `POST /v1/tokens`.
//!
//! Only the service is measured; chain-side cost is reported by the
//! simulator's cost meter.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{header, Method, Request};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tower::ServiceExt;

use crate::crypto::KeyPair;
use crate::rules::load_rules;
use crate::service::http::{router, BatchItem};
use crate::service::{ContractPolicy, CounterStore, FileCounter, IssueResponse, MemoryCounter, OneTimePolicy, RequestEnvelope, TokenService};
use crate::token::{Address, ArgPair, MethodId, TokenRequest};

/// Batch sizes 10^0 through 10^5.
pub const DEFAULT_BATCHES: [usize; 6] = [1, 10, 100, 1_000, 10_000, 100_000];

const SENDERS: usize = 16;
const TRANSFER: &str = "transfer(address,uint256)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Workload {
    Super,
    Method,
    Argument,
    ArgumentOneTime,
}

impl Workload {
    pub const ALL: [Workload; 4] = [Workload::Super, Workload::Method, Workload::Argument, Workload::ArgumentOneTime];

    pub fn name(self) -> &'static str {
        match self {
            Workload::Super => "super",
            Workload::Method => "method",
            Workload::Argument => "argument",
            Workload::ArgumentOneTime => "argument-onetime",
        }
    }
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Workload {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Workload::ALL.into_iter().find(|w| w.name() == s).ok_or_else(|| format!("unknown workload `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    /// Calls the service API directly, without JSON or HTTP.
    Direct,
    /// Full HTTP request/response handling through the router, in process.
    Router,
    /// A real server on a loopback socket, driven by keep-alive clients.
    Http,
}

impl FromStr for Transport {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(Transport::Direct),
            "router" => Ok(Transport::Router),
            "http" => Ok(Transport::Http),
            other => Err(format!("unknown transport `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub batches: Vec<usize>,
    pub transport: Transport,
    /// Envelopes are repeated until at least this much time has passed.
    pub min_time: Duration,
    /// Concurrent requesters.
    pub concurrency: usize,
    /// Where one-time counters are persisted; a fresh temp dir if unset.
    pub counter_dir: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            batches: DEFAULT_BATCHES.to_vec(),
            transport: Transport::Http,
            min_time: Duration::from_millis(300),
            concurrency: 1,
            counter_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    #[serde(rename = "type")]
    pub workload: Workload,
    pub batch: usize,
    pub requests: u64,
    pub seconds: f64,
    pub req_per_s: f64,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("benchmark setup failed: {0}")]
    Setup(String),
    #[error("request refused during benchmark: {0}")]
    Refused(String),
}

/// Fixture: a three-scope rule set over 16 senders and 16 recipients, a
/// token contract, and a second contract whose tokens are one-time.
pub struct Fixture {
    pub service: Arc<TokenService>,
    pub senders: Vec<Address>,
    pub recipients: Vec<Address>,
    pub contract: Address,
    pub one_time_contract: Address,
    _dir: Option<tempfile::TempDir>,
}

impl Fixture {
    pub fn new(counter: Box<dyn CounterStore>) -> Self {
        let senders: Vec<Address> = (0..SENDERS).map(|i| Address::derive(&format!("bench-sender-{i}"))).collect();
        let recipients: Vec<Address> = (0..SENDERS).map(|i| Address::derive(&format!("bench-recipient-{i}"))).collect();
        let list = |v: &[Address]| v.iter().map(|a| format!("\"{a}\"")).collect::<Vec<_>>().join(",");
        let doc = format!(
            r#"{{"sender":{{"whitelist":[{s}]}},"method":{{"transfer":{{"whitelist":[{s}]}}}},"argument":{{"to":{{"whitelist":[{r}]}}}}}}"#,
            s = list(&senders),
            r = list(&recipients)
        );
        let contract = Address::derive("bench-token");
        let one_time_contract = Address::derive("bench-token-onetime");
        let service = TokenService::builder(KeyPair::from_seed(b"bench-ts"))
            .rules(load_rules(&doc).expect("bench rules"))
            .counter(counter)
            .contract(contract, ContractPolicy::with_methods([TRANSFER]))
            .contract(one_time_contract, ContractPolicy::with_methods([TRANSFER]).one_time(OneTimePolicy::Always))
            .build();
        Fixture { service: Arc::new(service), senders, recipients, contract, one_time_contract, _dir: None }
    }

    /// Fixture whose counter is persisted under `dir`, or a temp dir.
    pub fn persistent(dir: Option<&PathBuf>) -> Result<Self, BenchError> {
        let (path, tmp) = match dir {
            Some(d) => (d.join(format!("bench-counter-{}", std::process::id())), None),
            None => {
                let t = tempfile::tempdir().map_err(|e| BenchError::Setup(e.to_string()))?;
                (t.path().join("counter"), Some(t))
            }
        };
        let _ = std::fs::remove_file(&path);
        let counter = FileCounter::open(path, false).map_err(|e| BenchError::Setup(e.to_string()))?;
        let mut f = Fixture::new(Box::new(counter));
        f._dir = tmp;
        Ok(f)
    }

    pub fn in_memory() -> Self {
        Fixture::new(Box::new(MemoryCounter::default()))
    }

    /// The `i`-th request of a workload.
    pub fn request(&self, workload: Workload, i: usize) -> TokenRequest {
        let sender = self.senders[i % SENDERS];
        let method = MethodId::from_signature(TRANSFER);
        let args = || vec![ArgPair::new("to", self.recipients[i % SENDERS].to_string()), ArgPair::new("amount", i.to_string())];
        match workload {
            Workload::Super => TokenRequest::super_token(self.contract, sender),
            Workload::Method => TokenRequest::method_token(self.contract, sender, method),
            Workload::Argument => TokenRequest::argument_token(self.contract, sender, method, args()),
            Workload::ArgumentOneTime => TokenRequest::argument_token(self.one_time_contract, sender, method, args()),
        }
    }

    pub fn envelopes(&self, workload: Workload, batch: usize) -> Vec<RequestEnvelope> {
        (0..batch).map(|i| RequestEnvelope::from(self.request(workload, i))).collect()
    }
}

fn check_direct(ts: &TokenService, batch: &[RequestEnvelope]) -> Result<usize, BenchError> {
    if batch.len() == 1 {
        ts.issue_envelope(&batch[0]).map_err(|e| BenchError::Refused(e.to_string()))?;
        return Ok(1);
    }
    let out = ts.issue_batch(batch);
    if let Some(Err(e)) = out.iter().find(|r| r.is_err()) {
        return Err(BenchError::Refused(e.to_string()));
    }
    Ok(out.len())
}

fn encode_batch(batch: &[RequestEnvelope]) -> Result<(&'static str, Vec<u8>), BenchError> {
    let body = if batch.len() == 1 { serde_json::to_vec(&batch[0]) } else { serde_json::to_vec(batch) };
    let uri = if batch.len() == 1 { "/v1/token" } else { "/v1/tokens" };
    body.map(|b| (uri, b)).map_err(|e| BenchError::Setup(e.to_string()))
}

fn check_reply(sent: usize, status: u16, bytes: &[u8]) -> Result<usize, BenchError> {
    if status != 200 {
        return Err(BenchError::Refused(String::from_utf8_lossy(bytes).into_owned()));
    }
    if sent == 1 {
        serde_json::from_slice::<IssueResponse>(bytes).map_err(|e| BenchError::Setup(e.to_string()))?;
        return Ok(1);
    }
    let items: Vec<BatchItem> = serde_json::from_slice(bytes).map_err(|e| BenchError::Setup(e.to_string()))?;
    if let Some(BatchItem::Failed { reason, .. }) = items.iter().find(|i| matches!(i, BatchItem::Failed { .. })) {
        return Err(BenchError::Refused(reason.clone()));
    }
    Ok(items.len())
}

async fn post_router(app: axum::Router, batch: &[RequestEnvelope]) -> Result<usize, BenchError> {
    let (uri, body) = encode_batch(batch)?;
    let req = Request::builder()
        .method(Method::POST)
        .uri(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body))
        .map_err(|e| BenchError::Setup(e.to_string()))?;
    let resp = app.oneshot(req).await.map_err(|e| BenchError::Setup(e.to_string()))?;
    let status = resp.status().as_u16();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.map_err(|e| BenchError::Setup(e.to_string()))?;
    check_reply(batch.len(), status, &bytes)
}

fn post_http(agent: &ureq::Agent, base: &str, batch: &[RequestEnvelope]) -> Result<usize, BenchError> {
    let (uri, body) = encode_batch(batch)?;
    let transport = |e: ureq::Error| BenchError::Setup(format!("{base}{uri}: {e}"));
    let mut resp = agent
        .post(&format!("{base}{uri}"))
        .header("Content-Type", "application/json")
        .send(&body[..])
        .map_err(transport)?;
    let status = resp.status().as_u16();
    let bytes = resp.body_mut().with_config().limit(u64::MAX).read_to_vec().map_err(transport)?;
    check_reply(batch.len(), status, &bytes)
}

fn runtime(workers: usize) -> Result<tokio::runtime::Runtime, BenchError> {
    tokio::runtime::Builder::new_multi_thread()
        .worker_threads(workers)
        .enable_all()
        .build()
        .map_err(|e| BenchError::Setup(e.to_string()))
}

/// Measures one (workload, batch) cell against a fresh service.
pub fn measure(workload: Workload, batch: usize, cfg: &BenchConfig) -> Result<Row, BenchError> {
    let fixture = Fixture::persistent(cfg.counter_dir.as_ref())?;
    let envelopes = Arc::new(fixture.envelopes(workload, batch.max(1)));
    let workers = cfg.concurrency.max(1);
    let min_time = cfg.min_time;

    let start = Instant::now();
    let requests: u64 = match cfg.transport {
        Transport::Direct => std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|_| {
                    let ts = &fixture.service;
                    let envelopes = &envelopes;
                    s.spawn(move || -> Result<u64, BenchError> {
                        let mut n = 0u64;
                        loop {
                            n += check_direct(ts, envelopes)? as u64;
                            if start.elapsed() >= min_time {
                                return Ok(n);
                            }
                        }
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("bench worker")).sum::<Result<u64, _>>()
        })?,
        Transport::Router => {
            let rt = runtime(workers)?;
            let app = router(fixture.service.clone());
            rt.block_on(async {
                let tasks: Vec<_> = (0..workers)
                    .map(|_| {
                        let app = app.clone();
                        let envelopes = envelopes.clone();
                        tokio::spawn(async move {
                            let mut n = 0u64;
                            loop {
                                n += post_router(app.clone(), &envelopes).await? as u64;
                                if start.elapsed() >= min_time {
                                    return Ok::<u64, BenchError>(n);
                                }
                            }
                        })
                    })
                    .collect();
                let mut total = 0;
                for t in tasks {
                    total += t.await.map_err(|e| BenchError::Setup(e.to_string()))??;
                }
                Ok::<u64, BenchError>(total)
            })?
        }
        Transport::Http => {
            let rt = runtime(workers)?;
            let listener = rt
                .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
                .map_err(|e| BenchError::Setup(e.to_string()))?;
            let base = format!("http://{}", listener.local_addr().map_err(|e| BenchError::Setup(e.to_string()))?);
            rt.spawn(std::future::IntoFuture::into_future(axum::serve(listener, router(fixture.service.clone()))));
            let n = std::thread::scope(|s| {
                let handles: Vec<_> = (0..workers)
                    .map(|_| {
                        let (base, envelopes) = (&base, &envelopes);
                        s.spawn(move || -> Result<u64, BenchError> {
                            let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
                            let mut n = 0u64;
                            loop {
                                n += post_http(&agent, base, envelopes)? as u64;
                                if start.elapsed() >= min_time {
                                    return Ok(n);
                                }
                            }
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("bench worker")).sum::<Result<u64, _>>()
            })?;
            rt.shutdown_background();
            n
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    Ok(Row { workload, batch, requests, seconds, req_per_s: requests as f64 / seconds })
}

pub fn bench_throughput(workload: Workload, cfg: &BenchConfig) -> Result<Vec<Row>, BenchError> {
    cfg.batches.iter().map(|&b| measure(workload, b, cfg)).collect()
}

pub const CSV_HEADER: &str = "type,batch,requests,seconds,req_per_s";

pub fn to_csv(rows: &[Row]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{:.6},{:.2}\n", r.workload, r.batch, r.requests, r.seconds, r.req_per_s));
    }
    out
}

/// Whitespace-separated table with one line per batch size and one column
/// per workload, for gnuplot and similar tools.
pub fn plot_data(rows: &[Row]) -> String {
    let mut batches: Vec<usize> = rows.iter().map(|r| r.batch).collect();
    batches.sort_unstable();
    batches.dedup();
    let mut out = String::from("# batch");
    let workloads: Vec<Workload> = Workload::ALL.into_iter().filter(|w| rows.iter().any(|r| r.workload == *w)).collect();
    for w in &workloads {
        out.push(' ');
        out.push_str(w.name());
    }
    out.push('\n');
    for b in batches {
        out.push_str(&b.to_string());
        for w in &workloads {
            match rows.iter().find(|r| r.batch == b && r.workload == *w) {
                Some(r) => out.push_str(&format!(" {:.2}", r.req_per_s)),
                None => out.push_str(" NaN"),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(transport: Transport) -> BenchConfig {
        BenchConfig { batches: vec![1, 10], transport, min_time: Duration::from_millis(20), ..BenchConfig::default() }
    }

    #[test]
    fn every_workload_is_admitted() {
        let f = Fixture::in_memory();
        for w in Workload::ALL {
            for i in 0..40 {
                f.service.issue(&f.request(w, i)).unwrap_or_else(|e| panic!("{w} {i}: {e}"));
            }
        }
        assert_eq!(f.service.counter_value(), 40);
    }

    #[test]
    fn every_transport_produces_rows() {
        for t in [Transport::Direct, Transport::Router, Transport::Http] {
            let rows = bench_throughput(Workload::ArgumentOneTime, &quick(t)).unwrap();
            assert_eq!(rows.len(), 2);
            assert!(rows.iter().all(|r| r.requests >= r.batch as u64 && r.req_per_s > 0.0));
        }
    }

    #[test]
    fn csv_and_plot_schema() {
        let rows = vec![
            Row { workload: Workload::Super, batch: 1, requests: 10, seconds: 0.5, req_per_s: 20.0 },
            Row { workload: Workload::Method, batch: 10, requests: 10, seconds: 0.25, req_per_s: 40.0 },
        ];
        let csv = to_csv(&rows);
        assert_eq!(csv.lines().next(), Some(CSV_HEADER));
        assert_eq!(csv.lines().nth(1), Some("super,1,10,0.500000,20.00"));
        let plot = plot_data(&rows);
        assert_eq!(plot.lines().collect::<Vec<_>>(), vec!["# batch super method", "1 20.00 NaN", "10 NaN 40.00"]);
    }

    #[test]
    fn workload_names_round_trip() {
        for w in Workload::ALL {
            assert_eq!(w.name().parse::<Workload>().unwrap(), w);
        }
        assert!("nope".parse::<Workload>().is_err());
    }
}
