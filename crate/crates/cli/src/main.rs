mod remote;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use smacs_core::client::{self, ClientError, TxCall};
use smacs_core::rules::UpdateOp;
use smacs_core::scenario::{self, ScenarioError};
use smacs_core::service::clock::{Clock, SystemClock};
use smacs_core::service::config::ServiceConfig;
use smacs_core::service::{http, EntryCall, RequestEnvelope};
use smacs_core::sim::{fixtures, Deployment, Guard, StateDump};
use smacs_core::throughput::{self, BenchConfig, Transport, Workload};
use smacs_core::{Address, ArgPair, KeyPair, MethodId, Simulator, TokenRequest, TokenType, VerifyingKey};

use remote::Remote;

#[derive(Parser)]
#[command(name = "smacs", version, about = "Token-based access control for smart contracts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Token service.
    #[command(subcommand)]
    Ts(TsCommand),
    /// Contract owner administration.
    #[command(subcommand)]
    Owner(OwnerCommand),
    /// Request tokens and send transactions.
    #[command(subcommand)]
    Client(ClientCommand),
    /// Local chain simulator state.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Measure token issuance throughput.
    Bench(BenchArgs),
    /// Scripted end-to-end scenarios.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
}

#[derive(Subcommand)]
enum TsCommand {
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured listen address.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Generate a service key pair and print the verification key.
    Keygen {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ServiceConn {
    #[arg(long, env = "SMACS_TS_URL", default_value = "http://127.0.0.1:8080")]
    url: String,
}

#[derive(Subcommand)]
enum OwnerCommand {
    #[command(subcommand)]
    Rules(RulesCommand),
}

#[derive(Args)]
struct OwnerAuth {
    #[command(flatten)]
    conn: ServiceConn,
    /// Owner bearer secret.
    #[arg(long, env = "SMACS_OWNER_SECRET")]
    secret: String,
}

#[derive(Subcommand)]
enum RulesCommand {
    /// Add an entry, e.g. `add method.withdraw.blacklist 0x…`.
    Add {
        #[command(flatten)]
        auth: OwnerAuth,
        scope: String,
        entry: String,
    },
    /// Remove an entry from a scope.
    Remove {
        #[command(flatten)]
        auth: OwnerAuth,
        scope: String,
        entry: String,
    },
    /// Replace the whole rule document.
    Put {
        #[command(flatten)]
        auth: OwnerAuth,
        file: PathBuf,
    },
    /// Print the current rule document.
    Show {
        #[command(flatten)]
        auth: OwnerAuth,
    },
}

#[derive(Args)]
struct TokenArgs {
    #[arg(long = "type", value_parser = parse_type)]
    token_type: TokenType,
    #[arg(long)]
    contract: Address,
    #[arg(long)]
    sender: Address,
    /// Method signature, e.g. `withdraw()`.
    #[arg(long)]
    method: Option<String>,
    /// `name=value`, repeatable.
    #[arg(long = "arg", value_parser = parse_arg)]
    args: Vec<ArgPair>,
}

#[derive(Subcommand)]
enum ClientCommand {
    /// Generate an account key.
    Keygen {
        #[arg(long)]
        out: PathBuf,
    },
    /// Request one token and print it.
    Token {
        #[command(flatten)]
        conn: ServiceConn,
        #[command(flatten)]
        token: TokenArgs,
    },
    /// Fetch tokens for every guarded contract on the call path, then sign
    /// and submit the transaction to a simulator state file.
    Send {
        #[command(flatten)]
        conn: ServiceConn,
        /// Simulator state, updated in place.
        #[arg(long)]
        state: PathBuf,
        /// Sender key file.
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        to: Address,
        /// Method signature; omitted for a plain value transfer.
        #[arg(long)]
        method: Option<String>,
        #[arg(long = "arg", value_parser = parse_arg)]
        args: Vec<ArgPair>,
        #[arg(long, default_value_t = 0)]
        value: u128,
        /// `TYPE:CONTRACT[:METHOD]`, one per guarded contract. Argument
        /// tokens bind the transaction's arguments.
        #[arg(long = "token")]
        tokens: Vec<String>,
    },
}

#[derive(Subcommand)]
enum SimCommand {
    /// Create a state file with accounts and a fixture.
    Init {
        #[arg(long)]
        out: PathBuf,
        /// `bank-attacker`, `relay-chain`, `echo`, or none.
        #[arg(long)]
        fixture: Option<String>,
        #[arg(long, default_value_t = 3)]
        depth: usize,
        /// Service verification key (hex); guarded contracts need it.
        #[arg(long)]
        guard_key: Option<String>,
        /// Fetch the verification key from a running service instead.
        #[arg(long, conflicts_with = "guard_key")]
        ts_url: Option<String>,
        #[arg(long, default_value_t = 1024)]
        bits: u64,
        /// `ADDRESS=BALANCE`, repeatable.
        #[arg(long = "account")]
        accounts: Vec<String>,
        /// Genesis time; defaults to now.
        #[arg(long)]
        time: Option<u32>,
    },
    /// Print a state file.
    Dump {
        #[arg(long)]
        state: PathBuf,
        /// Print the raw JSON dump.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated workloads.
    #[arg(long, value_delimiter = ',', default_value = "super,method,argument,argument-onetime")]
    types: Vec<Workload>,
    #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000,10000,100000")]
    batches: Vec<usize>,
    /// `http` (loopback socket), `router` (in process) or `direct`.
    #[arg(long, default_value = "http")]
    transport: Transport,
    #[arg(long, default_value_t = 1)]
    concurrency: usize,
    #[arg(long, default_value_t = 300)]
    min_time_ms: u64,
    /// CSV output file; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Plot-ready data file.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// Run scenario files or shipped scenarios by name.
    Run {
        #[arg(required = true)]
        scenarios: Vec<String>,
        /// Print reports as JSON.
        #[arg(long)]
        json: bool,
    },
    /// List shipped scenarios.
    List,
}

enum Failure {
    /// Exit 1: a refusal, revert or failed assertion.
    Failed(String),
    /// Exit 2: bad input or environment.
    Usage(String),
}

type CmdResult = Result<(), Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn client_failure(e: ClientError) -> Failure {
    match e {
        ClientError::Refused { .. } | ClientError::Tx(_) => Failure::Failed(e.to_string()),
        other => Failure::Usage(other.to_string()),
    }
}

fn parse_type(s: &str) -> Result<TokenType, String> {
    s.parse()
}

fn parse_arg(s: &str) -> Result<ArgPair, String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    Ok(ArgPair::new(k, v))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn load_state(path: &Path) -> Result<Simulator, Failure> {
    let dump: StateDump = serde_json::from_str(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Simulator::from_dump(&dump).map_err(usage)
}

fn save_state(path: &Path, sim: &Simulator) -> CmdResult {
    write(path, &pretty(&sim.dump()))
}

fn load_key(path: &Path) -> Result<KeyPair, Failure> {
    KeyPair::from_secret_hex(read(path)?.trim()).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn keygen(out: &Path) -> CmdResult {
    let key = KeyPair::generate();
    write(out, &key.secret_hex())?;
    println!("{}", pretty(&serde_json::json!({ "address": key.address(), "pubkey": key.public() })));
    Ok(())
}

fn ts(cmd: TsCommand) -> CmdResult {
    match cmd {
        TsCommand::Keygen { out } => keygen(&out),
        TsCommand::Serve { config, listen } => {
            let cfg = ServiceConfig::load(&config).map_err(usage)?;
            let service = Arc::new(cfg.build_service().map_err(usage)?);
            let addr = listen.unwrap_or_else(|| cfg.listen.clone());
            let rt = tokio::runtime::Runtime::new().map_err(usage)?;
            let pk = service.verifying_key();
            rt.block_on(http::serve(service, &addr, |bound| {
                eprintln!("token service listening on http://{bound} (key {})", pk.address());
            }))
            .map_err(|e| usage(format!("{addr}: {e}")))
        }
    }
}

fn owner(cmd: OwnerCommand) -> CmdResult {
    let OwnerCommand::Rules(cmd) = cmd;
    let remote = |auth: &OwnerAuth| Remote::new(&auth.conn.url, Some(auth.secret.clone()));
    let version = match cmd {
        RulesCommand::Add { auth, scope, entry } => remote(&auth).patch_rules(UpdateOp::Add, &scope, &entry),
        RulesCommand::Remove { auth, scope, entry } => remote(&auth).patch_rules(UpdateOp::Remove, &scope, &entry),
        RulesCommand::Put { auth, file } => {
            let doc = read(&file)?;
            remote(&auth).put_rules(&doc)
        }
        RulesCommand::Show { auth } => {
            println!("{}", remote(&auth).get_rules().map_err(client_failure)?);
            return Ok(());
        }
    }
    .map_err(client_failure)?;
    println!("rules version {version}");
    Ok(())
}

fn token_request(t: &TokenArgs) -> TokenRequest {
    TokenRequest {
        token_type: t.token_type,
        contract: t.contract,
        sender: t.sender,
        method: t.method.as_deref().map(MethodId::from_signature),
        args: t.args.clone(),
    }
}

/// Parses `TYPE:CONTRACT[:METHOD]`. Without a method the transaction's
/// method is used.
fn token_spec(spec: &str, sender: Address, call: &TxCall) -> Result<RequestEnvelope, Failure> {
    let mut parts = spec.splitn(3, ':');
    let token_type: TokenType = parts.next().unwrap_or_default().parse().map_err(usage)?;
    let contract: Address = parts.next().ok_or_else(|| usage(format!("token spec `{spec}` lacks a contract")))?.parse().map_err(usage)?;
    let method = match parts.next() {
        Some(sig) => Some(MethodId::from_signature(sig)),
        None => call.method,
    };
    let request = match token_type {
        TokenType::Super => TokenRequest::super_token(contract, sender),
        TokenType::Method => TokenRequest::method_token(contract, sender, method.ok_or_else(|| usage("method token needs a method"))?),
        TokenType::Argument => TokenRequest::argument_token(
            contract,
            sender,
            method.ok_or_else(|| usage("argument token needs a method"))?,
            call.args.clone(),
        ),
    };
    let entry = call.method.map(|m| EntryCall { contract: call.target, method: m, args: call.args.clone(), value: call.value });
    Ok(RequestEnvelope { request, entry })
}

fn client(cmd: ClientCommand) -> CmdResult {
    match cmd {
        ClientCommand::Keygen { out } => keygen(&out),
        ClientCommand::Token { conn, token } => {
            let issued = Remote::new(&conn.url, None).token(&RequestEnvelope::from(token_request(&token))).map_err(client_failure)?;
            println!("{}", pretty(&issued));
            Ok(())
        }
        ClientCommand::Send { conn, state, key, to, method, args, value, tokens } => {
            let key = load_key(&key)?;
            let mut sim = load_state(&state)?;
            let now = SystemClock.now();
            if now > sim.now() {
                sim.set_time(now).map_err(usage)?;
            }
            let call = TxCall { target: to, method: method.as_deref().map(MethodId::from_signature), args, value };
            let requests = tokens.iter().map(|t| token_spec(t, key.address(), &call)).collect::<Result<Vec<_>, _>>()?;
            let remote = Remote::new(&conn.url, None);
            let receipt = client::request_and_send(&remote, &mut sim, &key, &requests, &call).map_err(client_failure)?;
            save_state(&state, &sim)?;
            println!("{}", pretty(&receipt));
            if receipt.is_ok() {
                Ok(())
            } else {
                Err(Failure::Failed(format!("transaction reverted: {}", receipt.detail.unwrap_or_default())))
            }
        }
    }
}

fn sim(cmd: SimCommand) -> CmdResult {
    match cmd {
        SimCommand::Init { out, fixture, depth, guard_key, ts_url, bits, accounts, time } => {
            let mut sim = Simulator::new();
            sim.set_time(time.unwrap_or_else(|| SystemClock.now())).map_err(usage)?;
            for a in &accounts {
                let (addr, bal) = a.split_once('=').ok_or_else(|| usage(format!("expected ADDRESS=BALANCE, got `{a}`")))?;
                sim.create_account(addr.parse().map_err(usage)?, bal.parse().map_err(usage)?);
            }
            let guard_key = match ts_url {
                Some(url) => Some(Remote::new(&url, None).pubkey().map_err(client_failure)?.pubkey),
                None => guard_key,
            };
            let key = guard_key.as_deref().map(VerifyingKey::from_hex).transpose().map_err(usage)?;
            let guard = || key.map(|k| Guard::new(Arc::new(k), bits));
            let mut created = serde_json::Map::new();
            match fixture.as_deref() {
                None => {}
                Some("bank-attacker") => {
                    let f = fixtures::bank_attacker_fixture(&mut sim, guard(), true).map_err(usage)?;
                    created.insert("bank".into(), f.bank.to_string().into());
                    created.insert("attacker".into(), f.attacker.to_string().into());
                }
                Some("relay-chain") => {
                    let chain = fixtures::relay_chain(&mut sim, depth, guard).map_err(usage)?;
                    created.insert("relays".into(), chain.iter().map(|a| a.to_string()).collect::<Vec<_>>().into());
                }
                Some("echo") => {
                    let mut dep = Deployment::new(Arc::new(fixtures::Echo));
                    if let Some(g) = guard() {
                        dep = dep.guarded(g);
                    }
                    created.insert("echo".into(), sim.register_contract(dep).map_err(usage)?.to_string().into());
                }
                Some(other) => return Err(usage(format!("unknown fixture `{other}`"))),
            }
            save_state(&out, &sim)?;
            println!("{}", pretty(&created));
            Ok(())
        }
        SimCommand::Dump { state, json } => {
            let sim = load_state(&state)?;
            if json {
                println!("{}", pretty(&sim.dump()));
                return Ok(());
            }
            println!("height {}  time {}", sim.height(), sim.now());
            for a in sim.dump().accounts {
                println!("account  {}  balance {}  nonce {}", a.address, a.balance, a.nonce);
            }
            for c in sim.contracts() {
                let guard = match &c.guard {
                    Some(g) => {
                        let (s, e, sp, ep) = g.bitmap.window();
                        format!("guarded, window ({s}, {e}, {sp}, {ep})")
                    }
                    None => "unguarded".into(),
                };
                println!("contract {}  {:<16} balance {}  {guard}", c.address, c.kind(), sim.balance(&c.address));
            }
            Ok(())
        }
    }
}

fn bench(a: BenchArgs) -> CmdResult {
    let cfg = BenchConfig {
        batches: a.batches,
        transport: a.transport,
        min_time: Duration::from_millis(a.min_time_ms),
        concurrency: a.concurrency,
        counter_dir: None,
    };
    let mut rows = Vec::new();
    for w in a.types {
        let r = throughput::bench_throughput(w, &cfg).map_err(|e| Failure::Failed(e.to_string()))?;
        for row in &r {
            eprintln!("{:<17} batch {:>6}  {:>10.1} req/s", row.workload.name(), row.batch, row.req_per_s);
        }
        rows.extend(r);
    }
    let csv = throughput::to_csv(&rows);
    match &a.out {
        Some(p) => write(p, &csv)?,
        None => print!("{csv}"),
    }
    if let Some(p) = &a.plot {
        write(p, &throughput::plot_data(&rows))?;
    }
    Ok(())
}

fn scenario_cmd(cmd: ScenarioCommand) -> CmdResult {
    match cmd {
        ScenarioCommand::List => {
            for (name, _) in scenario::SHIPPED {
                println!("{name}");
            }
            Ok(())
        }
        ScenarioCommand::Run { scenarios, json } => {
            let mut failed = Vec::new();
            for s in &scenarios {
                let text = match scenario::shipped(s) {
                    Some(t) => t.to_owned(),
                    None => read(Path::new(s))?,
                };
                let report = scenario::run_scenario_text(&text).map_err(|e: ScenarioError| usage(format!("{s}: {e}")))?;
                if json {
                    println!("{}", pretty(&report));
                } else {
                    println!("{report}");
                }
                if !report.passed {
                    failed.push(s.clone());
                }
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Failure::Failed(format!("failed: {}", failed.join(", "))))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Ts(c) => ts(c),
        Command::Owner(c) => owner(c),
        Command::Client(c) => client(c),
        Command::Sim(c) => sim(c),
        Command::Bench(a) => bench(a),
        Command::Scenario(c) => scenario_cmd(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Failed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
