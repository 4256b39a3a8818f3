use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use serde_json::Value;

fn smacs() -> Command {
    Command::new(env!("CARGO_BIN_EXE_smacs"))
}

fn run(args: &[&str]) -> Output {
    smacs().args(args).output().expect("spawn smacs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

#[test]
fn shipped_scenarios_pass() {
    let list = run(&["scenario", "list"]);
    assert!(list.status.success());
    let names: Vec<String> = stdout(&list).lines().map(str::to_owned).collect();
    for n in ["reentrancy_blocked", "token_miss", "call_chain"] {
        assert!(names.iter().any(|l| l == n), "{names:?}");
    }
    let out = run(&["scenario", "run", "reentrancy_blocked", "token_miss", "call_chain"]);
    assert_eq!(out.status.code(), Some(0), "{}{}", stdout(&out), String::from_utf8_lossy(&out.stderr));
}

#[test]
fn scenario_files_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, r#"{"name": "empty", "steps": []}"#).unwrap();
    let out = run(&["scenario", "run", empty.to_str().unwrap(), "--json"]);
    assert_eq!(out.status.code(), Some(0));

    let failing = dir.path().join("failing.json");
    std::fs::write(
        &failing,
        r#"{"name": "failing", "accounts": {"a": 1},
            "steps": [{"op": "assert", "balance": {"of": "a", "eq": 2}}]}"#,
    )
    .unwrap();
    let out = run(&["scenario", "run", failing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    assert_eq!(run(&["scenario", "run", "no-such-scenario"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["bench", "--transport", "pigeon"]).status.code(), Some(2));
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out.csv");
    let out = run(&["bench", "--types", "super,method", "--batches", "1,10", "--min-time-ms", "20", "--out", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "type,batch,requests,seconds,req_per_s");
    assert_eq!(lines.len(), 5);
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn serve(config: &Path) -> (Server, String) {
    let mut child = smacs()
        .args(["ts", "serve", "--config", config.to_str().unwrap(), "--listen", "127.0.0.1:0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.split_whitespace().find(|w| w.starts_with("http://")).expect("bound address").to_owned();
    (Server(child), url)
}

#[test]
fn serve_issue_and_send() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_owned();

    let alice = json(&run(&["client", "keygen", "--out", &p("alice.key")]));
    let alice_addr = alice["address"].as_str().unwrap().to_owned();
    let ts_key = run(&["ts", "keygen", "--out", &p("ts.key")]);
    assert!(ts_key.status.success());

    std::fs::write(p("rules.json"), format!(r#"{{"sender": {{"whitelist": ["{alice_addr}"]}}}}"#)).unwrap();
    std::fs::write(
        p("ts.toml"),
        r#"key_file = "ts.key"
rules_path = "rules.json"
counter_path = "counter"
owner_secret = "s3cret"
"#,
    )
    .unwrap();
    let (_server, url) = serve(Path::new(&p("ts.toml")));

    let init = run(&["sim", "init", "--out", &p("chain.json"), "--fixture", "echo", "--ts-url", &url, "--account", &format!("{alice_addr}=10")]);
    assert!(init.status.success(), "{}", String::from_utf8_lossy(&init.stderr));
    let echo = json(&init)["echo"].as_str().unwrap().to_owned();

    let token = run(&["client", "token", "--url", &url, "--type", "super", "--contract", &echo, "--sender", &alice_addr]);
    assert!(token.status.success(), "{}", String::from_utf8_lossy(&token.stderr));
    assert_eq!(json(&token)["token"].as_str().unwrap().len(), 2 + 2 * 86);

    let (state, key) = (p("chain.json"), p("alice.key"));
    let send = |extra: &[&str]| {
        let mut args = vec!["client", "send", "--url", &url, "--state", &state, "--key", &key, "--to", &echo];
        args.extend_from_slice(&["--method", "echo(bytes)", "--arg", "data=hi"]);
        args.extend_from_slice(extra);
        run(&args)
    };
    let ok = send(&["--token", &format!("argument:{echo}")]);
    assert!(ok.status.success(), "{}{}", stdout(&ok), String::from_utf8_lossy(&ok.stderr));
    assert_eq!(json(&ok)["status"], "ok");

    let missing = send(&[]);
    assert_eq!(missing.status.code(), Some(1));

    let bl = run(&["owner", "rules", "put", "--url", &url, "--secret", "s3cret", &p("blacklist.json")]);
    assert_eq!(bl.status.code(), Some(2), "unreadable file is a usage error");
    std::fs::write(p("blacklist.json"), format!(r#"{{"sender": {{"blacklist": ["{alice_addr}"]}}}}"#)).unwrap();
    let put = run(&["owner", "rules", "put", "--url", &url, "--secret", "s3cret", &p("blacklist.json")]);
    assert!(put.status.success(), "{}", String::from_utf8_lossy(&put.stderr));
    let denied = send(&["--token", &format!("method:{echo}")]);
    assert_eq!(denied.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&denied.stderr).contains("sender.blacklist"));

    let wrong = run(&["owner", "rules", "show", "--url", &url, "--secret", "nope"]);
    assert_eq!(wrong.status.code(), Some(1));
    let shown = run(&["owner", "rules", "show", "--url", &url, "--secret", "s3cret"]);
    assert!(stdout(&shown).contains("blacklist"));

    let dump = run(&["sim", "dump", "--state", &state, "--json"]);
    let accounts = json(&dump)["accounts"].clone();
    let nonce = accounts.as_array().unwrap().iter().find(|a| a["address"] == alice_addr.as_str()).unwrap()["nonce"].clone();
    assert_eq!(nonce, 2);
}
