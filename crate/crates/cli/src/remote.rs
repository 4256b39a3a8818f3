//! Blocking HTTP client for a running token service.

use serde_json::Value;
use smacs_core::client::{ClientError, TokenSource};
use smacs_core::rules::UpdateOp;
use smacs_core::service::http::{ErrorBody, PubkeyBody, RulePatch};
use smacs_core::service::{IssueResponse, RequestEnvelope};
use smacs_core::Token;

pub struct Remote {
    base: String,
    agent: ureq::Agent,
    bearer: Option<String>,
}

pub struct Reply {
    pub status: u16,
    pub body: String,
}

impl Reply {
    fn error(&self) -> (String, String) {
        match serde_json::from_str::<ErrorBody>(&self.body) {
            Ok(e) => (e.error, e.reason),
            Err(_) => ("http".into(), self.body.clone()),
        }
    }
}

impl Remote {
    pub fn new(base: &str, bearer: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Remote { base: base.trim_end_matches('/').to_owned(), agent, bearer }
    }

    fn send(&self, method: &str, path: &str, body: Option<Vec<u8>>) -> Result<Reply, ClientError> {
        let url = format!("{}{path}", self.base);
        let auth = self.bearer.as_ref().map(|b| format!("Bearer {b}"));
        let transport = |e: ureq::Error| ClientError::Transport(format!("{url}: {e}"));
        let mut resp = match (method, body) {
            ("GET", _) => {
                let mut r = self.agent.get(&url);
                if let Some(a) = &auth {
                    r = r.header("Authorization", a);
                }
                r.call().map_err(transport)?
            }
            (m, body) => {
                let mut r = match m {
                    "PUT" => self.agent.put(&url),
                    "PATCH" => self.agent.patch(&url),
                    _ => self.agent.post(&url),
                };
                r = r.header("Content-Type", "application/json");
                if let Some(a) = &auth {
                    r = r.header("Authorization", a);
                }
                r.send(&body.unwrap_or_default()[..]).map_err(transport)?
            }
        };
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(transport)?;
        Ok(Reply { status, body })
    }

    fn admin_error(reply: &Reply) -> ClientError {
        let (_, reason) = reply.error();
        ClientError::Refused { contract: smacs_core::Address::ZERO, status: reply.status, reason }
    }

    pub fn token(&self, env: &RequestEnvelope) -> Result<IssueResponse, ClientError> {
        let body = serde_json::to_vec(env).map_err(|e| ClientError::Transport(e.to_string()))?;
        let reply = self.send("POST", "/v1/token", Some(body))?;
        if reply.status != 200 {
            let (_, reason) = reply.error();
            return Err(ClientError::Refused { contract: env.request.contract, status: reply.status, reason });
        }
        serde_json::from_str(&reply.body).map_err(|e| ClientError::Transport(format!("bad token response: {e}")))
    }

    pub fn pubkey(&self) -> Result<PubkeyBody, ClientError> {
        let reply = self.send("GET", "/v1/pubkey", None)?;
        serde_json::from_str(&reply.body).map_err(|e| ClientError::Transport(format!("bad pubkey response: {e}")))
    }

    fn version(reply: Reply) -> Result<u64, ClientError> {
        if reply.status != 200 {
            return Err(Self::admin_error(&reply));
        }
        let v: Value = serde_json::from_str(&reply.body).map_err(|e| ClientError::Transport(e.to_string()))?;
        v["version"].as_u64().ok_or_else(|| ClientError::Transport(format!("bad rules response: {}", reply.body)))
    }

    pub fn patch_rules(&self, op: UpdateOp, scope: &str, entry: &str) -> Result<u64, ClientError> {
        let patch = RulePatch { op, scope: scope.to_owned(), entry: entry.to_owned() };
        let body = serde_json::to_vec(&patch).map_err(|e| ClientError::Transport(e.to_string()))?;
        Self::version(self.send("PATCH", "/v1/rules", Some(body))?)
    }

    pub fn put_rules(&self, document: &str) -> Result<u64, ClientError> {
        Self::version(self.send("PUT", "/v1/rules", Some(document.as_bytes().to_vec()))?)
    }

    pub fn get_rules(&self) -> Result<String, ClientError> {
        let reply = self.send("GET", "/v1/rules", None)?;
        if reply.status != 200 {
            return Err(Self::admin_error(&reply));
        }
        Ok(reply.body)
    }
}

impl TokenSource for Remote {
    fn fetch(&self, request: &RequestEnvelope) -> Result<Token, ClientError> {
        Ok(self.token(request)?.token()?)
    }
}
