//! HTTP/JSON front end.
//!
//! | route              | body                                   | auth   |
//! |--------------------|----------------------------------------|--------|
//! | `POST /v1/token`   | token request, optional `entry` hint   |        |
//! | `POST /v1/tokens`  | array of token requests                |        |
//! | `GET /v1/rules`    |                                        | bearer |
//! | `PUT /v1/rules`    | full rule document                     | bearer |
//! | `PATCH /v1/rules`  | `{op, scope, entry}`                   | bearer |
//! | `GET /v1/pubkey`   |                                        |        |
//! | `GET /v1/health`   |                                        |        |
//!
//! Errors are `{error, reason}` with status 400, 401, 403 or 500.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::crypto::{Verifier, VerifyingKey};
use crate::rules::{ScopePath, UpdateOp};

use super::{AdminError, IssueError, IssueResponse, RequestEnvelope, TokenService};

/// Large enough for a 10^5-request batch.
pub const MAX_BODY_BYTES: usize = 64 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RulePatch {
    pub op: UpdateOp,
    pub scope: String,
    pub entry: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PubkeyBody {
    pub pubkey: String,
    pub scheme: String,
    pub address: String,
}

/// One entry of a batch response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BatchItem {
    Issued(IssueResponse),
    Failed { status: u16, error: String, reason: String },
}

fn error(status: u16, kind: &str, reason: impl Into<String>) -> Response {
    let status = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, Json(ErrorBody { error: kind.into(), reason: reason.into() })).into_response()
}

impl IntoResponse for IssueError {
    fn into_response(self) -> Response {
        error(self.status(), self.kind(), self.reason())
    }
}

impl IntoResponse for AdminError {
    fn into_response(self) -> Response {
        let kind = match &self {
            AdminError::Unauthorized => "unauthorized",
            AdminError::Rules(_) => "malformed",
            AdminError::Persistence(_) => "internal",
        };
        error(self.status(), kind, self.to_string())
    }
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers.get(header::AUTHORIZATION)?.to_str().ok()?.strip_prefix("Bearer ")
}

#[allow(clippy::result_large_err)]
fn parse<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, Response> {
    serde_json::from_slice(body).map_err(|e| error(400, "malformed", e.to_string()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, Response> {
    tokio::task::spawn_blocking(f).await.map_err(|e| error(500, "internal", e.to_string()))
}

async fn issue_one(State(ts): State<Arc<TokenService>>, body: Bytes) -> Response {
    let env: RequestEnvelope = match parse(&body) {
        Ok(env) => env,
        Err(resp) => return resp,
    };
    match blocking(move || ts.issue_envelope(&env)).await {
        Ok(Ok(issued)) => Json(IssueResponse::from(&issued)).into_response(),
        Ok(Err(e)) => e.into_response(),
        Err(resp) => resp,
    }
}

async fn issue_many(State(ts): State<Arc<TokenService>>, body: Bytes) -> Response {
    let batch: Vec<RequestEnvelope> = match parse(&body) {
        Ok(b) => b,
        Err(resp) => return resp,
    };
    let out = blocking(move || {
        ts.issue_batch(&batch)
            .into_iter()
            .map(|r| match r {
                Ok(i) => BatchItem::Issued(IssueResponse::from(&i)),
                Err(e) => BatchItem::Failed { status: e.status(), error: e.kind().into(), reason: e.reason() },
            })
            .collect::<Vec<_>>()
    })
    .await;
    match out {
        Ok(items) => Json(items).into_response(),
        Err(resp) => resp,
    }
}

async fn get_rules(State(ts): State<Arc<TokenService>>, headers: HeaderMap) -> Response {
    if let Err(e) = ts.authorize(bearer(&headers)) {
        return e.into_response();
    }
    ([(header::CONTENT_TYPE, "application/json")], ts.rules_snapshot().to_document()).into_response()
}

async fn put_rules(State(ts): State<Arc<TokenService>>, headers: HeaderMap, body: Bytes) -> Response {
    let Ok(doc) = std::str::from_utf8(&body) else {
        return error(400, "malformed", "rule document is not UTF-8");
    };
    match ts.put_rules(bearer(&headers), doc) {
        Ok(version) => Json(json!({ "version": version })).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn patch_rules(State(ts): State<Arc<TokenService>>, headers: HeaderMap, body: Bytes) -> Response {
    if let Err(e) = ts.authorize(bearer(&headers)) {
        return e.into_response();
    }
    let patch: RulePatch = match parse(&body) {
        Ok(p) => p,
        Err(resp) => return resp,
    };
    let scope: ScopePath = match patch.scope.parse() {
        Ok(s) => s,
        Err(e) => return AdminError::Rules(e).into_response(),
    };
    match ts.update_rules(bearer(&headers), patch.op, &scope, &patch.entry) {
        Ok(version) => Json(json!({ "version": version })).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn pubkey(State(ts): State<Arc<TokenService>>) -> Json<PubkeyBody> {
    let pk = ts.verifying_key();
    Json(PubkeyBody { pubkey: pk.to_hex(), scheme: VerifyingKey::SCHEME.into(), address: pk.address().to_string() })
}

async fn health(State(ts): State<Arc<TokenService>>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "rulesVersion": ts.rules_snapshot().version }))
}

pub fn router(ts: Arc<TokenService>) -> Router {
    Router::new()
        .route("/v1/token", post(issue_one))
        .route("/v1/tokens", post(issue_many))
        .route("/v1/rules", get(get_rules).put(put_rules).patch(patch_rules))
        .route("/v1/pubkey", get(pubkey))
        .route("/v1/health", get(health))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(ts)
}

/// Binds `addr` and serves until the future is dropped. The bound address
/// is reported through `on_bind`, which matters when binding port 0.
pub async fn serve(ts: Arc<TokenService>, addr: &str, on_bind: impl FnOnce(SocketAddr)) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    on_bind(listener.local_addr()?);
    axum::serve(listener, router(ts)).await
}
