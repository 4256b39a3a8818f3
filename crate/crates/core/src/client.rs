//! Client flow: obtain a token for every guarded contract the intended call
//! chain touches, pack them into a token array, then sign and submit the
//! transaction.

use thiserror::Error;

use crate::crypto::KeyPair;
use crate::service::{IssueError, RequestEnvelope, TokenService};
use crate::sim::{Receipt, Simulator, Transaction, TxError};
use crate::token::{encode_token_array, Address, ArgPair, MethodId, Token, TokenError};

#[derive(Debug, Error)]
pub enum ClientError {
    /// The service refused the request; `reason` is passed through as is.
    #[error("token request for {contract} refused ({status}): {reason}")]
    Refused { contract: Address, status: u16, reason: String },
    #[error("token service unreachable: {0}")]
    Transport(String),
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error(transparent)]
    Tx(#[from] TxError),
}

/// Anything that hands out tokens: an in-process service or a remote one.
pub trait TokenSource {
    fn fetch(&self, request: &RequestEnvelope) -> Result<Token, ClientError>;
}

impl TokenSource for TokenService {
    fn fetch(&self, request: &RequestEnvelope) -> Result<Token, ClientError> {
        self.issue_envelope(request).map(|i| i.token).map_err(|e| match e {
            IssueError::Shape(t) => ClientError::Token(t),
            other => ClientError::Refused { contract: request.request.contract, status: other.status(), reason: other.reason() },
        })
    }
}

impl<T: TokenSource + ?Sized> TokenSource for &T {
    fn fetch(&self, request: &RequestEnvelope) -> Result<Token, ClientError> {
        (**self).fetch(request)
    }
}

/// The top-level call of a transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxCall {
    pub target: Address,
    /// `None` calls the target's fallback.
    pub method: Option<MethodId>,
    pub args: Vec<ArgPair>,
    pub value: u128,
}

impl TxCall {
    pub fn new(target: Address, signature: &str, args: Vec<ArgPair>) -> Self {
        TxCall { target, method: Some(MethodId::from_signature(signature)), args, value: 0 }
    }

    pub fn value(mut self, value: u128) -> Self {
        self.value = value;
        self
    }
}

/// Fetches one token per request, keyed by the request's contract.
pub fn fetch_tokens(source: &dyn TokenSource, requests: &[RequestEnvelope]) -> Result<Vec<(Address, Token)>, ClientError> {
    requests.iter().map(|r| source.fetch(r).map(|t| (r.request.contract, t))).collect()
}

/// Signs and submits `call` carrying `tokens`, using the sender's next
/// nonce. A reverted transaction is still a receipt.
pub fn send_with_tokens(sim: &mut Simulator, key: &KeyPair, tokens: &[(Address, Token)], call: &TxCall) -> Result<Receipt, ClientError> {
    let array = encode_token_array(tokens)?;
    let nonce = sim.account(&key.address()).nonce;
    let tx = Transaction::signed(key, nonce, call.target, call.method, &call.args, call.value, array);
    Ok(sim.submit_transaction(&tx)?)
}

pub fn request_and_send(
    source: &dyn TokenSource,
    sim: &mut Simulator,
    key: &KeyPair,
    requests: &[RequestEnvelope],
    call: &TxCall,
) -> Result<Receipt, ClientError> {
    let tokens = fetch_tokens(source, requests)?;
    send_with_tokens(sim, key, &tokens, call)
}
