//! Token-based access control for smart contracts.
//!
//! An off-chain token service evaluates access-control rules and issues
//! signed 86-byte capability tokens; guarded contracts in the bundled chain
//! simulator verify those tokens on every externally reachable call.

pub mod bitmap;
pub mod client;
pub mod crypto;
pub mod rules;
pub mod scenario;
pub mod service;
pub mod sim;
pub mod throughput;
pub mod token;
pub mod validators;

pub use bitmap::{required_bits, BitmapState, Check};
pub use crypto::{KeyPair, Signature, Signer, Verifier, VerifyingKey};
pub use rules::{Decision, RuleSet};
pub use sim::{Receipt, Simulator, Transaction};
pub use token::{Address, ArgPair, MethodId, Token, TokenRequest, TokenType};
