//! Contract-side token verification.

use std::sync::Arc;

use crate::bitmap::{BitmapState, Check};
use crate::crypto::Verifier;
use crate::token::{extract_token_metered, Address, MethodId, TokenType, ADDRESS_LEN};

use super::CostMeter;

/// Transaction context visible to the frame being entered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxContext {
    pub origin: Address,
    pub msg_sender: Address,
    pub msg_sig: Option<MethodId>,
    pub msg_data: Vec<u8>,
    pub depth: u32,
}

/// Token check state attached to a guarded contract.
#[derive(Debug, Clone)]
pub struct Guard {
    pub verifier: Arc<dyn Verifier>,
    pub bitmap: BitmapState,
}

impl Guard {
    pub fn new(verifier: Arc<dyn Verifier>, bitmap_bits: u64) -> Self {
        Guard { verifier, bitmap: BitmapState::new(bitmap_bits.max(1)).expect("non-zero bitmap") }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuardOutcome {
    Pass,
    NotFound,
    Malformed,
    Expired,
    /// One-time index already used in the window.
    Reused,
    /// One-time index behind the window; the holder must re-apply.
    Missed,
    BadSignature,
}

impl GuardOutcome {
    pub fn passed(self) -> bool {
        self == GuardOutcome::Pass
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GuardOutcome::Pass => "pass",
            GuardOutcome::NotFound => "token not found",
            GuardOutcome::Malformed => "malformed token array",
            GuardOutcome::Expired => "expired",
            GuardOutcome::Reused => "one-time token already used",
            GuardOutcome::Missed => "one-time token missed, re-apply",
            GuardOutcome::BadSignature => "bad signature",
        }
    }
}

/// Abstract cost weights for guard work, loosely shaped after EVM pricing:
/// a signature recovery, one storage write, and a per-32-byte-word charge
/// for bytes read or hashed.
pub const SIG_VERIFY_UNITS: u64 = 3000;
pub const STORAGE_WRITE_UNITS: u64 = 5000;
pub const WORD_UNITS: u64 = 3;

fn word_units(bytes: usize) -> u64 {
    bytes.div_ceil(32) as u64 * WORD_UNITS
}

/// Rebuilds the signed data from the transaction context:
/// `type ∥ expire ∥ index ∥ self ∥ origin`, then `∥ len ∥ msg.sig` for
/// method tokens and additionally `∥ msg.data` for argument tokens. The
/// layout matches the request payload the service signed, with the contract
/// address in the `cAddr` slot and the originator in the `sAddr` slot.
pub fn reconstruct_signed_data(
    token_type: TokenType,
    expire: u32,
    index: i128,
    ctx: &TxContext,
    this: &Address,
) -> Option<Vec<u8>> {
    let mut data = Vec::with_capacity(21 + 2 * ADDRESS_LEN + 14 + ctx.msg_data.len());
    data.push(token_type.tag());
    data.extend_from_slice(&expire.to_be_bytes());
    data.extend_from_slice(&index.to_be_bytes());
    data.extend_from_slice(&this.0);
    data.extend_from_slice(&ctx.origin.0);
    match token_type {
        TokenType::Super => {}
        TokenType::Method | TokenType::Argument => {
            let sig = ctx.msg_sig?.string_form();
            data.extend_from_slice(&(sig.len() as u32).to_be_bytes());
            data.extend_from_slice(sig.as_bytes());
            if token_type == TokenType::Argument {
                data.extend_from_slice(&ctx.msg_data);
            }
        }
    }
    Some(data)
}

/// Verifies the token for `this` carried in `token_array` against the frame
/// context. A one-time index is marked only after the signature checks out;
/// the caller rolls the mark back if the transaction later reverts.
pub fn verify_token_onchain(
    ctx: &TxContext,
    this: &Address,
    guard: &mut Guard,
    token_array: &[u8],
    now: u32,
    meter: &mut CostMeter,
) -> GuardOutcome {
    let extracted = extract_token_metered(token_array, this);
    meter.bytes_parsed += extracted.bytes_scanned as u64;
    meter.guard_units += word_units(extracted.bytes_scanned);
    let token = match extracted.token {
        Ok(t) => t,
        Err(crate::token::TokenError::NotFound(_)) => return GuardOutcome::NotFound,
        Err(_) => return GuardOutcome::Malformed,
    };
    if now > token.expire {
        return GuardOutcome::Expired;
    }
    let one_time = if token.index >= 0 {
        let Ok(index) = u64::try_from(token.index) else {
            return GuardOutcome::Missed;
        };
        if index < guard.bitmap.start() {
            return GuardOutcome::Missed;
        }
        if !guard.bitmap.is_unused(index) {
            return GuardOutcome::Reused;
        }
        Some(index)
    } else {
        None
    };
    let Some(data) = reconstruct_signed_data(token.token_type, token.expire, token.index, ctx, this) else {
        return GuardOutcome::BadSignature;
    };
    meter.bytes_parsed += data.len() as u64;
    meter.guard_units += word_units(data.len());
    meter.sig_verifies += 1;
    meter.guard_units += SIG_VERIFY_UNITS;
    if !guard.verifier.verify(&data, &token.signature) {
        return GuardOutcome::BadSignature;
    }
    if let Some(index) = one_time {
        let check = guard.bitmap.check_and_mark(index);
        debug_assert_eq!(check, Check::Accepted);
        meter.storage_writes += 1;
        meter.guard_units += STORAGE_WRITE_UNITS;
    }
    GuardOutcome::Pass
}
