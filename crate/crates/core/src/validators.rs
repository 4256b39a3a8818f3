//! Runtime-verification validators run by the token service before issuing
//! method-scoped tokens. Each validator executes the requested call on a
//! private copy of the service's simulator; the copy is discarded.
//!
//! * `nversion` runs the call against every registered head and passes only
//!   if all heads produce the same return value, storage digest and
//!   transfer list.
//! * `ecf` traces the call and fails if any contract is entered while an
//!   earlier frame of the same contract is still live on the call stack.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{SimulatedCall, Simulator, TraceFrame, Transfer, Trap};
use crate::token::Address;

pub const NVERSION: &str = "nversion";
pub const ECF: &str = "ecf";

/// Validator names accepted in rule documents.
pub const KNOWN: [&str; 2] = [NVERSION, ECF];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatorVerdict {
    pub pass: bool,
    pub detail: String,
}

impl ValidatorVerdict {
    fn pass(detail: impl Into<String>) -> Self {
        ValidatorVerdict { pass: true, detail: detail.into() }
    }

    fn fail(detail: impl Into<String>) -> Self {
        ValidatorVerdict { pass: false, detail: detail.into() }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ValidatorError {
    #[error("n-version check needs at least two heads, got {0}")]
    TooFewHeads(usize),
    #[error("head {0} is not a registered contract")]
    UnknownHead(Address),
    #[error("heads do not share one method table")]
    MethodTableMismatch,
    #[error("target contract {0} is not registered")]
    UnknownTarget(Address),
}

/// Observable output of one head, with the head's own address replaced by
/// the zero address so that heads at different addresses compare equal.
#[derive(Debug, Clone, PartialEq, Eq)]
struct HeadOutput {
    result: Result<Vec<u8>, String>,
    storage_digest: [u8; 32],
    transfers: Vec<Transfer>,
}

fn normalize(t: &Transfer, head: &Address) -> Transfer {
    let swap = |a: Address| if a == *head { Address::ZERO } else { a };
    Transfer { from: swap(t.from), to: swap(t.to), amount: t.amount }
}

pub fn nversion_uniform(call: &SimulatedCall, heads: &[Address], sim: &Simulator) -> Result<ValidatorVerdict, ValidatorError> {
    if heads.len() < 2 {
        return Err(ValidatorError::TooFewHeads(heads.len()));
    }
    let first = sim.contract(&heads[0]).ok_or(ValidatorError::UnknownHead(heads[0]))?;
    let selectors: Vec<_> = first.methods.keys().copied().collect();
    for h in &heads[1..] {
        let c = sim.contract(h).ok_or(ValidatorError::UnknownHead(*h))?;
        if c.methods.keys().copied().collect::<Vec<_>>() != selectors {
            return Err(ValidatorError::MethodTableMismatch);
        }
    }

    let outputs: Vec<HeadOutput> = heads
        .iter()
        .map(|head| {
            let report = sim.simulate(&SimulatedCall { contract: *head, ..call.clone() });
            let storage_digest = report.post.contract(head).expect("head present").storage.digest();
            HeadOutput {
                result: report.result.map_err(|t| t.reason),
                storage_digest,
                transfers: report.transfers.iter().map(|t| normalize(t, head)).collect(),
            }
        })
        .collect();

    for (i, out) in outputs.iter().enumerate().skip(1) {
        let reference = &outputs[0];
        let what = if out.result != reference.result {
            "return value"
        } else if out.storage_digest != reference.storage_digest {
            "storage"
        } else if out.transfers != reference.transfers {
            "transfers"
        } else {
            continue;
        };
        return Ok(ValidatorVerdict::fail(format!(
            "head {i} ({}) diverges from head 0 ({}) in {what}",
            heads[i], heads[0]
        )));
    }
    Ok(ValidatorVerdict::pass(format!("{} heads agree", heads.len())))
}

fn frame_label(sim: &Simulator, f: &TraceFrame) -> String {
    let kind = sim.contract(&f.contract).map(|c| c.kind()).unwrap_or("?");
    format!("{kind}.{}", f.method)
}

/// Indices of frames that re-enter a contract already live on the stack,
/// each paired with the index of the earlier live frame.
pub fn reentrant_frames(trace: &[TraceFrame]) -> Vec<(usize, usize)> {
    let mut stack: Vec<usize> = Vec::new();
    let mut found = Vec::new();
    for (i, f) in trace.iter().enumerate() {
        stack.truncate(f.depth as usize);
        if let Some(&earlier) = stack.iter().find(|&&j| trace[j].contract == f.contract) {
            found.push((i, earlier));
        }
        stack.push(i);
    }
    found
}

pub fn ecf_check(call: &SimulatedCall, sim: &Simulator) -> Result<ValidatorVerdict, ValidatorError> {
    if sim.contract(&call.contract).is_none() {
        return Err(ValidatorError::UnknownTarget(call.contract));
    }
    let report = sim.simulate(call);
    let reentries = reentrant_frames(&report.trace);
    if !reentries.is_empty() {
        let paths: Vec<String> = reentries
            .iter()
            .map(|&(i, earlier)| {
                report.trace[earlier..=i]
                    .iter()
                    .filter(|f| f.depth >= report.trace[earlier].depth)
                    .map(|f| frame_label(&report.post, f))
                    .collect::<Vec<_>>()
                    .join(" → ")
            })
            .collect();
        return Ok(ValidatorVerdict::fail(format!("re-entrancy: {}", paths.join("; "))));
    }
    match report.result {
        Ok(_) => Ok(ValidatorVerdict::pass(format!("{} frames, no re-entry", report.trace.len()))),
        Err(Trap { reason, site }) => Ok(ValidatorVerdict::fail(format!(
            "execution trapped: {reason}{}",
            site.map(|s| format!(" at {s}")).unwrap_or_default()
        ))),
    }
}

/// Runs a validator and reports how long it took.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}
