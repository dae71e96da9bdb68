//! What the server can learn from its own transcript.
//!
//! These are structural stand-ins for unlinkability, each exactly checkable:
//! pseudonyms never span two phases or tasks, credit preimages never appear
//! before they are deposited, and two runs that differ only in whose secrets
//! are whose look the same once deposits are set aside.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::Serialize;

use crate::crypto::Digest;
use crate::protocol::{Phase, Request, Response, Sender};
use crate::server::{Transcript, TranscriptEntry};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct LinkageReport {
    /// Pseudonyms seen in more than one (phase, task) context.
    pub pseudonym_reuse: Vec<String>,
    pub pseudonyms_seen: usize,
    /// Deposited preimages checked against earlier non-deposit traffic.
    pub preimages_checked: usize,
    /// Preimages whose digest appeared before their deposit.
    pub preimages_leaked: usize,
    /// Tasks with exactly one accepted report: any deposit timing can tie
    /// that report to a depositor.
    pub linkable_by_cardinality: Vec<u64>,
}

impl LinkageReport {
    pub fn passes(&self) -> bool {
        self.pseudonym_reuse.is_empty() && self.preimages_leaked == 0
    }
}

pub fn linkage_analysis(transcript: &Transcript) -> LinkageReport {
    let mut report = LinkageReport::default();

    let mut contexts: BTreeMap<[u8; 16], BTreeSet<(Phase, Option<u64>)>> = BTreeMap::new();
    for e in transcript.entries() {
        if let Sender::Pseudonym(p) = &e.sender {
            contexts
                .entry(p.0)
                .or_default()
                .insert((e.phase, e.task_index));
        }
    }
    report.pseudonyms_seen = contexts.len();
    report.pseudonym_reuse = contexts
        .iter()
        .filter(|(_, ctx)| ctx.len() > 1)
        .map(|(pid, ctx)| format!("{} in {} contexts", hex::encode(pid), ctx.len()))
        .collect();

    let mut windows: HashSet<[u8; Digest::LEN]> = HashSet::new();
    let mut checked: HashSet<Vec<u8>> = HashSet::new();
    for e in transcript.entries() {
        if e.phase == Phase::CreditDeposit {
            if let Ok(Request::Deposit { preimage, .. }) = Request::from_bytes(&e.request) {
                if preimage.len() >= Digest::LEN && checked.insert(preimage.clone()) {
                    report.preimages_checked += 1;
                    let head: [u8; Digest::LEN] = preimage[..Digest::LEN].try_into().unwrap();
                    if windows.contains(&head) {
                        report.preimages_leaked += 1;
                    }
                }
            }
            continue;
        }
        for bytes in [&e.request, &e.response] {
            for w in bytes.windows(Digest::LEN) {
                windows.insert(w.try_into().unwrap());
            }
        }
    }

    let mut reports: BTreeMap<u64, usize> = BTreeMap::new();
    for e in transcript.entries() {
        if e.kind == "report" && e.outcome == "ok" {
            if let Some(i) = e.task_index {
                *reports.entry(i).or_default() += 1;
            }
        }
    }
    report.linkable_by_cardinality = reports
        .into_iter()
        .filter(|(_, n)| *n == 1)
        .map(|(i, _)| i)
        .collect();
    report
}

/// Multiset of message shapes the server sees outside the deposit phase:
/// phase, kind, task, outcome and item counts, without any field values.
pub fn structural_signature(transcript: &Transcript) -> BTreeMap<String, usize> {
    let mut sig = BTreeMap::new();
    for e in transcript.entries() {
        if e.phase == Phase::CreditDeposit {
            continue;
        }
        *sig.entry(shape(e)).or_default() += 1;
    }
    sig
}

fn shape(e: &TranscriptEntry) -> String {
    let sender = match e.sender {
        Sender::Pseudonym(_) => "pid",
        Sender::Real(_) => "rid",
    };
    let batch = match Request::from_bytes(&e.request) {
        Ok(Request::Report { batch, .. }) => batch.entries.len(),
        _ => 0,
    };
    let credits = match Response::from_bytes(&e.response) {
        Ok(Response::Credits(c)) => c.len(),
        _ => 0,
    };
    format!(
        "{}|{}|{}|{:?}|{}|batch={}|credits={}",
        e.phase.tag(),
        e.kind,
        sender,
        e.task_index,
        e.outcome,
        batch,
        credits
    )
}
