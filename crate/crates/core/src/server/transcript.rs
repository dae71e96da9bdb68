use crate::crypto::{hash, Digest};
use crate::protocol::{Phase, Request, Response, Sender};

/// One handler invocation as the server observed it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub seq: u64,
    pub tick: u64,
    pub phase: Phase,
    pub kind: &'static str,
    pub sender: Sender,
    pub task_index: Option<u64>,
    pub request: Vec<u8>,
    pub response: Vec<u8>,
    pub outcome: &'static str,
}

impl TranscriptEntry {
    /// `seq tick phase kind sender task request-hex response-hex outcome`,
    /// tab separated.
    pub fn to_line(&self) -> String {
        let task = self
            .task_index
            .map_or_else(|| "-".to_string(), |i| i.to_string());
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.seq,
            self.tick,
            self.phase.tag(),
            self.kind,
            self.sender,
            task,
            hex::encode(&self.request),
            hex::encode(&self.response),
            self.outcome
        )
    }
}

/// Ordered record of everything the server has seen.
#[derive(Debug, Clone, Default)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn record(&mut self, tick: u64, sender: &Sender, request: &Request, response: &Response) {
        self.entries.push(TranscriptEntry {
            seq: self.entries.len() as u64,
            tick,
            phase: request.phase(),
            kind: request.kind(),
            sender: sender.clone(),
            task_index: request.task_index(),
            request: request.to_bytes(),
            response: response.to_bytes(),
            outcome: response.outcome(),
        });
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        out
    }

    pub fn digest(&self) -> Digest {
        hash(self.to_lines().as_bytes())
    }
}
