//! The sensing server: task windows, the protocol handlers, used-token ledgers
//! and credit accounts.
//!
//! Handlers run serially. Every call through [`Server::handle`] appends exactly
//! one transcript entry, whatever the outcome.
//!
//! Timestamps are validated against the window that was open when they were
//! issued. Closing a window expires every timestamp issued in it, which is what
//! makes releasing that window's credit ledger safe.

mod keys;
mod ledger;
mod transcript;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_bigint::BigUint;

use crate::crypto::{
    blind_sign_ts, decrypt_report, pbs_sign, pbs_verify, rsa_sign, rsa_verify, verify_ts,
    CryptoError, PbsKeyPair, ReportCiphertext, Timestamp,
};
use crate::protocol::{Phase, PublicParams, Request, Response, Sender, ServerError, ServerPort};
use crate::token::{
    make_report_identifier, parse_credit_preimage, rid_message, task_common_info, BlindedBatch,
    ReportToken, RequestToken, TaskDescriptor,
};

pub use keys::ServerKeys;
pub use ledger::{LedgerCounts, TokenLedger};
pub use transcript::{Transcript, TranscriptEntry};

/// Chooses how many credits a report earns. The server clamps the result to
/// the task's `[c_min, c_max]`.
pub trait CreditPolicy: Send + Sync {
    fn credits(&self, report: &[u8], task: &TaskDescriptor) -> u32;
}

/// Grants the same amount for every report.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy(pub u32);

impl CreditPolicy for ConstantPolicy {
    fn credits(&self, _report: &[u8], _task: &TaskDescriptor) -> u32 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServerConfig {
    /// Largest accepted age of a report timestamp, in ticks.
    pub ts_tolerance: u64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { ts_tolerance: 4 }
    }
}

/// Deliberate defects for negative-control experiments. Never set in normal
/// operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Faults {
    /// Skip every used-token check.
    pub disable_ledger: bool,
    /// Accept any identity signature embedded in a credit preimage.
    pub disable_rid_check: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskStatus {
    Open,
    Completed,
    Expired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowParams {
    pub c_min: u32,
    pub c_max: u32,
    /// Window lifetime in ticks. Task deadlines and credit validity end here.
    pub horizon: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskWindow {
    pub index: u64,
    pub opened_at: u64,
    pub closes_at: u64,
    pub closed_at: Option<u64>,
    pub tasks: Vec<TaskDescriptor>,
    pub status: Vec<TaskStatus>,
}

impl TaskWindow {
    /// First tick after the window's issuing period.
    pub fn end(&self) -> u64 {
        self.closed_at
            .map_or(self.closes_at, |c| (c + 1).min(self.closes_at))
    }

    pub fn is_closed(&self) -> bool {
        self.closed_at.is_some()
    }

    pub fn task_indexes(&self) -> impl Iterator<Item = u64> + '_ {
        self.tasks.iter().map(|t| t.index)
    }
}

/// Ledger sizes with the analytic bound and the baseline comparator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub struct StorageMetrics {
    pub counts: LedgerCounts,
    pub peak_total: usize,
    pub peak_credit: usize,
    pub window_size: u32,
    pub c_max: u32,
    pub bound: u64,
    pub baseline: u64,
}

/// Server-side tokens for one participant over one window: a request and a
/// report token per task plus up to `c_max` credits per task.
pub fn storage_bound(m: u32, c_max: u32) -> u64 {
    2 * m as u64 + m as u64 * c_max as u64
}

/// Commitments a participant stores per window in the comparison scheme.
pub fn baseline_commitments(m: u32, c_max: u32) -> u64 {
    m as u64 * (2 * c_max as u64 + 1)
}

pub struct Server {
    keys: Arc<ServerKeys>,
    config: ServerConfig,
    faults: Faults,
    policy: Box<dyn CreditPolicy>,
    clock: u64,
    window_size: Option<u32>,
    windows: Vec<TaskWindow>,
    ledger: TokenLedger,
    accounts: BTreeMap<Vec<u8>, u64>,
    transcript: Transcript,
    phase_time: BTreeMap<Phase, Duration>,
}

impl Server {
    pub fn new(keys: Arc<ServerKeys>, config: ServerConfig, policy: Box<dyn CreditPolicy>) -> Self {
        Self {
            keys,
            config,
            faults: Faults::default(),
            policy,
            clock: 0,
            window_size: None,
            windows: Vec::new(),
            ledger: TokenLedger::default(),
            accounts: BTreeMap::new(),
            transcript: Transcript::default(),
            phase_time: BTreeMap::new(),
        }
    }

    pub fn set_faults(&mut self, faults: Faults) {
        self.faults = faults;
    }

    pub fn keys(&self) -> &ServerKeys {
        &self.keys
    }

    /// Moves the clock forward; earlier ticks are ignored.
    pub fn advance_to(&mut self, tick: u64) {
        self.clock = self.clock.max(tick);
    }

    pub fn windows(&self) -> &[TaskWindow] {
        &self.windows
    }

    pub fn ledger(&self) -> &TokenLedger {
        &self.ledger
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn balance(&self, rid: &[u8]) -> u64 {
        self.accounts.get(rid).copied().unwrap_or(0)
    }

    pub fn accounts(&self) -> &BTreeMap<Vec<u8>, u64> {
        &self.accounts
    }

    /// Handler wall time per phase since the last call.
    pub fn take_phase_times(&mut self) -> BTreeMap<Phase, Duration> {
        std::mem::take(&mut self.phase_time)
    }

    pub fn publish_window(
        &mut self,
        m: u32,
        params: WindowParams,
        sdr_query: &[u8],
    ) -> Result<TaskWindow, ServerError> {
        if m == 0 {
            return Err(ServerError::InvalidWindow(
                "window must hold at least one task".into(),
            ));
        }
        if params.c_min == 0 || params.c_min > params.c_max {
            return Err(ServerError::InvalidWindow(format!(
                "credit range [{}, {}]",
                params.c_min, params.c_max
            )));
        }
        if params.horizon == 0 {
            return Err(ServerError::InvalidWindow("zero horizon".into()));
        }
        if let Some(fixed) = self.window_size {
            if fixed != m {
                return Err(ServerError::InvalidWindow(format!(
                    "window size is fixed at {fixed}"
                )));
            }
        }
        let opened_at = match self.windows.last() {
            Some(w) if !w.is_closed() => return Err(ServerError::WindowStillOpen),
            Some(w) => self.clock.max(w.end()),
            None => self.clock,
        };
        let k = self.windows.len() as u64;
        let closes_at = opened_at + params.horizon;
        let tasks: Vec<TaskDescriptor> = (1..=m as u64)
            .map(|j| {
                let index = k * m as u64 + j;
                let mut requirements = sdr_query.to_vec();
                requirements.extend_from_slice(format!("#{index}").as_bytes());
                TaskDescriptor {
                    index,
                    window: k,
                    requirements,
                    deadline: Timestamp(closes_at),
                    c_min: params.c_min,
                    c_max: params.c_max,
                }
            })
            .collect();
        let window = TaskWindow {
            index: k,
            opened_at,
            closes_at,
            closed_at: None,
            status: vec![TaskStatus::Open; tasks.len()],
            tasks,
        };
        self.window_size = Some(m);
        self.windows.push(window.clone());
        Ok(window)
    }

    fn locate(&self, task: u64) -> Option<(usize, usize)> {
        let m = self.window_size? as u64;
        if task == 0 {
            return None;
        }
        let k = ((task - 1) / m) as usize;
        let pos = ((task - 1) % m) as usize;
        (k < self.windows.len()).then_some((k, pos))
    }

    pub fn task(&self, index: u64) -> Option<&TaskDescriptor> {
        self.locate(index)
            .map(|(k, pos)| &self.windows[k].tasks[pos])
    }

    pub fn task_status(&self, index: u64) -> Option<TaskStatus> {
        self.locate(index)
            .map(|(k, pos)| self.windows[k].status[pos])
    }

    fn open_task(&self, index: u64) -> Result<(&TaskWindow, &TaskDescriptor), ServerError> {
        let (k, pos) = self.locate(index).ok_or(ServerError::UnknownTask(index))?;
        let w = &self.windows[k];
        let open = w.status[pos] == TaskStatus::Open
            && !w.is_closed()
            && self.clock >= w.opened_at
            && self.clock < w.closes_at;
        if !open {
            return Err(ServerError::TaskClosed(index));
        }
        Ok((w, &w.tasks[pos]))
    }

    /// Marks a task completed and releases its request and report tokens.
    pub fn complete_task(&mut self, index: u64) -> Result<(), ServerError> {
        let (k, pos) = self.locate(index).ok_or(ServerError::UnknownTask(index))?;
        let status = &mut self.windows[k].status[pos];
        if *status == TaskStatus::Open {
            *status = TaskStatus::Completed;
        }
        self.ledger.release_task(index);
        Ok(())
    }

    /// Closes window `k` and releases its credit ledger. Every timestamp issued
    /// in the window is expired from now on.
    pub fn expire_window(&mut self, k: u64) -> Result<(), ServerError> {
        let now = self.clock;
        let w = self
            .windows
            .get_mut(k as usize)
            .ok_or(ServerError::UnknownWindow(k))?;
        if w.is_closed() {
            return Ok(());
        }
        if now < w.closes_at && w.status.contains(&TaskStatus::Open) {
            return Err(ServerError::WindowNotFinished(k));
        }
        for s in &mut w.status {
            if *s == TaskStatus::Open {
                *s = TaskStatus::Expired;
            }
        }
        w.closed_at = Some(now);
        let tasks: Vec<u64> = w.task_indexes().collect();
        for i in tasks {
            self.ledger.release_task(i);
        }
        self.ledger.release_window_credits(k);
        Ok(())
    }

    pub fn storage_metrics(&self) -> StorageMetrics {
        let m = self.window_size.unwrap_or(0);
        let c_max = self
            .windows
            .last()
            .and_then(|w| w.tasks.iter().map(|t| t.c_max).max())
            .unwrap_or(0);
        StorageMetrics {
            counts: self.ledger.counts(),
            peak_total: self.ledger.peak_total(),
            peak_credit: self.ledger.peak_credit(),
            window_size: m,
            c_max,
            bound: storage_bound(m, c_max),
            baseline: baseline_commitments(m, c_max),
        }
    }

    /// Dispatches one request and records it in the transcript.
    pub fn handle(&mut self, from: &Sender, request: Request) -> Response {
        let started = Instant::now();
        let response = match self.dispatch(&request) {
            Ok(r) => r,
            Err(e) => Response::Rejected(e),
        };
        *self.phase_time.entry(request.phase()).or_default() += started.elapsed();
        self.transcript
            .record(self.clock, from, &request, &response);
        response
    }

    fn dispatch(&mut self, request: &Request) -> Result<Response, ServerError> {
        match request {
            Request::Identity { rid } => Ok(Response::IdentitySignature(rsa_sign(
                &self.keys.rsa,
                rid_message(rid).as_bytes(),
            ))),
            Request::IssueRequestToken {
                task_index,
                blinded,
            } => {
                self.open_task(*task_index)?;
                issue_pbs(&self.keys.k1, blinded, *task_index)
            }
            Request::TaskRequest { token } => self.task_request(token),
            Request::IssueReportToken {
                task_index,
                blinded,
            } => {
                self.open_task(*task_index)?;
                issue_pbs(&self.keys.k2, blinded, *task_index)
            }
            Request::Report {
                token,
                batch,
                timestamp,
                ciphertext,
            } => self.report(token, batch, *timestamp, ciphertext),
            Request::Deposit {
                rid,
                timestamp,
                preimage,
                signature,
            } => self.deposit(rid, *timestamp, preimage, signature),
        }
    }

    fn task_request(&mut self, token: &RequestToken) -> Result<Response, ServerError> {
        let i = token.task_index;
        let (_, task) = self.open_task(i)?;
        let c_max = task.c_max;
        if !pbs_verify(
            &self.keys.k1.public(),
            token.identifier.as_bytes(),
            &task_common_info(i),
            &token.signature,
        ) {
            return Err(ServerError::InvalidSignature);
        }
        if !self.faults.disable_ledger && self.ledger.contains_request(i, &token.identifier) {
            return Err(ServerError::ReusedRequestToken);
        }
        self.ledger.insert_request(i, token.identifier);
        Ok(Response::Price { c_max })
    }

    fn report(
        &mut self,
        token: &ReportToken,
        batch: &BlindedBatch,
        ts: Timestamp,
        ciphertext: &ReportCiphertext,
    ) -> Result<Response, ServerError> {
        let i = token.task_index;
        let (window, task) = self.open_task(i)?;
        let task = task.clone();
        let window_start = window.opened_at;
        let n = &self.keys.rsa.n;
        if batch.task_index != i
            || batch.c_max != task.c_max
            || batch.validate(n).is_err()
            || make_report_identifier(batch) != token.identifier
        {
            return Err(ServerError::BatchMismatch);
        }
        if !pbs_verify(
            &self.keys.k2.public(),
            token.identifier.as_bytes(),
            &task_common_info(i),
            &token.signature,
        ) {
            return Err(ServerError::InvalidSignature);
        }
        if !self.faults.disable_ledger && self.ledger.contains_report(i, &token.identifier) {
            return Err(ServerError::ReusedReportToken);
        }
        let now = self.clock;
        if ts.0 > now || now - ts.0 > self.config.ts_tolerance || ts.0 < window_start {
            return Err(ServerError::StaleTimestamp);
        }
        let report = decrypt_report(&self.keys.rsa, ciphertext)
            .map_err(|_| ServerError::DecryptionFailure)?;
        let c = self
            .policy
            .credits(&report, &task)
            .clamp(task.c_min, task.c_max);
        self.ledger.insert_report(i, token.identifier);
        let sigs = batch.entries[..c as usize]
            .iter()
            .map(|mu| blind_sign_ts(&self.keys.rsa, mu, ts).map_err(signing_error))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Response::Credits(sigs))
    }

    /// Window that issued timestamp `ts`, if its credits are still valid.
    fn live_window_for(&self, ts: Timestamp) -> Option<&TaskWindow> {
        let w = self.windows.iter().rev().find(|w| w.opened_at <= ts.0)?;
        let live = ts.0 < w.end() && !w.is_closed() && self.clock < w.closes_at;
        live.then_some(w)
    }

    fn deposit(
        &mut self,
        rid: &[u8],
        ts: Timestamp,
        m: &[u8],
        sig: &BigUint,
    ) -> Result<Response, ServerError> {
        let k = self
            .live_window_for(ts)
            .ok_or(ServerError::ExpiredTimestamp)?
            .index;
        let pk = self.keys.rsa.public();
        if !verify_ts(&pk.n, &pk.e, m, ts, sig) {
            return Err(ServerError::InvalidSignature);
        }
        let (_, rid_sig) = parse_credit_preimage(m).map_err(|_| ServerError::IdentityMismatch)?;
        if !self.faults.disable_rid_check
            && !rsa_verify(&pk.n, &pk.e, rid_message(rid).as_bytes(), &rid_sig)
        {
            return Err(ServerError::IdentityMismatch);
        }
        if !self.faults.disable_ledger && self.ledger.contains_credit(k, m) {
            return Err(ServerError::DoubleDeposit);
        }
        self.ledger.insert_credit(k, m.to_vec());
        *self.accounts.entry(rid.to_vec()).or_default() += 1;
        Ok(Response::Deposited)
    }
}

fn issue_pbs(key: &PbsKeyPair, blinded: &BigUint, i: u64) -> Result<Response, ServerError> {
    pbs_sign(key, blinded, &task_common_info(i))
        .map(Response::BlindSignature)
        .map_err(signing_error)
}

fn signing_error(e: CryptoError) -> ServerError {
    match e {
        CryptoError::MessageOutOfRange => ServerError::MalformedMessage(e.to_string()),
        other => ServerError::Signing(other.to_string()),
    }
}

impl ServerPort for Server {
    fn call(&mut self, from: &Sender, request: Request) -> Response {
        self.handle(from, request)
    }

    fn now(&self) -> Timestamp {
        Timestamp(self.clock)
    }

    fn public_params(&self) -> PublicParams {
        self.keys.public_params()
    }

    fn task(&self, index: u64) -> Option<TaskDescriptor> {
        Server::task(self, index).cloned()
    }
}
