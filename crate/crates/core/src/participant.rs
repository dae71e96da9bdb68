//! The sensing participant: secrets, pseudonym rotation, the three phase
//! clients and the credit wallet.
//!
//! Each task uses two fresh pseudonyms, one for the task request and one for
//! the report. The real identity appears only in the one-time identity request
//! and in deposits. Every signature received from the server is verified
//! before use.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use thiserror::Error;

use crate::crypto::{
    blind, encrypt_report, pbs_blind, pbs_verify, rsa_verify, unblind, verify_ts, BlindingFactor,
    CryptoError, Digest, Timestamp,
};
use crate::protocol::{Request, Response, Sender, ServerError, ServerPort};
use crate::token::{
    make_blind_factor, make_credit_preimage, make_report_identifier, make_request_identifier,
    rid_message, task_common_info, BlindedBatch, CreditToken, Identity, Pseudonym, ReportToken,
    RequestToken, TokenError,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParticipantError {
    #[error("task {0} was already requested")]
    DuplicateTaskRequest(u64),
    #[error("no session for task {0}")]
    NoSession(u64),
    #[error("report for task {0} was already submitted")]
    DuplicateReport(u64),
    #[error("identity signature not yet acquired")]
    NoIdentity,
    #[error("server rejected the request: {0}")]
    ServerRejected(ServerError),
    #[error("unexpected server response: {0}")]
    UnexpectedResponse(String),
    #[error("server returned a signature that does not verify")]
    InvalidServerSignature,
    #[error("no credit tokens for task {0}")]
    EmptyWallet(u64),
    #[error("credit token not in wallet")]
    NotInWallet,
    #[error("{count} deposits with gap at least {gap_min} do not fit before tick {deadline}")]
    HorizonTooTight {
        count: usize,
        gap_min: u64,
        deadline: u64,
    },
    #[error("deposit gap range [{0}, {1}] is invalid")]
    InvalidGaps(u64, u64),
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// The three secret numbers `r1, r2, r3`, fixed for the participant's life.
#[derive(Clone, PartialEq, Eq)]
pub struct Secrets {
    pub r1: Vec<u8>,
    pub r2: Vec<u8>,
    pub r3: Vec<u8>,
}

impl Secrets {
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut draw = || {
            let mut b = vec![0u8; 32];
            rng.fill_bytes(&mut b);
            b
        };
        Self {
            r1: draw(),
            r2: draw(),
            r3: draw(),
        }
    }
}

impl std::fmt::Debug for Secrets {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Secrets(..)")
    }
}

/// Per-task client state.
#[derive(Debug, Clone)]
pub struct TaskSession {
    pub task_index: u64,
    pub deadline: Timestamp,
    pub tau: Digest,
    pub request_token: RequestToken,
    pub c_max: u32,
    pub pid_request: Pseudonym,
    pub pid_report: Option<Pseudonym>,
    pub blinding: Vec<BlindingFactor>,
    pub preimages: Vec<Vec<u8>>,
    pub batch: Option<BlindedBatch>,
    pub report_token: Option<ReportToken>,
    pub granted: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalletEntry {
    pub task_index: u64,
    pub token: CreditToken,
}

/// Bounds for the uniform integer gap between consecutive deposits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DepositGaps {
    pub min: u64,
    pub max: u64,
}

impl Default for DepositGaps {
    fn default() -> Self {
        Self { min: 1, max: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParticipantSnapshot {
    pub rid: String,
    pub pseudonyms: usize,
    pub sessions: usize,
    pub granted: u64,
    pub deposited: u64,
    pub wallet: usize,
    pub wallet_peak: usize,
}

pub struct Participant {
    identity: Identity,
    secrets: Secrets,
    rng: ChaCha20Rng,
    wallet: Vec<WalletEntry>,
    sessions: BTreeMap<u64, TaskSession>,
    pseudonyms: Vec<Pseudonym>,
    used_pseudonyms: BTreeSet<Pseudonym>,
    embedded_rid_sig: Option<BigUint>,
    granted: u64,
    deposited: u64,
    wallet_peak: usize,
}

impl Participant {
    /// Secrets and all later randomness come from `seed`.
    pub fn new(rid: impl Into<Vec<u8>>, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let secrets = Secrets::random(&mut rng);
        Self::with_rng(rid.into(), secrets, rng)
    }

    pub fn with_secrets(rid: impl Into<Vec<u8>>, secrets: Secrets, seed: u64) -> Self {
        Self::with_rng(rid.into(), secrets, ChaCha20Rng::seed_from_u64(seed))
    }

    fn with_rng(rid: Vec<u8>, secrets: Secrets, rng: ChaCha20Rng) -> Self {
        Self {
            identity: Identity::new(rid),
            secrets,
            rng,
            wallet: Vec::new(),
            sessions: BTreeMap::new(),
            pseudonyms: Vec::new(),
            used_pseudonyms: BTreeSet::new(),
            embedded_rid_sig: None,
            granted: 0,
            deposited: 0,
            wallet_peak: 0,
        }
    }

    pub fn rid(&self) -> &[u8] {
        &self.identity.rid
    }

    pub fn identity(&self) -> &Identity {
        &self.identity
    }

    pub fn secrets(&self) -> &Secrets {
        &self.secrets
    }

    pub fn wallet(&self) -> &[WalletEntry] {
        &self.wallet
    }

    pub fn wallet_peak(&self) -> usize {
        self.wallet_peak
    }

    pub fn sessions(&self) -> &BTreeMap<u64, TaskSession> {
        &self.sessions
    }

    /// Pseudonyms in order of first use.
    pub fn pseudonyms(&self) -> &[Pseudonym] {
        &self.pseudonyms
    }

    /// Total credits granted across all reports.
    pub fn granted(&self) -> u64 {
        self.granted
    }

    /// Credits accepted by the server.
    pub fn deposited(&self) -> u64 {
        self.deposited
    }

    /// Embeds another identity signature in future credit preimages instead
    /// of this participant's own. Only useful for building attacks.
    pub fn embed_rid_signature(&mut self, sig: BigUint) {
        self.embedded_rid_sig = Some(sig);
    }

    pub fn snapshot(&self) -> ParticipantSnapshot {
        ParticipantSnapshot {
            rid: String::from_utf8_lossy(&self.identity.rid).into_owned(),
            pseudonyms: self.pseudonyms.len(),
            sessions: self.sessions.len(),
            granted: self.granted,
            deposited: self.deposited,
            wallet: self.wallet.len(),
            wallet_peak: self.wallet_peak,
        }
    }

    fn fresh_pseudonym(&mut self) -> Pseudonym {
        loop {
            let pid = Pseudonym::random(&mut self.rng);
            if self.used_pseudonyms.insert(pid) {
                self.pseudonyms.push(pid);
                return pid;
            }
        }
    }

    /// Obtains `sign_d(H(RID))` once; later calls return the stored value.
    pub fn acquire_identity_signature(
        &mut self,
        port: &mut dyn ServerPort,
    ) -> Result<BigUint, ParticipantError> {
        if let Some(sig) = &self.identity.rid_signature {
            return Ok(sig.clone());
        }
        let from = Sender::Real(self.identity.rid.clone());
        let resp = port.call(
            &from,
            Request::Identity {
                rid: self.identity.rid.clone(),
            },
        );
        let sig = match resp {
            Response::IdentitySignature(s) => s,
            other => return Err(unexpected(other)),
        };
        let pk = port.public_params().rsa;
        if !rsa_verify(
            &pk.n,
            &pk.e,
            rid_message(&self.identity.rid).as_bytes(),
            &sig,
        ) {
            return Err(ParticipantError::InvalidServerSignature);
        }
        self.identity.rid_signature = Some(sig.clone());
        Ok(sig)
    }

    /// Task request phase under a fresh pseudonym. Returns the offered `c_max`.
    pub fn request_task(
        &mut self,
        i: u64,
        port: &mut dyn ServerPort,
    ) -> Result<u32, ParticipantError> {
        if self.sessions.contains_key(&i) {
            return Err(ParticipantError::DuplicateTaskRequest(i));
        }
        let deadline = port
            .task(i)
            .ok_or(ParticipantError::ServerRejected(ServerError::UnknownTask(
                i,
            )))?
            .deadline;
        let k1 = port.public_params().k1;
        let info = task_common_info(i);
        let pid = self.fresh_pseudonym();
        let from = Sender::Pseudonym(pid);

        let tau = make_request_identifier(i, &self.secrets.r1)?;
        let z = BlindingFactor::random(&k1.n, &mut self.rng);
        let blinded = pbs_blind(&k1, tau.as_bytes(), &info, &z)?;
        let sig = match port.call(
            &from,
            Request::IssueRequestToken {
                task_index: i,
                blinded,
            },
        ) {
            Response::BlindSignature(s) => unblind(&s, &z, &k1.n),
            other => return Err(unexpected(other)),
        };
        if !pbs_verify(&k1, tau.as_bytes(), &info, &sig) {
            return Err(ParticipantError::InvalidServerSignature);
        }
        let token = RequestToken {
            task_index: i,
            identifier: tau,
            signature: sig,
        };
        let c_max = match port.call(
            &from,
            Request::TaskRequest {
                token: token.clone(),
            },
        ) {
            Response::Price { c_max } => c_max,
            other => return Err(unexpected(other)),
        };
        self.sessions.insert(
            i,
            TaskSession {
                task_index: i,
                deadline,
                tau,
                request_token: token,
                c_max,
                pid_request: pid,
                pid_report: None,
                blinding: Vec::new(),
                preimages: Vec::new(),
                batch: None,
                report_token: None,
                granted: None,
            },
        );
        Ok(c_max)
    }

    /// Report phase under a second fresh pseudonym. Returns the granted `c`;
    /// the wallet grows by exactly that many tokens.
    pub fn submit_report(
        &mut self,
        i: u64,
        report: &[u8],
        port: &mut dyn ServerPort,
    ) -> Result<u32, ParticipantError> {
        let c_max = {
            let s = self
                .sessions
                .get(&i)
                .ok_or(ParticipantError::NoSession(i))?;
            if s.report_token.is_some() {
                return Err(ParticipantError::DuplicateReport(i));
            }
            s.c_max
        };
        let rid_sig = match (&self.embedded_rid_sig, &self.identity.rid_signature) {
            (Some(s), _) | (None, Some(s)) => s.clone(),
            (None, None) => return Err(ParticipantError::NoIdentity),
        };
        let params = port.public_params();
        let (rsa, k2) = (&params.rsa, &params.k2);

        let mut preimages = Vec::with_capacity(c_max as usize);
        let mut blinding = Vec::with_capacity(c_max as usize);
        let mut entries = Vec::with_capacity(c_max as usize);
        for j in 1..=c_max {
            let m = make_credit_preimage(i, j, &self.secrets.r2, &rid_sig)?;
            let z = make_blind_factor(i, j, &self.secrets.r3, &rsa.n)?;
            entries.push(blind(&m, &z, &rsa.n, &rsa.e));
            preimages.push(m);
            blinding.push(z);
        }
        let batch = BlindedBatch {
            task_index: i,
            entries,
            c_max,
        };
        let b = make_report_identifier(&batch);

        let pid = self.fresh_pseudonym();
        let from = Sender::Pseudonym(pid);
        let info = task_common_info(i);
        let z = BlindingFactor::random(&k2.n, &mut self.rng);
        let blinded = pbs_blind(k2, b.as_bytes(), &info, &z)?;
        let sig = match port.call(
            &from,
            Request::IssueReportToken {
                task_index: i,
                blinded,
            },
        ) {
            Response::BlindSignature(s) => unblind(&s, &z, &k2.n),
            other => return Err(unexpected(other)),
        };
        if !pbs_verify(k2, b.as_bytes(), &info, &sig) {
            return Err(ParticipantError::InvalidServerSignature);
        }
        let token = ReportToken {
            task_index: i,
            identifier: b,
            signature: sig,
        };
        let ciphertext = encrypt_report(rsa, report, &mut self.rng)?;
        let ts = port.now();
        let sigs = match port.call(
            &from,
            Request::Report {
                token: token.clone(),
                batch: batch.clone(),
                timestamp: ts,
                ciphertext,
            },
        ) {
            Response::Credits(sigs) => sigs,
            other => return Err(unexpected(other)),
        };
        if sigs.len() > c_max as usize {
            return Err(ParticipantError::UnexpectedResponse(format!(
                "{} credits for c_max {c_max}",
                sigs.len()
            )));
        }
        let mut fresh = Vec::with_capacity(sigs.len());
        for (j, sb) in sigs.iter().enumerate() {
            let s = unblind(sb, &blinding[j], &rsa.n);
            if !verify_ts(&rsa.n, &rsa.e, &preimages[j], ts, &s) {
                return Err(ParticipantError::InvalidServerSignature);
            }
            fresh.push(WalletEntry {
                task_index: i,
                token: CreditToken {
                    preimage: preimages[j].clone(),
                    timestamp: ts,
                    signature: s,
                },
            });
        }
        let c = fresh.len() as u32;
        self.wallet.extend(fresh);
        self.wallet_peak = self.wallet_peak.max(self.wallet.len());
        self.granted += c as u64;

        let s = self.sessions.get_mut(&i).expect("session checked above");
        s.pid_report = Some(pid);
        s.blinding = blinding;
        s.preimages = preimages;
        s.batch = Some(batch);
        s.report_token = Some(token);
        s.granted = Some(c);
        Ok(c)
    }

    /// Spreads the wallet tokens of task `i` over strictly increasing ticks
    /// after `now`, with gaps uniform in `[gaps.min, gaps.max]`, all before
    /// the task's deadline. Gaps shrink only when needed to fit.
    pub fn schedule_deposits<R: Rng + ?Sized>(
        &self,
        i: u64,
        now: Timestamp,
        gaps: DepositGaps,
        rng: &mut R,
    ) -> Result<Vec<(u64, CreditToken)>, ParticipantError> {
        if gaps.min == 0 || gaps.min > gaps.max {
            return Err(ParticipantError::InvalidGaps(gaps.min, gaps.max));
        }
        let session = self
            .sessions
            .get(&i)
            .ok_or(ParticipantError::NoSession(i))?;
        let tokens: Vec<&CreditToken> = self
            .wallet
            .iter()
            .filter(|w| w.task_index == i)
            .map(|w| &w.token)
            .collect();
        if tokens.is_empty() {
            return Err(ParticipantError::EmptyWallet(i));
        }
        let count = tokens.len() as u64;
        let last = session.deadline.0.saturating_sub(1);
        let too_tight = ParticipantError::HorizonTooTight {
            count: tokens.len(),
            gap_min: gaps.min,
            deadline: session.deadline.0,
        };
        let needed = count.checked_mul(gaps.min).ok_or(too_tight.clone())?;
        if now.0.saturating_add(needed) > last {
            return Err(too_tight);
        }
        let mut t = now.0;
        let mut out = Vec::with_capacity(tokens.len());
        for (k, token) in tokens.into_iter().enumerate() {
            let after = count - k as u64 - 1;
            let room = last - t - after * gaps.min;
            let gap = rng.random_range(gaps.min..=gaps.max.min(room));
            t += gap;
            out.push((t, token.clone()));
        }
        Ok(out)
    }

    /// Deposits one wallet token under the real identity and removes it from
    /// the wallet once accepted.
    pub fn deposit_one(
        &mut self,
        token: &CreditToken,
        port: &mut dyn ServerPort,
    ) -> Result<(), ParticipantError> {
        let pos = self
            .wallet
            .iter()
            .position(|w| &w.token == token)
            .ok_or(ParticipantError::NotInWallet)?;
        let rid = self.identity.rid.clone();
        let resp = port.call(
            &Sender::Real(rid.clone()),
            Request::Deposit {
                rid,
                timestamp: token.timestamp,
                preimage: token.preimage.clone(),
                signature: token.signature.clone(),
            },
        );
        match resp {
            Response::Deposited => {
                self.wallet.remove(pos);
                self.deposited += 1;
                Ok(())
            }
            other => Err(unexpected(other)),
        }
    }
}

fn unexpected(resp: Response) -> ParticipantError {
    match resp {
        Response::Rejected(e) => ParticipantError::ServerRejected(e),
        other => ParticipantError::UnexpectedResponse(format!("{other:?}")),
    }
}
