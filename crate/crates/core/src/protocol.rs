//! Messages exchanged between participants and the sensing server.
//!
//! Every request and response has a canonical byte form: a one-byte kind tag
//! followed by length-prefixed fields. The simulator bus moves these bytes, so
//! both directions must round-trip exactly.

use std::fmt;

use num_bigint::BigUint;
use thiserror::Error;

use crate::codec::{put_bytes, put_u64, put_uint, CodecError, Reader};
use crate::crypto::{PbsPublicKey, ReportCiphertext, RsaPublicKey, Timestamp};
use crate::token::{
    BlindedBatch, Pseudonym, ReportToken, RequestToken, TaskDescriptor, TokenError,
};

/// Protocol phase a message belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Identity,
    TaskRequest,
    ReportSubmission,
    CreditDeposit,
}

impl Phase {
    pub fn tag(self) -> &'static str {
        match self {
            Phase::Identity => "identity",
            Phase::TaskRequest => "task-request",
            Phase::ReportSubmission => "report-submission",
            Phase::CreditDeposit => "credit-deposit",
        }
    }
}

/// Sender identifier as the server sees it.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sender {
    Pseudonym(Pseudonym),
    Real(Vec<u8>),
}

impl Sender {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Sender::Pseudonym(p) => {
                out.push(1);
                put_bytes(&mut out, &p.0);
            }
            Sender::Real(rid) => {
                out.push(2);
                put_bytes(&mut out, rid);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MessageError> {
        let mut r = Reader::new(bytes);
        let tag = r.u8()?;
        let body = r.bytes()?;
        r.finish()?;
        match tag {
            1 => body
                .try_into()
                .map(|b| Sender::Pseudonym(Pseudonym(b)))
                .map_err(|_| MessageError(format!("pseudonym of {} bytes", body.len()))),
            2 => Ok(Sender::Real(body.to_vec())),
            t => Err(MessageError(format!("unknown sender tag {t}"))),
        }
    }
}

impl fmt::Debug for Sender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sender::Pseudonym(p) => write!(f, "{p:?}"),
            Sender::Real(rid) => write!(f, "Rid({})", String::from_utf8_lossy(rid)),
        }
    }
}

impl fmt::Display for Sender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sender::Pseudonym(p) => write!(f, "pid:{}", hex::encode(p.0)),
            Sender::Real(rid) => write!(f, "rid:{}", hex::encode(rid)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    /// Ask for `sign_d(H(RID))`.
    Identity {
        rid: Vec<u8>,
    },
    /// Blinded `⟨i, τ_i⟩` for a partially blind signature under K1.
    IssueRequestToken {
        task_index: u64,
        blinded: BigUint,
    },
    TaskRequest {
        token: RequestToken,
    },
    /// Blinded `⟨i, b_ic⟩` for a partially blind signature under K2.
    IssueReportToken {
        task_index: u64,
        blinded: BigUint,
    },
    Report {
        token: ReportToken,
        batch: BlindedBatch,
        timestamp: Timestamp,
        ciphertext: ReportCiphertext,
    },
    Deposit {
        rid: Vec<u8>,
        timestamp: Timestamp,
        preimage: Vec<u8>,
        signature: BigUint,
    },
}

const REQ_IDENTITY: u8 = 1;
const REQ_ISSUE_REQUEST: u8 = 2;
const REQ_TASK: u8 = 3;
const REQ_ISSUE_REPORT: u8 = 4;
const REQ_REPORT: u8 = 5;
const REQ_DEPOSIT: u8 = 6;

impl Request {
    pub fn phase(&self) -> Phase {
        match self {
            Request::Identity { .. } => Phase::Identity,
            Request::IssueRequestToken { .. } | Request::TaskRequest { .. } => Phase::TaskRequest,
            Request::IssueReportToken { .. } | Request::Report { .. } => Phase::ReportSubmission,
            Request::Deposit { .. } => Phase::CreditDeposit,
        }
    }

    /// Task index carried in the clear, if any.
    pub fn task_index(&self) -> Option<u64> {
        match self {
            Request::IssueRequestToken { task_index, .. }
            | Request::IssueReportToken { task_index, .. } => Some(*task_index),
            Request::TaskRequest { token } => Some(token.task_index),
            Request::Report { token, .. } => Some(token.task_index),
            Request::Identity { .. } | Request::Deposit { .. } => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Request::Identity { .. } => "identity",
            Request::IssueRequestToken { .. } => "issue-request-token",
            Request::TaskRequest { .. } => "task-request",
            Request::IssueReportToken { .. } => "issue-report-token",
            Request::Report { .. } => "report",
            Request::Deposit { .. } => "deposit",
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Request::Identity { rid } => {
                out.push(REQ_IDENTITY);
                put_bytes(&mut out, rid);
            }
            Request::IssueRequestToken {
                task_index,
                blinded,
            } => {
                out.push(REQ_ISSUE_REQUEST);
                put_u64(&mut out, *task_index);
                put_uint(&mut out, blinded);
            }
            Request::TaskRequest { token } => {
                out.push(REQ_TASK);
                put_bytes(&mut out, &token.to_bytes());
            }
            Request::IssueReportToken {
                task_index,
                blinded,
            } => {
                out.push(REQ_ISSUE_REPORT);
                put_u64(&mut out, *task_index);
                put_uint(&mut out, blinded);
            }
            Request::Report {
                token,
                batch,
                timestamp,
                ciphertext,
            } => {
                out.push(REQ_REPORT);
                put_bytes(&mut out, &token.to_bytes());
                put_bytes(&mut out, &batch.to_bytes());
                put_bytes(&mut out, &timestamp.encode());
                put_bytes(&mut out, &ciphertext.to_bytes());
            }
            Request::Deposit {
                rid,
                timestamp,
                preimage,
                signature,
            } => {
                out.push(REQ_DEPOSIT);
                put_bytes(&mut out, rid);
                put_bytes(&mut out, &timestamp.encode());
                put_bytes(&mut out, preimage);
                put_uint(&mut out, signature);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MessageError> {
        let mut r = Reader::new(bytes);
        let req = match r.u8()? {
            REQ_IDENTITY => Request::Identity {
                rid: r.bytes()?.to_vec(),
            },
            REQ_ISSUE_REQUEST => Request::IssueRequestToken {
                task_index: r.u64()?,
                blinded: r.uint()?,
            },
            REQ_TASK => Request::TaskRequest {
                token: RequestToken::from_bytes(r.bytes()?)?,
            },
            REQ_ISSUE_REPORT => Request::IssueReportToken {
                task_index: r.u64()?,
                blinded: r.uint()?,
            },
            REQ_REPORT => Request::Report {
                token: ReportToken::from_bytes(r.bytes()?)?,
                batch: BlindedBatch::from_bytes(r.bytes()?)?,
                timestamp: read_tick(&mut r)?,
                ciphertext: ReportCiphertext::from_bytes(r.bytes()?)
                    .map_err(|e| MessageError(e.to_string()))?,
            },
            REQ_DEPOSIT => Request::Deposit {
                rid: r.bytes()?.to_vec(),
                timestamp: read_tick(&mut r)?,
                preimage: r.bytes()?.to_vec(),
                signature: r.uint()?,
            },
            tag => return Err(MessageError(format!("unknown request tag {tag}"))),
        };
        r.finish()?;
        Ok(req)
    }
}

fn read_tick(r: &mut Reader<'_>) -> Result<Timestamp, CodecError> {
    let raw = r.bytes()?;
    let arr: [u8; 8] = raw.try_into().map_err(|_| CodecError::WrongLength {
        expected: 8,
        got: raw.len(),
    })?;
    Ok(Timestamp(u64::from_be_bytes(arr)))
}

/// Rejection reasons. Each maps to a stable one-byte code on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ServerError {
    #[error("previous task window is still open")]
    WindowStillOpen,
    #[error("invalid window parameters: {0}")]
    InvalidWindow(String),
    #[error("window {0} not found")]
    UnknownWindow(u64),
    #[error("window {0} still has open tasks")]
    WindowNotFinished(u64),
    #[error("task {0} not found")]
    UnknownTask(u64),
    #[error("task {0} is closed")]
    TaskClosed(u64),
    #[error("signature verification failed")]
    InvalidSignature,
    #[error("request token already used")]
    ReusedRequestToken,
    #[error("report token already used")]
    ReusedReportToken,
    #[error("report token identifier does not match the blinded batch")]
    BatchMismatch,
    #[error("report decryption failed")]
    DecryptionFailure,
    #[error("report timestamp is not current")]
    StaleTimestamp,
    #[error("credit timestamp has expired")]
    ExpiredTimestamp,
    #[error("identity signature does not match the depositing identity")]
    IdentityMismatch,
    #[error("credit token already deposited")]
    DoubleDeposit,
    #[error("malformed message: {0}")]
    MalformedMessage(String),
    #[error("signing failed: {0}")]
    Signing(String),
}

impl ServerError {
    pub fn code(&self) -> u8 {
        match self {
            ServerError::WindowStillOpen => 1,
            ServerError::InvalidWindow(_) => 2,
            ServerError::UnknownWindow(_) => 3,
            ServerError::WindowNotFinished(_) => 4,
            ServerError::UnknownTask(_) => 5,
            ServerError::TaskClosed(_) => 6,
            ServerError::InvalidSignature => 7,
            ServerError::ReusedRequestToken => 8,
            ServerError::ReusedReportToken => 9,
            ServerError::BatchMismatch => 10,
            ServerError::DecryptionFailure => 11,
            ServerError::StaleTimestamp => 12,
            ServerError::ExpiredTimestamp => 13,
            ServerError::IdentityMismatch => 14,
            ServerError::DoubleDeposit => 15,
            ServerError::MalformedMessage(_) => 16,
            ServerError::Signing(_) => 17,
        }
    }

    /// Short stable name used in transcripts and reports.
    pub fn name(&self) -> &'static str {
        match self {
            ServerError::WindowStillOpen => "WindowStillOpen",
            ServerError::InvalidWindow(_) => "InvalidWindow",
            ServerError::UnknownWindow(_) => "UnknownWindow",
            ServerError::WindowNotFinished(_) => "WindowNotFinished",
            ServerError::UnknownTask(_) => "UnknownTask",
            ServerError::TaskClosed(_) => "TaskClosed",
            ServerError::InvalidSignature => "InvalidSignature",
            ServerError::ReusedRequestToken => "ReusedRequestToken",
            ServerError::ReusedReportToken => "ReusedReportToken",
            ServerError::BatchMismatch => "BatchMismatch",
            ServerError::DecryptionFailure => "DecryptionFailure",
            ServerError::StaleTimestamp => "StaleTimestamp",
            ServerError::ExpiredTimestamp => "ExpiredTimestamp",
            ServerError::IdentityMismatch => "IdentityMismatch",
            ServerError::DoubleDeposit => "DoubleDeposit",
            ServerError::MalformedMessage(_) => "MalformedMessage",
            ServerError::Signing(_) => "Signing",
        }
    }

    fn put(&self, out: &mut Vec<u8>) {
        out.push(self.code());
        match self {
            ServerError::UnknownWindow(x)
            | ServerError::WindowNotFinished(x)
            | ServerError::UnknownTask(x)
            | ServerError::TaskClosed(x) => put_u64(out, *x),
            ServerError::InvalidWindow(s)
            | ServerError::MalformedMessage(s)
            | ServerError::Signing(s) => put_bytes(out, s.as_bytes()),
            _ => {}
        }
    }

    fn read(r: &mut Reader<'_>) -> Result<Self, MessageError> {
        let text = |r: &mut Reader<'_>| -> Result<String, MessageError> {
            Ok(String::from_utf8_lossy(r.bytes()?).into_owned())
        };
        Ok(match r.u8()? {
            1 => ServerError::WindowStillOpen,
            2 => ServerError::InvalidWindow(text(r)?),
            3 => ServerError::UnknownWindow(r.u64()?),
            4 => ServerError::WindowNotFinished(r.u64()?),
            5 => ServerError::UnknownTask(r.u64()?),
            6 => ServerError::TaskClosed(r.u64()?),
            7 => ServerError::InvalidSignature,
            8 => ServerError::ReusedRequestToken,
            9 => ServerError::ReusedReportToken,
            10 => ServerError::BatchMismatch,
            11 => ServerError::DecryptionFailure,
            12 => ServerError::StaleTimestamp,
            13 => ServerError::ExpiredTimestamp,
            14 => ServerError::IdentityMismatch,
            15 => ServerError::DoubleDeposit,
            16 => ServerError::MalformedMessage(text(r)?),
            17 => ServerError::Signing(text(r)?),
            code => return Err(MessageError(format!("unknown error code {code}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Response {
    IdentitySignature(BigUint),
    BlindSignature(BigUint),
    Price {
        c_max: u32,
    },
    /// Blinded credit signatures, one per granted credit.
    Credits(Vec<BigUint>),
    Deposited,
    Rejected(ServerError),
}

const RESP_IDENTITY: u8 = 1;
const RESP_BLIND: u8 = 2;
const RESP_PRICE: u8 = 3;
const RESP_CREDITS: u8 = 4;
const RESP_DEPOSITED: u8 = 5;
const RESP_REJECTED: u8 = 6;

impl Response {
    pub fn is_accepted(&self) -> bool {
        !matches!(self, Response::Rejected(_))
    }

    pub fn error(&self) -> Option<&ServerError> {
        match self {
            Response::Rejected(e) => Some(e),
            _ => None,
        }
    }

    /// `"ok"` or the rejection name.
    pub fn outcome(&self) -> &'static str {
        match self {
            Response::Rejected(e) => e.name(),
            _ => "ok",
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Response::IdentitySignature(s) => {
                out.push(RESP_IDENTITY);
                put_uint(&mut out, s);
            }
            Response::BlindSignature(s) => {
                out.push(RESP_BLIND);
                put_uint(&mut out, s);
            }
            Response::Price { c_max } => {
                out.push(RESP_PRICE);
                put_u64(&mut out, *c_max as u64);
            }
            Response::Credits(sigs) => {
                out.push(RESP_CREDITS);
                put_u64(&mut out, sigs.len() as u64);
                for s in sigs {
                    put_uint(&mut out, s);
                }
            }
            Response::Deposited => out.push(RESP_DEPOSITED),
            Response::Rejected(e) => {
                out.push(RESP_REJECTED);
                e.put(&mut out);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MessageError> {
        let mut r = Reader::new(bytes);
        let resp = match r.u8()? {
            RESP_IDENTITY => Response::IdentitySignature(r.uint()?),
            RESP_BLIND => Response::BlindSignature(r.uint()?),
            RESP_PRICE => Response::Price {
                c_max: u32::try_from(r.u64()?)
                    .map_err(|_| MessageError("price overflow".into()))?,
            },
            RESP_CREDITS => {
                let count = r.u64()?;
                let mut sigs = Vec::new();
                for _ in 0..count {
                    sigs.push(r.uint()?);
                }
                Response::Credits(sigs)
            }
            RESP_DEPOSITED => Response::Deposited,
            RESP_REJECTED => Response::Rejected(ServerError::read(&mut r)?),
            tag => return Err(MessageError(format!("unknown response tag {tag}"))),
        };
        r.finish()?;
        Ok(resp)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed message: {0}")]
pub struct MessageError(pub String);

impl From<CodecError> for MessageError {
    fn from(e: CodecError) -> Self {
        MessageError(e.to_string())
    }
}

impl From<TokenError> for MessageError {
    fn from(e: TokenError) -> Self {
        MessageError(e.to_string())
    }
}

/// Public verification material published by the server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicParams {
    pub rsa: RsaPublicKey,
    pub k1: PbsPublicKey,
    pub k2: PbsPublicKey,
}

/// What a participant needs from the server side: a request channel, the
/// shared clock and the published tasks.
pub trait ServerPort {
    fn call(&mut self, from: &Sender, request: Request) -> Response;
    fn now(&self) -> Timestamp;
    fn public_params(&self) -> PublicParams;
    fn task(&self, index: u64) -> Option<TaskDescriptor>;
}
