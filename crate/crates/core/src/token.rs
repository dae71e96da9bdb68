//! Token identifiers and the three token kinds exchanged by the protocol.
//!
//! Identifier layouts (`encode` is the canonical integer encoding):
//!
//! ```text
//! request id   τ_i  = H(encode(i) ‖ H(r1))
//! credit m_ij       = H(encode(i) ‖ encode(j) ‖ H(r2)) ‖ encode(sig(H(RID)))
//! blind z_ij        = fdh(encode(i) ‖ encode(j) ‖ H(r3), n)
//! report id    b_ic = H(encode(μ_i1) ‖ .. ‖ encode(μ_ic_max) ‖ encode(i) ‖ encode(c_max))
//! ```
//!
//! Wire format of a token: one kind byte followed by length-prefixed fields in
//! declaration order.

use std::fmt;

use num_bigint::BigUint;
use num_traits::Zero;
use rand::RngCore;
use thiserror::Error;

use crate::codec::{self, put_bytes, put_u64, put_uint, CodecError, Reader};
use crate::crypto::{fdh, hash, hash_parts, BlindingFactor, Digest, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenError {
    #[error("malformed credit preimage: {0}")]
    MalformedPreimage(String),
    #[error("malformed token: {0}")]
    MalformedToken(String),
    #[error("secret must not be empty")]
    EmptySecret,
    #[error("credit token index must be at least 1")]
    ZeroTokenIndex,
    #[error("blinded batch malformed: {0}")]
    MalformedBatch(String),
}

impl From<CodecError> for TokenError {
    fn from(e: CodecError) -> Self {
        TokenError::MalformedToken(e.to_string())
    }
}

/// A published sensing task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskDescriptor {
    pub index: u64,
    pub window: u64,
    pub requirements: Vec<u8>,
    pub deadline: Timestamp,
    pub c_min: u32,
    pub c_max: u32,
}

/// `γ_i = ⟨i, τ_i, PBS_K1(i, τ_i)⟩`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestToken {
    pub task_index: u64,
    pub identifier: Digest,
    pub signature: BigUint,
}

/// `δ_ic = ⟨i, b_ic, PBS_K2(i, b_ic)⟩`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportToken {
    pub task_index: u64,
    pub identifier: Digest,
    pub signature: BigUint,
}

/// `ε_ij = ⟨m_ij, T_i, sig(m_ij ‖ T_i)⟩`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CreditToken {
    pub preimage: Vec<u8>,
    pub timestamp: Timestamp,
    pub signature: BigUint,
}

/// The `c_max` blinded credit identifiers submitted with a report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlindedBatch {
    pub task_index: u64,
    pub entries: Vec<BigUint>,
    pub c_max: u32,
}

impl BlindedBatch {
    /// Checks the entry count and that every entry lies in `[1, n)`.
    pub fn validate(&self, n: &BigUint) -> Result<(), TokenError> {
        if self.entries.len() != self.c_max as usize {
            return Err(TokenError::MalformedBatch(format!(
                "{} entries for c_max {}",
                self.entries.len(),
                self.c_max
            )));
        }
        if let Some(j) = self.entries.iter().position(|mu| mu.is_zero() || mu >= n) {
            return Err(TokenError::MalformedBatch(format!(
                "entry {} out of range",
                j + 1
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put_u64(&mut out, self.task_index);
        put_u64(&mut out, self.c_max as u64);
        for mu in &self.entries {
            put_uint(&mut out, mu);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TokenError> {
        let mut r = Reader::new(bytes);
        let task_index = r.u64()?;
        let c_max = u32::try_from(r.u64()?)
            .map_err(|_| TokenError::MalformedBatch("c_max overflow".into()))?;
        let mut entries = Vec::new();
        while r.remaining() > 0 {
            entries.push(r.uint()?);
        }
        Ok(Self {
            task_index,
            entries,
            c_max,
        })
    }
}

/// Real identity with the server's signature on `H(RID)` once issued.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Identity {
    pub rid: Vec<u8>,
    pub rid_signature: Option<BigUint>,
}

impl Identity {
    pub fn new(rid: impl Into<Vec<u8>>) -> Self {
        Self {
            rid: rid.into(),
            rid_signature: None,
        }
    }

    /// The message the server signs for this identity: `H(RID)`.
    pub fn signed_message(&self) -> Digest {
        rid_message(&self.rid)
    }
}

/// `H(RID)`, the message carried by identity signatures.
pub fn rid_message(rid: &[u8]) -> Digest {
    hash(rid)
}

/// 128-bit random pseudonym.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pseudonym(pub [u8; 16]);

impl Pseudonym {
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut b = [0u8; 16];
        rng.fill_bytes(&mut b);
        Self(b)
    }
}

impl fmt::Debug for Pseudonym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pid(")?;
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        write!(f, ")")
    }
}

/// Common information bound into both partially blind signatures: the task index.
pub fn task_common_info(i: u64) -> Vec<u8> {
    codec::encode_u64(i)
}

pub fn make_request_identifier(i: u64, r1: &[u8]) -> Result<Digest, TokenError> {
    if r1.is_empty() {
        return Err(TokenError::EmptySecret);
    }
    Ok(hash_parts(&[&codec::encode_u64(i), hash(r1).as_bytes()]))
}

fn indexed_secret_hash(i: u64, j: u32, secret: &[u8]) -> Result<Vec<u8>, TokenError> {
    if secret.is_empty() {
        return Err(TokenError::EmptySecret);
    }
    if j == 0 {
        return Err(TokenError::ZeroTokenIndex);
    }
    let mut buf = codec::encode_u64(i);
    buf.extend_from_slice(&codec::encode_u64(j as u64));
    buf.extend_from_slice(hash(secret).as_bytes());
    Ok(buf)
}

pub fn make_credit_preimage(
    i: u64,
    j: u32,
    r2: &[u8],
    rid_sig: &BigUint,
) -> Result<Vec<u8>, TokenError> {
    let mut m = hash(&indexed_secret_hash(i, j, r2)?).0.to_vec();
    put_uint(&mut m, rid_sig);
    Ok(m)
}

pub fn make_blind_factor(
    i: u64,
    j: u32,
    r3: &[u8],
    n: &BigUint,
) -> Result<BlindingFactor, TokenError> {
    let z = fdh(&indexed_secret_hash(i, j, r3)?, n);
    Ok(BlindingFactor::new(z, n).expect("fdh output is a unit"))
}

pub fn make_report_identifier(batch: &BlindedBatch) -> Digest {
    let mut buf = Vec::new();
    for mu in &batch.entries {
        put_uint(&mut buf, mu);
    }
    put_u64(&mut buf, batch.task_index);
    put_u64(&mut buf, batch.c_max as u64);
    hash(&buf)
}

/// Splits `m` into its leading digest and the embedded identity signature.
pub fn parse_credit_preimage(m: &[u8]) -> Result<(Digest, BigUint), TokenError> {
    if m.len() < Digest::LEN {
        return Err(TokenError::MalformedPreimage(format!("{} bytes", m.len())));
    }
    let digest = Digest(m[..Digest::LEN].try_into().unwrap());
    let mut r = Reader::new(&m[Digest::LEN..]);
    let sig = r
        .uint()
        .and_then(|s| r.finish().map(|_| s))
        .map_err(|e| TokenError::MalformedPreimage(e.to_string()))?;
    Ok((digest, sig))
}

const TAG_REQUEST: u8 = 1;
const TAG_REPORT: u8 = 2;
const TAG_CREDIT: u8 = 3;

/// Any of the three token kinds, for tagged serialization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Token {
    Request(RequestToken),
    Report(ReportToken),
    Credit(CreditToken),
}

fn put_pbs_token(out: &mut Vec<u8>, tag: u8, i: u64, id: &Digest, sig: &BigUint) {
    out.push(tag);
    put_u64(out, i);
    put_bytes(out, id.as_bytes());
    put_uint(out, sig);
}

impl Token {
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Token::Request(t) => put_pbs_token(
                &mut out,
                TAG_REQUEST,
                t.task_index,
                &t.identifier,
                &t.signature,
            ),
            Token::Report(t) => put_pbs_token(
                &mut out,
                TAG_REPORT,
                t.task_index,
                &t.identifier,
                &t.signature,
            ),
            Token::Credit(t) => {
                out.push(TAG_CREDIT);
                put_bytes(&mut out, &t.preimage);
                put_bytes(&mut out, &t.timestamp.encode());
                put_uint(&mut out, &t.signature);
            }
        }
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self, TokenError> {
        let mut r = Reader::new(bytes);
        let tag = r.u8()?;
        let token = match tag {
            TAG_REQUEST | TAG_REPORT => {
                let task_index = r.u64()?;
                let identifier = Digest(r.fixed::<32>()?);
                let signature = r.uint()?;
                if tag == TAG_REQUEST {
                    Token::Request(RequestToken {
                        task_index,
                        identifier,
                        signature,
                    })
                } else {
                    Token::Report(ReportToken {
                        task_index,
                        identifier,
                        signature,
                    })
                }
            }
            TAG_CREDIT => {
                let preimage = r.bytes()?.to_vec();
                let timestamp = Timestamp(u64::from_be_bytes(r.fixed::<8>()?));
                let signature = r.uint()?;
                Token::Credit(CreditToken {
                    preimage,
                    timestamp,
                    signature,
                })
            }
            other => {
                return Err(TokenError::MalformedToken(format!(
                    "unknown kind tag {other}"
                )))
            }
        };
        r.finish()?;
        Ok(token)
    }
}

macro_rules! token_codec {
    ($ty:ident, $variant:ident, $name:literal) => {
        impl $ty {
            pub fn to_bytes(&self) -> Vec<u8> {
                Token::$variant(self.clone()).serialize()
            }

            pub fn from_bytes(bytes: &[u8]) -> Result<Self, TokenError> {
                match Token::deserialize(bytes)? {
                    Token::$variant(t) => Ok(t),
                    _ => Err(TokenError::MalformedToken(
                        concat!("expected ", $name).into(),
                    )),
                }
            }
        }
    };
}

token_codec!(RequestToken, Request, "request token");
token_codec!(ReportToken, Report, "report token");
token_codec!(CreditToken, Credit, "credit token");
