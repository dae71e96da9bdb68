//! Big-integer RSA primitives: full-domain hashing, blind signatures with
//! timestamp binding, partially blind signatures and report encryption.
//!
//! Every randomized operation takes an explicit random source, so results are
//! reproducible under a seeded generator.

mod blind;
mod hash;
mod hybrid;
mod keys;
mod pbs;
pub mod prime;

use thiserror::Error;

pub use blind::{blind, blind_sign_ts, rsa_sign, rsa_verify, unblind, verify_ts, BlindingFactor};
pub use hash::{fdh, hash, hash_parts, Digest};
pub use hybrid::{decrypt_report, encrypt_report, ReportCiphertext};
pub use keys::{
    default_lambda, keygen_pbs, keygen_pbs_with, keygen_rsa, PbsKeyPair, PbsParams, PbsPublicKey,
    RsaKeyPair, RsaPublicKey, DEFAULT_LAMBDA, DEFAULT_SAFE_PRIME_WINDOWS, MAX_LAMBDA, MIN_LAMBDA,
    MIN_PBS_BITS, MIN_RSA_BITS,
};
pub use pbs::{
    derive_exponent, exponent_from_truncated, exponent_is_coprime, pbs_blind, pbs_sign, pbs_verify,
    truncated_info_hash,
};

use crate::codec::CodecError;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("key size {bits} below minimum {min}")]
    KeyTooSmall { bits: u64, min: u64 },
    #[error("safe prime search gave up after {windows} sieve windows")]
    SafePrimeSearchExhausted { windows: u64 },
    #[error("invalid key: {0}")]
    InvalidKey(String),
    #[error("derived exponent bit length {0} outside supported range")]
    LambdaOutOfRange(u32),
    #[error("derived exponent shares a factor with phi")]
    DerivedExponentCollision,
    #[error("value is not a unit modulo n")]
    NotAUnit,
    #[error("blinded value outside [1, n)")]
    MessageOutOfRange,
    #[error("report must not be empty")]
    EmptyReport,
    #[error("report decryption failed")]
    DecryptionFailure,
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Simulation time in ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub u64);

impl Timestamp {
    /// 8-byte big-endian tick count.
    pub fn encode(self) -> [u8; 8] {
        crate::codec::encode_tick(self.0)
    }
}
