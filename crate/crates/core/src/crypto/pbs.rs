//! RSA-based partially blind signatures.
//!
//! The agreed common information selects the verification exponent: `e_a` is
//! the smallest prime at or above the top `lambda` bits of `hash(info)` (made
//! odd). The signer raises the blinded value to `e_a^-1 mod phi`; anyone with
//! the modulus and the common information can verify. A signature issued for
//! one piece of common information does not verify under another.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};

use super::blind::{blind, BlindingFactor};
use super::hash::{fdh, hash};
use super::keys::{check_lambda, PbsKeyPair, PbsPublicKey};
use super::prime::next_prime_u64;
use super::CryptoError;

/// Top `lambda` bits of the first eight bytes of `hash(info)`.
pub fn truncated_info_hash(common_info: &[u8], lambda: u32) -> Result<u64, CryptoError> {
    check_lambda(lambda)?;
    let digest = hash(common_info);
    let head = u64::from_be_bytes(digest.0[..8].try_into().unwrap());
    Ok(head >> (64 - lambda))
}

/// Smallest odd prime `>= (v | 1)`.
pub fn exponent_from_truncated(v: u64) -> u64 {
    next_prime_u64((v | 1).max(3)).expect("v < 2^62 leaves room for the next prime")
}

/// Verification exponent bound to `common_info`. Always an odd prime below
/// `2^(lambda+1)`.
pub fn derive_exponent(common_info: &[u8], lambda: u32) -> Result<u64, CryptoError> {
    Ok(exponent_from_truncated(truncated_info_hash(
        common_info,
        lambda,
    )?))
}

/// Requester side: `fdh(msg) · z^(e_a) mod n`.
pub fn pbs_blind(
    key: &PbsPublicKey,
    msg: &[u8],
    common_info: &[u8],
    z: &BlindingFactor,
) -> Result<BigUint, CryptoError> {
    let e_a = BigUint::from(derive_exponent(common_info, key.lambda)?);
    Ok(blind(msg, z, &key.n, &e_a))
}

/// Signer side: `μ^(d_a) mod n` with `d_a = e_a^-1 mod phi`.
pub fn pbs_sign(
    key: &PbsKeyPair,
    mu: &BigUint,
    common_info: &[u8],
) -> Result<BigUint, CryptoError> {
    if mu.is_zero() || mu >= &key.n {
        return Err(CryptoError::MessageOutOfRange);
    }
    let e_a = BigUint::from(derive_exponent(common_info, key.lambda)?);
    if !e_a.gcd(&key.phi).is_one() {
        return Err(CryptoError::DerivedExponentCollision);
    }
    let d_a = e_a
        .modinv(&key.phi)
        .ok_or(CryptoError::DerivedExponentCollision)?;
    Ok(key.private_pow(mu, &d_a))
}

/// `sig^(e_a) ≡ fdh(msg) (mod n)`.
pub fn pbs_verify(key: &PbsPublicKey, msg: &[u8], common_info: &[u8], sig: &BigUint) -> bool {
    if sig.is_zero() || sig >= &key.n || key.n < BigUint::from(3u8) {
        return false;
    }
    let Ok(e_a) = derive_exponent(common_info, key.lambda) else {
        return false;
    };
    sig.modpow(&BigUint::from(e_a), &key.n) == fdh(msg, &key.n)
}

impl PbsPublicKey {
    pub fn verify(&self, msg: &[u8], common_info: &[u8], sig: &BigUint) -> bool {
        pbs_verify(self, msg, common_info, sig)
    }
}

/// Checks that `e_a` for `common_info` is usable with `key` (the invariant
/// keygen guarantees; toy keys may violate it).
pub fn exponent_is_coprime(key: &PbsKeyPair, common_info: &[u8]) -> bool {
    derive_exponent(common_info, key.lambda)
        .map(|e| BigUint::from(e).gcd(&key.phi).is_one())
        .unwrap_or(false)
}
