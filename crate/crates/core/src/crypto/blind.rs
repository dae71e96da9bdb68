//! Full-domain-hash RSA signatures and Chaum blinding with timestamp binding.
//!
//! A timestamped signature on `m` is `(fdh(m) · fdh(encode(T)))^d mod n`. The
//! timestamp factor is applied by the signer to the blinded value, so the
//! requester unblinds to a signature over both without the signer seeing `m`.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::RngCore;

use super::hash::fdh;
use super::keys::{RsaKeyPair, RsaPublicKey};
use super::prime::random_below;
use super::{CryptoError, Timestamp};

/// Blinding factor `z` with its cached inverse modulo `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlindingFactor {
    z: BigUint,
    z_inv: BigUint,
}

impl BlindingFactor {
    pub fn new(z: BigUint, n: &BigUint) -> Result<Self, CryptoError> {
        if z.is_zero() || &z >= n {
            return Err(CryptoError::NotAUnit);
        }
        let z_inv = z.modinv(n).ok_or(CryptoError::NotAUnit)?;
        Ok(Self { z, z_inv })
    }

    /// Identity blinding, `z = 1`.
    pub fn identity() -> Self {
        Self {
            z: BigUint::one(),
            z_inv: BigUint::one(),
        }
    }

    /// Uniform unit of `Z_n`.
    pub fn random<R: RngCore + ?Sized>(n: &BigUint, rng: &mut R) -> Self {
        loop {
            let z = random_below(n, rng);
            if let Ok(f) = Self::new(z, n) {
                return f;
            }
        }
    }

    pub fn value(&self) -> &BigUint {
        &self.z
    }

    pub fn inverse(&self) -> &BigUint {
        &self.z_inv
    }
}

/// `fdh(msg, n)^d mod n`.
pub fn rsa_sign(key: &RsaKeyPair, msg: &[u8]) -> BigUint {
    key.private_pow(&fdh(msg, &key.n))
}

pub fn rsa_verify(n: &BigUint, e: &BigUint, msg: &[u8], sig: &BigUint) -> bool {
    if sig.is_zero() || sig >= n || n < &BigUint::from(3u8) {
        return false;
    }
    sig.modpow(e, n) == fdh(msg, n)
}

/// `μ = fdh(msg, n) · z^e mod n`.
pub fn blind(msg: &[u8], z: &BlindingFactor, n: &BigUint, e: &BigUint) -> BigUint {
    fdh(msg, n) * z.value().modpow(e, n) % n
}

/// Signs a blinded value bound to `ts`: `(μ · fdh(encode(T)))^d mod n`.
pub fn blind_sign_ts(
    key: &RsaKeyPair,
    mu: &BigUint,
    ts: Timestamp,
) -> Result<BigUint, CryptoError> {
    if mu.is_zero() || mu >= &key.n {
        return Err(CryptoError::MessageOutOfRange);
    }
    let bound = mu * fdh(&ts.encode(), &key.n) % &key.n;
    Ok(key.private_pow(&bound))
}

/// `sig_blind · z^-1 mod n`.
pub fn unblind(sig_blind: &BigUint, z: &BlindingFactor, n: &BigUint) -> BigUint {
    sig_blind * z.inverse() % n
}

pub fn verify_ts(n: &BigUint, e: &BigUint, msg: &[u8], ts: Timestamp, sig: &BigUint) -> bool {
    if sig.is_zero() || sig >= n || n < &BigUint::from(3u8) {
        return false;
    }
    let expected = fdh(msg, n) * fdh(&ts.encode(), n) % n;
    sig.modpow(e, n) == expected
}

impl RsaPublicKey {
    pub fn verify(&self, msg: &[u8], sig: &BigUint) -> bool {
        rsa_verify(&self.n, &self.e, msg, sig)
    }

    pub fn verify_ts(&self, msg: &[u8], ts: Timestamp, sig: &BigUint) -> bool {
        verify_ts(&self.n, &self.e, msg, ts, sig)
    }
}
