//! Report encryption to the server's RSA key.
//!
//! A fresh unit `k` of `Z_n` is wrapped as `k^e mod n`; the report is sealed
//! with ChaCha20-Poly1305 under `SHA-256(encode(k))`. The wrapped key is bound
//! as associated data. Each content key is used once, so the nonce is fixed.

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Nonce};
use num_bigint::BigUint;
use num_traits::Zero;
use rand::RngCore;

use super::blind::BlindingFactor;
use super::hash::hash;
use super::keys::{RsaKeyPair, RsaPublicKey};
use super::CryptoError;
use crate::codec::{encode_uint, put_bytes, put_uint, Reader};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportCiphertext {
    pub wrapped_key: BigUint,
    pub sealed: Vec<u8>,
}

impl ReportCiphertext {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put_uint(&mut out, &self.wrapped_key);
        put_bytes(&mut out, &self.sealed);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut r = Reader::new(bytes);
        let wrapped_key = r.uint()?;
        let sealed = r.bytes()?.to_vec();
        r.finish()?;
        Ok(Self {
            wrapped_key,
            sealed,
        })
    }
}

fn cipher_for(k: &BigUint) -> ChaCha20Poly1305 {
    ChaCha20Poly1305::new_from_slice(hash(&encode_uint(k)).as_bytes()).expect("32-byte key")
}

pub fn encrypt_report<R: RngCore + ?Sized>(
    key: &RsaPublicKey,
    report: &[u8],
    rng: &mut R,
) -> Result<ReportCiphertext, CryptoError> {
    if report.is_empty() {
        return Err(CryptoError::EmptyReport);
    }
    let k = BlindingFactor::random(&key.n, rng).value().clone();
    let wrapped_key = k.modpow(&key.e, &key.n);
    let aad = encode_uint(&wrapped_key);
    let sealed = cipher_for(&k)
        .encrypt(
            &Nonce::default(),
            Payload {
                msg: report,
                aad: &aad,
            },
        )
        .map_err(|_| CryptoError::DecryptionFailure)?;
    Ok(ReportCiphertext {
        wrapped_key,
        sealed,
    })
}

pub fn decrypt_report(key: &RsaKeyPair, ct: &ReportCiphertext) -> Result<Vec<u8>, CryptoError> {
    if ct.wrapped_key.is_zero() || ct.wrapped_key >= key.n {
        return Err(CryptoError::DecryptionFailure);
    }
    let k = key.private_pow(&ct.wrapped_key);
    let aad = encode_uint(&ct.wrapped_key);
    cipher_for(&k)
        .decrypt(
            &Nonce::default(),
            Payload {
                msg: &ct.sealed,
                aad: &aad,
            },
        )
        .map_err(|_| CryptoError::DecryptionFailure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::keygen_rsa;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn key() -> RsaKeyPair {
        keygen_rsa(512, &mut ChaCha20Rng::seed_from_u64(77)).unwrap()
    }

    #[test]
    fn round_trip() {
        let key = key();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let ct = encrypt_report(&key.public(), b"noise level 41 dB", &mut rng).unwrap();
        assert_eq!(decrypt_report(&key, &ct).unwrap(), b"noise level 41 dB");
        let parsed = ReportCiphertext::from_bytes(&ct.to_bytes()).unwrap();
        assert_eq!(parsed, ct);
    }

    #[test]
    fn flipped_bit_fails_authentication() {
        let key = key();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let ct = encrypt_report(&key.public(), b"report", &mut rng).unwrap();
        for i in 0..ct.sealed.len() {
            let mut bad = ct.clone();
            bad.sealed[i] ^= 0x01;
            assert_eq!(
                decrypt_report(&key, &bad),
                Err(CryptoError::DecryptionFailure)
            );
        }
        let mut bad = ct.clone();
        bad.wrapped_key += 1u8;
        assert_eq!(
            decrypt_report(&key, &bad),
            Err(CryptoError::DecryptionFailure)
        );
    }

    #[test]
    fn empty_report_rejected() {
        let key = key();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        assert_eq!(
            encrypt_report(&key.public(), b"", &mut rng),
            Err(CryptoError::EmptyReport)
        );
    }

    #[test]
    fn toy_modulus_round_trip() {
        let key = RsaKeyPair::from_primes(61u32.into(), 53u32.into(), 17u32.into()).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let ct = encrypt_report(&key.public(), b"x", &mut rng).unwrap();
        assert_eq!(decrypt_report(&key, &ct).unwrap(), b"x");
    }
}
