use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::One;
use rand::RngCore;

use super::prime::{is_probable_prime, is_safe_prime, random_prime, random_safe_prime};
use super::CryptoError;

/// Smallest modulus accepted for blind RSA keys.
pub const MIN_RSA_BITS: u64 = 32;
/// Smallest modulus accepted for partially blind signing keys.
pub const MIN_PBS_BITS: u64 = 48;
/// Default bit length of the exponent derived from common information.
pub const DEFAULT_LAMBDA: u32 = 32;
pub const MIN_LAMBDA: u32 = 16;
pub const MAX_LAMBDA: u32 = 62;
/// Default number of sieve windows scanned per safe prime before giving up.
pub const DEFAULT_SAFE_PRIME_WINDOWS: u64 = 100_000;

const DEFAULT_E: u32 = 65_537;

/// Private exponentiation via the Chinese remainder theorem.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Crt {
    p: BigUint,
    q: BigUint,
    q_inv: BigUint,
}

impl Crt {
    fn new(p: &BigUint, q: &BigUint) -> Self {
        let q_inv = q.modinv(p).expect("distinct primes are coprime");
        Self {
            p: p.clone(),
            q: q.clone(),
            q_inv,
        }
    }

    /// `x^d mod pq`.
    fn pow(&self, x: &BigUint, d: &BigUint) -> BigUint {
        let dp = d % (&self.p - 1u8);
        let dq = d % (&self.q - 1u8);
        let mp = (x % &self.p).modpow(&dp, &self.p);
        let mq = (x % &self.q).modpow(&dq, &self.q);
        // h = q_inv (mp - mq) mod p
        let diff = (&mp + &self.p - (&mq % &self.p)) % &self.p;
        let h = (&self.q_inv * diff) % &self.p;
        mq + h * &self.q
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RsaPublicKey {
    pub n: BigUint,
    pub e: BigUint,
}

/// Signer key for plain and blind RSA signatures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RsaKeyPair {
    pub n: BigUint,
    pub e: BigUint,
    pub d: BigUint,
    pub p: BigUint,
    pub q: BigUint,
    pub phi: BigUint,
    crt: Crt,
}

impl RsaKeyPair {
    /// Builds a key from explicit primes, checking every invariant.
    pub fn from_primes(p: BigUint, q: BigUint, e: BigUint) -> Result<Self, CryptoError> {
        if p == q {
            return Err(CryptoError::InvalidKey("p and q must be distinct".into()));
        }
        if !is_probable_prime(&p) || !is_probable_prime(&q) {
            return Err(CryptoError::InvalidKey("p and q must be prime".into()));
        }
        if e.is_even() || e <= BigUint::from(2u8) {
            return Err(CryptoError::InvalidKey("e must be odd and > 2".into()));
        }
        let phi = (&p - 1u8) * (&q - 1u8);
        if e >= phi {
            return Err(CryptoError::InvalidKey("e must be below phi".into()));
        }
        let d = e
            .modinv(&phi)
            .ok_or_else(|| CryptoError::InvalidKey("gcd(e, phi) != 1".into()))?;
        let crt = Crt::new(&p, &q);
        Ok(Self {
            n: &p * &q,
            e,
            d,
            p,
            q,
            phi,
            crt,
        })
    }

    pub fn public(&self) -> RsaPublicKey {
        RsaPublicKey {
            n: self.n.clone(),
            e: self.e.clone(),
        }
    }

    /// `x^d mod n`.
    pub(crate) fn private_pow(&self, x: &BigUint) -> BigUint {
        self.crt.pow(x, &self.d)
    }
}

/// Generates an RSA key whose modulus has exactly `bits` bits, with `e = 65537`.
pub fn keygen_rsa<R: RngCore + ?Sized>(bits: u64, rng: &mut R) -> Result<RsaKeyPair, CryptoError> {
    if bits < MIN_RSA_BITS {
        return Err(CryptoError::KeyTooSmall {
            bits,
            min: MIN_RSA_BITS,
        });
    }
    let e = BigUint::from(DEFAULT_E);
    loop {
        let p = random_prime(bits.div_ceil(2), rng);
        let q = random_prime(bits / 2, rng);
        if p == q {
            continue;
        }
        let phi = (&p - 1u8) * (&q - 1u8);
        if !e.gcd(&phi).is_one() {
            continue;
        }
        return RsaKeyPair::from_primes(p, q, e);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PbsPublicKey {
    pub n: BigUint,
    /// Bit length of exponents derived from common information.
    pub lambda: u32,
}

/// Partially blind signing key over a safe-prime modulus.
///
/// `phi = 4 p' q'`, so a derived prime exponent below `2^(lambda+1)` is
/// coprime to `phi` whenever `p', q' >= 2^(lambda+1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PbsKeyPair {
    pub n: BigUint,
    pub p: BigUint,
    pub q: BigUint,
    pub phi: BigUint,
    pub lambda: u32,
    crt: Crt,
}

impl PbsKeyPair {
    /// Builds a key from explicit safe primes. The coprimality margin is not
    /// enforced here so that toy keys can be constructed; signing checks it.
    pub fn from_safe_primes(p: BigUint, q: BigUint, lambda: u32) -> Result<Self, CryptoError> {
        check_lambda(lambda)?;
        if p == q {
            return Err(CryptoError::InvalidKey("p and q must be distinct".into()));
        }
        if !is_safe_prime(&p) || !is_safe_prime(&q) {
            return Err(CryptoError::InvalidKey(
                "p and q must be safe primes".into(),
            ));
        }
        let phi = (&p - 1u8) * (&q - 1u8);
        let crt = Crt::new(&p, &q);
        Ok(Self {
            n: &p * &q,
            p,
            q,
            phi,
            lambda,
            crt,
        })
    }

    pub fn public(&self) -> PbsPublicKey {
        PbsPublicKey {
            n: self.n.clone(),
            lambda: self.lambda,
        }
    }

    /// `p'` and `q'`.
    pub fn sophie_germain_parts(&self) -> (BigUint, BigUint) {
        (&self.p >> 1u8, &self.q >> 1u8)
    }

    pub(crate) fn private_pow(&self, x: &BigUint, d: &BigUint) -> BigUint {
        self.crt.pow(x, d)
    }
}

/// Largest lambda keeping `p', q' >= 2^(lambda+1)` for a `bits`-bit modulus.
pub fn default_lambda(bits: u64) -> u32 {
    // p' has bits/2 - 1 bits with its top bit set, so p' >= 2^(bits/2 - 2).
    let margin = (bits / 2).saturating_sub(3);
    (DEFAULT_LAMBDA as u64).min(margin) as u32
}

pub(crate) fn check_lambda(lambda: u32) -> Result<(), CryptoError> {
    if (MIN_LAMBDA..=MAX_LAMBDA).contains(&lambda) {
        Ok(())
    } else {
        Err(CryptoError::LambdaOutOfRange(lambda))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PbsParams {
    pub bits: u64,
    pub lambda: u32,
    pub max_windows: u64,
}

impl PbsParams {
    pub fn for_bits(bits: u64) -> Self {
        Self {
            bits,
            lambda: default_lambda(bits),
            max_windows: DEFAULT_SAFE_PRIME_WINDOWS,
        }
    }
}

/// Generates a safe-prime key with default lambda and search bound.
pub fn keygen_pbs<R: RngCore + ?Sized>(bits: u64, rng: &mut R) -> Result<PbsKeyPair, CryptoError> {
    keygen_pbs_with(PbsParams::for_bits(bits), rng)
}

pub fn keygen_pbs_with<R: RngCore + ?Sized>(
    params: PbsParams,
    rng: &mut R,
) -> Result<PbsKeyPair, CryptoError> {
    if params.bits < MIN_PBS_BITS {
        return Err(CryptoError::KeyTooSmall {
            bits: params.bits,
            min: MIN_PBS_BITS,
        });
    }
    check_lambda(params.lambda)?;
    let floor = BigUint::one() << (params.lambda + 1);
    let search = |bits: u64, rng: &mut R| {
        random_safe_prime(bits, params.max_windows, rng).ok_or(
            CryptoError::SafePrimeSearchExhausted {
                windows: params.max_windows,
            },
        )
    };
    loop {
        let p = search(params.bits.div_ceil(2), rng)?;
        let q = search(params.bits / 2, rng)?;
        if p == q {
            continue;
        }
        let key = PbsKeyPair::from_safe_primes(p, q, params.lambda)?;
        let (p1, q1) = key.sophie_germain_parts();
        if p1 < floor || q1 < floor {
            return Err(CryptoError::InvalidKey(format!(
                "modulus of {} bits too small for lambda {}",
                params.bits, params.lambda
            )));
        }
        return Ok(key);
    }
}
