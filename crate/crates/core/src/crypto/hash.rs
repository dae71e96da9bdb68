use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::One;
use sha2::{Digest as _, Sha256};

/// Output of the protocol hash (SHA-256).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const LEN: usize = 32;

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl AsRef<[u8]> for Digest {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

pub fn hash(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

/// Hash of the concatenation of `parts`.
pub fn hash_parts(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

/// Full-domain hash of `data` into the unit group modulo `n`.
///
/// Attempt `a` expands `SHA-256(data ‖ a ‖ b)` for block counters `b = 0, 1, ..`
/// (both 4-byte big-endian) to the byte length of `n`, masks the excess high
/// bits, and accepts the value if it lies in `[1, n)` and is coprime to `n`.
/// Otherwise the next attempt is tried. Uniform over `Z_n^*`.
///
/// Panics if `n < 3`.
pub fn fdh(data: &[u8], n: &BigUint) -> BigUint {
    assert!(*n >= BigUint::from(3u8), "fdh modulus must be at least 3");
    let bits = n.bits() as usize;
    let len = bits.div_ceil(8);
    let excess = len * 8 - bits;
    let blocks = len.div_ceil(32) as u32;
    let mut buf = Vec::with_capacity(blocks as usize * 32);
    for attempt in 0u32.. {
        buf.clear();
        for block in 0..blocks {
            buf.extend_from_slice(
                &hash_parts(&[data, &attempt.to_be_bytes(), &block.to_be_bytes()]).0,
            );
        }
        buf.truncate(len);
        buf[0] &= 0xffu8 >> excess;
        let x = BigUint::from_bytes_be(&buf);
        if x.bits() > 0 && &x < n && x.gcd(n).is_one() {
            return x;
        }
    }
    unreachable!("attempt counter exhausted")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn empty_string_digest_matches_published_value() {
        assert_eq!(
            hash(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn hash_is_deterministic_and_prefix_sensitive() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..10_000 {
            let a: [u8; 12] = rng.random();
            let b: [u8; 5] = rng.random();
            let ab = [&a[..], &b[..]].concat();
            assert_eq!(hash(&ab), hash(&ab));
            assert_eq!(hash(&ab), hash_parts(&[&a, &b]));
            assert_ne!(hash(&ab), hash(&a));
            assert!(seen.insert(hash(&ab)));
        }
    }

    #[test]
    fn fdh_lands_in_unit_group() {
        let n = BigUint::from(3233u32);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let m: [u8; 16] = rng.random();
            let x = fdh(&m, &n);
            assert!(x >= BigUint::one() && x < n);
            assert!(x.gcd(&n).is_one());
            assert_eq!(x, fdh(&m, &n));
        }
    }

    #[test]
    fn fdh_uniform_over_units_of_15() {
        // Oracle: enumerate Z_15^* by brute-force gcd.
        let units: Vec<u32> = (1..15u32).filter(|z| z.gcd(&15) == 1).collect();
        assert_eq!(units, vec![1, 2, 4, 7, 8, 11, 13, 14]);
        let n = BigUint::from(15u32);
        let trials = 10_000u32;
        let mut counts = std::collections::BTreeMap::new();
        let mut rng = ChaCha20Rng::seed_from_u64(15);
        for _ in 0..trials {
            let m: [u8; 8] = rng.random();
            let x = u32::try_from(&fdh(&m, &n)).unwrap();
            *counts.entry(x).or_insert(0u32) += 1;
        }
        assert_eq!(counts.keys().copied().collect::<Vec<_>>(), units);
        let p = 1.0 / units.len() as f64;
        let mean = trials as f64 * p;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        for (&z, &c) in &counts {
            assert!(
                (c as f64 - mean).abs() <= 5.0 * sigma,
                "residue {z}: {c} hits, expected {mean:.0} ± {:.0}",
                5.0 * sigma
            );
        }
    }

    #[test]
    #[should_panic]
    fn fdh_rejects_tiny_modulus() {
        fdh(b"x", &BigUint::from(2u8));
    }
}
