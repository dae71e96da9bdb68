//! Prime and safe-prime generation over `BigUint`.

use std::sync::OnceLock;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::RngCore;

/// Sieve bound for small-prime trial division.
const SIEVE_LIMIT: u32 = 1 << 16;

/// Odd candidates examined per sieve window.
const WINDOW: usize = 4096;

/// Miller-Rabin bases used for big candidates. Fixed bases are adequate for
/// randomly drawn candidates; they are not meant to resist crafted composites.
const MR_BASES: [u32; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

fn small_primes() -> &'static [u32] {
    static PRIMES: OnceLock<Vec<u32>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let limit = SIEVE_LIMIT as usize;
        let mut composite = vec![false; limit];
        let mut out = Vec::new();
        for i in 2..limit {
            if !composite[i] {
                out.push(i as u32);
                for j in (i * i..limit).step_by(i) {
                    composite[j] = true;
                }
            }
        }
        out
    })
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest prime `>= n`. Returns `None` on 64-bit overflow.
pub fn next_prime_u64(n: u64) -> Option<u64> {
    if n <= 2 {
        return Some(2);
    }
    let mut c = n | 1;
    loop {
        if is_prime_u64(c) {
            return Some(c);
        }
        c = c.checked_add(2)?;
    }
}

fn miller_rabin(n: &BigUint, bases: &[u32]) -> bool {
    let one = BigUint::one();
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    'witness: for &a in bases {
        let a = BigUint::from(a);
        if a >= n_minus_1 {
            continue;
        }
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&BigUint::from(2u8), n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Primality test: exact below 2^64, Miller-Rabin with fixed bases above.
pub fn is_probable_prime(n: &BigUint) -> bool {
    if let Some(small) = n.to_u64() {
        return is_prime_u64(small);
    }
    if n.is_even() {
        return false;
    }
    for &p in small_primes().iter().take(256) {
        if (n % p).is_zero() {
            return false;
        }
    }
    miller_rabin(n, &MR_BASES)
}

fn fermat_base2(n: &BigUint) -> bool {
    BigUint::from(2u8).modpow(&(n - 1u8), n).is_one()
}

fn random_bits<R: RngCore + ?Sized>(bits: u64, rng: &mut R) -> BigUint {
    let len = bits.div_ceil(8) as usize;
    let mut buf = vec![0u8; len];
    rng.fill_bytes(&mut buf);
    let excess = len as u64 * 8 - bits;
    buf[0] &= 0xffu8 >> excess;
    BigUint::from_bytes_be(&buf)
}

/// Uniform integer in `[0, bound)` by rejection sampling.
pub fn random_below<R: RngCore + ?Sized>(bound: &BigUint, rng: &mut R) -> BigUint {
    assert!(!bound.is_zero());
    let bits = bound.bits();
    loop {
        let x = random_bits(bits, rng);
        if &x < bound {
            return x;
        }
    }
}

/// Random odd integer of exactly `bits` bits with the top two bits set.
fn random_top_two<R: RngCore + ?Sized>(bits: u64, rng: &mut R) -> BigUint {
    let mut x = random_bits(bits, rng);
    x.set_bit(bits - 1, true);
    x.set_bit(bits - 2, true);
    x.set_bit(0, true);
    x
}

/// Window of candidates `base + 2k`, `k < len`, that stay inside `bits` bits.
fn window_base<R: RngCore + ?Sized>(bits: u64, len: usize, rng: &mut R) -> BigUint {
    loop {
        let base = random_top_two(bits, rng);
        let last = &base + BigUint::from(2 * len as u64);
        if last.bits() == bits {
            return base;
        }
    }
}

fn window_len(bits: u64) -> usize {
    // Candidates with the top two bits set span 2^(bits-2) integers.
    let span = 1u128 << (bits - 2).min(100);
    (span / 8).clamp(1, WINDOW as u128) as usize
}

/// Sieve primes usable for candidates of `bits` bits (all strictly smaller
/// than any candidate).
fn sieve_primes(bits: u64) -> impl Iterator<Item = u32> {
    let cap = if bits - 2 >= 32 {
        u64::MAX
    } else {
        1u64 << (bits - 2)
    };
    small_primes()
        .iter()
        .skip(1)
        .copied()
        .take_while(move |&r| (r as u64) < cap)
}

/// Random prime of exactly `bits` bits with the top two bits set, so the
/// product of two such primes has exactly the sum of their bit lengths.
pub fn random_prime<R: RngCore + ?Sized>(bits: u64, rng: &mut R) -> BigUint {
    assert!(bits >= 8, "prime size too small");
    let len = window_len(bits);
    loop {
        let base = window_base(bits, len, rng);
        let mut composite = vec![false; len];
        for r in sieve_primes(bits) {
            let rem = (&base % r).to_u64().unwrap();
            let r64 = r as u64;
            let inv2 = r64.div_ceil(2);
            // base + 2k ≡ 0 (mod r)
            let start = ((r64 - rem) % r64) * inv2 % r64;
            for k in (start as usize..len).step_by(r as usize) {
                composite[k] = true;
            }
        }
        for (k, _) in composite.iter().enumerate().filter(|(_, c)| !**c) {
            let cand = &base + BigUint::from(2 * k as u64);
            if fermat_base2(&cand) && is_probable_prime(&cand) {
                return cand;
            }
        }
    }
}

/// Safe prime `p = 2p' + 1` of exactly `bits` bits. Gives up after
/// `max_windows` sieve windows.
///
/// `p'` is checked with Miller-Rabin; `p` then follows from Pocklington's
/// criterion with witness 2 (`p' > sqrt(p)`, `2^(p-1) ≡ 1`, `gcd(3, p) = 1`).
pub fn random_safe_prime<R: RngCore + ?Sized>(
    bits: u64,
    max_windows: u64,
    rng: &mut R,
) -> Option<BigUint> {
    assert!(bits >= 8, "safe prime size too small");
    let sub_bits = bits - 1;
    let len = window_len(sub_bits);
    for _ in 0..max_windows {
        let base = window_base(sub_bits, len, rng);
        let mut composite = vec![false; len];
        for r in sieve_primes(sub_bits) {
            let r64 = r as u64;
            let rem = (&base % r).to_u64().unwrap();
            let inv2 = r64.div_ceil(2);
            // p' ≡ 0 and p' ≡ (r-1)/2 (i.e. 2p'+1 ≡ 0) are both excluded.
            for target in [0, (r64 - 1) / 2] {
                let start = ((target + r64 - rem) % r64) * inv2 % r64;
                for k in (start as usize..len).step_by(r as usize) {
                    composite[k] = true;
                }
            }
        }
        for (k, _) in composite.iter().enumerate().filter(|(_, c)| !**c) {
            let sub = &base + BigUint::from(2 * k as u64);
            if !fermat_base2(&sub) {
                continue;
            }
            let p = (&sub << 1u8) + 1u8;
            if fermat_base2(&p) && (&p % 3u8) != BigUint::zero() && is_probable_prime(&sub) {
                return Some(p);
            }
        }
    }
    None
}

/// True when `p` and `(p - 1) / 2` are both prime.
pub fn is_safe_prime(p: &BigUint) -> bool {
    p.is_odd() && *p > BigUint::from(5u8) && is_probable_prime(p) && is_probable_prime(&(p >> 1u8))
}
