use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, OnceLock};
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::crypto::{keygen_pbs, keygen_rsa, CryptoError, PbsKeyPair, RsaKeyPair};
use crate::protocol::PublicParams;

/// The server's three signing keys: RSA `(e, d)` and the two partially blind
/// keys K1 (request tokens) and K2 (report tokens), each on its own modulus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerKeys {
    pub rsa: RsaKeyPair,
    pub k1: PbsKeyPair,
    pub k2: PbsKeyPair,
}

impl ServerKeys {
    /// Generates all three keys from one seed. The keys use independent
    /// sub-seeds and are generated on separate threads.
    pub fn generate(bits: u64, seed: u64) -> Result<Self, CryptoError> {
        let mut root = ChaCha20Rng::seed_from_u64(seed);
        let seeds: [u64; 3] = root.random();
        thread::scope(|s| {
            let rsa = s.spawn(|| keygen_rsa(bits, &mut ChaCha20Rng::seed_from_u64(seeds[0])));
            let k1 = s.spawn(|| keygen_pbs(bits, &mut ChaCha20Rng::seed_from_u64(seeds[1])));
            let k2 = keygen_pbs(bits, &mut ChaCha20Rng::seed_from_u64(seeds[2]));
            Ok(Self {
                rsa: rsa.join().expect("keygen thread panicked")?,
                k1: k1.join().expect("keygen thread panicked")?,
                k2: k2?,
            })
        })
    }

    /// Process-wide memoized [`ServerKeys::generate`]. Large keys take seconds
    /// to find; simulations with the same `(bits, seed)` share them.
    pub fn cached(bits: u64, seed: u64) -> Result<Arc<Self>, CryptoError> {
        type Cache = Mutex<BTreeMap<(u64, u64), Arc<OnceLock<Arc<ServerKeys>>>>>;
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let slot = CACHE
            .get_or_init(Default::default)
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .entry((bits, seed))
            .or_default()
            .clone();
        if let Some(keys) = slot.get() {
            return Ok(keys.clone());
        }
        let keys = Arc::new(Self::generate(bits, seed)?);
        Ok(slot.get_or_init(|| keys).clone())
    }

    pub fn public_params(&self) -> PublicParams {
        PublicParams {
            rsa: self.rsa.public(),
            k1: self.k1.public(),
            k2: self.k2.public(),
        }
    }

    pub fn bits(&self) -> u64 {
        self.rsa.n.bits()
    }
}
