use std::collections::BTreeSet;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::HarnessError;
use crate::crypto::{blind, blind_sign_ts, unblind, BlindingFactor, RsaKeyPair, Timestamp};
use crate::server::{Faults, ServerKeys};
use crate::sim::{run_with, structural_signature, Attack, Expect, RunOptions, Scenario};

/// Property groups, in table order.
pub const PROPERTIES: [&str; 5] = [
    "over-earning",
    "theft-and-forgery",
    "task-unlinkability",
    "report-unlinkability",
    "credit-unlinkability",
];

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub seed: u64,
    pub key_bits: u64,
    pub key_seed: u64,
    /// Randomized adversarial schedules for the over-earning group.
    pub schedules: u32,
    pub forgery_trials: u32,
    pub faults: Faults,
}

impl SuiteConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            key_bits: 1024,
            key_seed: Scenario::default().key_seed,
            schedules: 20,
            forgery_trials: 1000,
            faults: Faults::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SuiteRow {
    pub property: &'static str,
    pub check: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub rows: Vec<SuiteRow>,
}

impl SuiteReport {
    pub fn property_passed(&self, property: &str) -> bool {
        self.rows
            .iter()
            .filter(|r| r.property == property)
            .all(|r| r.passed)
    }

    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for p in PROPERTIES {
            let verdict = if self.property_passed(p) {
                "PASS"
            } else {
                "FAIL"
            };
            out.push_str(&format!("{verdict}  {p}\n"));
            for r in self.rows.iter().filter(|r| r.property == p) {
                let mark = if r.passed { "ok  " } else { "FAIL" };
                out.push_str(&format!("      {mark} {}: {}\n", r.check, r.detail));
            }
        }
        out
    }
}

struct Rows(Vec<SuiteRow>);

impl Rows {
    fn push(&mut self, property: &'static str, check: &str, passed: bool, detail: String) {
        self.0.push(SuiteRow {
            property,
            check: check.to_string(),
            passed,
            detail,
        });
    }
}

/// Runs every attack and linkage check once and tabulates the results.
pub fn attack_suite(cfg: &SuiteConfig) -> Result<SuiteReport, HarnessError> {
    let opts = RunOptions {
        faults: cfg.faults,
        swap_secrets: None,
    };
    let base = Scenario {
        m: 3,
        c_max: 4,
        policy_c: 3,
        n_participants: 3,
        key_bits: cfg.key_bits,
        key_seed: cfg.key_seed,
        windows: 2,
        horizon: 600,
        forgery_trials: cfg.forgery_trials,
        ..Scenario::default()
    };
    let mut rows = Rows(Vec::new());
    over_earning(cfg, &base, opts, &mut rows)?;
    theft_and_forgery(cfg, &base, opts, &mut rows)?;
    unlinkability(cfg, &base, opts, &mut rows)?;
    Ok(SuiteReport {
        seed: cfg.seed,
        rows: rows.0,
    })
}

fn over_earning(
    cfg: &SuiteConfig,
    base: &Scenario,
    opts: RunOptions,
    rows: &mut Rows,
) -> Result<(), HarnessError> {
    const P: &str = "over-earning";
    let sc = Scenario {
        attack: Attack::Replay,
        ..base.clone()
    };
    let b = run_with(&sc, cfg.seed, opts)?;
    for (prefix, check) in [
        ("in-window", "in-window replay"),
        ("next-window", "next-window replay"),
    ] {
        let recs: Vec<_> = b
            .attacks
            .iter()
            .filter(|a| a.label.starts_with(prefix))
            .collect();
        let kinds: BTreeSet<&str> = recs.iter().map(|a| a.kind.as_str()).collect();
        let bad: Vec<String> = recs
            .iter()
            .filter(|a| a.breach || !a.matched)
            .map(|a| format!("{} -> {}", a.kind, a.outcome))
            .collect();
        let covered = ["task-request", "report", "deposit"]
            .iter()
            .all(|k| kinds.contains(k));
        rows.push(
            P,
            check,
            covered && bad.is_empty(),
            if bad.is_empty() {
                format!(
                    "{} replays over {} kinds rejected as expected",
                    recs.len(),
                    kinds.len()
                )
            } else {
                format!("unexpected: {}", bad.join(", "))
            },
        );
    }
    let balance_ok = b.violations().is_empty();
    rows.push(
        P,
        "replay balances",
        balance_ok,
        violations_detail(&b.violations()),
    );

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let sc = Scenario {
        attack: Attack::RandomReplay,
        windows: 2,
        ..base.clone()
    };
    let (mut injected, mut failed) = (0, Vec::new());
    for _ in 0..cfg.schedules {
        let seed: u64 = rng.random();
        let b = run_with(&sc, seed, opts)?;
        injected += b.attacks.len();
        if !b.violations().is_empty() {
            failed.push(format!("seed {seed}: {}", b.violations()[0]));
        }
    }
    rows.push(
        P,
        "randomized schedules",
        failed.is_empty(),
        if failed.is_empty() {
            format!(
                "{} schedules, {injected} injected messages, no value gained",
                cfg.schedules
            )
        } else {
            format!(
                "{} of {} schedules breached; {}",
                failed.len(),
                cfg.schedules,
                failed[0]
            )
        },
    );
    Ok(())
}

fn theft_and_forgery(
    cfg: &SuiteConfig,
    base: &Scenario,
    opts: RunOptions,
    rows: &mut Rows,
) -> Result<(), HarnessError> {
    const P: &str = "theft-and-forgery";
    let sc = Scenario {
        attack: Attack::Theft,
        windows: 1,
        ..base.clone()
    };
    let b = run_with(&sc, cfg.seed, opts)?;
    let stolen = b.attacks.len();
    let rejected = b
        .attacks
        .iter()
        .filter(|a| a.matched && a.expected == Expect::Reject(Some("IdentityMismatch")))
        .count();
    rows.push(
        P,
        "stolen tokens",
        stolen > 0 && rejected == stolen,
        format!("{rejected}/{stolen} stolen deposits rejected with IdentityMismatch"),
    );
    rows.push(
        P,
        "theft balances",
        b.violations().is_empty(),
        violations_detail(&b.violations()),
    );

    let sc = Scenario {
        attack: Attack::Forgery,
        windows: 1,
        ..base.clone()
    };
    let b = run_with(&sc, cfg.seed, opts)?;
    for f in &b.forgeries {
        rows.push(
            P,
            &format!("forgery {}", f.strategy),
            f.trials > 0 && f.rejected == f.trials,
            format!("{}/{} rejected {:?}", f.rejected, f.trials, f.outcomes),
        );
    }
    Ok(())
}

fn unlinkability(
    cfg: &SuiteConfig,
    base: &Scenario,
    opts: RunOptions,
    rows: &mut Rows,
) -> Result<(), HarnessError> {
    let sc = Scenario {
        windows: 1,
        ..base.clone()
    };
    let honest = run_with(&sc, cfg.seed, opts)?;
    let link = honest.linkage();
    rows.push(
        "task-unlinkability",
        "pseudonym reuse",
        link.pseudonyms_seen > 0 && link.pseudonym_reuse.is_empty(),
        format!(
            "{} pseudonyms, {} reused across phases or tasks",
            link.pseudonyms_seen,
            link.pseudonym_reuse.len()
        ),
    );

    let swapped = run_with(
        &sc,
        cfg.seed,
        RunOptions {
            swap_secrets: Some((0, 1)),
            ..opts
        },
    )?;
    let same =
        structural_signature(honest.transcript()) == structural_signature(swapped.transcript());
    rows.push(
        "report-unlinkability",
        "secret swap",
        same,
        format!(
            "server-visible structure {} after swapping two participants' secrets",
            if same { "unchanged" } else { "changed" }
        ),
    );
    let toy = blinding_bijection_holds(61, 53, 17);
    rows.push(
        "report-unlinkability",
        "blinding bijection",
        toy,
        "z -> m*z^e permutes the units modulo 3233".into(),
    );

    rows.push(
        "credit-unlinkability",
        "preimage exposure",
        link.preimages_checked > 0 && link.preimages_leaked == 0,
        format!(
            "{} deposited preimages, {} seen before deposit",
            link.preimages_checked, link.preimages_leaked
        ),
    );
    let keys = ServerKeys::cached(cfg.key_bits, cfg.key_seed)
        .map_err(|e| HarnessError::Invalid(format!("key generation: {e}")))?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0xb11d);
    let agree = (0..16).all(|k| {
        let msg = format!("credit {k}");
        unblinded_signatures_agree(&keys.rsa, msg.as_bytes(), Timestamp(k), &mut rng)
    });
    rows.push(
        "credit-unlinkability",
        "unblinded equality",
        agree,
        "signatures unblinded from distinct blinding factors are identical".into(),
    );
    Ok(())
}

fn violations_detail(v: &[String]) -> String {
    match v.first() {
        None => "every balance within granted credits".into(),
        Some(first) => format!("{} violations, first: {first}", v.len()),
    }
}

/// Exhaustively checks that `z -> m·z^e mod n` maps the units of `Z_n` onto
/// themselves for `n = p·q`, with `m = 2`.
pub fn blinding_bijection_holds(p: u64, q: u64, e: u64) -> bool {
    let n = BigUint::from(p * q);
    let e = BigUint::from(e);
    let m = BigUint::from(2u8);
    let units: BTreeSet<BigUint> = (1..p * q)
        .map(BigUint::from)
        .filter(|z| z.gcd(&n).is_one())
        .collect();
    let image: BTreeSet<BigUint> = units.iter().map(|z| &m * z.modpow(&e, &n) % &n).collect();
    image == units
}

/// Blinds `msg` with two independent factors, signs both blinded values with
/// timestamp `ts`, unblinds, and compares the results as integers.
pub fn unblinded_signatures_agree<R: Rng>(
    key: &RsaKeyPair,
    msg: &[u8],
    ts: Timestamp,
    rng: &mut R,
) -> bool {
    let z1 = BlindingFactor::random(&key.n, rng);
    let mut z2 = BlindingFactor::random(&key.n, rng);
    while z2 == z1 {
        z2 = BlindingFactor::random(&key.n, rng);
    }
    let sign = |z: &BlindingFactor| {
        let mu = blind(msg, z, &key.n, &key.e);
        blind_sign_ts(key, &mu, ts).map(|s| unblind(&s, z, &key.n))
    };
    match (sign(&z1), sign(&z2)) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}
