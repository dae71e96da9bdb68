//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::One;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use psn_core::crypto::{
    blind, blind_sign_ts, keygen_pbs, keygen_rsa, pbs_blind, pbs_sign, pbs_verify, unblind,
    verify_ts, BlindingFactor, PbsKeyPair, RsaKeyPair, Timestamp,
};
use psn_core::harness::{
    bench, blinding_bijection_holds, storage_record, unblinded_signatures_agree, BenchConfig, Side,
};
use psn_core::protocol::Phase;
use psn_core::server::ServerKeys;
use psn_core::sim::{run, Attack, Expect, Scenario, TranscriptBundle};
use psn_core::token::task_common_info;

const FULL_BITS: u64 = 2048;
const FAST_BITS: u64 = 512;
const KEY_SEED: u64 = 0x5eed;

struct Outcome {
    passed: bool,
    detail: String,
}

fn check(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

/// Every bundle produced along the way, for the transcript-wide checks.
struct Corpus(Vec<TranscriptBundle>);

fn main() {
    let started = Instant::now();
    let provision = Instant::now();
    let full = ServerKeys::cached(FULL_BITS, KEY_SEED).expect("2048-bit keys");
    ServerKeys::cached(FAST_BITS, KEY_SEED).expect("512-bit keys");
    println!("provisioned server keys in {:.2?}", provision.elapsed());

    let mut corpus = Corpus(Vec::new());
    let criteria: Vec<(&str, Outcome)> = vec![
        ("happy path", happy_path(&mut corpus)),
        ("over-earning", over_earning(&mut corpus)),
        ("theft and forgery", theft_and_forgery(&mut corpus)),
        (
            "unlinkability surrogates",
            unlinkability(&full, &mut corpus),
        ),
        ("crypto round trips", round_trips(&full)),
        ("storage accounting", storage()),
        ("performance shape", performance()),
        ("determinism", determinism()),
    ];
    let mut failed = 0;
    for (k, (name, o)) in criteria.iter().enumerate() {
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        println!("{verdict} criterion {}: {name}: {}", k + 1, o.detail);
        failed += usize::from(!o.passed);
    }
    println!(
        "{} of {} criteria passed in {:.1?}",
        criteria.len() - failed,
        criteria.len(),
        started.elapsed()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn happy_path(corpus: &mut Corpus) -> Outcome {
    let sc = Scenario {
        m: 1,
        c_max: 10,
        policy_c: 5,
        n_participants: 1,
        key_bits: FULL_BITS,
        key_seed: KEY_SEED,
        ..Scenario::default()
    };
    let t = Instant::now();
    let b = run(&sc, 1).expect("happy path runs");
    let elapsed = t.elapsed();
    let balance = b.balances["sp-000"];
    let p = &b.participants[0];
    let deposits = b
        .transcript()
        .entries()
        .iter()
        .filter(|e| e.kind == "deposit" && e.outcome == "ok")
        .count();
    let s = b.storage;
    let consistent = b.violations().is_empty()
        && deposits == 5
        && s.peak_credit == 5
        && s.peak_total <= 7
        && s.counts.total() == 0
        && p.granted == 5
        && p.deposited == 5;
    let passed = balance == 5 && p.wallet == 0 && consistent && elapsed < Duration::from_secs(5);
    let detail = format!(
        "balance {balance}, wallet {}, ledger peak {} (credit {}), final ledger {}, run {:.2?} at {FULL_BITS} bits",
        p.wallet, s.peak_total, s.peak_credit, s.counts.total(), elapsed
    );
    corpus.0.push(b);
    check(passed, detail)
}

fn over_earning(corpus: &mut Corpus) -> Outcome {
    let base = Scenario {
        m: 2,
        c_max: 4,
        policy_c: 3,
        n_participants: 3,
        key_bits: FAST_BITS,
        key_seed: KEY_SEED,
        windows: 2,
        horizon: 400,
        ..Scenario::default()
    };
    let replay = run(
        &Scenario {
            attack: Attack::Replay,
            ..base.clone()
        },
        2,
    )
    .unwrap();
    let mut problems = Vec::new();
    let want_in = [
        ("task-request", "ReusedRequestToken"),
        ("report", "ReusedReportToken"),
        ("deposit", "DoubleDeposit"),
    ];
    for (kind, err) in want_in {
        let hit = replay
            .attacks
            .iter()
            .any(|a| a.label.starts_with("in-window") && a.kind == kind && a.outcome == err);
        if !hit {
            problems.push(format!("in-window {kind} not rejected with {err}"));
        }
    }
    let next_deposit = replay
        .attacks
        .iter()
        .find(|a| a.label.starts_with("next-window") && a.kind == "deposit");
    if next_deposit.map(|a| a.outcome.as_str()) != Some("ExpiredTimestamp") {
        problems.push("next-window deposit not rejected with ExpiredTimestamp".into());
    }
    for a in &replay.attacks {
        if a.breach || !a.matched {
            problems.push(format!("{}: {} -> {}", a.label, a.kind, a.outcome));
        }
    }
    let replays = replay.attacks.len();
    corpus.0.push(replay);

    let schedule = Scenario {
        attack: Attack::RandomReplay,
        ..base
    };
    let mut seeds = ChaCha20Rng::seed_from_u64(0xadd);
    let (mut injected, mut accepted, mut over) = (0, 0, 0);
    for k in 0..100 {
        let b = run(&schedule, seeds.random()).unwrap();
        injected += b.attacks.len();
        accepted += b.attacks.iter().filter(|a| a.breach).count();
        over += b
            .balances
            .iter()
            .filter(|(rid, bal)| **bal > b.granted.get(*rid).copied().unwrap_or(0))
            .count();
        if !b.violations().is_empty() {
            problems.push(format!("schedule {k}: {}", b.violations()[0]));
        }
        if k < 10 {
            corpus.0.push(b);
        }
    }
    let detail = format!(
        "{replays} targeted replays; 100 random schedules, {injected} injected, {accepted} accepted, {over} balances above grant{}",
        problems.first().map(|p| format!("; first problem: {p}")).unwrap_or_default()
    );
    check(problems.is_empty() && accepted == 0 && over == 0, detail)
}

fn theft_and_forgery(corpus: &mut Corpus) -> Outcome {
    let base = Scenario {
        m: 2,
        c_max: 5,
        policy_c: 5,
        n_participants: 2,
        key_bits: FULL_BITS,
        key_seed: KEY_SEED,
        forgery_trials: 1000,
        ..Scenario::default()
    };
    let theft = run(
        &Scenario {
            attack: Attack::Theft,
            ..base.clone()
        },
        3,
    )
    .unwrap();
    let stolen = theft.attacks.len();
    let rejected = theft
        .attacks
        .iter()
        .filter(|a| a.expected == Expect::Reject(Some("IdentityMismatch")) && a.matched)
        .count();
    let theft_ok = stolen > 0 && rejected == stolen && theft.violations().is_empty();

    let forgery = run(
        &Scenario {
            attack: Attack::Forgery,
            ..base
        },
        3,
    )
    .unwrap();
    let mut forged = Vec::new();
    let mut forgery_ok = forgery.violations().is_empty();
    for f in &forgery.forgeries {
        let needed = if f.strategy == "borrowed-identity" {
            1
        } else {
            1000
        };
        forgery_ok &= f.trials >= needed && f.rejected == f.trials;
        forged.push(format!("{} {}/{}", f.strategy, f.rejected, f.trials));
    }
    corpus.0.push(theft);
    corpus.0.push(forgery);
    check(
        theft_ok && forgery_ok,
        format!(
            "stolen {rejected}/{stolen} rejected; forgeries rejected at {FULL_BITS} bits: {}",
            forged.join(", ")
        ),
    )
}

fn unlinkability(keys: &Arc<ServerKeys>, corpus: &mut Corpus) -> Outcome {
    let honest = run(
        &Scenario {
            m: 3,
            c_max: 4,
            policy_c: 3,
            n_participants: 4,
            key_bits: FAST_BITS,
            key_seed: KEY_SEED,
            windows: 2,
            horizon: 500,
            ..Scenario::default()
        },
        4,
    )
    .unwrap();
    corpus.0.push(honest);

    let (mut pids, mut reused, mut checked, mut leaked) = (0, 0, 0, 0);
    for b in &corpus.0 {
        let l = b.linkage();
        pids += l.pseudonyms_seen;
        reused += l.pseudonym_reuse.len();
        checked += l.preimages_checked;
        leaked += l.preimages_leaked;
    }
    let a = reused == 0 && pids > 0;
    let b = leaked == 0 && checked > 0;

    // Exhaustive over the units of two toy moduli, through the real blinding
    // function and an arbitrary fixed message.
    let c = blinding_is_bijective(15, 3)
        && blinding_is_bijective(3233, 17)
        && blinding_bijection_holds(61, 53, 17);

    let mut rng = ChaCha20Rng::seed_from_u64(44);
    let d = (0..32).all(|k| {
        let msg = format!("credit-{k}");
        unblinded_signatures_agree(&keys.rsa, msg.as_bytes(), Timestamp(k), &mut rng)
    });
    check(
        a && b && c && d,
        format!(
            "(a) {pids} pseudonyms over {} transcripts, {reused} reused; (b) {checked} preimages, {leaked} exposed early; (c) bijection {}; (d) unblinded equality {}",
            corpus.0.len(),
            if c { "holds" } else { "fails" },
            if d { "holds" } else { "fails" }
        ),
    )
}

fn blinding_is_bijective(n: u64, e: u64) -> bool {
    let nb = BigUint::from(n);
    let eb = BigUint::from(e);
    let units: BTreeSet<BigUint> = (1..n)
        .map(BigUint::from)
        .filter(|z| z.gcd(&nb).is_one())
        .collect();
    let image: BTreeSet<BigUint> = units
        .iter()
        .map(|z| {
            blind(
                b"fixed message",
                &BlindingFactor::new(z.clone(), &nb).unwrap(),
                &nb,
                &eb,
            )
        })
        .collect();
    image == units
}

fn rsa_trials(key: &RsaKeyPair, rng: &mut ChaCha20Rng, trials: usize) -> usize {
    (0..trials)
        .filter(|_| {
            let mut msg = vec![0u8; 48];
            rng.fill_bytes(&mut msg);
            let t = Timestamp(rng.random_range(0..1 << 40));
            let z = BlindingFactor::random(&key.n, rng);
            let mu = blind(&msg, &z, &key.n, &key.e);
            let s = unblind(&blind_sign_ts(key, &mu, t).unwrap(), &z, &key.n);
            verify_ts(&key.n, &key.e, &msg, t, &s)
        })
        .count()
}

/// Returns (verified, accepted under another task's common information).
fn pbs_trials(key: &PbsKeyPair, rng: &mut ChaCha20Rng, trials: usize) -> (usize, usize) {
    let pk = key.public();
    let (mut ok, mut cross) = (0, 0);
    for _ in 0..trials {
        let mut msg = vec![0u8; 32];
        rng.fill_bytes(&mut msg);
        let i = rng.random_range(1..1_000_000u64);
        let info = task_common_info(i);
        let z = BlindingFactor::random(&key.n, rng);
        let mu = pbs_blind(&pk, &msg, &info, &z).unwrap();
        let s = unblind(&pbs_sign(key, &mu, &info).unwrap(), &z, &key.n);
        ok += usize::from(pbs_verify(&pk, &msg, &info, &s));
        cross += usize::from(pbs_verify(&pk, &msg, &task_common_info(i + 1), &s));
    }
    (ok, cross)
}

fn round_trips(keys: &Arc<ServerKeys>) -> Outcome {
    const TRIALS: usize = 1000;
    let mut rng = ChaCha20Rng::seed_from_u64(55);
    let toy_rsa = keygen_rsa(64, &mut rng).unwrap();
    let toy_pbs = keygen_pbs(96, &mut rng).unwrap();
    let rsa_toy = rsa_trials(&toy_rsa, &mut rng, TRIALS);
    let rsa_full = rsa_trials(&keys.rsa, &mut rng, TRIALS);
    let (pbs_toy, cross_toy) = pbs_trials(&toy_pbs, &mut rng, TRIALS);
    let (pbs_k1, cross_k1) = pbs_trials(&keys.k1, &mut rng, TRIALS);
    let (pbs_k2, cross_k2) = pbs_trials(&keys.k2, &mut rng, TRIALS);
    let all = [rsa_toy, rsa_full, pbs_toy, pbs_k1, pbs_k2];
    check(
        all.iter().all(|&v| v == TRIALS) && cross_toy + cross_k1 + cross_k2 == 0,
        format!(
            "blind RSA {rsa_toy}/{TRIALS} toy, {rsa_full}/{TRIALS} at {FULL_BITS}; PBS {pbs_toy}/{TRIALS} toy, {pbs_k1}+{pbs_k2}/{} at {FULL_BITS}; cross-info accepted {}",
            2 * TRIALS,
            cross_toy + cross_k1 + cross_k2
        ),
    )
}

fn storage() -> Outcome {
    let mut rows = Vec::new();
    let mut ok = true;
    for m in [1u32, 2, 4] {
        for c_max in [5u32, 10] {
            let r = storage_record(m, c_max, FAST_BITS).unwrap();
            let bound = 2 * m as u64 + m as u64 * c_max as u64;
            let baseline = m as u64 * (2 * c_max as u64 + 1);
            ok &= r.server_peak as u64 <= bound
                && r.bound == bound
                && r.wallet_peak == r.c as usize
                && r.baseline == baseline;
            rows.push(format!(
                "M={m},cmax={c_max}: peak {}/{bound}, wallet {}",
                r.server_peak, r.wallet_peak
            ));
        }
    }
    let single = storage_record(1, 10, FAST_BITS).unwrap();
    ok &= single.bound == 12 && single.baseline == 21;
    check(
        ok,
        format!(
            "{}; M=1,cmax=10 bound {} baseline {}",
            rows.join("; "),
            single.bound,
            single.baseline
        ),
    )
}

fn performance() -> Outcome {
    let cfg = BenchConfig {
        repeat: 5,
        ..BenchConfig::default()
    };
    let default_repeat = BenchConfig::default().repeat;
    let report = bench(&cfg).unwrap();
    let mut shape = true;
    for &n in &cfg.tasks {
        let cells = report.table(n);
        shape &= cells.len() == 6;
        for c in cells {
            let absent = c.phase == Phase::CreditDeposit.tag() && c.side == Side::SP;
            shape &= c.median_ns.is_none() == absent;
        }
    }
    let one = report.table(1);
    let cell = |phase: Phase, side: Side| {
        one.iter()
            .find(|c| c.phase == phase.tag() && c.side == side)
            .and_then(|c| c.median_ns)
    };
    let ss_report = cell(Phase::ReportSubmission, Side::SS).unwrap_or(0);
    let dominant = [Phase::TaskRequest, Phase::CreditDeposit]
        .iter()
        .all(|p| cell(*p, Side::SS).unwrap_or(u64::MAX) < ss_report);
    let r2 = report.fit.r2;
    check(
        r2 >= 0.9 && shape && default_repeat == 100,
        format!(
            "R^2 {r2:.4} over N={:?} at {} bits ({} repeats, slope {:.2} ms/task); table shape {}; default repeat {default_repeat}; report submission dominant SS phase: {dominant}",
            cfg.tasks,
            cfg.key_bits,
            cfg.repeat,
            report.fit.slope / 1e6,
            if shape { "ok" } else { "wrong" }
        ),
    )
}

fn determinism() -> Outcome {
    let mut ok = true;
    let mut n = 0;
    for attack in [
        Attack::None,
        Attack::Replay,
        Attack::Theft,
        Attack::Forgery,
        Attack::RandomReplay,
    ] {
        for seed in [0u64, 1, u64::MAX] {
            let sc = Scenario {
                m: 2,
                n_participants: 2,
                key_bits: FAST_BITS,
                key_seed: KEY_SEED,
                windows: 2,
                horizon: 400,
                forgery_trials: 50,
                attack,
                ..Scenario::default()
            };
            let a = run(&sc, seed).unwrap();
            let b = run(&sc, seed).unwrap();
            ok &= a.transcript_hash() == b.transcript_hash()
                && a.envelope_lines() == b.envelope_lines();
            n += 1;
        }
    }
    check(
        ok,
        format!("{n} scenario/seed pairs reproduced byte-identical transcript hashes"),
    )
}
