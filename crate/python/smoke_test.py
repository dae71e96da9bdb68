"""Smoke test for the psn extension module.

Build and install first, e.g. `maturin develop -m crates/py/Cargo.toml`.
"""

import hashlib
import json
import sys
import tempfile
from pathlib import Path

import psn


def check(cond, what):
    if not cond:
        sys.exit(f"FAIL {what}")
    print(f"ok   {what}")


def main():
    check(psn.hash(b"abc") == hashlib.sha256(b"abc").digest(), "hash is sha256")

    toy = psn.RsaKey.from_primes(61, 53, 17)
    check(toy.n == 3233 and toy.d == 2753, "toy rsa key")
    z, t = 7, 42
    mu = psn.blind(b"reading", z, toy.n, toy.e)
    sig = psn.unblind(toy.blind_sign_ts(mu, t), z, toy.n)
    check(toy.verify_ts(b"reading", t, sig), "blind signature verifies under its timestamp")
    check(not toy.verify_ts(b"reading", t + 1, sig), "blind signature rejects another timestamp")

    pbs = psn.PbsKey.generate(256, 1)
    info = b"task-3"
    mu = pbs.blind(b"token", info, 11)
    sig = pbs.unblind(pbs.sign(mu, info), 11)
    check(pbs.verify(b"token", info, sig), "partially blind signature verifies")
    check(not pbs.verify(b"token", b"task-4", sig), "partially blind signature is bound to its info")

    sc = psn.Scenario(M=2, c_max=4, policy_c=2, n_participants=2, key_bits=256, horizon=300, attack="replay")
    check(psn.Scenario.parse(sc.to_flat()).to_dict() == sc.to_dict(), "scenario round-trips")
    a = psn.run(sc, seed=7)
    b = psn.run(sc.to_flat(), seed=7)
    check(a.transcript_hash == b.transcript_hash, "runs are deterministic")
    check(a.violations() == [], "replay run has no violations")
    check(a.balances == {**a.granted, "mallory": 0}, "balances equal granted credits")
    bad = psn.run(sc, seed=7, disable_ledger=True)
    check(bad.violations() != [], "disabled ledger is caught")
    with tempfile.TemporaryDirectory() as d:
        a.write(d)
        written = (Path(d) / "transcript.sha256").read_text().strip()
        check(written == a.transcript_hash, "artifacts written")
    json.dumps(a.summary())

    st = psn.storage(3, 4, key_bits=256)
    check(st["within_bound"] and st["bound"] == 18 and st["baseline"] == 27, "storage bound")

    suite = psn.attack_suite(seed=5, key_bits=256, schedules=2)
    check(suite["passed"], "attack suite passes")
    check(not psn.attack_suite(seed=5, key_bits=256, schedules=2, disable_ledger=True)["passed"],
          "attack suite catches disabled ledger")

    csv = psn.bench(tasks=[1, 2], c=2, key_bits=256, repeat=1)
    check(csv.splitlines()[0] == "tasks,phase,side,median_ns,c,key_bits,repeat", "bench csv header")
    check(isinstance(psn.bench(tasks=[1], c=2, key_bits=256, repeat=1, format="json"), dict), "bench json")

    print("all checks passed")


if __name__ == "__main__":
    main()
