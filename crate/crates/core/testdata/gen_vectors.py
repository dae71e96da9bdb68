"""Independent reference values for the golden-vector tests.

Recomputes hashing, full-domain hashing, toy RSA, identifier layouts and token
wire bytes with Python's standard library only. Integers that may exceed
64 bits are written as decimal strings. Run from this directory:

    python3 gen_vectors.py > golden.json
"""

import hashlib
import json
import math


def sha(b):
    return hashlib.sha256(b).digest()


def enc_int(x):
    body = b"" if x == 0 else x.to_bytes((x.bit_length() + 7) // 8, "big")
    return len(body).to_bytes(4, "big") + body


def enc_bytes(b):
    return len(b).to_bytes(4, "big") + b


def fdh(data, n):
    bits = n.bit_length()
    length = (bits + 7) // 8
    blocks = (length + 31) // 32
    attempt = 0
    while True:
        buf = b"".join(
            sha(data + attempt.to_bytes(4, "big") + b.to_bytes(4, "big")) for b in range(blocks)
        )[:length]
        x = int.from_bytes(buf, "big") & ((1 << bits) - 1)
        if 1 <= x < n and math.gcd(x, n) == 1:
            return x
        attempt += 1


def is_prime(n):
    if n < 2:
        return False
    return all(n % d for d in range(2, math.isqrt(n) + 1))


def derive_exponent(info, lam):
    v = int.from_bytes(sha(info)[:8], "big") >> (64 - lam)
    e = max(v | 1, 3)
    while not is_prime(e):
        e += 2
    return e


def ts(t):
    return t.to_bytes(8, "big")


def main():
    out = {}
    out["hash_empty"] = sha(b"").hex()
    out["hash_abc"] = sha(b"abc").hex()
    out["encode_int"] = [[x, enc_int(x).hex()] for x in [0, 1, 127, 128, 255, 256, 65535, 2**32, 2**64 - 1]]

    msgs = [b"", b"abc", bytes(range(40)), b"credit"]
    moduli = [15, 3233, 1081, (2**89 - 1) * (2**61 - 1)]
    out["fdh"] = [[m.hex(), str(n), str(fdh(m, n))] for n in moduli for m in msgs]

    p, q, e = 61, 53, 17
    n, phi = p * q, (p - 1) * (q - 1)
    d = pow(e, -1, phi)
    toy = {"p": p, "q": q, "e": e, "n": n, "phi": phi, "d": d, "sign": [], "pipeline": []}
    for m in msgs:
        toy["sign"].append([m.hex(), pow(fdh(m, n), d, n)])
    for m, z, t in [(b"abc", 7, 5), (b"credit", 1234, 0), (bytes(range(40)), 3001, 2**40 + 3)]:
        mu = fdh(m, n) * pow(z, e, n) % n
        sb = pow(mu * fdh(ts(t), n) % n, d, n)
        s = sb * pow(z, -1, n) % n
        toy["pipeline"].append({"msg": m.hex(), "z": z, "t": t, "mu": mu, "blind_sig": sb, "sig": s})
    out["toy_rsa"] = toy

    out["derive_exponent"] = [
        [i, lam, derive_exponent(enc_int(i), lam)] for lam in (16, 32) for i in (1, 2, 3, 10, 1000)
    ]

    r1, r2, r3 = b"secret-one", b"secret-two", b"secret-three"
    rid_sig = 0x1D2C3B4A5968778695A4B3C2D1E0F
    ids = {"r1": r1.hex(), "r2": r2.hex(), "r3": r3.hex(), "rid_sig": str(rid_sig)}
    ids["tau"] = [[i, sha(enc_int(i) + sha(r1)).hex()] for i in (1, 2, 7)]
    ids["preimage"] = [
        [i, j, (sha(enc_int(i) + enc_int(j) + sha(r2)) + enc_int(rid_sig)).hex()]
        for i, j in ((1, 1), (1, 2), (9, 3))
    ]
    ids["blind_factor"] = [
        [i, j, fdh(enc_int(i) + enc_int(j) + sha(r3), 3233)] for i, j in ((1, 1), (1, 2), (9, 3))
    ]
    mus, i, cmax = [5, 1000, 3232], 4, 3
    ids["report_id"] = {
        "mus": mus,
        "i": i,
        "c_max": cmax,
        "b": sha(b"".join(enc_int(x) for x in mus) + enc_int(i) + enc_int(cmax)).hex(),
    }
    out["identifiers"] = ids

    ident = bytes(range(32))
    sig = 0xABCDEF0123
    pre = sha(b"x") + enc_int(rid_sig)
    out["tokens"] = {
        "identifier": ident.hex(),
        "sig": sig,
        "request": (b"\x01" + enc_int(3) + enc_bytes(ident) + enc_int(sig)).hex(),
        "report": (b"\x02" + enc_int(3) + enc_bytes(ident) + enc_int(sig)).hex(),
        "credit_preimage": pre.hex(),
        "credit_t": 42,
        "credit": (b"\x03" + enc_bytes(pre) + enc_bytes(ts(42)) + enc_int(sig)).hex(),
    }
    print(json.dumps(out, indent=1))



if __name__ == "__main__":
    main()
