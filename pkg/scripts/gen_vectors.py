"""Write test vectors computed by the independent oracle.

    python3 scripts/gen_vectors.py [outdir]

Inputs are fixed byte strings derived from labels, so the files are
reproducible.  Each record is a block of ``key = value`` lines separated
by a blank line.
"""

from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))
import oracle  # noqa: E402


def _bytes(label: str, n: int = 32) -> bytes:
    out = b""
    i = 0
    while len(out) < n:
        out += oracle.sha256(f"{label}/{i}".encode())
        i += 1
    return out[:n]


def _write(path: Path, records: list[dict]) -> None:
    lines = []
    for rec in records:
        lines += [f"{k} = {v}" for k, v in rec.items()]
        lines.append("")
    path.write_text("\n".join(lines))


def chain_records() -> list[dict]:
    cases = [
        (0, "test.doc/_v1", 1),
        (1_700_000_000, "obj00000.doc/_v1", 10),
        (-5, "reports/q3.pdf/_v12", 4),
        (2**62, "a/_v0", 25),
    ]
    out = []
    for i, (t_p, oid, length) in enumerate(cases):
        kp = _bytes(f"publisher-{i}")
        z0 = oracle.zeta0(t_p, oid)
        gens, keys = oracle.chain(z0, length, kp)
        rec = {"publish_time": t_p, "object_id": oid, "length": length, "publisher_public": kp.hex(),
               "zeta0": z0.hex(), "key_msg": keys[0].hex()}
        rec["generators"] = ",".join(g.hex() for g in gens)
        rec["segment_keys"] = ",".join(k.hex() for k in keys)
        out.append(rec)
    return out


def key_records() -> list[dict]:
    out = []
    for i, t_m in enumerate([0, 1, 1_700_000_000_123_456, 2**64 - 1]):
        kp = _bytes(f"kp-{i}")
        n_s = _bytes(f"ns-{i}")
        out.append({"publisher_public": kp.hex(), "n_s": n_s.hex(), "issue_time_us": t_m,
                    "k_ts": oracle.k_ts(kp, n_s).hex(), "k_s": oracle.k_s(t_m, n_s).hex(),
                    "n_s_digest": oracle.H(n_s).hex()})
    return out


def hash_records() -> list[dict]:
    out = []
    for parts in ([b""], [b"abc"], [b"ab", b"c"], [b"a", b"bc"], [b"", b""], [b"x" * 200, b"y" * 3, b""]):
        out.append({"parts": ",".join(p.hex() for p in parts), "digest": oracle.H(*parts).hex()})
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    outdir = Path(argv[0]) if argv else Path(__file__).resolve().parent.parent / "vectors"
    outdir.mkdir(parents=True, exist_ok=True)
    _write(outdir / "hash.txt", hash_records())
    _write(outdir / "chain.txt", chain_records())
    _write(outdir / "keys.txt", key_records())
    return 0


if __name__ == "__main__":
    sys.exit(main())
