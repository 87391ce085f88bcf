"""Independent reference for the key derivations.

Pure Python, standard library only, and deliberately shares no code with
the package: SHA-256 is written out from FIPS 180-4 rather than taken
from hashlib, and every derivation is restated from its definition.  The
test-vector files in ``vectors/`` are produced by this module alone.
"""

from __future__ import annotations

_K = [
    0x428A2F98, 0x71374491, 0xB5C0FBCF, 0xE9B5DBA5, 0x3956C25B, 0x59F111F1, 0x923F82A4, 0xAB1C5ED5,
    0xD807AA98, 0x12835B01, 0x243185BE, 0x550C7DC3, 0x72BE5D74, 0x80DEB1FE, 0x9BDC06A7, 0xC19BF174,
    0xE49B69C1, 0xEFBE4786, 0x0FC19DC6, 0x240CA1CC, 0x2DE92C6F, 0x4A7484AA, 0x5CB0A9DC, 0x76F988DA,
    0x983E5152, 0xA831C66D, 0xB00327C8, 0xBF597FC7, 0xC6E00BF3, 0xD5A79147, 0x06CA6351, 0x14292967,
    0x27B70A85, 0x2E1B2138, 0x4D2C6DFC, 0x53380D13, 0x650A7354, 0x766A0ABB, 0x81C2C92E, 0x92722C85,
    0xA2BFE8A1, 0xA81A664B, 0xC24B8B70, 0xC76C51A3, 0xD192E819, 0xD6990624, 0xF40E3585, 0x106AA070,
    0x19A4C116, 0x1E376C08, 0x2748774C, 0x34B0BCB5, 0x391C0CB3, 0x4ED8AA4A, 0x5B9CCA4F, 0x682E6FF3,
    0x748F82EE, 0x78A5636F, 0x84C87814, 0x8CC70208, 0x90BEFFFA, 0xA4506CEB, 0xBEF9A3F7, 0xC67178F2,
]
_H0 = [0x6A09E667, 0xBB67AE85, 0x3C6EF372, 0xA54FF53A, 0x510E527F, 0x9B05688C, 0x1F83D9AB, 0x5BE0CD19]
_M = 0xFFFFFFFF


def _rotr(x: int, n: int) -> int:
    return ((x >> n) | (x << (32 - n))) & _M


def sha256(data: bytes) -> bytes:
    bitlen = len(data) * 8
    msg = data + b"\x80" + b"\x00" * ((55 - len(data)) % 64) + bitlen.to_bytes(8, "big")
    h = list(_H0)
    for off in range(0, len(msg), 64):
        w = [int.from_bytes(msg[off + 4 * i : off + 4 * i + 4], "big") for i in range(16)]
        for i in range(16, 64):
            s0 = _rotr(w[i - 15], 7) ^ _rotr(w[i - 15], 18) ^ (w[i - 15] >> 3)
            s1 = _rotr(w[i - 2], 17) ^ _rotr(w[i - 2], 19) ^ (w[i - 2] >> 10)
            w.append((w[i - 16] + s0 + w[i - 7] + s1) & _M)
        a, b, c, d, e, f, g, hh = h
        for i in range(64):
            t1 = (hh + (_rotr(e, 6) ^ _rotr(e, 11) ^ _rotr(e, 25)) + ((e & f) ^ (~e & g)) + _K[i] + w[i]) & _M
            t2 = ((_rotr(a, 2) ^ _rotr(a, 13) ^ _rotr(a, 22)) + ((a & b) ^ (a & c) ^ (b & c))) & _M
            a, b, c, d, e, f, g, hh = (t1 + t2) & _M, a, b, c, (d + t1) & _M, e, f, g
        h = [(x + y) & _M for x, y in zip(h, (a, b, c, d, e, f, g, hh))]
    return b"".join(x.to_bytes(4, "big") for x in h)


def H(*parts: bytes) -> bytes:
    """One argument: plain digest.  Several: each framed by a 4-byte length."""
    if len(parts) == 1:
        return sha256(parts[0])
    return sha256(b"".join(len(p).to_bytes(4, "big") + p for p in parts))


def zeta0(publish_time: int, object_id: str) -> bytes:
    return H(publish_time.to_bytes(8, "big", signed=True), object_id.encode())


def chain(z0: bytes, length: int, publisher_public: bytes) -> tuple[list[bytes], list[bytes]]:
    """Generators zeta_0..zeta_L and keys K_0..K_L; K_0 is KEY_MSG."""
    gens = [z0]
    while len(gens) <= length:
        gens.append(H(gens[-1]))
    return gens, [H(g, publisher_public) for g in gens]


def k_ts(publisher_public: bytes, n_s: bytes) -> bytes:
    hp = H(publisher_public)
    return H(bytes(x ^ y for x, y in zip(hp, n_s)))


def k_s(issue_time_us: int, n_s: bytes) -> bytes:
    t = issue_time_us.to_bytes(32, "big")
    return H(bytes(x ^ y for x, y in zip(t, n_s)))
