"""Key-generation primitives for protected content.

Every ``H(.)`` in the scheme is SHA-256.  Single-argument hashing is the
plain digest; multi-argument hashing frames each argument with a 4-byte
big-endian length so that ``H("ab", "c") != H("a", "bc")``.

Payload and protocol encryption uses AES-256-GCM with a random IV; name
components use AES-SIV so that equal (key, plaintext) pairs give equal
ciphertext.  ``seal``/``open_sealed`` is an X25519 + AES-GCM hybrid.  It is
a stand-in for the publisher public-key encryption and is not meant to be
a hardened construction.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM, AESSIV
from cryptography.hazmat.primitives import serialization

HASH_NAME = "sha256"
DIGEST_SIZE = 32
KEY_SIZE = 32
NONCE_BITS = 128
NONCE_MASK = (1 << NONCE_BITS) - 1
GCM_IV_SIZE = 12


class CryptoError(Exception):
    """Base class for primitive failures."""


class DecryptionError(CryptoError):
    """Authenticated decryption rejected the ciphertext (wrong key or tampering)."""


class InvalidArgument(ValueError):
    pass


# -- hashing -----------------------------------------------------------------


def hash_bytes(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def frame(*parts: bytes) -> bytes:
    """Length-prefixed concatenation used by every multi-argument hash."""
    out = bytearray()
    for p in parts:
        out += len(p).to_bytes(4, "big")
        out += p
    return bytes(out)


def hash_many(*parts: bytes) -> bytes:
    return hash_bytes(frame(*parts))


def xor_bytes(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        raise InvalidArgument(f"xor of unequal widths {len(a)} != {len(b)}")
    return bytes(x ^ y for x, y in zip(a, b))


def int_to_256(value: int) -> bytes:
    """256-bit big-endian encoding of a non-negative integer."""
    if value < 0 or value >= 1 << 256:
        raise InvalidArgument("value does not fit in 256 bits")
    return value.to_bytes(32, "big")


# -- keys --------------------------------------------------------------------


@dataclass(frozen=True)
class PublisherKeyPair:
    """X25519 keypair.  ``public`` is the raw 32-byte canonical encoding."""

    public: bytes
    private: bytes = field(repr=False)

    @classmethod
    def generate(cls, rng: random.Random | None = None) -> "PublisherKeyPair":
        raw = _randbytes(rng, 32)
        priv = X25519PrivateKey.from_private_bytes(raw)
        pub = priv.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        )
        return cls(public=pub, private=raw)


def _randbytes(rng: random.Random | None, n: int) -> bytes:
    if rng is None:
        import os

        return os.urandom(n)
    return rng.getrandbits(8 * n).to_bytes(n, "big")


def fresh_nonce(rng: random.Random) -> int:
    return rng.getrandbits(NONCE_BITS)


def nonce_succ(n: int, step: int = 1) -> int:
    """Challenge response ``n + step`` with 128-bit wraparound."""
    return (n + step) & NONCE_MASK


def nonce_bytes(n: int) -> bytes:
    return (n & NONCE_MASK).to_bytes(16, "big")


def nonce_from_bytes(b: bytes) -> int:
    if len(b) != 16:
        raise InvalidArgument("nonce must be 16 bytes")
    return int.from_bytes(b, "big")


# -- chain -------------------------------------------------------------------


def commitment_generator(publish_time: int, object_id: str) -> bytes:
    """zeta_0 = H(T_P, O_j); ``object_id`` carries name and version."""
    if not object_id:
        raise InvalidArgument("object_id must be non-empty")
    return hash_many(publish_time.to_bytes(8, "big", signed=True), object_id.encode())


def segment_key(generator: bytes, publisher_public: bytes) -> bytes:
    return hash_many(generator, publisher_public)


@dataclass(frozen=True)
class KeyChain:
    object_id: str
    publish_time: int | None
    generators: tuple[bytes, ...]
    segment_keys: tuple[bytes, ...]
    key_msg: bytes
    length: int

    @property
    def seed(self) -> bytes:
        return self.generators[0]


def build_chain(
    zeta0: bytes,
    length: int,
    publisher_public: bytes,
    object_id: str = "",
    publish_time: int | None = None,
) -> KeyChain:
    if length < 1:
        raise InvalidArgument("chain length must be >= 1")
    if len(zeta0) != DIGEST_SIZE:
        raise InvalidArgument("zeta0 must be a 32-byte digest")
    gens = [zeta0]
    for _ in range(length):
        gens.append(hash_bytes(gens[-1]))
    keys = tuple(segment_key(g, publisher_public) for g in gens)
    return KeyChain(
        object_id=object_id,
        publish_time=publish_time,
        generators=tuple(gens),
        segment_keys=keys,
        key_msg=keys[0],
        length=length,
    )


def chain_length(size: int, segment_size: int) -> int:
    if size <= 0 or segment_size <= 0:
        raise InvalidArgument("size and segment_size must be positive")
    return math.ceil(size / segment_size)


def subscription_key(publisher_public: bytes, n_s: bytes) -> bytes:
    """K_TS = H(H(K_p) xor n_S).  Also used with a padded nonce for the
    third-party temporary key."""
    if len(n_s) != 32:
        raise InvalidArgument("secret number must be 256 bits")
    return hash_bytes(xor_bytes(hash_bytes(publisher_public), n_s))


def session_key(issue_time: int, n_s: bytes) -> bytes:
    """K_S = H(T_M xor n_S) with T_M as a 256-bit big-endian integer."""
    if len(n_s) != 32:
        raise InvalidArgument("secret number must be 256 bits")
    return hash_bytes(xor_bytes(int_to_256(issue_time), n_s))


# -- symmetric ---------------------------------------------------------------


def sym_encrypt(
    key: bytes,
    plaintext: bytes,
    deterministic: bool = False,
    rng: random.Random | None = None,
) -> bytes:
    if len(key) != KEY_SIZE:
        raise InvalidArgument("symmetric keys are 256 bits")
    if deterministic:
        return AESSIV(key).encrypt(plaintext, None)
    iv = _randbytes(rng, GCM_IV_SIZE)
    return iv + AESGCM(key).encrypt(iv, plaintext, None)


def sym_decrypt(key: bytes, ciphertext: bytes, deterministic: bool = False) -> bytes:
    if len(key) != KEY_SIZE:
        raise InvalidArgument("symmetric keys are 256 bits")
    try:
        if deterministic:
            return AESSIV(key).decrypt(ciphertext, None)
        if len(ciphertext) < GCM_IV_SIZE + 16:
            raise DecryptionError("ciphertext too short")
        return AESGCM(key).decrypt(ciphertext[:GCM_IV_SIZE], ciphertext[GCM_IV_SIZE:], None)
    except InvalidTag as exc:
        raise DecryptionError("authentication failed") from exc


# -- sealing -----------------------------------------------------------------


def _seal_key(shared: bytes, eph_pub: bytes, recipient: bytes) -> bytes:
    return hash_many(b"sdpc-seal", shared, eph_pub, recipient)


def seal(recipient_public: bytes, message: bytes, rng: random.Random | None = None) -> bytes:
    eph = X25519PrivateKey.from_private_bytes(_randbytes(rng, 32))
    eph_pub = eph.public_key().public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw
    )
    shared = eph.exchange(X25519PublicKey.from_public_bytes(recipient_public))
    key = _seal_key(shared, eph_pub, recipient_public)
    # fresh key per blob, so a fixed IV is fine
    return eph_pub + AESGCM(key).encrypt(b"\x00" * GCM_IV_SIZE, message, None)


def open_sealed(keypair: PublisherKeyPair, blob: bytes) -> bytes:
    if len(blob) < 32 + 16:
        raise DecryptionError("sealed blob too short")
    eph_pub, body = blob[:32], blob[32:]
    priv = X25519PrivateKey.from_private_bytes(keypair.private)
    shared = priv.exchange(X25519PublicKey.from_public_bytes(eph_pub))
    key = _seal_key(shared, eph_pub, keypair.public)
    try:
        return AESGCM(key).decrypt(b"\x00" * GCM_IV_SIZE, body, None)
    except InvalidTag as exc:
        raise DecryptionError("sealed blob does not open with this key") from exc


def pack(*fields: bytes) -> bytes:
    """Length-framed concatenation for protocol plaintexts (same as ``frame``)."""
    return frame(*fields)


def unpack(blob: bytes, count: int | None = None) -> list[bytes]:
    out = []
    i = 0
    while i < len(blob):
        if i + 4 > len(blob):
            raise InvalidArgument("truncated field header")
        n = int.from_bytes(blob[i : i + 4], "big")
        i += 4
        if i + n > len(blob):
            raise InvalidArgument("truncated field body")
        out.append(blob[i : i + n])
        i += n
    if count is not None and len(out) != count:
        raise InvalidArgument(f"expected {count} fields, got {len(out)}")
    return out
