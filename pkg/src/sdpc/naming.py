"""Hybrid content names.

An encoded name is a sequence of typed, length-prefixed components::

    type (1 byte) | length (2 bytes, big-endian) | value

Routable prefix components are ``GENERIC`` and stay readable.  A protected
name adds one digest component (``FIRST_DIGEST`` for the consumer-unique
form carrying Hash(n_S), ``SEGMENT_DIGEST`` for the shared form carrying
Hash(KEY_MSG)) and one ``CIPHERTEXT`` component holding the deterministic
encryption of ``<object>/_v<d>/_s<d>``.
"""

from __future__ import annotations

import enum
import functools
import re
from dataclasses import dataclass

from . import crypto

GENERIC = 0x08
FIRST_DIGEST = 0x01
SEGMENT_DIGEST = 0x02
CIPHERTEXT = 0x03

_PATH_RE = re.compile(r"^(?P<object>[^/]+(?:/[^/]+)*?)/_v(?P<version>\d+)/_s(?P<segment>\d+)$")


class NameParseError(ValueError):
    pass


class NameKind(enum.Enum):
    FIRST_INTEREST = "first"
    SHARED_SEGMENT = "segment"
    PLAIN = "plain"


@dataclass(frozen=True)
class ObjectPath:
    object: str
    version: int
    segment: int

    def __str__(self) -> str:
        return f"{self.object}/_v{self.version}/_s{self.segment}"

    @property
    def object_id(self) -> str:
        return f"{self.object}/_v{self.version}"

    def with_segment(self, segment: int) -> "ObjectPath":
        return ObjectPath(self.object, self.version, segment)

    @classmethod
    def parse(cls, text: str) -> "ObjectPath":
        m = _PATH_RE.match(text)
        if m is None:
            raise crypto.InvalidArgument(f"malformed object path: {text!r}")
        return cls(m["object"], int(m["version"]), int(m["segment"]))


@dataclass(frozen=True)
class SdpcName:
    prefix: tuple[str, ...]
    kind: NameKind
    digest: bytes | None = None
    sealed_path: bytes | None = None
    plain: tuple[str, ...] = ()

    def encode(self) -> bytes:
        parts = [_component(GENERIC, c.encode()) for c in self.prefix]
        if self.kind is NameKind.PLAIN:
            parts += [_component(GENERIC, c.encode()) for c in self.plain]
        else:
            dtype = FIRST_DIGEST if self.kind is NameKind.FIRST_INTEREST else SEGMENT_DIGEST
            parts.append(_component(dtype, self.digest))
            parts.append(_component(CIPHERTEXT, self.sealed_path))
        return b"".join(parts)

    def render(self) -> str:
        return render(self.encode())


def _component(ctype: int, value: bytes) -> bytes:
    if len(value) > 0xFFFF:
        raise crypto.InvalidArgument("name component too long")
    return bytes([ctype]) + len(value).to_bytes(2, "big") + value


def split_prefix(prefix: str | tuple[str, ...]) -> tuple[str, ...]:
    if isinstance(prefix, tuple):
        return prefix
    return tuple(c for c in prefix.split("/") if c)


@functools.lru_cache(maxsize=1 << 18)
def _seal_path(key: bytes, path: str) -> bytes:
    return crypto.sym_encrypt(key, path.encode(), deterministic=True)


def open_path(key: bytes, name: SdpcName) -> ObjectPath:
    """Recover the object path from a protected name (requires the key)."""
    if name.sealed_path is None:
        raise crypto.InvalidArgument("name has no sealed path")
    plain = crypto.sym_decrypt(key, name.sealed_path, deterministic=True)
    return ObjectPath.parse(plain.decode())


def _as_path(object_path: str | ObjectPath) -> ObjectPath:
    if isinstance(object_path, ObjectPath):
        return object_path
    return ObjectPath.parse(object_path)


def first_interest_name(prefix, n_s: bytes, k_ts: bytes, object_path) -> SdpcName:
    path = _as_path(object_path)
    return SdpcName(
        prefix=split_prefix(prefix),
        kind=NameKind.FIRST_INTEREST,
        digest=crypto.hash_bytes(n_s),
        sealed_path=_seal_path(k_ts, str(path)),
    )


def segment_name(prefix, key_msg: bytes, chain: crypto.KeyChain, object_path, segment_index: int) -> SdpcName:
    """Shared name for segment ``segment_index`` (1..L) of an object.

    Index 0 is reserved for the first-interest name, and K_0 equals
    KEY_MSG, so it is never used to seal a shared name.
    """
    if not 1 <= segment_index <= chain.length:
        raise crypto.InvalidArgument(
            f"segment index {segment_index} outside 1..{chain.length}"
        )
    path = _as_path(object_path).with_segment(segment_index)
    return SdpcName(
        prefix=split_prefix(prefix),
        kind=NameKind.SHARED_SEGMENT,
        digest=crypto.hash_bytes(key_msg),
        sealed_path=_seal_path(chain.segment_keys[segment_index], str(path)),
    )


def plain_name(prefix, *components: str) -> SdpcName:
    return SdpcName(prefix=split_prefix(prefix), kind=NameKind.PLAIN, plain=tuple(components))


def parse_name(encoded: bytes) -> SdpcName:
    comps: list[tuple[int, bytes]] = []
    i = 0
    n = len(encoded)
    if n == 0:
        raise NameParseError("empty name")
    while i < n:
        if i + 3 > n:
            raise NameParseError("truncated component header")
        ctype = encoded[i]
        ln = int.from_bytes(encoded[i + 1 : i + 3], "big")
        i += 3
        if i + ln > n:
            raise NameParseError("truncated component value")
        comps.append((ctype, encoded[i : i + ln]))
        i += ln
    generic = []
    idx = 0
    while idx < len(comps) and comps[idx][0] == GENERIC:
        try:
            generic.append(comps[idx][1].decode())
        except UnicodeDecodeError as exc:
            raise NameParseError("generic component is not text") from exc
        idx += 1
    rest = comps[idx:]
    if not rest:
        return SdpcName(prefix=tuple(generic), kind=NameKind.PLAIN)
    if len(rest) != 2 or rest[1][0] != CIPHERTEXT or rest[0][0] not in (FIRST_DIGEST, SEGMENT_DIGEST):
        raise NameParseError("protected names need exactly digest + ciphertext after the prefix")
    if len(rest[0][1]) != crypto.DIGEST_SIZE:
        raise NameParseError("digest component must be 32 bytes")
    kind = NameKind.FIRST_INTEREST if rest[0][0] == FIRST_DIGEST else NameKind.SHARED_SEGMENT
    return SdpcName(prefix=tuple(generic), kind=kind, digest=rest[0][1], sealed_path=rest[1][1])


def render(encoded: bytes) -> str:
    """Debug form ``prefix/#<hex8>/enc:<hex>`` used in logs and traces."""
    try:
        name = parse_name(encoded)
    except NameParseError:
        return "!malformed:" + encoded.hex()
    head = "/".join(name.prefix)
    if name.kind is NameKind.PLAIN:
        return head
    return f"{head}/#{name.digest.hex()[:8]}/enc:{name.sealed_path.hex()}"
