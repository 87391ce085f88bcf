"""Consumer, publisher and subscription-manager roles.

Roles are plain event-driven objects.  Each ``handle_*`` method takes one
inbound :class:`Message` and returns the outbound message (or ``None``).
Every authentication failure is a silent reject: nothing is sent back, the
run is aborted and the transcript records the reason.

Flows and message steps::

    subp    m1 C->P, m2 P->M, m3 M->P, m4 P->C, m6 C->P, m5 P->M
    apsub   a1 C->P, a2 P->C, a3 C->P
    apsub3  b1 C->Pj, b2 Pj->M, b3 M->Pj, b4 Pj->C, b5 C->Pj, b6 Pj->M

The grant handed to a consumer carries the chain seed zeta_0 (always under
the consumer's session key); the consumer derives KEY_MSG and the segment
keys from it, because KEY_MSG itself is a one-way image of zeta_0.
"""

from __future__ import annotations

import csv
import enum
import io
import random
from dataclasses import dataclass, field

from . import crypto, naming
from .crypto import pack, unpack

ACTIVE_PROFILE = b"\x01"
EXPIRED_PROFILE = b"\x00"
DEFAULT_TICKET_DEADLINE = 5.0


class Flow(str, enum.Enum):
    SUBP = "subp"
    APSUB = "apsub"
    APSUB3 = "apsub3"


class RunState(str, enum.Enum):
    AWAIT_M3 = "await-m3"
    AWAIT_M4 = "await-m4"
    AWAIT_M5 = "await-m5"
    AWAIT_M6 = "await-m6"
    AWAIT_A2 = "await-a2"
    AWAIT_A3 = "await-a3"
    AWAIT_B3 = "await-b3"
    AWAIT_B4 = "await-b4"
    AWAIT_B5 = "await-b5"
    AWAIT_B6 = "await-b6"
    DONE = "done"
    ABORTED = "aborted"
    STOLEN = "stolen"


@dataclass
class Message:
    flow: Flow
    step: str
    sender: str
    receiver: str
    run_id: str
    fields: dict[str, bytes] = field(default_factory=dict)
    name: bytes | None = None

    def wire(self) -> bytes:
        """Bytes visible to anyone on the path."""
        parts = [self.flow.value.encode(), self.step.encode(), self.run_id.encode()]
        if self.name is not None:
            parts.append(self.name)
        for k in sorted(self.fields):
            parts += [k.encode(), self.fields[k]]
        return pack(*parts)

    def copy(self, **changes) -> "Message":
        d = dict(
            flow=self.flow,
            step=self.step,
            sender=self.sender,
            receiver=self.receiver,
            run_id=self.run_id,
            fields=dict(self.fields),
            name=self.name,
        )
        d.update(changes)
        return Message(**d)


@dataclass(frozen=True)
class Ticket:
    sealed: bytes
    issuer: str

    @property
    def digest(self) -> bytes:
        return crypto.hash_bytes(self.sealed)


@dataclass(frozen=True)
class KeyMsgGrant:
    key_msg: bytes
    object_id: str
    granted_to: str
    chain: crypto.KeyChain


@dataclass
class Registration:
    consumer_id: str
    n_s: bytes
    profile: bytes = ACTIVE_PROFILE


class RegistrationDB:
    """Hash table keyed by Hash(n_S)."""

    def __init__(self):
        self.table: dict[bytes, Registration] = {}
        self.lookups = 0

    def register(self, consumer_id: str, n_s: bytes, profile: bytes = ACTIVE_PROFILE) -> bytes:
        digest = crypto.hash_bytes(n_s)
        self.table[digest] = Registration(consumer_id, n_s, profile)
        return digest

    def lookup(self, digest: bytes) -> Registration | None:
        self.lookups += 1
        return self.table.get(digest)

    def __len__(self):
        return len(self.table)


@dataclass
class ProtocolRun:
    run_id: str
    flow: Flow
    role: str
    state: RunState
    peer: str = ""
    started_at: float = 0.0
    deadline: float | None = None
    nonces: dict[str, int] = field(default_factory=dict)
    data: dict = field(default_factory=dict)


@dataclass
class TranscriptEntry:
    run_id: str
    flow: str
    step: str
    sender: str
    receiver: str
    digest: str
    verdict: str


class Transcript:
    """Append-only per-message log."""

    FIELDS = ["run_id", "flow", "step", "sender", "receiver", "digest", "verdict"]

    def __init__(self):
        self.entries: list[TranscriptEntry] = []

    def record(self, msg: Message, verdict: str) -> None:
        self.entries.append(
            TranscriptEntry(
                msg.run_id,
                msg.flow.value,
                msg.step,
                msg.sender,
                msg.receiver,
                crypto.hash_bytes(msg.wire()).hex()[:16],
                verdict,
            )
        )

    def for_run(self, run_id: str) -> list[TranscriptEntry]:
        return [e for e in self.entries if e.run_id == run_id]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.FIELDS)
        for e in self.entries:
            w.writerow([getattr(e, f) for f in self.FIELDS])
        return buf.getvalue()


def _now_us(now: float) -> int:
    return int(round(now * 1_000_000))


def _grant_plain(published: "PublishedObject") -> bytes:
    return pack(
        published.chain.object_id.encode(),
        published.chain.seed,
        published.chain.length.to_bytes(4, "big"),
    )


def _chain_from_grant(blob: bytes, publisher_public: bytes) -> crypto.KeyChain:
    object_id, seed, length = unpack(blob, 3)
    return crypto.build_chain(seed, int.from_bytes(length, "big"), publisher_public, object_id.decode())


class Role:
    def __init__(self, ident: str, rng: random.Random, transcript: Transcript | None = None):
        self.id = ident
        self.rng = rng
        self.transcript = transcript
        self.runs: dict[str, ProtocolRun] = {}
        self.rejects: dict[str, int] = {}
        # deliberately broken checks, used only by attack controls
        self.weaken: frozenset[str] = frozenset()

    def _log(self, msg: Message, verdict: str) -> None:
        if self.transcript is not None:
            self.transcript.record(msg, verdict)

    def _reject(self, msg: Message, reason: str, run: ProtocolRun | None = None) -> None:
        self.rejects[reason] = self.rejects.get(reason, 0) + 1
        if run is not None and run.state not in (RunState.DONE, RunState.STOLEN):
            run.state = RunState.ABORTED
        self._log(msg, "reject:" + reason)
        return None

    def _dispatch(self, handler, msg: Message, now: float):
        if handler is None:
            return self._reject(msg, "unknown-step")
        try:
            return handler(msg, now)
        except KeyError:
            run = self.runs.get(msg.run_id)
            return self._reject(msg, "missing-field", run)

    def _expect(self, msg: Message, flow: Flow, state: RunState) -> ProtocolRun | None:
        run = self.runs.get(msg.run_id)
        if run is None or run.flow is not flow or run.state is not state:
            return None
        return run


# ---------------------------------------------------------------------------
# consumer


class Consumer(Role):
    def __init__(self, ident: str, n_s: bytes, rng: random.Random, transcript: Transcript | None = None):
        super().__init__(ident, rng, transcript)
        if len(n_s) != 32:
            raise crypto.InvalidArgument("n_S must be 256 bits")
        self.n_s = n_s
        self.tickets: dict[str, tuple[Ticket, bytes]] = {}
        # keyed by (publisher id, object id): object ids are only unique per publisher
        self.grants: dict[tuple[str, str], KeyMsgGrant] = {}
        self.keys_ts: dict[str, bytes] = {}
        self._run_counter = 0

    def _new_run(self, flow: Flow, peer: str, now: float) -> ProtocolRun:
        self._run_counter += 1
        run_id = f"{self.id}.{self._run_counter}.{self.rng.getrandbits(32):08x}"
        run = ProtocolRun(run_id, flow, "consumer", RunState.DONE, peer=peer, started_at=now)
        self.runs[run_id] = run
        return run

    def k_ts(self, publisher_public: bytes) -> bytes:
        key = self.keys_ts.get(publisher_public)
        if key is None:
            key = self.keys_ts[publisher_public] = crypto.subscription_key(publisher_public, self.n_s)
        return key

    def _first_name(self, prefix, publisher_public: bytes, object_path: naming.ObjectPath) -> bytes:
        return naming.first_interest_name(
            prefix, self.n_s, self.k_ts(publisher_public), object_path.with_segment(0)
        ).encode()

    # -- subp --
    def start_subp(self, publisher_id, prefix, publisher_public, object_path, now=0.0) -> Message:
        path = naming._as_path(object_path)
        run = self._new_run(Flow.SUBP, publisher_id, now)
        run.state = RunState.AWAIT_M4
        n0 = crypto.fresh_nonce(self.rng)
        k_ts = self.k_ts(publisher_public)
        run.nonces["n0"] = n0
        run.data.update(k_ts=k_ts, publisher_public=publisher_public, path=path)
        msg = Message(
            Flow.SUBP, "m1", self.id, publisher_id, run.run_id,
            {"enc_n0": crypto.sym_encrypt(k_ts, crypto.nonce_bytes(n0), rng=self.rng)},
            name=self._first_name(prefix, publisher_public, path),
        )
        self._log(msg, "send")
        return msg

    def handle_m4(self, msg: Message, now=0.0) -> Message | None:
        run = self._expect(msg, Flow.SUBP, RunState.AWAIT_M4)
        if run is None or msg.sender != run.peer:
            return self._reject(msg, "unexpected")
        try:
            n0r, n1, sealed, k_s = unpack(crypto.sym_decrypt(run.data["k_ts"], msg.fields["u0"]), 4)
        except (crypto.CryptoError, crypto.InvalidArgument, KeyError):
            return self._reject(msg, "u0-decrypt", run)
        if crypto.nonce_from_bytes(n0r) != crypto.nonce_succ(run.nonces["n0"]):
            return self._reject(msg, "n0-mismatch", run)
        try:
            chain = _chain_from_grant(crypto.sym_decrypt(k_s, msg.fields["grant"]), run.data["publisher_public"])
        except (crypto.CryptoError, crypto.InvalidArgument, KeyError):
            return self._reject(msg, "grant-decrypt", run)
        if chain.object_id != run.data["path"].object_id:
            return self._reject(msg, "wrong-object", run)
        self._log(msg, "accept")
        ticket = Ticket(sealed, msg.sender)
        self.tickets[msg.sender] = (ticket, k_s)
        run.nonces["n1"] = crypto.nonce_from_bytes(n1)
        run.data["k_s"] = k_s
        self.grants[(msg.sender, chain.object_id)] = KeyMsgGrant(chain.key_msg, chain.object_id, self.id, chain)
        run.state = RunState.DONE
        out = Message(
            Flow.SUBP, "m6", self.id, msg.sender, run.run_id,
            {"resp": crypto.sym_encrypt(k_s, crypto.nonce_bytes(crypto.nonce_succ(run.nonces["n1"])), rng=self.rng)},
        )
        self._log(out, "send")
        return out

    # -- apsub --
    def start_apsub(self, publisher_id, prefix, publisher_public, object_path, now=0.0) -> Message:
        ticket, k_s = self.tickets[publisher_id]
        path = naming._as_path(object_path)
        run = self._new_run(Flow.APSUB, publisher_id, now)
        run.state = RunState.AWAIT_A2
        n0 = crypto.fresh_nonce(self.rng)
        run.nonces["n0"] = n0
        run.data.update(k_s=k_s, publisher_public=publisher_public, path=path)
        body = pack(self.id.encode(), crypto.nonce_bytes(n0), str(path.with_segment(0)).encode())
        msg = Message(
            Flow.APSUB, "a1", self.id, publisher_id, run.run_id,
            {"access": crypto.sym_encrypt(k_s, body, rng=self.rng), "ticket": ticket.sealed},
            name=self._first_name(prefix, publisher_public, path),
        )
        self._log(msg, "send")
        return msg

    def handle_a2(self, msg: Message, now=0.0) -> Message | None:
        run = self._expect(msg, Flow.APSUB, RunState.AWAIT_A2)
        if run is None or msg.sender != run.peer:
            return self._reject(msg, "unexpected")
        try:
            n0r, n1, grant = unpack(crypto.sym_decrypt(run.data["k_s"], msg.fields["reply"]), 3)
            chain = _chain_from_grant(grant, run.data["publisher_public"])
        except (crypto.CryptoError, crypto.InvalidArgument, KeyError):
            return self._reject(msg, "reply-decrypt", run)
        if crypto.nonce_from_bytes(n0r) != crypto.nonce_succ(run.nonces["n0"]):
            return self._reject(msg, "n0-mismatch", run)
        if chain.object_id != run.data["path"].object_id:
            return self._reject(msg, "wrong-object", run)
        self._log(msg, "accept")
        run.nonces["n1"] = crypto.nonce_from_bytes(n1)
        self.grants[(msg.sender, chain.object_id)] = KeyMsgGrant(chain.key_msg, chain.object_id, self.id, chain)
        run.state = RunState.DONE
        out = Message(
            Flow.APSUB, "a3", self.id, msg.sender, run.run_id,
            {"resp": crypto.sym_encrypt(run.data["k_s"], crypto.nonce_bytes(crypto.nonce_succ(run.nonces["n1"])), rng=self.rng)},
        )
        self._log(out, "send")
        return out

    # -- apsub3 --
    def start_apsub3(self, publisher_id, prefix, publisher_public, home_publisher_id, object_path, now=0.0) -> Message:
        ticket, k_s = self.tickets[home_publisher_id]
        path = naming._as_path(object_path)
        run = self._new_run(Flow.APSUB3, publisher_id, now)
        run.state = RunState.AWAIT_B4
        n0 = crypto.fresh_nonce(self.rng)
        run.nonces["n0"] = n0
        run.data.update(k_s=k_s, publisher_public=publisher_public, path=path)
        body = pack(self.id.encode(), crypto.nonce_bytes(n0), str(path.with_segment(0)).encode())
        msg = Message(
            Flow.APSUB3, "b1", self.id, publisher_id, run.run_id,
            {
                "access": crypto.sym_encrypt(k_s, body, rng=self.rng),
                "ticket": ticket.sealed,
                "home": home_publisher_id.encode(),
            },
            name=self._first_name(prefix, publisher_public, path),
        )
        self._log(msg, "send")
        return msg

    def handle_b4(self, msg: Message, now=0.0) -> Message | None:
        run = self._expect(msg, Flow.APSUB3, RunState.AWAIT_B4)
        if run is None:
            return self._reject(msg, "unexpected")
        try:
            n0r, n1, grant = unpack(crypto.sym_decrypt(run.data["k_s"], msg.fields["u0"]), 3)
            chain = _chain_from_grant(grant, run.data["publisher_public"])
        except (crypto.CryptoError, crypto.InvalidArgument, KeyError):
            return self._reject(msg, "u0-decrypt", run)
        if crypto.nonce_from_bytes(n0r) != crypto.nonce_succ(run.nonces["n0"]):
            return self._reject(msg, "n0-mismatch", run)
        k_tmp = temporary_key(run.data["publisher_public"], run.nonces["n0"])
        try:
            proof = crypto.sym_decrypt(k_tmp, msg.fields["proof"])
        except (crypto.CryptoError, KeyError):
            return self._reject(msg, "proof-decrypt", run)
        if proof != run.peer.encode() or msg.sender != run.peer:
            return self._reject(msg, "publisher-identity", run)
        if chain.object_id != run.data["path"].object_id:
            return self._reject(msg, "wrong-object", run)
        self._log(msg, "accept")
        run.nonces["n1"] = crypto.nonce_from_bytes(n1)
        self.grants[(msg.sender, chain.object_id)] = KeyMsgGrant(chain.key_msg, chain.object_id, self.id, chain)
        run.state = RunState.DONE
        out = Message(
            Flow.APSUB3, "b5", self.id, msg.sender, run.run_id,
            {"resp": crypto.sym_encrypt(k_tmp, crypto.nonce_bytes(crypto.nonce_succ(run.nonces["n1"])), rng=self.rng)},
        )
        self._log(out, "send")
        return out

    def handle(self, msg: Message, now=0.0) -> Message | None:
        handler = {"m4": self.handle_m4, "a2": self.handle_a2, "b4": self.handle_b4}.get(msg.step)
        return self._dispatch(handler, msg, now)


def temporary_key(publisher_public: bytes, n0: int) -> bytes:
    """Third-party temporary key H(K_p^j xor n0), n0 widened to 256 bits."""
    return crypto.subscription_key(publisher_public, crypto.int_to_256(n0))


# ---------------------------------------------------------------------------
# publisher


@dataclass
class PublishedObject:
    path: naming.ObjectPath
    chain: crypto.KeyChain
    size: int
    segment_size: int
    publish_time: int
    _payloads: dict = field(default_factory=dict, repr=False)

    @property
    def object_id(self) -> str:
        return self.chain.object_id

    def plaintext(self, segment: int) -> bytes:
        return f"{self.path.with_segment(segment)} segment body confidential-payload".encode()

    def ciphertext(self, segment: int, rng: random.Random | None = None) -> bytes:
        ct = self._payloads.get(segment)
        if ct is None:
            ct = self._payloads[segment] = crypto.sym_encrypt(
                self.chain.segment_keys[segment], self.plaintext(segment), rng=rng
            )
        return ct


class Publisher(Role):
    def __init__(
        self,
        ident: str,
        prefix: str,
        keypair: crypto.PublisherKeyPair,
        rng: random.Random,
        manager_id: str = "M",
        manager_public: bytes | None = None,
        ticket_deadline: float = DEFAULT_TICKET_DEADLINE,
        register_sessions: bool = True,
        transcript: Transcript | None = None,
    ):
        super().__init__(ident, rng, transcript)
        self.prefix = naming.split_prefix(prefix)
        self.keypair = keypair
        self.manager_id = manager_id
        self.manager_public = manager_public
        self.ticket_deadline = ticket_deadline
        self.register_sessions = register_sessions
        self.objects: dict[str, PublishedObject] = {}
        self.stolen: set[bytes] = set()
        self.sessions: dict[str, tuple[bytes, bytes]] = {}
        self.grants_sent = 0
        self.segment_work = 0
        self.asym_ops = 0
        self.catalog = None  # optional callable object_id -> (size, segment_size, publish_time)

    @property
    def public(self) -> bytes:
        return self.keypair.public

    def publish(self, obj: str, version: int, size: int, segment_size: int, publish_time: int = 0) -> PublishedObject:
        path = naming.ObjectPath(obj, version, 0)
        length = crypto.chain_length(size, segment_size)
        zeta0 = crypto.commitment_generator(publish_time, path.object_id)
        chain = crypto.build_chain(zeta0, length, self.public, path.object_id, publish_time)
        po = PublishedObject(path, chain, size, segment_size, publish_time)
        self.objects[path.object_id] = po
        return po

    def lookup_object(self, object_id: str) -> PublishedObject | None:
        po = self.objects.get(object_id)
        if po is None and self.catalog is not None:
            spec = self.catalog(object_id)
            if spec is not None:
                obj, version = object_id.rsplit("/_v", 1)
                size, seg, t_p = spec
                po = self.publish(obj, int(version), size, seg, t_p)
        return po

    def _open(self, blob: bytes) -> bytes:
        self.asym_ops += 1
        return crypto.open_sealed(self.keypair, blob)

    def _arm(self, run: ProtocolRun, now: float) -> None:
        run.deadline = now + self.ticket_deadline

    # -- subp --
    def handle_m1(self, msg: Message, now=0.0) -> Message | None:
        try:
            name = naming.parse_name(msg.name or b"")
        except naming.NameParseError:
            return self._reject(msg, "malformed-name")
        if name.kind is not naming.NameKind.FIRST_INTEREST:
            return self._reject(msg, "not-first-interest")
        if name.prefix != self.prefix:
            return self._reject(msg, "wrong-prefix")
        if msg.run_id in self.runs:
            return self._reject(msg, "replayed-run")
        run = ProtocolRun(msg.run_id, Flow.SUBP, "publisher", RunState.AWAIT_M3, peer=msg.sender, started_at=now)
        n2 = crypto.fresh_nonce(self.rng)
        run.nonces["n2"] = n2
        self.runs[msg.run_id] = run
        self._log(msg, "forward")
        out = Message(
            Flow.SUBP, "m2", self.id, self.manager_id, msg.run_id,
            {
                "m1_name": msg.name,
                "enc_n0": msg.fields.get("enc_n0", b""),
                "consumer": msg.sender.encode(),
                "publisher": self.id.encode(),
                "n2": crypto.nonce_bytes(n2),
            },
        )
        self._log(out, "send")
        return out

    def handle_m3(self, msg: Message, now=0.0) -> Message | None:
        run = self._expect(msg, Flow.SUBP, RunState.AWAIT_M3)
        if run is None or msg.sender != self.manager_id:
            return self._reject(msg, "unexpected")
        try:
            n2r, n1, sealed, path_b = unpack(self._open(msg.fields["for_publisher"]), 4)
        except (crypto.CryptoError, crypto.InvalidArgument, KeyError):
            return self._reject(msg, "m3-open", run)
        if crypto.nonce_from_bytes(n2r) != crypto.nonce_succ(run.nonces["n2"]):
            return self._reject(msg, "n2-mismatch", run)
        try:
            consumer_id, k_s, profile = unpack(self._open(sealed), 3)
        except (crypto.CryptoError, crypto.InvalidArgument):
            return self._reject(msg, "ticket-open", run)
        if consumer_id.decode() != run.peer or profile != ACTIVE_PROFILE:
            return self._reject(msg, "ticket-identity", run)
        path = naming.ObjectPath.parse(path_b.decode())
        po = self.lookup_object(path.object_id)
        if po is None:
            return self._reject(msg, "unknown-object", run)
        self._log(msg, "accept")
        run.nonces["n1"] = crypto.nonce_from_bytes(n1)
        run.data.update(k_s=k_s, ticket=crypto.hash_bytes(sealed), object_id=po.object_id)
        run.state = RunState.AWAIT_M6
        self._arm(run, now)
        self.grants_sent += 1
        out = Message(
            Flow.SUBP, "m4", self.id, run.peer, run.run_id,
            {"u0": msg.fields["u0"], "grant": crypto.sym_encrypt(k_s, _grant_plain(po), rng=self.rng)},
        )
        self._log(out, "send")
        return out

    def handle_m6(self, msg: Message, now=0.0) -> Message | None:
        run = self._expect(msg, Flow.SUBP, RunState.AWAIT_M6)
        if run is None or msg.sender != run.peer:
            return self._reject(msg, "unexpected")
        if run.deadline is not None and now > run.deadline:
            return self._reject(msg, "late")
        k_s = run.data["k_s"]
        resp = self._final_response(k_s, msg, run)
        if resp is None:
            return self._fail_final(msg, run, "m6-check")
        self._log(msg, "accept")
        run.state = RunState.DONE
        run.data["confirmed_n1"] = resp
        if self.register_sessions:
            self.sessions[run.peer] = (run.data["ticket"], k_s)
        out = Message(
            Flow.SUBP, "m5", self.id, self.manager_id, run.run_id,
            {"resp": crypto.sym_encrypt(k_s, crypto.nonce_bytes(resp), rng=self.rng)},
        )
        self._log(out, "send")
        return out

    # -- apsub --
    def handle_a1(self, msg: Message, now=0.0) -> Message | None:
        sealed = msg.fields.get("ticket", b"")
        tdig = crypto.hash_bytes(sealed)
        if tdig in self.stolen:
            return self._reject(msg, "stolen-ticket")
        if msg.run_id in self.runs:
            return self._reject(msg, "replayed-run")
        try:
            consumer_id, k_s, profile = unpack(self._open(sealed), 3)
        except (crypto.CryptoError, crypto.InvalidArgument):
            return self._reject(msg, "ticket-open")
        try:
            claimed, n0, path_b = unpack(crypto.sym_decrypt(k_s, msg.fields["access"]), 3)
        except (crypto.CryptoError, crypto.InvalidArgument, KeyError):
            return self._reject(msg, "access-decrypt")
        if claimed != consumer_id or claimed.decode() != msg.sender:
            return self._reject(msg, "identity-mismatch")
        if profile != ACTIVE_PROFILE:
            return self._reject(msg, "profile-expired")
        registered = self.sessions.get(msg.sender)
        if registered is not None and registered[0] != tdig:
            return self._reject(msg, "session-mismatch")
        try:
            path = naming.ObjectPath.parse(path_b.decode())
        except crypto.InvalidArgument:
            return self._reject(msg, "bad-path")
        po = self.lookup_object(path.object_id)
        if po is None:
            return self._reject(msg, "unknown-object")
        self._log(msg, "accept")
        run = ProtocolRun(msg.run_id, Flow.APSUB, "publisher", RunState.AWAIT_A3, peer=msg.sender, started_at=now)
        run.nonces["n0"] = crypto.nonce_from_bytes(n0)
        run.nonces["n1"] = crypto.fresh_nonce(self.rng)
        run.data.update(k_s=k_s, ticket=tdig, object_id=po.object_id)
        self._arm(run, now)
        self.runs[msg.run_id] = run
        self.grants_sent += 1
        body = pack(
            crypto.nonce_bytes(crypto.nonce_succ(run.nonces["n0"])),
            crypto.nonce_bytes(run.nonces["n1"]),
            _grant_plain(po),
        )
        out = Message(Flow.APSUB, "a2", self.id, msg.sender, msg.run_id,
                      {"reply": crypto.sym_encrypt(k_s, body, rng=self.rng)})
        self._log(out, "send")
        return out

    def handle_a3(self, msg: Message, now=0.0) -> Message | None:
        run = self._expect(msg, Flow.APSUB, RunState.AWAIT_A3)
        if run is None or msg.sender != run.peer:
            return self._reject(msg, "unexpected")
        if run.deadline is not None and now > run.deadline:
            return self._reject(msg, "late")
        resp = self._final_response(run.data["k_s"], msg, run)
        if resp is None:
            return self._fail_final(msg, run, "a3-check")
        self._log(msg, "accept")
        run.state = RunState.DONE
        run.data["confirmed_n1"] = resp
        return None

    # -- apsub3 (this publisher is the third party) --
    def handle_b1(self, msg: Message, now=0.0) -> Message | None:
        sealed = msg.fields.get("ticket", b"")
        if crypto.hash_bytes(sealed) in self.stolen:
            return self._reject(msg, "stolen-ticket")
        if msg.run_id in self.runs:
            return self._reject(msg, "replayed-run")
        run = ProtocolRun(msg.run_id, Flow.APSUB3, "publisher", RunState.AWAIT_B3, peer=msg.sender, started_at=now)
        run.nonces["n2"] = crypto.fresh_nonce(self.rng)
        run.data["ticket"] = crypto.hash_bytes(sealed)
        self.runs[msg.run_id] = run
        self._log(msg, "forward")
        out = Message(
            Flow.APSUB3, "b2", self.id, self.manager_id, msg.run_id,
            {
                "access": msg.fields.get("access", b""),
                "ticket": sealed,
                "home": msg.fields.get("home", b""),
                "consumer": msg.sender.encode(),
                "publisher": self.id.encode(),
                "n2": crypto.nonce_bytes(run.nonces["n2"]),
            },
        )
        self._log(out, "send")
        return out

    def handle_b3(self, msg: Message, now=0.0) -> Message | None:
        run = self._expect(msg, Flow.APSUB3, RunState.AWAIT_B3)
        if run is None or msg.sender != self.manager_id:
            return self._reject(msg, "unexpected")
        try:
            n2r, n1, k_tmp = unpack(self._open(msg.fields["for_publisher"]), 3)
        except (crypto.CryptoError, crypto.InvalidArgument, KeyError):
            return self._reject(msg, "b3-open", run)
        if crypto.nonce_from_bytes(n2r) != crypto.nonce_succ(run.nonces["n2"]):
            return self._reject(msg, "n2-mismatch", run)
        self._log(msg, "accept")
        run.nonces["n1"] = crypto.nonce_from_bytes(n1)
        run.data["k_tmp"] = k_tmp
        run.state = RunState.AWAIT_B5
        self._arm(run, now)
        out = Message(
            Flow.APSUB3, "b4", self.id, run.peer, run.run_id,
            {"u0": msg.fields["u0"], "proof": crypto.sym_encrypt(k_tmp, self.id.encode(), rng=self.rng)},
        )
        self._log(out, "send")
        return out

    def handle_b5(self, msg: Message, now=0.0) -> Message | None:
        run = self._expect(msg, Flow.APSUB3, RunState.AWAIT_B5)
        if run is None or msg.sender != run.peer:
            return self._reject(msg, "unexpected")
        if run.deadline is not None and now > run.deadline:
            return self._reject(msg, "late")
        resp = self._final_response(run.data["k_tmp"], msg, run)
        if resp is None:
            return self._fail_final(msg, run, "b5-check")
        self._log(msg, "accept")
        run.state = RunState.DONE
        run.data["confirmed_n1"] = resp
        out = Message(
            Flow.APSUB3, "b6", self.id, self.manager_id, run.run_id,
            {"resp": crypto.sym_encrypt(run.data["k_tmp"], crypto.nonce_bytes(resp), rng=self.rng)},
        )
        self._log(out, "send")
        return out

    def _final_response(self, key: bytes, msg: Message, run: ProtocolRun) -> int | None:
        """Check the consumer's n1 + 1 answer; ``None`` means it failed."""
        expected = crypto.nonce_succ(run.nonces["n1"])
        if "no-nonce-check" in self.weaken:
            return expected
        try:
            resp = crypto.nonce_from_bytes(crypto.sym_decrypt(key, msg.fields["resp"]))
        except (crypto.CryptoError, crypto.InvalidArgument, KeyError):
            return None
        return resp if resp == expected else None

    def _fail_final(self, msg: Message, run: ProtocolRun, reason: str) -> None:
        self._reject(msg, reason, run)
        self.stolen.add(run.data["ticket"])
        self.sessions.pop(run.peer, None)
        return None

    # -- timers --
    _WAITING = (RunState.AWAIT_M6, RunState.AWAIT_A3, RunState.AWAIT_B5)

    def expire_run(self, run_id: str, now: float) -> Message | None:
        """Flag the run's ticket as stolen if its final response is overdue.

        Returns the stolen-ticket report for the manager, if any.
        """
        run = self.runs.get(run_id)
        if run is None or run.state not in self._WAITING or run.deadline is None or now < run.deadline:
            return None
        run.state = RunState.STOLEN
        tdig = run.data["ticket"]
        self.stolen.add(tdig)
        self.sessions.pop(run.peer, None)
        report = Message(run.flow, "stolen", self.id, self.manager_id, run.run_id, {"ticket": tdig})
        self._log(report, "send")
        return report

    def expire(self, now: float) -> list[Message]:
        """Expire every overdue run; returns the stolen-ticket reports."""
        reports = [self.expire_run(rid, now) for rid in list(self.runs)]
        return [r for r in reports if r is not None]

    def handle_stolen_notice(self, msg: Message, now=0.0) -> None:
        self.stolen.add(msg.fields["ticket"])

    def handle(self, msg: Message, now=0.0) -> Message | None:
        handler = {
            "m1": self.handle_m1, "m3": self.handle_m3, "m6": self.handle_m6,
            "a1": self.handle_a1, "a3": self.handle_a3,
            "b1": self.handle_b1, "b3": self.handle_b3, "b5": self.handle_b5,
            "stolen-notice": self.handle_stolen_notice,
        }.get(msg.step)
        return self._dispatch(handler, msg, now)


# ---------------------------------------------------------------------------
# subscription manager


@dataclass
class IssuedTicket:
    consumer_id: str
    k_s: bytes
    profile: bytes
    issuer: str


class Manager(Role):
    def __init__(
        self,
        ident: str,
        keypair: crypto.PublisherKeyPair,
        rng: random.Random,
        transcript: Transcript | None = None,
    ):
        super().__init__(ident, rng, transcript)
        self.keypair = keypair
        self.db = RegistrationDB()
        self.publishers: dict[str, bytes] = {}
        self.prefixes: dict[str, tuple[str, ...]] = {}
        self.tickets: dict[bytes, IssuedTicket] = {}
        self.stolen: set[bytes] = set()
        # third-party distributed content: object_id -> (seed, length)
        self.content: dict[str, tuple[bytes, int]] = {}
        self.failed_decrypts = 0
        self.decrypt_attempts = 0
        self.confirmed = 0
        self.asym_ops = 0
        self._dummy_key = crypto.hash_bytes(b"sdpc-manager-dummy" + keypair.public)

    @property
    def public(self) -> bytes:
        return self.keypair.public

    def add_publisher(self, publisher_id: str, public: bytes, prefix=None) -> None:
        self.publishers[publisher_id] = public
        if prefix is not None:
            self.prefixes[publisher_id] = naming.split_prefix(prefix)

    def register(self, consumer_id: str, n_s: bytes, profile: bytes = ACTIVE_PROFILE) -> bytes:
        return self.db.register(consumer_id, n_s, profile)

    def register_content(self, published: PublishedObject) -> None:
        self.content[published.object_id] = (published.chain.seed, published.chain.length)

    def _seal(self, public: bytes, body: bytes) -> bytes:
        self.asym_ops += 1
        return crypto.seal(public, body, rng=self.rng)

    def handle_m2(self, msg: Message, now=0.0) -> Message | None:
        f = msg.fields
        try:
            name = naming.parse_name(f["m1_name"])
            pub_id = f["publisher"].decode()
        except (KeyError, naming.NameParseError, UnicodeDecodeError):
            return self._reject(msg, "malformed")
        if name.kind is not naming.NameKind.FIRST_INTEREST or msg.sender != pub_id or len(f.get("n2", b"")) != 16:
            return self._reject(msg, "malformed")
        if msg.run_id in self.runs:
            return self._reject(msg, "replayed-run")
        reg = self.db.lookup(name.digest)
        pub_key = self.publishers.get(pub_id)
        # constant work per request: a miss still pays one decrypt
        if reg is None or pub_key is None:
            key = self._dummy_key
        else:
            key = crypto.subscription_key(pub_key, reg.n_s)
        self.decrypt_attempts += 1
        try:
            n0 = crypto.nonce_from_bytes(crypto.sym_decrypt(key, f.get("enc_n0", b"")))
            path = naming.open_path(key, name)
        except (crypto.CryptoError, crypto.InvalidArgument):
            self.failed_decrypts += 1
            return self._reject(msg, "unregistered" if reg is None else "decrypt")
        if reg is None or pub_key is None:
            self.failed_decrypts += 1
            return self._reject(msg, "unregistered")
        if f.get("consumer", b"") != reg.consumer_id.encode():
            return self._reject(msg, "identity-mismatch")
        if pub_id in self.prefixes and name.prefix != self.prefixes[pub_id]:
            return self._reject(msg, "wrong-prefix")
        self._log(msg, "accept")
        k_ts = key
        t_m = _now_us(now)
        k_s = crypto.session_key(t_m, reg.n_s)
        n1 = crypto.fresh_nonce(self.rng)
        n2 = crypto.nonce_from_bytes(f["n2"])
        ticket = self._seal(pub_key, pack(reg.consumer_id.encode(), k_s, reg.profile))
        self.tickets[crypto.hash_bytes(ticket)] = IssuedTicket(reg.consumer_id, k_s, reg.profile, pub_id)
        run = ProtocolRun(msg.run_id, Flow.SUBP, "manager", RunState.AWAIT_M5, peer=pub_id, started_at=now)
        run.nonces.update(n0=n0, n1=n1, n2=n2)
        run.data.update(k_s=k_s, consumer=reg.consumer_id)
        self.runs[msg.run_id] = run
        u0 = crypto.sym_encrypt(
            k_ts, pack(crypto.nonce_bytes(crypto.nonce_succ(n0)), crypto.nonce_bytes(n1), ticket, k_s), rng=self.rng
        )
        for_pub = self._seal(
            pub_key,
            pack(crypto.nonce_bytes(crypto.nonce_succ(n2)), crypto.nonce_bytes(n1), ticket, str(path).encode()),
        )
        out = Message(Flow.SUBP, "m3", self.id, pub_id, msg.run_id, {"u0": u0, "for_publisher": for_pub})
        self._log(out, "send")
        return out

    def handle_m5(self, msg: Message, now=0.0) -> None:
        run = self._expect(msg, Flow.SUBP, RunState.AWAIT_M5)
        if run is None or msg.sender != run.peer:
            return self._reject(msg, "unexpected")
        try:
            resp = crypto.nonce_from_bytes(crypto.sym_decrypt(run.data["k_s"], msg.fields["resp"]))
        except (crypto.CryptoError, crypto.InvalidArgument, KeyError):
            return self._reject(msg, "m5-decrypt")
        if resp != crypto.nonce_succ(run.nonces["n1"]):
            return self._reject(msg, "n1-mismatch")
        self._log(msg, "accept")
        run.state = RunState.DONE
        self.confirmed += 1
        return None

    def handle_b2(self, msg: Message, now=0.0) -> Message | None:
        f = msg.fields
        try:
            pub_id = f["publisher"].decode()
            home = f["home"].decode()
        except (KeyError, UnicodeDecodeError):
            return self._reject(msg, "malformed")
        if msg.run_id in self.runs:
            return self._reject(msg, "replayed-run")
        tdig = crypto.hash_bytes(f.get("ticket", b""))
        issued = self.tickets.get(tdig)
        if issued is None or issued.issuer != home or tdig in self.stolen:
            return self._reject(msg, "ticket")
        pub_key = self.publishers.get(pub_id)
        if pub_key is None or msg.sender != pub_id or pub_id == home:
            return self._reject(msg, "publisher")
        try:
            claimed, n0b, path_b = unpack(crypto.sym_decrypt(issued.k_s, f["access"]), 3)
            path = naming.ObjectPath.parse(path_b.decode())
        except (crypto.CryptoError, crypto.InvalidArgument, KeyError):
            return self._reject(msg, "access-decrypt")
        if claimed.decode() != issued.consumer_id or f.get("consumer", b"").decode() != issued.consumer_id:
            return self._reject(msg, "identity-mismatch")
        if issued.profile != ACTIVE_PROFILE:
            return self._reject(msg, "profile-expired")
        content = self.content.get(path.object_id)
        if content is None:
            return self._reject(msg, "unknown-object")
        self._log(msg, "accept")
        n0 = crypto.nonce_from_bytes(n0b)
        n1 = crypto.fresh_nonce(self.rng)
        n2 = crypto.nonce_from_bytes(f["n2"])
        k_tmp = temporary_key(pub_key, n0)
        seed, length = content
        grant = pack(path.object_id.encode(), seed, length.to_bytes(4, "big"))
        u0 = crypto.sym_encrypt(
            issued.k_s, pack(crypto.nonce_bytes(crypto.nonce_succ(n0)), crypto.nonce_bytes(n1), grant), rng=self.rng
        )
        for_pub = self._seal(pub_key, pack(crypto.nonce_bytes(crypto.nonce_succ(n2)), crypto.nonce_bytes(n1), k_tmp))
        run = ProtocolRun(msg.run_id, Flow.APSUB3, "manager", RunState.AWAIT_B6, peer=pub_id, started_at=now)
        run.nonces.update(n0=n0, n1=n1, n2=n2)
        run.data.update(k_tmp=k_tmp, ticket=tdig)
        self.runs[msg.run_id] = run
        out = Message(Flow.APSUB3, "b3", self.id, pub_id, msg.run_id, {"u0": u0, "for_publisher": for_pub})
        self._log(out, "send")
        return out

    def handle_b6(self, msg: Message, now=0.0) -> None:
        run = self._expect(msg, Flow.APSUB3, RunState.AWAIT_B6)
        if run is None or msg.sender != run.peer:
            return self._reject(msg, "unexpected")
        try:
            resp = crypto.nonce_from_bytes(crypto.sym_decrypt(run.data["k_tmp"], msg.fields["resp"]))
        except (crypto.CryptoError, crypto.InvalidArgument, KeyError):
            return self._reject(msg, "b6-decrypt")
        if resp != crypto.nonce_succ(run.nonces["n1"]):
            return self._reject(msg, "n1-mismatch")
        self._log(msg, "accept")
        run.state = RunState.DONE
        self.confirmed += 1
        return None

    def handle_stolen(self, msg: Message, now=0.0) -> Message | None:
        """Record a stolen-ticket report; notify the ticket's issuer if it
        was not the reporter."""
        tdig = msg.fields["ticket"]
        self.stolen.add(tdig)
        self._log(msg, "accept")
        issued = self.tickets.get(tdig)
        if issued is not None and issued.issuer != msg.sender:
            return Message(msg.flow, "stolen-notice", self.id, issued.issuer, msg.run_id, {"ticket": tdig})
        return None

    def handle(self, msg: Message, now=0.0) -> Message | None:
        handler = {
            "m2": self.handle_m2, "m5": self.handle_m5,
            "b2": self.handle_b2, "b6": self.handle_b6,
            "stolen": self.handle_stolen,
        }.get(msg.step)
        return self._dispatch(handler, msg, now)


# ---------------------------------------------------------------------------
# in-memory drivers


class Network:
    """Loss-free in-memory delivery between roles, for tests and attack replays.

    ``tap`` sees every message before delivery and may return a replacement
    (or ``None`` to drop it).
    """

    def __init__(self, *roles: Role, tap=None):
        self.roles = {r.id: r for r in roles}
        self.tap = tap
        self.log: list[Message] = []

    def add(self, role: Role) -> None:
        self.roles[role.id] = role

    def deliver(self, msg: Message | None, now: float = 0.0) -> None:
        queue = [msg]
        while queue:
            m = queue.pop(0)
            if m is None:
                continue
            if self.tap is not None:
                m = self.tap(m)
                if m is None:
                    continue
            self.log.append(m)
            target = self.roles.get(m.receiver)
            if target is None:
                continue
            queue.append(target.handle(m, now))


def run_subp(consumer: Consumer, publisher: Publisher, network: Network, object_path, now=0.0) -> KeyMsgGrant | None:
    msg = consumer.start_subp(publisher.id, publisher.prefix, publisher.public, object_path, now)
    network.deliver(msg, now)
    return consumer.grants.get((publisher.id, naming._as_path(object_path).object_id))


def run_apsub(consumer: Consumer, publisher: Publisher, network: Network, object_path, now=0.0) -> KeyMsgGrant | None:
    path = naming._as_path(object_path)
    consumer.grants.pop((publisher.id, path.object_id), None)
    msg = consumer.start_apsub(publisher.id, publisher.prefix, publisher.public, path, now)
    network.deliver(msg, now)
    return consumer.grants.get((publisher.id, path.object_id))


def run_apsub3(consumer: Consumer, publisher: Publisher, home: Publisher, network: Network, object_path, now=0.0) -> KeyMsgGrant | None:
    path = naming._as_path(object_path)
    consumer.grants.pop((publisher.id, path.object_id), None)
    msg = consumer.start_apsub3(publisher.id, publisher.prefix, publisher.public, home.id, path, now)
    network.deliver(msg, now)
    return consumer.grants.get((publisher.id, path.object_id))


def publish_object(publisher: Publisher, obj: str, version: int, size: int, segment_size: int, publish_time: int = 0):
    """Publish and encrypt: returns (chain, [(name, ciphertext) for segments 1..L])."""
    po = publisher.publish(obj, version, size, segment_size, publish_time)
    segments = []
    for seg in range(1, po.chain.length + 1):
        name = naming.segment_name(publisher.prefix, po.chain.key_msg, po.chain, po.path, seg).encode()
        segments.append((name, po.ciphertext(seg, publisher.rng)))
    return po.chain, segments
