"""Honest and mutated protocol runs shared by the protocol and acceptance tests."""

from __future__ import annotations

import random
from dataclasses import dataclass

from sdpc import crypto, protocol
from sdpc.protocol import Flow, RunState

STEPS = {
    "subp": ["m1", "m2", "m3", "m4", "m6", "m5"],
    "apsub": ["a1", "a2", "a3"],
    "apsub3": ["b1", "b2", "b3", "b4", "b5", "b6"],
}

# who sends each step: C consumer, H home publisher, T third-party publisher, M manager
ROUTE = {
    "m1": ("C", "H"), "m2": ("H", "M"), "m3": ("M", "H"), "m4": ("H", "C"), "m6": ("C", "H"), "m5": ("H", "M"),
    "a1": ("C", "H"), "a2": ("H", "C"), "a3": ("C", "H"),
    "b1": ("C", "T"), "b2": ("T", "M"), "b3": ("M", "T"), "b4": ("T", "C"), "b5": ("C", "T"), "b6": ("T", "M"),
}

# mutated object per flow; the preceding honest run uses doc0/doc1
TARGET = {"subp": "doc1/_v1/_s0", "apsub": "doc2/_v1/_s0", "apsub3": "doc1/_v1/_s0"}


class World:
    def __init__(self, seed: int):
        rng = random.Random(seed)
        self.transcript = protocol.Transcript()
        t = self.transcript
        self.mgr = protocol.Manager("M", crypto.PublisherKeyPair.generate(rng), random.Random(rng.getrandbits(64)), t)
        self.home = self._publisher("P0", rng)
        self.third = self._publisher("P1", rng)
        self.alice = protocol.Consumer("alice", crypto._randbytes(rng, 32), random.Random(rng.getrandbits(64)), t)
        self.mgr.register(self.alice.id, self.alice.n_s)
        for p in (self.home, self.third):
            for i in range(3):
                po = p.publish(f"doc{i}", 1, 4096, 1024)
                if p is self.third:
                    self.mgr.register_content(po)
        self.net = protocol.Network(self.mgr, self.home, self.third, self.alice, tap=self._tap)
        self.captured: list[protocol.Message] = []
        self.mutator = None

    def _publisher(self, ident, rng):
        p = protocol.Publisher(ident, f"{ident.lower()}.example/content", crypto.PublisherKeyPair.generate(rng),
                               random.Random(rng.getrandbits(64)), transcript=self.transcript)
        self.mgr.add_publisher(p.id, p.public, p.prefix)
        return p

    def roles(self):
        return (self.mgr, self.home, self.third, self.alice)

    def role(self, code: str):
        return {"C": self.alice, "H": self.home, "T": self.third, "M": self.mgr}[code]

    def rejects(self) -> int:
        return sum(sum(r.rejects.values()) for r in self.roles())

    def _tap(self, m):
        self.captured.append(m)
        if self.mutator is not None:
            return self.mutator(m)
        return m

    # -- flows --
    def start(self, flow: str, path: str, now: float = 0.0) -> protocol.Message:
        c = self.alice
        if flow == "subp":
            return c.start_subp(self.home.id, self.home.prefix, self.home.public, path, now)
        if flow == "apsub":
            return c.start_apsub(self.home.id, self.home.prefix, self.home.public, path, now)
        return c.start_apsub3(self.third.id, self.third.prefix, self.third.public, self.home.id, path, now)

    def run(self, flow: str, path: str, now: float = 0.0) -> str:
        msg = self.start(flow, path, now)
        self.net.deliver(msg, now)
        return msg.run_id

    def prepare(self, flow: str) -> dict[str, protocol.Message]:
        """Honest runs needed before ``flow`` can start; returns the messages
        of the last honest run of ``flow`` itself, by step."""
        if flow == "subp":
            rid = self.run("subp", "doc0/_v1/_s0")
        else:
            self.run("subp", "doc0/_v1/_s0")
            rid = self.run(flow, "doc1/_v1/_s0" if flow == "apsub" else "doc0/_v1/_s0", 1.0)
        return {m.step: m for m in self.captured if m.run_id == rid}

    def complete(self, flow: str, run_id: str, path: str) -> bool:
        oid = path.rsplit("/_s", 1)[0]
        pub = self.third if flow == "apsub3" else self.home

        def done(role):
            run = role.runs.get(run_id)
            return run is not None and run.state is RunState.DONE

        ok = (pub.id, oid) in self.alice.grants and done(self.alice) and done(pub)
        if flow in ("subp", "apsub3"):
            ok = ok and done(self.mgr)
        return ok


def honest_world(flow: str, seed: int) -> tuple[World, str]:
    w = World(seed)
    w.prepare(flow)
    rid = w.run(flow, TARGET[flow], 2.0)
    return w, rid


def agreement_errors(w: World, flow: str, run_id: str) -> list[str]:
    """Goal and nonce-pair checks for a finished honest run; empty means all hold."""
    errs = []
    c = w.alice.runs[run_id]
    pub = w.third if flow == "apsub3" else w.home
    p = pub.runs.get(run_id)
    m = w.mgr.runs.get(run_id)

    def need(cond, what):
        if not cond:
            errs.append(what)

    need(w.complete(flow, run_id, TARGET[flow]), "run incomplete")
    if p is None:
        return errs + ["publisher has no run"]
    succ = crypto.nonce_succ
    need(p.nonces.get("n1") == c.nonces.get("n1"), "n1 differs between consumer and publisher")
    need(p.data.get("confirmed_n1") == succ(c.nonces["n1"]), "publisher did not observe n1+1")
    if flow == "subp":
        need(m is not None and m.nonces["n0"] == c.nonces["n0"], "n0 differs between consumer and manager")
        need(m is not None and m.nonces["n2"] == p.nonces["n2"], "n2 differs between publisher and manager")
        need(m is not None and m.nonces["n1"] == c.nonces["n1"], "n1 differs at manager")
        need(c.data["k_s"] == p.data["k_s"] == m.data["k_s"], "K_S differs")
    elif flow == "apsub":
        need(p.nonces["n0"] == c.nonces["n0"], "n0 differs")
        need(c.data["k_s"] == p.data["k_s"], "K_S differs")
    else:
        need(m is not None and m.nonces["n0"] == c.nonces["n0"], "n0 differs between consumer and manager")
        need(m is not None and m.nonces["n2"] == p.nonces["n2"], "n2 differs between publisher and manager")
        k_tmp = protocol.temporary_key(pub.public, c.nonces["n0"])
        need(p.data["k_tmp"] == k_tmp and m.data["k_tmp"] == k_tmp, "temporary key differs")
        need(c.data["k_s"] == w.alice.tickets[w.home.id][1], "consumer session key changed")
    # consumer observed n0+1: it accepted the reply step carrying it
    reply = {"subp": "m4", "apsub": "a2", "apsub3": "b4"}[flow]
    accepted = [e for e in w.transcript.for_run(run_id) if e.step == reply and e.verdict == "accept"]
    need(len(accepted) == 1 and accepted[0].receiver == w.alice.id, "consumer did not accept n0+1")
    # every message went between the expected roles, in order
    sent = [(e.step, e.sender, e.receiver) for e in w.transcript.for_run(run_id) if e.verdict == "send"]
    want = [(s, w.role(ROUTE[s][0]).id, w.role(ROUTE[s][1]).id) for s in STEPS[flow]]
    need(sent == want, f"transcript order {sent} != {want}")
    need(not any(e.verdict.startswith("reject") for e in w.transcript.for_run(run_id)), "reject in honest run")
    return errs


# -- mutations --


@dataclass(frozen=True)
class Mutation:
    flow: str
    step: str
    kind: str  # flip | drop | sender | stale | substitute | duplicate
    field: str = ""
    pos: int = 0  # flip position: 0 first byte, 1 middle, 2 last

    def __str__(self):
        extra = f":{self.field}" if self.field else ""
        extra += f"@{self.pos}" if self.kind == "flip" else ""
        return f"{self.flow}/{self.step}/{self.kind}{extra}"


def _fields(flow: str, step: str, seed: int = 0) -> list[str]:
    w = World(seed)
    recorded = w.prepare(flow)
    msg = recorded[step]
    names = sorted(msg.fields)
    # the name is protocol content only where the receiver decodes it
    if step == "m1":
        names.append("name")
    return names


def mutations(flow: str) -> list[Mutation]:
    out = []
    for i, step in enumerate(STEPS[flow]):
        for f in _fields(flow, step):
            out += [Mutation(flow, step, "flip", f, pos) for pos in range(3)]
            out.append(Mutation(flow, step, "drop", f))
        out.append(Mutation(flow, step, "sender"))
        out.append(Mutation(flow, step, "stale"))
        if i:
            out.append(Mutation(flow, step, "substitute"))
        out.append(Mutation(flow, step, "duplicate"))
    return out


def _flip(b: bytes, pos: int) -> bytes:
    i = (0, len(b) // 2, len(b) - 1)[pos]
    return b[:i] + bytes([b[i] ^ 0x01]) + b[i + 1:]


@dataclass
class MutationResult:
    mutation: Mutation
    applied: bool
    completed: bool
    rejects: int

    @property
    def rejected(self) -> bool:
        return self.applied and not self.completed and self.rejects > 0


def run_mutation(mut: Mutation, seed: int = 0) -> MutationResult:
    """Run the flow once honestly, then again with ``mut`` applied to the
    first message of ``mut.step``.  A duplicate is delivered after the
    original; it counts as rejected when the receiver refuses the copy."""
    w = World(seed)
    stale = w.prepare(mut.flow)
    state = {"applied": False, "prev": None, "dup": None}
    before = w.rejects()

    def mutate(m):
        if state["applied"] or m.step != mut.step:
            state["prev"] = m
            return m
        state["applied"] = True
        if mut.kind == "flip":
            if mut.field == "name":
                return m.copy(name=_flip(m.name, mut.pos))
            return m.copy(fields={**m.fields, mut.field: _flip(m.fields[mut.field], mut.pos)})
        if mut.kind == "drop":
            if mut.field == "name":
                return m.copy(name=None)
            return m.copy(fields={k: v for k, v in m.fields.items() if k != mut.field})
        if mut.kind == "sender":
            return m.copy(sender="mallory")
        if mut.kind == "stale":
            return stale[mut.step].copy(run_id=m.run_id)
        if mut.kind == "substitute":
            return state["prev"].copy(sender=m.sender, receiver=m.receiver)
        state["dup"] = m
        return m

    w.mutator = mutate
    rid = w.run(mut.flow, TARGET[mut.flow], 2.0)
    if mut.kind == "duplicate":
        w.mutator = None
        dup = state["dup"]
        before_dup = w.rejects()
        w.role(ROUTE[mut.step][1]).handle(dup.copy(), 2.0)
        rejects = w.rejects() - before_dup
        # the duplicate must be refused; the original run is unaffected
        return MutationResult(mut, state["applied"], rejects == 0, rejects)
    return MutationResult(mut, state["applied"], w.complete(mut.flow, rid, TARGET[mut.flow]), w.rejects() - before)
