"""Attack harness.

Every attack runs twice: against the real scheme and against a control
run with one protection switched off (a ``weaken`` knob).  An attack is
only meaningful if it fails on the first and succeeds on the second, so
each outcome pair validates itself.

The adversary sees bytes only.  Everything it sends is built from bytes it
observed at its vantage, its own randomness, or values derived from
those; :class:`Knowledge` tags every such value and ``emit`` refuses
anything untagged.  The one exception is the time-analysis control, where
the adversary is handed leaked grants on purpose and the leak is tagged as
such.
"""

from __future__ import annotations

import csv
import io
import json
import random
from collections import Counter
from dataclasses import dataclass, field

from scipy.stats import binomtest

from . import crypto, naming, protocol
from .config import SimConfig
from .sim.engine import APP, CONTENT, FIRST, PROBE, Interest, Simulator

ATTACKS = ("watchlist", "sniffing", "ddos", "time-analysis", "replay", "traffic-monitoring")

# the weakened run each attack must beat
CONTROLS = {
    "watchlist": "plain-names",
    "sniffing": "plain-payloads",
    "ddos": "no-auth",
    "time-analysis": "leak-keymsg",
    "replay": "no-nonce-check",
    "traffic-monitoring": "plain-names",
}

SIGNIFICANCE = 0.01


class TaintError(AssertionError):
    """The adversary tried to emit a value it could not have known."""


class Knowledge:
    """Byte strings the adversary may legitimately use, with their origin."""

    def __init__(self):
        self.tags: dict[bytes, str] = {}

    def observe(self, b: bytes) -> bytes:
        self.tags.setdefault(b, "observed")
        return b

    def fresh(self, rng: random.Random, n: int) -> bytes:
        b = crypto._randbytes(rng, n)
        self.tags.setdefault(b, "own")
        return b

    def derive(self, value: bytes, *inputs: bytes) -> bytes:
        for x in inputs:
            self.check(x)
        self.tags.setdefault(value, "derived")
        return value

    def leak(self, b: bytes) -> bytes:
        self.tags[b] = "leaked"
        return b

    def knows(self, b: bytes) -> bool:
        return b in self.tags

    def check(self, b: bytes) -> bytes:
        if b not in self.tags:
            raise TaintError(f"untracked value {b[:16].hex()}...")
        return b

    def leaked(self) -> int:
        return sum(1 for t in self.tags.values() if t == "leaked")


@dataclass
class Observation:
    time: float
    src: int
    dst: int
    interest: bool
    kind: int
    name: bytes | None
    payload: bytes | None
    wire: bytes | None


class Adversary:
    """Passive observer at a set of nodes, with optional injection."""

    def __init__(self, vantage, rng: random.Random, capabilities=("observe",)):
        self.vantage = set(vantage)
        self.capabilities = set(capabilities)
        self.rng = rng
        self.knowledge = Knowledge()
        self.seen: list[Observation] = []
        # parsed views of what was seen, kept up to date as packets pass
        self._prefixes: dict[tuple[str, ...], None] = {}
        self._shapes: dict[tuple[tuple[str, ...], int], None] = {}
        self.plain_template: naming.SdpcName | None = None

    def attach(self, sim: Simulator) -> None:
        sim.observe(self.vantage, self._on_packet)

    def _on_packet(self, t: float, u: int, v: int, pkt) -> None:
        is_interest = isinstance(pkt, Interest)
        name = pkt.name or None
        payload = None if is_interest else pkt.payload
        wire = pkt.msg.wire() if isinstance(pkt.msg, protocol.Message) else None
        for b in (name, payload, wire):
            if b:
                self.knowledge.observe(b)
        self.seen.append(Observation(t, u, v, is_interest, pkt.kind, name, payload, wire))
        if name:
            self._learn(name)

    def _learn(self, name: bytes) -> None:
        try:
            parsed = naming.parse_name(name)
        except naming.NameParseError:
            return
        self._prefixes.setdefault(parsed.prefix[:2])
        if parsed.kind is naming.NameKind.SHARED_SEGMENT:
            self._shapes.setdefault((parsed.prefix, len(parsed.sealed_path)))
        elif (parsed.kind is naming.NameKind.PLAIN and self.plain_template is None
              and _item_of(parsed.prefix) is not None):
            self.plain_template = parsed

    def emit(self, *values: bytes) -> None:
        for v in values:
            self.knowledge.check(v)

    def names(self):
        for o in self.seen:
            if o.name:
                yield o.name

    def prefixes(self) -> list[tuple[str, ...]]:
        return list(self._prefixes)

    def segment_shapes(self) -> list[tuple[tuple[str, ...], int]]:
        """(prefix, ciphertext length) of every protected segment name seen."""
        return sorted(self._shapes)


@dataclass
class AttackOutcome:
    attack: str
    scheme: str
    seed: int
    success: bool
    evidence: dict = field(default_factory=dict)
    weaken: tuple[str, ...] = ()

    def row(self) -> dict:
        return {
            "attack": self.attack,
            "scheme": self.scheme,
            "weaken": "+".join(self.weaken),
            "seed": self.seed,
            "success": int(self.success),
            "evidence": json.dumps(self.evidence, sort_keys=True),
        }


REPORT_FIELDS = ("attack", "scheme", "weaken", "seed", "success", "evidence")


def report_csv(outcomes: list[AttackOutcome]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_FIELDS, lineterminator="\n")
    w.writeheader()
    for o in outcomes:
        w.writerow(o.row())
    return buf.getvalue()


def _label(cfg: SimConfig) -> tuple[str, tuple[str, ...]]:
    return cfg.scheme.name, tuple(cfg.scheme.weaken)


def _sim(cfg: SimConfig, adversary_vantage=None, payloads: bool = True) -> tuple[Simulator, Adversary | None]:
    sim = Simulator(cfg, materialize_payloads=payloads)
    adv = None
    if adversary_vantage is not None:
        vantage = range(sim.R) if adversary_vantage == "all" else adversary_vantage
        adv = Adversary(vantage, sim.adversary_rng, ("observe", "inject"))
        adv.attach(sim)
    return sim, adv


def _outcome(attack, cfg, success, evidence) -> AttackOutcome:
    scheme, weaken = _label(cfg)
    return AttackOutcome(attack, scheme, cfg.seed, bool(success), evidence, weaken)


# ---------------------------------------------------------------------------
# observation-only attacks


def default_watchlist(cfg: SimConfig, n: int = 5) -> list[str]:
    """Object names of the ``n`` most popular items per publisher."""
    # popularity ranks interleave publishers, so low item numbers are hot
    return [f"obj{i:05d}.doc" for i in range(n)]


def _name_text(name: bytes) -> str:
    try:
        parsed = naming.parse_name(name)
    except naming.NameParseError:
        return ""
    # readable components; for a protected name that is only the routing prefix
    return "/".join(parsed.prefix)


def watchlist_attack(cfg: SimConfig, watchlist: list[str] | None = None) -> AttackOutcome:
    """Every router watches names and payloads for listed object paths."""
    watchlist = default_watchlist(cfg) if watchlist is None else list(watchlist)
    sim, adv = _sim(cfg, "all")
    sim.run()
    matches = 0
    names = payloads = 0
    hits = Counter()
    for o in adv.seen:
        text = _name_text(o.name) if o.name else ""
        names += bool(o.name)
        payloads += bool(o.payload)
        for w in watchlist:
            if (text and w in text.split("/")) or (o.payload and w.encode() in o.payload):
                matches += 1
                hits[w] += 1
    ev = {"watchlist": len(watchlist), "names_observed": names, "payloads_observed": payloads,
          "matches": matches, "entries_hit": len(hits)}
    return _outcome("watchlist", cfg, bool(watchlist) and matches > 0, ev)


def sniffing_attack(cfg: SimConfig, keywords: list[str] | None = None) -> AttackOutcome:
    """Scan Data payloads for keywords; routable prefixes do not count."""
    sim, adv = _sim(cfg, "all")
    keywords = ["confidential-payload", "segment body", sim.prefixes[0][0]] if keywords is None else list(keywords)
    sim.run()
    payload_hits = prefix_hits = scanned = 0
    for o in adv.seen:
        if o.payload:
            scanned += 1
            payload_hits += sum(k.encode() in o.payload for k in keywords)
        if o.name:
            parts = _name_text(o.name).split("/")
            prefix_hits += sum(k in parts for k in keywords)
    ev = {"keywords": len(keywords), "payloads_scanned": scanned, "payload_hits": payload_hits,
          "prefix_hits": prefix_hits}
    return _outcome("sniffing", cfg, payload_hits > 0, ev)


def traffic_monitoring_attack(cfg: SimConfig, gateway_index: int = 0) -> AttackOutcome:
    """An edge router maps its consumers' requests to catalog objects.

    Readable names are mapped exactly.  Opaque names get a uniform guess
    over the catalog.  Success means the hit count beats the uniform
    baseline in a one-sided binomial test at ``SIGNIFICANCE``.
    """
    sim0 = Simulator(cfg, materialize_payloads=True)
    gw = sim0.gateways[gateway_index]
    sim, adv = _sim(cfg, [gw])
    sim.run()
    catalog = sim.P * cfg.catalog.items_per_publisher
    rng = adv.rng
    trials = correct = 0
    per_digest: Counter = Counter()
    truth_of_digest: dict[bytes, tuple[int, int]] = {}
    names_seen: Counter = Counter()
    for o in adv.seen:
        if o.src != APP or not o.interest or o.kind != CONTENT or not o.name:
            continue
        truth = sim.name_index.get(o.name)
        if truth is None:
            continue
        p_true, item_true = truth[0], truth[1]
        names_seen[o.name] += 1
        parsed = naming.parse_name(o.name)
        if parsed.kind is naming.NameKind.PLAIN:
            guess = (sim.prefix_to_pub.get(parsed.prefix[:2]), _item_of(parsed.prefix))
        else:
            per_digest[parsed.digest] += 1
            truth_of_digest[parsed.digest] = (p_true, item_true)
            g = rng.randrange(catalog)
            guess = (g % sim.P, g // sim.P)
        trials += 1
        correct += guess == (p_true, item_true)
    p_value = binomtest(correct, trials, 1.0 / catalog, alternative="greater").pvalue if trials else 1.0
    # frequency analysis: k-th most requested digest guessed as popularity rank k
    freq_correct = 0
    for k, (digest, _) in enumerate(sorted(per_digest.items(), key=lambda kv: (-kv[1], kv[0]))):
        if truth_of_digest[digest] == (k % sim.P, k // sim.P):
            freq_correct += 1
    ev = {
        "observed_requests": trials,
        "correct": correct,
        "catalog": catalog,
        "accuracy": correct / trials if trials else 0.0,
        "p_value": float(p_value),
        "linkable_repeats": sum(c - 1 for c in names_seen.values()),
        "distinct_names": len(names_seen),
        "distinct_digests": len(per_digest),
        "frequency_guess_correct": freq_correct,
    }
    return _outcome("traffic-monitoring", cfg, trials > 0 and p_value < SIGNIFICANCE, ev)


def _item_of(components: tuple[str, ...]) -> int | None:
    for c in components:
        if c.startswith("obj") and c.endswith(".doc"):
            try:
                return int(c[3:-4])
            except ValueError:
                return None
    return None


# ---------------------------------------------------------------------------
# injection attacks


def _fake_first_interest(adv: Adversary, prefix: tuple[str, ...], n: int) -> tuple[bytes, protocol.Message]:
    k = adv.knowledge
    digest = k.fresh(adv.rng, crypto.DIGEST_SIZE)
    sealed = k.fresh(adv.rng, 48)
    name = naming.SdpcName(prefix, naming.NameKind.FIRST_INTEREST, digest, sealed).encode()
    k.derive(name, digest, sealed)
    enc = k.fresh(adv.rng, 44)
    run_id = f"x{n}.{k.fresh(adv.rng, 4).hex()}"
    msg = protocol.Message(protocol.Flow.SUBP, "m1", f"x{n}", "", run_id, {"enc_n0": enc}, name=name)
    adv.emit(name, enc)
    return name, msg


def _fake_plain(adv: Adversary, template, items: int, segments: int) -> bytes:
    comps = list(template.prefix)
    item = adv.rng.randrange(items)
    seg = adv.rng.randint(1, segments)
    for i, c in enumerate(comps):
        if c.startswith("obj") and c.endswith(".doc"):
            comps[i] = f"obj{item:05d}.doc"
        elif c.startswith("_s"):
            comps[i] = f"_s{seg}"
    name = naming.plain_name(tuple(comps)).encode()
    return adv.knowledge.derive(name, template.encode())


def _completion(m) -> float:
    return m.completed / m.requests if m.requests else 1.0


def ddos_attack(cfg: SimConfig, rate_factor: float = 10.0, n_fakes: int | None = None, gateways: int = 2) -> AttackOutcome:
    """Flood first-interest-shaped requests with random digests.

    The adversary sits at ``gateways`` edge routers, learns the public
    prefixes from traffic and injects fakes there.  If it sees readable
    catalog names it floods those instead, which is the better attack
    when names are not protected.  A paired run on the same seed without
    the flood gives the baseline.
    """
    base = Simulator(cfg).run()
    sim0 = Simulator(cfg)
    vantage = sim0.gateways[:gateways]
    sim, adv = _sim(cfg, vantage, payloads=False)
    w = cfg.workload
    legit_rate = w.lambda_per_gateway * cfg.topology.n_gateways
    total = n_fakes if n_fakes is not None else int(rate_factor * legit_rate * w.duration)
    times = sorted(adv.rng.uniform(0.05 * w.duration, w.duration) for _ in range(total))
    counts = {"first": 0, "plain": 0, "skipped": 0}

    def fire(n: int) -> None:
        gw = vantage[n % len(vantage)]
        template = adv.plain_template
        if template is not None:
            name = _fake_plain(adv, template, cfg.catalog.items_per_publisher, cfg.catalog.segments_per_item)
            adv.emit(name)
            sim.inject(sim.now, gw, Interest(("fake", n), name, None, w.interest_bytes, CONTENT), ("probe", n))
            counts["plain"] += 1
            return
        prefixes = adv.prefixes()
        if not prefixes:
            counts["skipped"] += 1
            return
        prefix = prefixes[n % len(prefixes)]
        name, msg = _fake_first_interest(adv, prefix, n)
        sim.inject(sim.now, gw, Interest((name, msg.run_id), name, None, w.control_bytes, FIRST, msg=msg), ("probe", n))
        counts["first"] += 1

    for n, t in enumerate(times):
        sim.call_at(t, fire, n)
    m = sim.run()
    eb, ea = base.extra, m.extra
    # honest traffic never reaches the manager with an unregistered digest
    at_manager = sim.scheme.manager.rejects.get("unregistered", 0) if sim.scheme.name == "sdpc" else 0
    lookups = ea.get("manager_lookups", 0) - eb.get("manager_lookups", 0)
    failed = ea.get("manager_failed_decrypts", 0) - eb.get("manager_failed_decrypts", 0)
    grants = ea.get("grants_sent", 0) - eb.get("grants_sent", 0)
    seg_work = ea.get("segment_work", 0) - eb.get("segment_work", 0)
    comp_base, comp_attack = _completion(base), _completion(m)
    ev = {
        "fakes_first": counts["first"],
        "fakes_plain": counts["plain"],
        "fakes_skipped": counts["skipped"],
        "fakes_at_manager": at_manager,
        "lookups_per_fake": lookups / at_manager if at_manager else 0.0,
        "failed_decrypts_per_fake": failed / at_manager if at_manager else 0.0,
        "grants_to_fakes": grants,
        "extra_segment_work": seg_work,
        "completion_base": comp_base,
        "completion_attack": comp_attack,
        "download_base": base.avg_download_time,
        "download_attack": m.avg_download_time,
    }
    per_fake_ok = at_manager == 0 or (lookups == at_manager and failed == at_manager)
    success = (
        grants > 0
        or seg_work > 0
        or abs(comp_base - comp_attack) > 0.05
        or not per_fake_ok
    )
    return _outcome("ddos", cfg, success, ev)


def time_analysis_attack(cfg: SimConfig, n_probes: int = 10_000, n_malformed: int = 1_000,
                         gateway_index: int = 0) -> AttackOutcome:
    """Probe a warm gateway cache for segments the adversary cannot name.

    Well-formed probes reuse an observed prefix and segment-name shape but
    fill digest and ciphertext with fresh random bytes.  Malformed probes
    are truncated names and must be dropped at ingress.  In the
    ``leak-keymsg`` control the adversary also receives the grants that
    consumers at the probed gateway obtained, and builds real names.
    """
    sim0 = Simulator(cfg)
    gw = sim0.gateways[gateway_index]
    sim, adv = _sim(cfg, [gw], payloads=False)
    w = cfg.workload
    t_probe = w.duration
    probe_gap = 1e-4
    state = {"sent": 0, "leaked_names": 0}

    def probe_all() -> None:
        k = adv.knowledge
        shapes = adv.segment_shapes() or [(p, 48) for p in adv.prefixes()]
        if not shapes:
            return
        names = []
        for i in range(n_probes):
            prefix, clen = shapes[i % len(shapes)]
            digest = k.fresh(adv.rng, crypto.DIGEST_SIZE)
            sealed = k.fresh(adv.rng, clen)
            name = naming.SdpcName(prefix, naming.NameKind.SHARED_SEGMENT, digest, sealed).encode()
            names.append(k.derive(name, digest, sealed))
        if sim.scheme.name == "sdpc" and "leak-keymsg" in cfg.scheme.weaken:
            for prefix, path, chain in sim.scheme.leaked:
                k.leak(chain.seed)
                for seg in range(1, chain.length + 1):
                    name = naming.segment_name(prefix, chain.key_msg, chain, path, seg).encode()
                    names.append(k.derive(name, chain.seed))
                    state["leaked_names"] += 1
        for i in range(n_malformed):
            good = names[i % len(names)] if names else k.fresh(adv.rng, 40)
            cut = k.derive(good[: max(1, len(good) - 1 - adv.rng.randrange(8))], good)
            names.append(cut)
        for i, name in enumerate(names):
            adv.emit(name)
            it = Interest(("probe", i), name, None, w.interest_bytes, PROBE)
            sim.inject(sim.now + i * probe_gap, gw, it, ("probe", i))
            state["sent"] += 1

    sim.call_at(t_probe, probe_all)
    sim.run()
    ev = {
        "probes": state["sent"],
        "well_formed": n_probes,
        "leaked_names": state["leaked_names"],
        "malformed": n_malformed,
        "malformed_dropped": sim.m_malformed,
        "cache_hits": sim.m_adv_cs_hits,
        "answered": sim.m_probe_hits,
        "leaked_values": adv.knowledge.leaked(),
    }
    return _outcome("time-analysis", cfg, sim.m_adv_cs_hits > 0, ev)


# ---------------------------------------------------------------------------
# protocol replays


def _protocol_world(seed: int, weaken=()):
    rng = random.Random(seed)
    mgr = protocol.Manager("M", crypto.PublisherKeyPair.generate(rng), random.Random(rng.getrandbits(64)))
    pubs = []
    for j in range(2):
        p = protocol.Publisher(f"P{j}", f"pub{j}.example/content", crypto.PublisherKeyPair.generate(rng),
                               random.Random(rng.getrandbits(64)), manager_public=mgr.public)
        p.weaken = frozenset(weaken)
        mgr.add_publisher(p.id, p.public, p.prefix)
        pubs.append(p)
    c = protocol.Consumer("alice", crypto._randbytes(rng, 32), random.Random(rng.getrandbits(64)))
    mgr.register(c.id, c.n_s)
    for j, p in enumerate(pubs):
        for i in range(3):
            po = p.publish(f"doc{i}", 1, 4096, 1024)
            if j == 1:
                mgr.register_content(po)
    return rng, mgr, pubs, c


class _Recorded:
    """A protocol world after one honest SubP and one APSub run, with the
    adversary on the consumer's link: from now on everything addressed to
    the consumer reaches the adversary instead."""

    def __init__(self, seed: int, weaken=()):
        rng, self.mgr, self.pubs, self.alice = _protocol_world(seed, weaken)
        self.pub = self.pubs[0]
        self.adv = Adversary({"link"}, random.Random(rng.getrandbits(64)), ("observe", "replay", "drop"))
        captured: list[protocol.Message] = []

        def record(m):
            captured.append(m)
            self.adv.knowledge.observe(m.wire())
            return m

        self.net = protocol.Network(self.mgr, *self.pubs, self.alice, tap=record)
        protocol.run_subp(self.alice, self.pub, self.net, "doc0/_v1/_s0", 0.0)
        protocol.run_apsub(self.alice, self.pub, self.net, "doc1/_v1/_s0", 1.0)
        self.rec = {m.step: m for m in captured}
        self.inbox: list[protocol.Message] = []
        self.net.tap = self._intercept

    def _intercept(self, m):
        self.adv.knowledge.observe(m.wire())
        if m.receiver == self.alice.id:
            self.inbox.append(m)
            return None
        return m

    def replay(self, step: str, run_id: str, now: float) -> None:
        msg = self.rec[step].copy(run_id=run_id)
        self.adv.knowledge.derive(msg.wire(), self.rec[step].wire())
        self.adv.emit(msg.wire())
        self.net.deliver(msg, now)

    def done(self, run_id: str) -> bool:
        run = self.pub.runs.get(run_id)
        return run is not None and run.state is protocol.RunState.DONE


def replay_and_ticket_attacks(seed: int = 1, weaken=()) -> AttackOutcome:
    """Replay captured handshake messages.

    The adversary records an honest consumer's traffic and then replays
    M1, M4 and an access request under fresh run ids, answering each
    challenge with the recorded final response (it cannot compute a new
    one without K_S).  Each replay starts from a fresh recording.
    Success means a stale final response was accepted, a grant opened, or
    a ticket flagged as stolen was honoured again.
    """
    ev = Counter()

    # M1 replayed: the manager answers, but u0 and the grant stay sealed
    w = _Recorded(seed, weaken)
    w.replay("m1", "replay-m1", 2.0)
    m4s = [m for m in w.inbox if m.step == "m4"]
    ev["m4_to_adversary"] = len(m4s)
    ev["grants_opened"] += _try_open(w.adv, m4s)
    w.replay("m6", "replay-m1", 2.0)
    ev["stale_m6_accepted"] = int(w.done("replay-m1"))
    before = sum(w.pub.rejects.values())
    w.net.deliver(w.rec["m1"], 2.0)
    ev["exact_m1_rejected"] = sum(w.pub.rejects.values()) - before

    # M4 replayed to the consumer
    w = _Recorded(seed, weaken)
    before = sum(w.alice.rejects.values())
    w.alice.handle(w.rec["m4"], 2.0)
    ev["m4_replay_rejected"] = sum(w.alice.rejects.values()) - before

    # access request replayed with a valid ticket but no K_S
    w = _Recorded(seed, weaken)
    ticket = crypto.hash_bytes(w.rec["a1"].fields["ticket"])
    w.replay("a1", "replay-a1", 2.0)
    a2s = [m for m in w.inbox if m.step == "a2"]
    ev["a2_to_adversary"] = len(a2s)
    ev["grants_opened"] += _try_open(w.adv, a2s)
    w.replay("a3", "replay-a1", 2.0)
    ev["stale_a3_accepted"] = int(w.done("replay-a1"))
    ev["flagged_on_bad_answer"] = int(ticket in w.pub.stolen)
    before = w.pub.grants_sent
    w.replay("a1", "replay-a1-again", 3.0)
    ev["grants_on_flagged_ticket"] = w.pub.grants_sent - before

    # same replay, adversary stays silent: the deadline flags the ticket
    w = _Recorded(seed, weaken)
    w.replay("a1", "replay-a1", 2.0)
    report = w.pub.expire_run("replay-a1", 2.0 + w.pub.ticket_deadline)
    w.net.deliver(report, 2.0 + w.pub.ticket_deadline)
    ev["flagged_on_timeout"] = int(ticket in w.pub.stolen)
    ev["manager_knows_stolen"] = int(ticket in w.mgr.stolen)

    # key-substitution witness for an unauthenticated key bootstrap
    ev["dh_mitm_unauthenticated"] = int(dh_bootstrap_mitm(random.Random(seed), authenticated=False))
    ev["dh_mitm_authenticated"] = int(dh_bootstrap_mitm(random.Random(seed), authenticated=True))
    success = bool(
        ev["grants_opened"] or ev["stale_m6_accepted"] or ev["stale_a3_accepted"] or ev["grants_on_flagged_ticket"]
    )
    return AttackOutcome("replay", "sdpc", seed, success, dict(sorted(ev.items())), tuple(weaken))


def _try_open(adv: Adversary, msgs: list[protocol.Message]) -> int:
    """Try every 32-byte value the adversary holds as a key on every field."""
    keys = [b for b in adv.knowledge.tags if len(b) == crypto.KEY_SIZE]
    opened = 0
    for m in msgs:
        for blob in m.fields.values():
            for key in keys:
                try:
                    crypto.sym_decrypt(key, blob)
                except (crypto.CryptoError, crypto.InvalidArgument):
                    continue
                opened += 1
    return opened


# a 127-bit Mersenne prime keeps the toy exchange fast and exact
_DH_P = (1 << 127) - 1
_DH_G = 3


def dh_bootstrap_mitm(rng: random.Random, authenticated: bool) -> bool:
    """Key substitution against a router-to-router Diffie-Hellman bootstrap.

    The man in the middle swaps both public values for its own.  With
    authentication each side checks the peer value against a
    pre-distributed fingerprint, so the swap is noticed.  Returns True if
    both ends end up sharing keys with the attacker undetected.
    """
    a, b, m = (rng.randrange(2, _DH_P - 1) for _ in range(3))
    A, B, M = (pow(_DH_G, x, _DH_P) for x in (a, b, m))
    fingerprints = {"a": crypto.hash_bytes(A.to_bytes(16, "big")), "b": crypto.hash_bytes(B.to_bytes(16, "big"))}
    recv_by_b, recv_by_a = M, M
    if authenticated:
        if crypto.hash_bytes(recv_by_b.to_bytes(16, "big")) != fingerprints["a"]:
            return False
        if crypto.hash_bytes(recv_by_a.to_bytes(16, "big")) != fingerprints["b"]:
            return False
    k_a = pow(recv_by_a, a, _DH_P)
    k_b = pow(recv_by_b, b, _DH_P)
    return k_a == pow(A, m, _DH_P) and k_b == pow(B, m, _DH_P)


# ---------------------------------------------------------------------------
# suite


def run_attack(name: str, cfg: SimConfig) -> AttackOutcome:
    if name == "watchlist":
        return watchlist_attack(cfg)
    if name == "sniffing":
        return sniffing_attack(cfg)
    if name == "ddos":
        return ddos_attack(cfg)
    if name == "time-analysis":
        return time_analysis_attack(cfg)
    if name == "traffic-monitoring":
        return traffic_monitoring_attack(cfg)
    if name == "replay":
        return replay_and_ticket_attacks(cfg.seed, cfg.scheme.weaken)
    raise ValueError(f"unknown attack {name!r}")


def _with_knobs(cfg: SimConfig, knobs) -> SimConfig:
    return cfg.replace(**{"scheme.name": "sdpc", "scheme.weaken": list(knobs)})


def attack_suite(cfg: SimConfig, seeds, weaken=(), attacks=ATTACKS) -> list[AttackOutcome]:
    """Each attack against SDPC (with ``weaken`` applied) and its control."""
    out = []
    for seed in seeds:
        base = cfg.replace(seed=seed)
        for name in attacks:
            out.append(run_attack(name, _with_knobs(base, weaken)))
            out.append(run_attack(name, _with_knobs(base, sorted({*weaken, CONTROLS[name]}))))
    return out


def suite_passed(outcomes: list[AttackOutcome], weaken=()) -> bool:
    """True iff every attack failed on the real runs and succeeded on its control."""
    ok = True
    weaken = tuple(sorted(weaken))
    for o in outcomes:
        is_control = tuple(sorted(o.weaken)) != weaken
        ok &= o.success if is_control else not o.success
    return ok
