"""Discrete-event NDN forwarding engine.

Routers run the usual Content Store -> PIT -> FIB pipeline.  Each directed
link is a FIFO server: a packet starts transmitting when the link is free
and arrives ``size*8/capacity + propagation`` later.  Publishers and the
subscription manager are endpoint nodes with a single-server CPU that
serializes their asymmetric work.

Consumers attach to gateways with zero delay.  A consumer-issued Interest
enters the gateway through the application face ``APP``; its PIT entry
records a waiter tuple so the Data can be handed back.

Retransmissions are accounted analytically.  An interest whose Data
arrives later than the timeout ``T_o`` would have been retransmitted
(counted once in ``timeouts``); one later than ``(1 + max_retx) * T_o``
is a failure.  No losses are modelled, so a retransmission always lands
on the PIT entry its original left behind and adds no upstream traffic.

Scheme-specific behaviour (naming, handshakes, admission, costs) lives in
:class:`Scheme` subclasses.
"""

from __future__ import annotations

import csv
import gzip
import heapq
import io
import math
import random
from dataclasses import asdict, dataclass, field

import numpy as np

from ..config import SimConfig
from .cache import make_store
from .topology import Topology, generate_topology
from .workload import churn_events, consumer_workload, zipf_catalog

APP = -1

CONTENT = 0
FIRST = 1
CONTROL = 2
PROBE = 3

EV_ARRIVE = 0
EV_REQUEST = 1
EV_CALL = 2
EV_CHURN = 3


class Interest:
    __slots__ = ("key", "name", "dest", "size", "kind", "min_epoch", "label", "notify", "msg", "adversarial", "issue")

    def __init__(self, key, name, dest, size, kind=CONTENT, min_epoch=0, label=None,
                 notify=False, msg=None, adversarial=False):
        self.key = key
        self.name = name
        self.dest = dest
        self.size = size
        self.kind = kind
        self.min_epoch = min_epoch
        self.label = label
        self.notify = notify
        self.msg = msg
        self.adversarial = adversarial
        self.issue = 0.0


class Data:
    __slots__ = ("key", "name", "size", "epoch", "cacheable", "label", "msg", "payload", "kind", "origin")

    def __init__(self, key, name, size, epoch=0, cacheable=True, label=None, msg=None,
                 payload=None, kind=CONTENT, origin=None):
        self.key = key
        self.name = name
        self.size = size
        self.epoch = epoch
        self.cacheable = cacheable
        self.label = label
        self.msg = msg
        self.payload = payload
        self.kind = kind
        self.origin = origin


class Req:
    """One consumer request for a whole object."""

    __slots__ = ("id", "gateway", "gi", "slot", "consumer", "publisher", "item", "rank",
                 "issue", "remaining", "done", "timeout", "data")

    def __init__(self, rid, gateway, gi, slot, publisher, item, rank, issue, segments, timeout):
        self.id = rid
        self.gateway = gateway
        self.gi = gi
        self.slot = slot
        self.consumer = None
        self.publisher = publisher
        self.item = item
        self.rank = rank
        self.issue = issue
        self.remaining = segments
        self.done = None
        self.timeout = timeout
        self.data = None


@dataclass
class RouterStats:
    router: int
    gateway: bool = False
    publisher_router: bool = False
    betweenness: float = 0.0
    cs_lookups: int = 0
    cs_hits: int = 0
    interests_forwarded: int = 0
    data_forwarded: int = 0
    pit_aggregated: int = 0
    cached: int = 0
    evictions: int = 0
    max_used: int = 0
    capacity: int = 0


@dataclass
class RunMetrics:
    scheme: str
    seed: int
    cache_bytes: int
    avg_download_time: float
    publisher_load: float
    timeout_ratio: float
    cache_hit_count: int
    requests: int
    completed: int
    partial: bool
    content_interests: int
    content_at_publisher: int
    content_cache_hits: int
    pit_aggregated: int
    drops: int
    in_flight: int
    delivered: int
    timeouts: int
    failures: int
    first_interest_lookups: int
    first_interest_hits: int
    control_interests: int
    control_at_endpoint: int
    protocol_rejects: int
    epoch_violations: int
    churn_events: int
    events: int
    sim_time: float
    extra: dict = field(default_factory=dict)
    routers: list = field(default_factory=list, repr=False)

    CSV_FIELDS = (
        "scheme", "seed", "cache_bytes", "avg_download_time", "publisher_load", "timeout_ratio",
        "cache_hit_count", "requests", "completed", "partial", "content_interests",
        "content_at_publisher", "content_cache_hits", "pit_aggregated", "drops", "in_flight",
        "delivered", "timeouts", "failures", "first_interest_lookups", "first_interest_hits",
        "control_interests", "control_at_endpoint", "protocol_rejects", "epoch_violations",
        "churn_events", "events", "sim_time",
    )

    def row(self) -> dict:
        d = {k: getattr(self, k) for k in self.CSV_FIELDS}
        for k in ("avg_download_time", "publisher_load", "timeout_ratio", "sim_time"):
            d[k] = repr(float(d[k]))
        return d

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerow(self.row())
        return buf.getvalue()

    def routers_csv(self) -> str:
        buf = io.StringIO()
        if not self.routers:
            return ""
        names = list(asdict(self.routers[0]).keys())
        w = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
        w.writeheader()
        for r in self.routers:
            w.writerow(asdict(r))
        return buf.getvalue()


class Scheme:
    """Plain shared-name NDN; subclasses override the hooks they need."""

    name = "ndn-plain"

    def __init__(self, sim: "Simulator"):
        self.sim = sim
        self._names: dict = {}

    def setup(self) -> None:
        pass

    # -- naming --
    def object_parts(self, pub: int, item: int) -> tuple[tuple[str, ...], str, int]:
        return self.sim.prefixes[pub], f"obj{item:05d}.doc", 1

    def plain_segment_name(self, pub: int, item: int, seg: int, *extra: str) -> bytes:
        key = (pub, item, seg, extra)
        name = self._names.get(key)
        if name is None:
            from ..naming import plain_name

            prefix, obj, ver = self.object_parts(pub, item)
            name = plain_name(prefix, obj, f"_v{ver}", f"_s{seg}", *extra).encode()
            self._names[key] = name
            self.sim.name_index[name] = (pub, item, seg)
        return name

    def plaintext(self, pub: int, item: int, seg: int) -> bytes:
        prefix, obj, ver = self.object_parts(pub, item)
        return f"{obj}/_v{ver}/_s{seg} segment body confidential-payload".encode()

    # -- consumer side --
    def start_request(self, req: Req) -> None:
        self.issue_segments(req)

    def issue_segments(self, req: Req) -> None:
        sim = self.sim
        req.data["seg_issue"] = sim.now
        epoch = self.min_epoch(req)
        label = self.label(req)
        for seg in range(1, sim.segments + 1):
            name = self.segment_name(req, seg)
            it = Interest(self.pit_key(req, seg, name), name, sim.pub_node(req.publisher),
                          sim.interest_bytes, CONTENT, epoch, label)
            sim.issue(req.gateway, it, ("seg", req, seg))

    def segment_name(self, req: Req, seg: int) -> bytes:
        return self.plain_segment_name(req.publisher, req.item, seg)

    def pit_key(self, req: Req, seg: int, name: bytes):
        return name

    def min_epoch(self, req: Req) -> int:
        return 0

    def label(self, req: Req):
        return None

    def on_segment(self, req: Req, seg: int, data: Data) -> None:
        pass

    def on_app_data(self, gw: int, waiter, data: Data) -> None:
        raise NotImplementedError(f"{self.name} has no control waiter {waiter[0]!r}")

    def finish_delay(self, req: Req) -> float:
        """Extra time after the last segment before the request completes."""
        return 0.0

    # -- network side --
    def admit(self, router: int, data: Data, pit_entry: list) -> bool:
        return data.cacheable

    def proc_delay(self, router: int, pkt) -> float:
        return 0.0

    def serve(self, pub: int, it: Interest) -> Data | None:
        hit = self.sim.name_index.get(it.name)
        if hit is None or hit[0] != pub:
            return None
        _, item, seg = hit
        payload = self.plaintext(pub, item, seg) if self.sim.materialize_payloads else None
        return Data(it.key, it.name, self.sim.segment_bytes, self.data_epoch(pub), True, it.label, payload=payload)

    def data_epoch(self, pub: int) -> int:
        return 0

    def at_publisher(self, pub: int, pkt, face: int) -> None:
        sim = self.sim
        if isinstance(pkt, Interest) and pkt.kind in (CONTENT, PROBE):
            d = self.serve(pub, pkt)
            if d is None:
                sim.m_publisher_unknown += 1
                return
            sim.serve_work[pub] += 1
            sim.send(sim.pub_node(pub), face, d, d.size)
            return
        self.at_publisher_control(pub, pkt, face)

    def at_publisher_control(self, pub: int, pkt, face: int) -> None:
        self.sim.m_unhandled += 1

    def at_manager(self, pkt, face: int) -> None:
        self.sim.m_unhandled += 1

    def on_churn(self, gi: int, slot: int) -> None:
        pass

    def rejects(self) -> int:
        return 0

    def extra_metrics(self) -> dict:
        return {}


class Simulator:
    def __init__(self, cfg: SimConfig, scheme_cls=None, materialize_payloads: bool = False, trace: bool = False):
        cfg.validate()
        self.cfg = cfg
        t, c, w = cfg.topology, cfg.catalog, cfg.workload
        ss = np.random.SeedSequence(cfg.seed)
        topo_ss, work_ss, churn_ss, label_ss, crypto_ss, adv_ss = ss.spawn(6)
        self.topo: Topology = generate_topology(
            t.n_routers, t.ba_m, t.n_publishers, t.n_gateways,
            int(topo_ss.generate_state(1)[0]), t.link_capacity_bps, t.propagation_delay,
        )
        self.R = t.n_routers
        self.P = t.n_publishers
        self.mgr = self.topo.manager_node
        self.gateways = self.topo.gateways
        self.segments = c.segments_per_item
        self.segment_bytes = c.segment_bytes
        self.interest_bytes = w.interest_bytes
        self.control_bytes = w.control_bytes
        self.bit_time = 8.0 / t.link_capacity_bps
        self.prop = t.propagation_delay
        self.horizon = w.horizon
        self.materialize_payloads = materialize_payloads
        self.prefixes = [("pub%d.example" % p, "content") for p in range(self.P)]
        self.prefix_to_pub = {pfx: p for p, pfx in enumerate(self.prefixes)}
        self.name_index: dict[bytes, tuple] = {}

        self.catalog = zipf_catalog(self.P * c.items_per_publisher, c.zipf_alpha)
        self.workload = consumer_workload(
            self.gateways, w.lambda_per_gateway, self.catalog,
            int(work_ss.generate_state(1)[0]), w.duration, w.consumers_per_gateway,
        )
        self.churn = churn_events(
            cfg.churn_rate(), w.duration, len(self.gateways), w.consumers_per_gateway,
            int(churn_ss.generate_state(1)[0]),
        )
        self.label_rng = np.random.default_rng(label_ss)
        self.crypto_rng = random.Random(int(crypto_ss.generate_state(1)[0]))
        self.adversary_rng = random.Random(int(adv_ss.generate_state(1)[0]))

        cap = cfg.cache_bytes()
        self.cache_capacity = cap
        self.cs = [make_store(cfg.cache.policy, cap, cfg.cache.privileged_fraction) for _ in range(self.R)]
        self.pit: list[dict] = [dict() for _ in range(self.R)]
        gw_set = set(self.gateways)
        pub_set = set(self.topo.publisher_routers)
        self.rstats = [
            RouterStats(r, r in gw_set, r in pub_set, self.topo.betweenness[r], capacity=cap)
            for r in range(self.R)
        ]
        self.busy: dict[int, float] = {}
        self.cpu_busy: dict[int, float] = {}
        self.heap: list = []
        self._seq = 0
        self.now = 0.0
        self.events = 0
        self.observers: list = []
        self.watch: set[int] = set()
        self.trace = [] if trace else None

        # per (gateway, publisher) content timeout
        self._timeouts: dict[tuple[int, int], float] = {}
        rtt_bits = (self.interest_bytes + self.segment_bytes) * 8 / t.link_capacity_bps
        for gw in self.gateways:
            for p in range(self.P):
                hops = self.topo.hops(gw, self.pub_node(p))
                rtt = hops * (2 * self.prop + rtt_bits)
                self._timeouts[(gw, p)] = max(w.timeout_floor, w.timeout_rtt_factor * rtt)
        self.max_retx = w.max_retx

        # counters
        self.requests: list[Req] = []
        self.m_content_issued = 0
        self.m_fate_hit = 0
        self.m_fate_agg = 0
        self.m_fate_pub = 0
        self.m_fate_drop = 0
        self.m_delivered = 0
        self.m_timeouts = 0
        self.m_failures = 0
        self.m_first_lookups = 0
        self.m_first_hits = 0
        self.m_control_issued = 0
        self.m_control_endpoint = 0
        self.m_publisher_unknown = 0
        self.m_unsolicited = 0
        self.m_malformed = 0
        self.m_no_route = 0
        self.m_unhandled = 0
        self.m_epoch_violations = 0
        self.m_probe_hits = 0
        self.m_adv_cs_hits = 0
        self.m_adv_at_publisher = 0
        self.serve_work = [0] * self.P
        self.probe_results: dict = {}
        self.churn_count = 0

        scheme_cls = scheme_cls or scheme_for(cfg.scheme.name)
        self.scheme: Scheme = scheme_cls(self)
        self.scheme.setup()

    # -- helpers --
    def pub_node(self, p: int) -> int:
        return self.R + p

    def timeout_for(self, gw: int, p: int) -> float:
        return self._timeouts[(gw, p)]

    def push(self, t: float, kind: int, a=None, b=None, c=None) -> None:
        self._seq += 1
        heapq.heappush(self.heap, (t, self._seq, kind, a, b, c))

    def call_at(self, t: float, fn, *args) -> None:
        self.push(t, EV_CALL, fn, args)

    def cpu(self, node: int, cost: float) -> float:
        """Occupy a node's CPU for ``cost`` seconds; returns the finish time."""
        if cost <= 0:
            return self.now
        start = max(self.now, self.cpu_busy.get(node, 0.0))
        self.cpu_busy[node] = start + cost
        return start + cost

    def send(self, u: int, v: int, pkt, size: int, delay: float = 0.0) -> None:
        lk = u * 4096 + v
        t0 = self.now + delay
        b = self.busy.get(lk, 0.0)
        if b > t0:
            t0 = b
        done = t0 + size * self.bit_time
        self.busy[lk] = done
        self._seq += 1
        heapq.heappush(self.heap, (done + self.prop, self._seq, EV_ARRIVE, v, u, pkt))
        if self.watch and (u in self.watch or v in self.watch):
            for obs in self.observers:
                obs(self.now, u, v, pkt)
        if self.trace is not None:
            self.trace.append((self.now, u, v, type(pkt).__name__, pkt.kind, size))

    def occupy(self, u: int, v: int, size: int) -> None:
        """Charge transmission time on a link without delivering a packet."""
        lk = u * 4096 + v
        t0 = max(self.now, self.busy.get(lk, 0.0))
        self.busy[lk] = t0 + size * self.bit_time

    def observe(self, nodes, callback) -> None:
        """Register ``callback(t, u, v, pkt)`` for packets entering or leaving
        ``nodes``.  Interests handed to a watched gateway by its consumers
        are reported with ``u == APP``."""
        self.watch.update(nodes)
        self.observers.append(callback)

    # -- consumer side --
    def issue(self, gw: int, it: Interest, waiter) -> None:
        it.issue = self.now
        if self.watch and gw in self.watch:
            for obs in self.observers:
                obs(self.now, APP, gw, it)
        if it.kind == CONTENT and not it.adversarial:
            self.m_content_issued += 1
        elif it.kind in (FIRST, CONTROL):
            self.m_control_issued += 1
        if it.notify:
            self.send(gw, self.topo.route(gw, it.dest), it, it.size)
            return
        self._on_interest(gw, APP, it, waiter)

    def inject(self, t: float, gw: int, it: Interest, waiter=None) -> None:
        """Adversarial interest entering ``gw`` from an attached host at ``t``."""
        it.adversarial = True
        self.call_at(t, self._ingress, gw, it, waiter)

    def _ingress(self, gw: int, it: Interest, waiter) -> None:
        from ..naming import NameParseError, parse_name

        try:
            parsed = parse_name(it.name)
        except NameParseError:
            self.m_malformed += 1
            return
        pub = self.prefix_to_pub.get(parsed.prefix[:2])
        if pub is None:
            self.m_no_route += 1
            return
        it.dest = self.pub_node(pub)
        self.issue(gw, it, waiter)

    def _on_interest(self, r: int, face: int, it: Interest, waiter=None) -> None:
        st = self.rstats[r]
        if it.notify:
            st.interests_forwarded += 1
            self.send(r, self.topo.route(r, it.dest), it, it.size, self.scheme.proc_delay(r, it))
            return
        cs = self.cs[r]
        st.cs_lookups += 1
        if it.kind == FIRST:
            self.m_first_lookups += 1
        e = cs.lookup(it.name, it.min_epoch) if cs.capacity else None
        if e is not None:
            st.cs_hits += 1
            if it.adversarial:
                self.m_adv_cs_hits += 1
            if it.kind == FIRST:
                self.m_first_hits += 1
            elif it.kind == CONTENT and not it.adversarial:
                self.m_fate_hit += 1
            d = e.payload
            if d.key != it.key:
                d = Data(it.key, d.name, d.size, d.epoch, d.cacheable, d.label, d.msg, d.payload, d.kind, d.origin)
            if face == APP:
                self._deliver(r, waiter, d)
            else:
                st.data_forwarded += 1
                self.send(r, face, d, d.size, self.scheme.proc_delay(r, d))
            return
        pit = self.pit[r]
        pe = pit.get(it.key)
        if pe is not None:
            pe.append((face, waiter))
            st.pit_aggregated += 1
            if it.kind == CONTENT and not it.adversarial:
                self.m_fate_agg += 1
            return
        if it.dest is None:
            self.m_no_route += 1
            if it.kind == CONTENT and not it.adversarial:
                self.m_fate_drop += 1
            return
        pit[it.key] = [(face, waiter)]
        st.interests_forwarded += 1
        self.send(r, self.topo.route(r, it.dest), it, it.size, self.scheme.proc_delay(r, it))

    def _on_data(self, r: int, d: Data) -> None:
        pe = self.pit[r].pop(d.key, None)
        if pe is None:
            self.m_unsolicited += 1
            return
        st = self.rstats[r]
        cs = self.cs[r]
        if d.cacheable and cs.capacity and self.scheme.admit(r, d, pe):
            if cs.insert(d.name, d.size, d.epoch, d):
                st.cached += 1
                if cs.used > st.max_used:
                    st.max_used = cs.used
                if cs.used > cs.capacity:
                    raise AssertionError(f"router {r} content store over capacity")
        delay = None
        for face, waiter in pe:
            if face == APP:
                self._deliver(r, waiter, d)
            else:
                if delay is None:
                    delay = self.scheme.proc_delay(r, d)
                st.data_forwarded += 1
                self.send(r, face, d, d.size, delay)

    def _deliver(self, gw: int, waiter, d: Data) -> None:
        tag = waiter[0]
        if tag == "seg":
            _, req, seg, = waiter
            self._segment_arrived(req, seg, d)
        elif tag == "probe":
            self.m_probe_hits += 1
            self.probe_results[waiter[1]] = (self.now, d)
        else:
            self.scheme.on_app_data(gw, waiter, d)

    def _segment_arrived(self, req: Req, seg: int, d: Data) -> None:
        self.m_delivered += 1
        # the interest was issued when the request's segment batch went out
        latency = self.now - req.data["seg_issue"]
        if latency > req.timeout:
            self.m_timeouts += 1
            if latency > (1 + self.max_retx) * req.timeout:
                self.m_failures += 1
        self.scheme.on_segment(req, seg, d)
        req.remaining -= 1
        if req.remaining == 0:
            extra = self.scheme.finish_delay(req)
            if extra > 0:
                self.call_at(self.now + extra, self._complete, req)
            else:
                req.done = self.now

    def _complete(self, req: Req) -> None:
        req.done = self.now

    # -- main loop --
    def _start_request(self, q) -> None:
        rank = q.rank - 1
        pub, item = rank % self.P, rank // self.P
        gi = self.gateways.index(q.gateway)
        req = Req(len(self.requests), q.gateway, gi, q.slot, pub, item, q.rank, self.now,
                  self.segments, self.timeout_for(q.gateway, pub))
        req.data = {"seg_issue": self.now}
        self.requests.append(req)
        self.scheme.start_request(req)

    def run(self) -> RunMetrics:
        for q in self.workload:
            self.push(q.time, EV_REQUEST, q)
        for ev in self.churn:
            self.push(ev.time, EV_CHURN, ev)
        heap = self.heap
        pop = heapq.heappop
        R = self.R
        on_interest = self._on_interest
        on_data = self._on_data
        scheme = self.scheme
        horizon = self.horizon
        while heap:
            t, _, kind, a, b, c = pop(heap)
            if t > horizon:
                heapq.heappush(heap, (t, 0, kind, a, b, c))
                break
            self.now = t
            self.events += 1
            if kind == EV_ARRIVE:
                if a < R:
                    if type(c) is Interest:
                        on_interest(a, b, c)
                    else:
                        on_data(a, c)
                elif a == self.mgr:
                    self.m_control_endpoint += 1
                    scheme.at_manager(c, b)
                else:
                    if type(c) is Interest:
                        if c.kind == CONTENT and not c.adversarial:
                            self.m_fate_pub += 1
                        elif c.adversarial:
                            self.m_adv_at_publisher += 1
                        else:
                            self.m_control_endpoint += 1
                    scheme.at_publisher(a - R, c, b)
            elif kind == EV_CALL:
                a(*b)
            elif kind == EV_REQUEST:
                self._start_request(a)
            elif kind == EV_CHURN:
                self.churn_count += 1
                scheme.on_churn(a.gateway_index, a.slot)
        return self.metrics()

    def metrics(self) -> RunMetrics:
        done = [q for q in self.requests if q.done is not None]
        partial = len(done) < len(self.requests)
        avg = sum(q.done - q.issue for q in done) / len(done) if done else float("nan")
        issued = self.m_content_issued
        fates = self.m_fate_hit + self.m_fate_agg + self.m_fate_pub + self.m_fate_drop
        for r, cs in enumerate(self.cs):
            self.rstats[r].evictions = cs.evictions
        return RunMetrics(
            scheme=self.scheme.name,
            seed=self.cfg.seed,
            cache_bytes=self.cache_capacity,
            avg_download_time=avg,
            publisher_load=100.0 * self.m_fate_pub / issued if issued else 0.0,
            timeout_ratio=100.0 * self.m_timeouts / issued if issued else 0.0,
            cache_hit_count=sum(s.cs_hits for s in self.rstats),
            requests=len(self.requests),
            completed=len(done),
            partial=partial,
            content_interests=issued,
            content_at_publisher=self.m_fate_pub,
            content_cache_hits=self.m_fate_hit,
            pit_aggregated=self.m_fate_agg,
            drops=self.m_fate_drop,
            in_flight=issued - fates,
            delivered=self.m_delivered,
            timeouts=self.m_timeouts,
            failures=self.m_failures,
            first_interest_lookups=self.m_first_lookups,
            first_interest_hits=self.m_first_hits,
            control_interests=self.m_control_issued,
            control_at_endpoint=self.m_control_endpoint,
            protocol_rejects=self.scheme.rejects(),
            epoch_violations=self.m_epoch_violations,
            churn_events=self.churn_count,
            events=self.events,
            sim_time=self.now,
            extra=self.scheme.extra_metrics(),
            routers=list(self.rstats),
        )

    def write_trace(self, path) -> None:
        opener = gzip.open if str(path).endswith(".gz") else open
        with opener(path, "wt") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time", "src", "dst", "packet", "kind", "bytes"])
            for row in self.trace or []:
                w.writerow([repr(row[0]), *row[1:]])


_SCHEMES: dict[str, type] = {}


def register_scheme(cls):
    _SCHEMES[cls.name] = cls
    return cls


def scheme_for(name: str):
    if name not in _SCHEMES:
        from .. import baselines  # noqa: F401  registers the remaining schemes
        from . import sdpc_scheme  # noqa: F401
    return _SCHEMES[name]


register_scheme(Scheme)


def run(cfg: SimConfig, **kw) -> RunMetrics:
    return Simulator(cfg, **kw).run()
