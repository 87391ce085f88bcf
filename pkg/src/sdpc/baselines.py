"""Comparison schemes, modelled at the caching and message level.

* ``ndn-e2e``: per-consumer encryption.  Data names carry the consumer id,
  so a cached copy can only ever satisfy the consumer that fetched it.
* ``ndn-groupkey``: one shared key per epoch.  Every leave/join rekeys
  (one multicast of a control-sized packet from each publisher to every
  gateway).  A consumer holds the keys from its join epoch onward, so a
  cached segment is usable only when its epoch is at least that.
* ``mcac``: per-object labels.  ``h`` is never cached and never
  aggregated, ``n`` is cached only at the first-hop router, ``d`` is
  cached anywhere.  Routers pay a trusted-computing-base delay per ``h``
  or ``n`` packet.
* ``eu-re``: shared names, one publisher key request per consumer and
  object (an asymmetric operation on the publisher CPU), and one
  asymmetric re-encryption per request on the gateway CPU.  Revocation
  bumps the publisher's content epoch, so copies cached before it stop
  matching.
"""

from __future__ import annotations

import numpy as np

from .config import SimConfig
from .sim.engine import (
    APP,
    CONTROL,
    Data,
    Interest,
    Req,
    RunMetrics,
    Scheme,
    Simulator,
    register_scheme,
)


class _Consumers:
    """Consumer ids per (gateway index, slot); churn starts a new generation."""

    def __init__(self):
        self.gen: dict[tuple[int, int], int] = {}

    def id(self, gi: int, slot: int) -> str:
        return f"c{gi}.{slot}.{self.gen.get((gi, slot), 0)}"

    def replace(self, gi: int, slot: int) -> None:
        self.gen[(gi, slot)] = self.gen.get((gi, slot), 0) + 1


@register_scheme
class E2EScheme(Scheme):
    name = "ndn-e2e"

    def setup(self) -> None:
        self.consumers = _Consumers()
        self.cross_consumer_hits = 0

    def segment_name(self, req: Req, seg: int) -> bytes:
        req.consumer = self.consumers.id(req.gi, req.slot)
        return self.plain_segment_name(req.publisher, req.item, seg, "~" + req.consumer)

    def on_segment(self, req: Req, seg: int, data: Data) -> None:
        if not data.name.endswith(("~" + req.consumer).encode()):
            self.cross_consumer_hits += 1

    def on_churn(self, gi: int, slot: int) -> None:
        self.consumers.replace(gi, slot)

    def extra_metrics(self) -> dict:
        return {"cross_consumer_hits": self.cross_consumer_hits}


@register_scheme
class GroupKeyScheme(Scheme):
    name = "ndn-groupkey"

    def setup(self) -> None:
        sim = self.sim
        self.epoch = 0
        self.join_epoch: dict[tuple[int, int], int] = {}
        self.rekeys = 0
        self.trees = [sim.topo.multicast_tree(sim.pub_node(p), sim.gateways) for p in range(sim.P)]

    def min_epoch(self, req: Req) -> int:
        ring = self.join_epoch.get((req.gi, req.slot), 0)
        req.data["ring_from"] = ring
        return ring

    def pit_key(self, req: Req, seg: int, name: bytes):
        return (name, req.data["ring_from"])

    def data_epoch(self, pub: int) -> int:
        return self.epoch

    def on_segment(self, req: Req, seg: int, data: Data) -> None:
        if data.epoch < req.data["ring_from"]:
            self.sim.m_epoch_violations += 1

    def on_churn(self, gi: int, slot: int) -> None:
        self.epoch += 1
        self.rekeys += 1
        self.join_epoch[(gi, slot)] = self.epoch
        size = self.sim.control_bytes
        for tree in self.trees:
            for u, v in tree:
                self.sim.occupy(u, v, size)

    def extra_metrics(self) -> dict:
        return {"epoch": self.epoch, "rekeys": self.rekeys}


@register_scheme
class McacScheme(Scheme):
    name = "mcac"

    def setup(self) -> None:
        sim = self.sim
        s = sim.cfg.scheme
        items = sim.cfg.catalog.items_per_publisher
        # one uniform draw per object; thresholds nest as h_fraction grows
        u = sim.label_rng.random((sim.P, items))
        self.labels = np.where(u < s.h_fraction, "h", np.where(u < s.h_fraction + s.n_fraction, "n", "d"))
        self.tcb = s.tcb_delay

    def label(self, req: Req) -> str:
        return str(self.labels[req.publisher, req.item])

    def pit_key(self, req: Req, seg: int, name: bytes):
        if self.labels[req.publisher, req.item] == "h":
            return (name, req.id)
        return name

    def serve(self, pub: int, it: Interest) -> Data | None:
        d = super().serve(pub, it)
        if d is not None:
            d.label = it.label
            d.cacheable = it.label != "h"
        return d

    def admit(self, router: int, data: Data, pit_entry: list) -> bool:
        if data.label == "h":
            return False
        if data.label == "n":
            return any(face == APP for face, _ in pit_entry)
        return data.cacheable

    def proc_delay(self, router: int, pkt) -> float:
        return self.tcb if pkt.label in ("h", "n") else 0.0

    def extra_metrics(self) -> dict:
        counts = {k: int((self.labels == k).sum()) for k in ("h", "n", "d")}
        return {f"objects_{k}": v for k, v in counts.items()}


@register_scheme
class EuReScheme(Scheme):
    name = "eu-re"

    def setup(self) -> None:
        sim = self.sim
        self.consumers = _Consumers()
        self.keys: set[tuple[str, int, int]] = set()
        self.content_epoch = [0] * sim.P
        self.asym_cost = sim.cfg.scheme.asym_op_cost
        self.key_requests = 0
        self.reencryptions = 0

    def start_request(self, req: Req) -> None:
        sim = self.sim
        req.consumer = self.consumers.id(req.gi, req.slot)
        if (req.consumer, req.publisher, req.item) in self.keys:
            self.issue_segments(req)
            return
        self.key_requests += 1
        it = Interest(("keyreq", req.id), b"", sim.pub_node(req.publisher), sim.control_bytes, CONTROL,
                      msg=("keyreq", req.consumer, req.item))
        sim.issue(req.gateway, it, ("ctl", req))

    def at_publisher_control(self, pub: int, pkt, face: int) -> None:
        sim = self.sim
        node = sim.pub_node(pub)
        delay = sim.cpu(node, self.asym_cost) - sim.now
        d = Data(pkt.key, None, sim.control_bytes, cacheable=False, msg=pkt.msg, kind=CONTROL)
        sim.send(node, face, d, d.size, delay)

    def on_app_data(self, gw: int, waiter, d: Data) -> None:
        req = waiter[1]
        self.keys.add((req.consumer, req.publisher, req.item))
        self.issue_segments(req)

    def min_epoch(self, req: Req) -> int:
        e = self.content_epoch[req.publisher]
        req.data["epoch"] = e
        return e

    def pit_key(self, req: Req, seg: int, name: bytes):
        return (name, req.data["epoch"])

    def data_epoch(self, pub: int) -> int:
        return self.content_epoch[pub]

    def finish_delay(self, req: Req) -> float:
        self.reencryptions += 1
        return self.sim.cpu(req.gateway, self.asym_cost) - self.sim.now

    def on_churn(self, gi: int, slot: int) -> None:
        self.consumers.replace(gi, slot)
        for p in range(self.sim.P):
            self.content_epoch[p] += 1

    def extra_metrics(self) -> dict:
        return {"key_requests": self.key_requests, "reencryptions": self.reencryptions}


def _run(cfg: SimConfig, scheme: str, **overrides) -> RunMetrics:
    cfg = cfg.replace(**{"scheme.name": scheme, **{k.replace("__", "."): v for k, v in overrides.items()}})
    return Simulator(cfg).run()


def scenario1_e2e(cfg: SimConfig) -> RunMetrics:
    return _run(cfg, "ndn-e2e")


def scenario2_groupkey(cfg: SimConfig, churn_rate: float | None = None, churn_case: int | None = None) -> RunMetrics:
    over = {}
    if churn_case is not None:
        over["scheme.churn_case"] = churn_case
    elif churn_rate is not None:
        over.update({"scheme.churn_case": 0, "workload.churn_rate": float(churn_rate)})
    return _run(cfg, "ndn-groupkey", **over)


def mcac(cfg: SimConfig, h_fraction: float | None = None) -> RunMetrics:
    over = {} if h_fraction is None else {"scheme.h_fraction": float(h_fraction)}
    return _run(cfg, "mcac", **over)


def eu_re(cfg: SimConfig) -> RunMetrics:
    return _run(cfg, "eu-re")
