"""Protected-content distribution on the simulator.

Handshakes run the real protocol roles.  Their messages ride in Interest
and Data packets: requests travel as Interests (the first one carries the
consumer-unique first-interest name), replies as non-cacheable Data on the
reverse path, and one-way confirmations as PIT-less notification
Interests.  The PIT key of every control Interest includes the run id, so
protocol traffic is never aggregated.

Concurrent requests from one consumer to one publisher queue behind the
handshake in flight, so a consumer never holds two live tickets for the
same publisher.
"""

from __future__ import annotations

import random

from .. import crypto, naming, protocol
from .engine import CONTENT, CONTROL, FIRST, Data, Interest, Req, Scheme, register_scheme


@register_scheme
class SdpcScheme(Scheme):
    name = "sdpc"

    def setup(self) -> None:
        sim = self.sim
        cfg = sim.cfg
        self.knobs = set(cfg.scheme.weaken)
        self.no_auth = "no-auth" in self.knobs
        self.plain_names = "plain-names" in self.knobs
        self.plain_payloads = "plain-payloads" in self.knobs
        self.asym_cost = cfg.scheme.asym_op_cost
        self.deadline = cfg.scheme.ticket_deadline
        rng = sim.crypto_rng
        self.manager = protocol.Manager("M", crypto.PublisherKeyPair.generate(rng), random.Random(rng.getrandbits(64)))
        self.pubs: list[protocol.Publisher] = []
        self.pub_index: dict[str, int] = {}
        size = sim.segments * sim.segment_bytes
        items = cfg.catalog.items_per_publisher
        for p in range(sim.P):
            role = protocol.Publisher(
                f"P{p}", "/".join(sim.prefixes[p]), crypto.PublisherKeyPair.generate(rng),
                random.Random(rng.getrandbits(64)), manager_id="M",
                manager_public=self.manager.public, ticket_deadline=self.deadline,
            )
            role.weaken = frozenset(self.knobs)
            role.catalog = _catalog(items, size, sim.segment_bytes)
            self.pubs.append(role)
            self.pub_index[role.id] = p
            self.manager.add_publisher(role.id, role.public, role.prefix)
        self._indexed = [0] * sim.P
        self._consumer_rng = random.Random(rng.getrandbits(64))
        self.slots: dict[tuple[int, int], protocol.Consumer] = {}
        self.by_id: dict[str, protocol.Consumer] = {}
        self._generation = 0
        for gi in range(len(sim.gateways)):
            for slot in range(cfg.workload.consumers_per_gateway):
                self._new_consumer(gi, slot)
        self.queues: dict[tuple[str, int], list[Req]] = {}
        self.m1_keys: dict[tuple[int, str], object] = {}
        self.seg_names: dict[tuple[str, bytes], list[bytes]] = {}
        self.leaked: list[tuple[tuple[str, ...], naming.ObjectPath, crypto.KeyChain]] = []
        self.stalls = 0

    def _new_consumer(self, gi: int, slot: int) -> protocol.Consumer:
        self._generation += 1
        cid = f"c{gi}.{slot}.{self._generation}"
        c = protocol.Consumer(cid, crypto._randbytes(self._consumer_rng, 32), random.Random(self._consumer_rng.getrandbits(64)))
        self.manager.register(cid, c.n_s)
        self.slots[(gi, slot)] = c
        self.by_id[cid] = c
        return c

    def on_churn(self, gi: int, slot: int) -> None:
        old = self.slots[(gi, slot)]
        reg = self.manager.db.table.get(crypto.hash_bytes(old.n_s))
        if reg is not None:
            reg.profile = protocol.EXPIRED_PROFILE
        self._new_consumer(gi, slot)

    # -- consumer side --
    def _path(self, req: Req) -> naming.ObjectPath:
        _, obj, ver = self.object_parts(req.publisher, req.item)
        return naming.ObjectPath(obj, ver, 0)

    def _grant_key(self, req: Req) -> tuple[str, str]:
        return self.pubs[req.publisher].id, self._path(req).object_id

    def start_request(self, req: Req) -> None:
        if self.no_auth:
            self.issue_segments(req)
            return
        c = self.slots[(req.gi, req.slot)]
        req.consumer = c
        key = (c.id, req.publisher)
        queue = self.queues.setdefault(key, [])
        queue.append(req)
        if len(queue) == 1:
            self._advance(key)

    def _advance(self, key) -> None:
        queue = self.queues.get(key)
        while queue:
            req = queue[0]
            if req.data.get("handshake"):
                return
            if self._grant_key(req) in req.consumer.grants:
                queue.pop(0)
                self.issue_segments(req)
                continue
            self._handshake(req)
            return
        self.queues.pop(key, None)

    def _handshake(self, req: Req) -> None:
        sim = self.sim
        c = req.consumer
        role = self.pubs[req.publisher]
        path = self._path(req)
        if role.id in c.tickets:
            msg = c.start_apsub(role.id, role.prefix, role.public, path, sim.now)
        else:
            msg = c.start_subp(role.id, role.prefix, role.public, path, sim.now)
        req.data["handshake"] = msg.run_id
        name = msg.name
        if self.plain_names:
            name = self.plain_segment_name(req.publisher, req.item, 0)
        it = Interest((name, msg.run_id), name, sim.pub_node(req.publisher), sim.control_bytes, FIRST, msg=msg)
        sim.issue(req.gateway, it, ("ctl", req))

    def on_app_data(self, gw: int, waiter, d: Data) -> None:
        sim = self.sim
        req = waiter[1]
        c = req.consumer
        out = c.handle(d.msg, sim.now)
        if out is None:
            self.stalls += 1
            return
        sim.issue(gw, self._notify(out, sim.pub_node(req.publisher)), None)
        req.data["handshake"] = None
        if "leak-keymsg" in self.knobs:
            self.leaked.append((self.pubs[req.publisher].prefix, self._path(req), c.grants[self._grant_key(req)].chain))
        self._advance((c.id, req.publisher))

    def segment_name(self, req: Req, seg: int) -> bytes:
        if self.no_auth or self.plain_names:
            return self.plain_segment_name(req.publisher, req.item, seg)
        grant = req.consumer.grants[self._grant_key(req)]
        names = self.seg_names.get((req.publisher, grant.key_msg))
        if names is None:
            prefix = self.pubs[req.publisher].prefix
            path = self._path(req)
            names = [b""] + [
                naming.segment_name(prefix, grant.key_msg, grant.chain, path, s).encode()
                for s in range(1, grant.chain.length + 1)
            ]
            self.seg_names[(req.publisher, grant.key_msg)] = names
        return names[seg]

    def _notify(self, msg: protocol.Message, dest: int) -> Interest:
        return Interest(None, b"", dest, self.sim.control_bytes, CONTROL, notify=True, msg=msg)

    # -- publisher side --
    def _index_new(self, p: int) -> None:
        role = self.pubs[p]
        done = self._indexed[p]
        if len(role.objects) == done:
            return
        self._indexed[p] = len(role.objects)
        # objects are only ever added, and dicts keep insertion order
        for po in list(role.objects.values())[done:]:
            item = int(po.path.object[3:8])
            for seg in range(1, po.chain.length + 1):
                name = naming.segment_name(role.prefix, po.chain.key_msg, po.chain, po.path, seg).encode()
                self.sim.name_index[name] = (p, item, seg, po)

    def serve(self, pub: int, it: Interest) -> Data | None:
        sim = self.sim
        hit = sim.name_index.get(it.name)
        if hit is None or hit[0] != pub:
            return None
        if len(hit) == 3:
            # plain name: only reachable with plain naming knobs
            if not (self.no_auth or self.plain_names):
                return None
            _, item, seg = hit
            self.pubs[pub].segment_work += 1
            payload = None
            if sim.materialize_payloads:
                payload = self.plaintext(pub, item, seg) if (self.no_auth or self.plain_payloads) else self._sealed(pub, item, seg)
            return Data(it.key, it.name, sim.segment_bytes, 0, True, payload=payload)
        _, item, seg, po = hit
        self.pubs[pub].segment_work += 1
        payload = None
        if sim.materialize_payloads:
            payload = po.plaintext(seg) if self.plain_payloads else po.ciphertext(seg, self.pubs[pub].rng)
        return Data(it.key, it.name, sim.segment_bytes, 0, True, payload=payload)

    def _sealed(self, pub: int, item: int, seg: int) -> bytes:
        role = self.pubs[pub]
        _, obj, ver = self.object_parts(pub, item)
        po = role.lookup_object(f"{obj}/_v{ver}")
        self._index_new(pub)
        return po.ciphertext(seg, role.rng)

    def at_publisher_control(self, p: int, pkt, face: int) -> None:
        sim = self.sim
        role = self.pubs[p]
        node = sim.pub_node(p)
        ops = role.asym_ops
        out = role.handle(pkt.msg, sim.now)
        delay = sim.cpu(node, (role.asym_ops - ops) * self.asym_cost) - sim.now
        self._index_new(p)
        if out is None:
            return
        if out.step == "m2":
            self.m1_keys[(p, out.run_id)] = pkt.key
            it = Interest(("m2", out.run_id), b"", sim.mgr, sim.control_bytes, CONTROL, msg=out)
            sim.send(node, face, it, it.size, delay)
        elif out.step in ("m4", "a2"):
            key = self.m1_keys.pop((p, out.run_id)) if out.step == "m4" else pkt.key
            d = Data(key, None, sim.control_bytes, cacheable=False, msg=out, kind=CONTROL)
            sim.send(node, face, d, d.size, delay)
            sim.call_at(sim.now + delay + self.deadline, self._expire, p, out.run_id)
        elif out.step in ("m5", "stolen"):
            sim.send(node, face, self._notify(out, sim.mgr), sim.control_bytes, delay)

    def _expire(self, p: int, run_id: str) -> None:
        sim = self.sim
        report = self.pubs[p].expire_run(run_id, sim.now)
        if report is not None:
            node = sim.pub_node(p)
            sim.send(node, sim.topo.attach_router(node), self._notify(report, sim.mgr), sim.control_bytes)

    def at_manager(self, pkt, face: int) -> None:
        sim = self.sim
        ops = self.manager.asym_ops
        out = self.manager.handle(pkt.msg, sim.now)
        delay = sim.cpu(sim.mgr, (self.manager.asym_ops - ops) * self.asym_cost) - sim.now
        if out is None:
            return
        if out.step == "m3":
            d = Data(pkt.key, None, sim.control_bytes, cacheable=False, msg=out, kind=CONTROL)
            sim.send(sim.mgr, face, d, d.size, delay)
        elif out.step == "stolen-notice":
            dest = sim.pub_node(self.pub_index[out.receiver])
            sim.send(sim.mgr, face, self._notify(out, dest), sim.control_bytes, delay)

    def rejects(self) -> int:
        roles = [self.manager, *self.pubs, *self.by_id.values()]
        return sum(sum(r.rejects.values()) for r in roles)

    def extra_metrics(self) -> dict:
        return {
            "grants_sent": sum(p.grants_sent for p in self.pubs),
            "segment_work": sum(p.segment_work for p in self.pubs),
            "manager_lookups": self.manager.db.lookups,
            "manager_decrypt_attempts": self.manager.decrypt_attempts,
            "manager_failed_decrypts": self.manager.failed_decrypts,
            "manager_confirmed": self.manager.confirmed,
            "stolen_tickets": sum(len(p.stolen) for p in self.pubs),
            "handshake_stalls": self.stalls,
            "publisher_unknown": self.sim.m_publisher_unknown,
        }


def _catalog(items: int, size: int, segment_bytes: int):
    def lookup(object_id: str):
        obj, _, version = object_id.rpartition("/_v")
        if version != "1" or not (obj.startswith("obj") and obj.endswith(".doc")):
            return None
        try:
            item = int(obj[3:-4])
        except ValueError:
            return None
        if not 0 <= item < items:
            return None
        return size, segment_bytes, 0

    return lookup
