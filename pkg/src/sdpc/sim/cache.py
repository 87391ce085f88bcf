"""Content Store replacement policies.

All stores share one interface: ``lookup(key, min_epoch)`` returns the
cached :class:`Entry` or ``None`` and updates recency/frequency on a hit;
``insert(key, size, epoch, payload)`` admits an entry and evicts as needed.
Stored bytes never exceed ``capacity``; entries larger than the capacity
pass through uncached.

LFRU keeps two partitions.  New entries land in the unprivileged
partition, which evicts the least frequently used entry (ties go to the
oldest).  Frequencies count hits during the current residency, so an
evicted entry starts over: that residency is the frequency window.  A hit
on an unprivileged entry promotes it to the privileged LRU partition;
privileged overflow demotes the LRU entry back to the unprivileged side.
"""

from __future__ import annotations

import heapq
from collections import OrderedDict


class Entry:
    __slots__ = ("key", "size", "epoch", "freq", "stamp", "privileged", "payload")

    def __init__(self, key, size, epoch, stamp, payload=None):
        self.key = key
        self.size = size
        self.epoch = epoch
        self.freq = 1
        self.stamp = stamp
        self.privileged = False
        self.payload = payload


class ContentStore:
    policy = "base"

    def __init__(self, capacity: int):
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity = int(capacity)
        self.used = 0
        self.entries: dict = {}
        self.evictions = 0
        self._clock = 0

    def __len__(self):
        return len(self.entries)

    def __contains__(self, key):
        return key in self.entries

    def peek(self, key):
        return self.entries.get(key)

    def keys(self):
        return self.entries.keys()

    def _tick(self) -> int:
        self._clock += 1
        return self._clock

    def lookup(self, key, min_epoch: int = 0):
        e = self.entries.get(key)
        if e is None or e.epoch < min_epoch:
            return None
        e.freq += 1
        self._touch(e)
        return e

    def insert(self, key, size: int, epoch: int = 0, payload=None) -> bool:
        if size > self.capacity:
            return False
        e = self.entries.get(key)
        if e is not None:
            if epoch > e.epoch:
                e.epoch = epoch
                e.payload = payload
            return True
        while self.used + size > self.capacity:
            self._evict_one()
        e = Entry(key, size, epoch, self._tick(), payload)
        self.entries[key] = e
        self.used += size
        self._admit(e)
        return True

    def _remove(self, e: Entry) -> None:
        del self.entries[e.key]
        self.used -= e.size
        self.evictions += 1

    # policy hooks
    def _touch(self, e: Entry) -> None:
        raise NotImplementedError

    def _admit(self, e: Entry) -> None:
        raise NotImplementedError

    def _evict_one(self) -> None:
        raise NotImplementedError


class LRUStore(ContentStore):
    policy = "lru"

    def __init__(self, capacity: int):
        super().__init__(capacity)
        self._order: OrderedDict = OrderedDict()

    def _touch(self, e):
        self._order.move_to_end(e.key)

    def _admit(self, e):
        self._order[e.key] = None

    def _evict_one(self):
        key, _ = self._order.popitem(last=False)
        self._remove(self.entries[key])


class _LfuHeap:
    """Min-heap on (freq, stamp) with lazy invalidation."""

    def __init__(self):
        self.heap: list = []
        self.live: dict = {}

    def push(self, e: Entry) -> None:
        token = (e.freq, e.stamp)
        self.live[e.key] = token
        heapq.heappush(self.heap, (e.freq, e.stamp, e.key))

    def discard(self, key) -> None:
        self.live.pop(key, None)

    def pop(self):
        while self.heap:
            freq, stamp, key = heapq.heappop(self.heap)
            if self.live.get(key) == (freq, stamp):
                del self.live[key]
                return key
        return None

    def __len__(self):
        return len(self.live)


class LFUStore(ContentStore):
    policy = "lfu"

    def __init__(self, capacity: int):
        super().__init__(capacity)
        self._heap = _LfuHeap()

    def _touch(self, e):
        self._heap.push(e)

    def _admit(self, e):
        self._heap.push(e)

    def _evict_one(self):
        self._remove(self.entries[self._heap.pop()])


class LFRUStore(ContentStore):
    policy = "lfru"

    def __init__(self, capacity: int, privileged_fraction: float = 0.5):
        super().__init__(capacity)
        self.privileged_capacity = int(capacity * privileged_fraction)
        self.privileged: OrderedDict = OrderedDict()
        self.privileged_used = 0
        self._unpriv = _LfuHeap()

    def _touch(self, e):
        if e.privileged:
            self.privileged.move_to_end(e.key)
            return
        # repeat hit: promote
        self._unpriv.discard(e.key)
        e.privileged = True
        self.privileged[e.key] = None
        self.privileged_used += e.size
        while self.privileged_used > self.privileged_capacity and self.privileged:
            key, _ = self.privileged.popitem(last=False)
            old = self.entries[key]
            old.privileged = False
            self.privileged_used -= old.size
            self._unpriv.push(old)

    def _admit(self, e):
        self._unpriv.push(e)

    def _evict_one(self):
        key = self._unpriv.pop()
        if key is None:
            key, _ = self.privileged.popitem(last=False)
            self.privileged_used -= self.entries[key].size
        self._remove(self.entries[key])

    def unprivileged_keys(self) -> list:
        return [k for k in self.entries if not self.entries[k].privileged]


def make_store(policy: str, capacity: int, privileged_fraction: float = 0.5) -> ContentStore:
    if policy == "lfru":
        return LFRUStore(capacity, privileged_fraction)
    if policy == "lru":
        return LRUStore(capacity)
    if policy == "lfu":
        return LFUStore(capacity)
    raise ValueError(f"unknown cache policy {policy!r}")
