"""Request popularity and arrival processes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..crypto import InvalidArgument


@dataclass
class ZipfCatalog:
    """P(rank r) proportional to r**-alpha for ranks 1..n_items."""

    n_items: int
    alpha: float
    probabilities: np.ndarray
    cumulative: np.ndarray

    def p(self, rank: int) -> float:
        return float(self.probabilities[rank - 1])

    def sample(self, rng: np.random.Generator, size: int | None = None):
        """Inverse-CDF draw of 1-based ranks."""
        u = rng.random(size)
        idx = np.searchsorted(self.cumulative, u, side="right")
        idx = np.minimum(idx, self.n_items - 1)
        return idx + 1 if size is not None else int(idx) + 1


def zipf_catalog(n_items: int, alpha: float, seed: int | None = None) -> ZipfCatalog:
    # seed is accepted for interface symmetry; the distribution itself is exact
    if n_items < 1:
        raise InvalidArgument("n_items must be >= 1")
    if alpha < 0:
        raise InvalidArgument("alpha must be >= 0")
    weights = np.arange(1, n_items + 1, dtype=float) ** -alpha
    probs = weights / weights.sum()
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    return ZipfCatalog(n_items, alpha, probs, cum)


@dataclass(frozen=True)
class Request:
    time: float
    gateway: int
    slot: int
    rank: int


def poisson_times(rate: float, duration: float, rng: np.random.Generator) -> np.ndarray:
    """Arrival instants of a rate-``rate`` Poisson process on [0, duration)."""
    if rate <= 0:
        raise InvalidArgument("rate must be > 0")
    out = []
    t = 0.0
    # draw in blocks; expected count is rate * duration
    block = max(16, int(rate * duration * 1.2) + 16)
    while True:
        gaps = rng.exponential(1.0 / rate, block)
        times = t + np.cumsum(gaps)
        keep = times[times < duration]
        out.append(keep)
        if len(keep) < block:
            break
        t = float(times[-1])
    return np.concatenate(out) if out else np.empty(0)


def consumer_workload(
    gateways: list[int],
    lambda_req: float,
    catalog: ZipfCatalog,
    seed: int,
    duration: float,
    consumers_per_gateway: int = 1,
) -> list[Request]:
    """Merged, time-ordered request stream over all gateways.

    Each gateway gets its own child stream so adding a gateway does not
    perturb the others.
    """
    if lambda_req <= 0:
        raise InvalidArgument("lambda_req must be > 0")
    root = np.random.SeedSequence(seed)
    requests = []
    for gw, child in zip(gateways, root.spawn(len(gateways))):
        rng = np.random.default_rng(child)
        times = poisson_times(lambda_req, duration, rng)
        ranks = catalog.sample(rng, len(times))
        slots = rng.integers(0, consumers_per_gateway, len(times))
        requests += [Request(float(t), gw, int(s), int(r)) for t, r, s in zip(times, ranks, slots)]
    requests.sort(key=lambda q: (q.time, q.gateway))
    return requests


@dataclass(frozen=True)
class ChurnEvent:
    time: float
    gateway_index: int
    slot: int


def churn_events(
    rate: float,
    duration: float,
    n_gateways: int,
    consumers_per_gateway: int,
    seed: int,
) -> list[ChurnEvent]:
    """Leave/join events; each replaces one consumer slot.

    Times are unit-rate draws scaled by ``1/rate`` so that runs at
    different rates on one seed share the same event sequence.
    """
    if rate <= 0:
        return []
    rng = np.random.default_rng(seed)
    events = []
    t = 0.0
    while True:
        t += rng.exponential(1.0) / rate
        gi = int(rng.integers(n_gateways))
        slot = int(rng.integers(consumers_per_gateway))
        if t >= duration:
            break
        events.append(ChurnEvent(t, gi, slot))
    return events
