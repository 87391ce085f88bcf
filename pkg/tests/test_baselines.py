import pytest

from conftest import small_config
from sdpc import baselines
from sdpc.sim.engine import CONTROL, Simulator, run
from sdpc.sim.workload import Request


def _guard_inserts(sim, check):
    """Wrap every content store so ``check(router, data)`` runs on each insert."""
    for r, cs in enumerate(sim.cs):
        orig = cs.insert

        def insert(key, size, epoch=0, payload=None, _orig=orig, _r=r):
            check(_r, payload)
            return _orig(key, size, epoch, payload)

        cs.insert = insert


def test_e2e_has_no_cross_consumer_hits():
    m = baselines.scenario1_e2e(small_config(**{"cache.size_fraction": 0.3}))
    assert m.extra["cross_consumer_hits"] == 0
    assert not m.partial


def test_e2e_self_hit_allowed():
    cfg = small_config(**{"scheme.name": "ndn-e2e", "cache.size_fraction": 0.05})
    sim = Simulator(cfg)
    gw = sim.gateways[0]
    sim.workload = [Request(0.0, gw, 0, 1), Request(5.0, gw, 0, 1), Request(10.0, gw, 1, 1)]
    m = sim.run()
    # the repeat is served from cache, the other consumer is not
    assert m.content_cache_hits == sim.segments
    assert m.content_at_publisher == 2 * sim.segments


def test_groupkey_epoch_per_event():
    m = baselines.scenario2_groupkey(small_config(), churn_case=2)
    assert m.churn_events > 0
    assert m.extra["epoch"] == m.extra["rekeys"] == m.churn_events
    assert m.epoch_violations == 0


def test_groupkey_without_churn_is_plain_sharing():
    cfg = small_config(**{"cache.size_fraction": 0.05})
    g = baselines.scenario2_groupkey(cfg, churn_rate=0.0)
    p = run(cfg.replace(**{"scheme.name": "ndn-plain"}))
    assert g.extra["epoch"] == 0
    assert g.content_at_publisher == p.content_at_publisher
    assert g.avg_download_time == p.avg_download_time


def test_groupkey_stale_copies_not_served_to_new_members():
    cfg = small_config(**{"scheme.name": "ndn-groupkey", "cache.size_fraction": 0.05})
    sim = Simulator(cfg)
    gw = sim.gateways[0]
    sim.workload = [Request(0.0, gw, 0, 1), Request(5.0, gw, 1, 1)]
    sim.churn = []
    sim.call_at(2.0, sim.scheme.on_churn, 0, 1)  # slot 1 joins after the first fetch
    m = sim.run()
    assert m.content_at_publisher == 2 * sim.segments
    assert m.epoch_violations == 0


@pytest.mark.parametrize("h", [0.0, 0.5, 1.0])
def test_mcac_h_content_never_cached(h):
    cfg = small_config(**{"scheme.name": "mcac", "scheme.h_fraction": h, "cache.size_fraction": 0.2})
    sim = Simulator(cfg)
    seen = []

    def check(router, data):
        assert data.label != "h"
        seen.append(data.label)

    _guard_inserts(sim, check)
    m = sim.run()
    if h == 1.0:
        assert m.publisher_load == 100.0
        assert not seen
    else:
        assert seen
    assert not m.partial


def test_mcac_labels_follow_fraction():
    sim = Simulator(small_config(**{"scheme.name": "mcac", "scheme.h_fraction": 0.2}))
    frac = (sim.scheme.labels == "h").mean()
    assert frac == pytest.approx(0.2, abs=0.04)


def test_mcac_n_content_cached_at_first_hop_only():
    cfg = small_config(**{"scheme.name": "mcac", "scheme.h_fraction": 0.0, "scheme.n_fraction": 1.0,
                          "cache.size_fraction": 0.2})
    sim = Simulator(cfg)
    routers = []
    _guard_inserts(sim, lambda r, d: routers.append(r))
    sim.run()
    assert routers and set(routers) <= set(sim.gateways)


def test_mcac_charges_tcb_delay():
    base = small_config(**{"scheme.name": "mcac", "scheme.h_fraction": 1.0})
    fast = run(base.replace(**{"scheme.tcb_delay": 0.0}))
    slow = run(base.replace(**{"scheme.tcb_delay": 5e-3}))
    assert slow.avg_download_time > fast.avg_download_time


def test_eu_re_key_requests_not_cached():
    cfg = small_config(**{"scheme.name": "eu-re", "cache.size_fraction": 0.2})
    sim = Simulator(cfg)
    _guard_inserts(sim, lambda r, d: pytest.fail("control data cached") if d.kind == CONTROL else None)
    m = sim.run()
    pairs = {(r.consumer, r.publisher, r.item) for r in sim.requests}
    assert m.extra["key_requests"] == len(pairs)
    assert m.extra["reencryptions"] == m.requests
    assert m.content_cache_hits > 0


def test_eu_re_second_consumer_pays_key_request_then_hits():
    cfg = small_config(**{"scheme.name": "eu-re", "cache.size_fraction": 0.05})
    sim = Simulator(cfg)
    gw = sim.gateways[0]
    sim.workload = [Request(0.0, gw, 0, 1), Request(5.0, gw, 1, 1)]
    m = sim.run()
    assert m.extra["key_requests"] == 2
    assert m.content_cache_hits == sim.segments


def test_schemes_share_workload():
    cfg = small_config()
    streams = {s: Simulator(cfg.replace(**{"scheme.name": s})).workload for s in ("sdpc", "ndn-e2e", "mcac", "eu-re")}
    first = streams.pop("sdpc")
    assert all(w == first for w in streams.values())


def test_mcac_helper_override():
    m = baselines.mcac(small_config(), h_fraction=1.0)
    assert m.publisher_load == 100.0
    assert baselines.eu_re(small_config()).scheme == "eu-re"
