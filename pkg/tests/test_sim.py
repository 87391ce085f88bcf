import gzip

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import small_config
from sdpc.naming import plain_name
from sdpc.sim.engine import CONTENT, Data, Interest, Simulator, run, scheme_for
from sdpc.sim.workload import Request

SCHEMES = ["sdpc", "ndn-plain", "ndn-e2e", "ndn-groupkey", "mcac", "eu-re"]


def _conserved(m):
    fates = m.content_cache_hits + m.pit_aggregated + m.content_at_publisher + m.drops
    return m.in_flight >= 0 and fates + m.in_flight == m.content_interests and m.delivered <= m.content_interests


@pytest.mark.parametrize("scheme", SCHEMES)
def test_conservation_and_completion(scheme):
    m = run(small_config(**{"scheme.name": scheme, "scheme.churn_case": 1 if scheme == "ndn-groupkey" else 0}))
    assert _conserved(m)
    assert not m.partial and m.completed == m.requests > 0
    assert m.in_flight == 0 and m.drops == 0
    assert m.delivered == m.content_interests
    assert m.epoch_violations == 0


def test_first_interest_never_hits_cache():
    m = run(small_config(**{"cache.size_fraction": 0.2}))
    assert m.first_interest_lookups > 0
    assert m.first_interest_hits == 0
    assert m.content_cache_hits > 0


def test_runs_are_byte_identical():
    cfg = small_config()
    a, b = run(cfg), run(cfg)
    assert a.to_csv() == b.to_csv()
    assert a.routers_csv() == b.routers_csv()
    c = run(cfg.replace(seed=2))
    assert c.to_csv() != a.to_csv()


def test_cache_capacity_respected():
    m = run(small_config(**{"cache.size_fraction": 0.01}))
    assert all(r.max_used <= r.capacity for r in m.routers)
    assert any(r.evictions for r in m.routers)


def _two_requests(scheme, cache=0.0, gap=0.0):
    cfg = small_config(**{"scheme.name": scheme, "cache.size_fraction": cache})
    sim = Simulator(cfg)
    gw = sim.gateways[0]
    sim.workload = [Request(0.0, gw, 0, 1), Request(gap, gw, 1, 1)]
    return sim.run(), sim


@pytest.mark.parametrize("scheme", ["ndn-plain", "sdpc"])
def test_pit_aggregation(scheme):
    m, sim = _two_requests(scheme)
    assert m.completed == 2
    assert m.content_interests == 2 * sim.segments
    assert m.pit_aggregated == sim.segments
    assert m.content_at_publisher == sim.segments


def test_e2e_names_do_not_aggregate():
    m, sim = _two_requests("ndn-e2e")
    assert m.pit_aggregated == 0
    assert m.content_at_publisher == 2 * sim.segments


def test_warm_cache_serves_locally():
    m, sim = _two_requests("ndn-plain", cache=0.05, gap=5.0)
    assert m.content_at_publisher == sim.segments
    assert m.content_cache_hits == sim.segments
    assert m.publisher_load == pytest.approx(50.0)


def test_transmission_delay_per_hop():
    cfg = small_config(**{"catalog.segment_bytes": 100_000_000})
    sim = Simulator(cfg)
    u, v = 0, sim.topo.adjacency[0][0]
    d = Data("k", b"n", 100_000_000)
    sim.send(u, v, d, d.size)
    t, *_ = sim.heap[0]
    assert t == pytest.approx(0.8 + cfg.topology.propagation_delay)
    # a second packet on the same direction queues behind the first
    sim.send(u, v, d, d.size)
    assert max(e[0] for e in sim.heap) == pytest.approx(1.6 + cfg.topology.propagation_delay)
    # the reverse direction is independent
    sim.send(v, u, d, d.size)
    assert sorted(e[0] for e in sim.heap)[1] == pytest.approx(0.8 + cfg.topology.propagation_delay)


def test_idle_network_has_no_timeouts():
    cfg = small_config(**{
        "workload.lambda_per_gateway": 0.001, "workload.duration": 3000.0, "workload.horizon": 4000.0,
        "workload.consumers_per_gateway": 1, "topology.n_gateways": 1,
    })
    m = run(cfg)
    assert m.requests >= 1
    assert m.timeouts == 0 and m.timeout_ratio == 0.0


def test_congestion_produces_timeouts():
    cfg = small_config(**{"catalog.segment_bytes": 20_000_000, "workload.lambda_per_gateway": 5.0,
                          "scheme.name": "ndn-e2e"})
    m = run(cfg)
    assert m.timeouts > 0 and m.failures <= m.timeouts


def test_horizon_flags_partial():
    m = run(small_config(**{"workload.duration": 0.5, "workload.horizon": 0.5}))
    assert m.partial and m.completed < m.requests
    assert _conserved(m)


def test_unknown_prefix_is_dropped():
    sim = Simulator(small_config(**{"workload.duration": 0.01}))
    name = plain_name("nowhere.example/content", "x").encode()
    sim.inject(0.0, sim.gateways[0], Interest(("adv", 0), name, None, 1000, CONTENT))
    sim.inject(0.0, sim.gateways[0], Interest(("adv", 1), b"\x08\xff", None, 1000, CONTENT))
    sim.run()
    assert sim.m_no_route == 1 and sim.m_malformed == 1


def test_trace_written_gzipped(tmp_path):
    sim = Simulator(small_config(**{"workload.duration": 0.2}), trace=True)
    sim.run()
    path = tmp_path / "trace.csv.gz"
    sim.write_trace(path)
    with gzip.open(path, "rt") as fh:
        lines = fh.read().splitlines()
    assert lines[0] == "time,src,dst,packet,kind,bytes"
    assert len(lines) > 10


def test_scheme_registry():
    for name in SCHEMES:
        assert scheme_for(name).name == name
    with pytest.raises(KeyError):
        scheme_for("nope")


@settings(max_examples=6, deadline=None)
@given(seed=st.integers(1, 10_000), scheme=st.sampled_from(SCHEMES), frac=st.sampled_from([0.0, 0.01, 0.1]))
def test_conservation_property(seed, scheme, frac):
    cfg = small_config(**{"scheme.name": scheme, "cache.size_fraction": frac, "workload.duration": 0.5})
    m = run(cfg.replace(seed=seed))
    assert _conserved(m)
    if scheme == "sdpc":
        assert m.first_interest_hits == 0
