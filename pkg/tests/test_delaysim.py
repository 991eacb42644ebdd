import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drlroute.delaysim import (
    RHO_STAR,
    batch_mean_delay,
    evaluate,
    evaluate_routing,
    link_delay,
    link_loads,
    reward,
    save_report,
)
from drlroute.routing import LinkWeights, random_weights, shortest_paths, uniform_weights
from drlroute.topology import generate_scale_free, make_topology
from drlroute.traffic import TrafficMatrix, gravity_tm

from .oracles import brute_force_mean_delay, random_connected_graph


def tm_from(n, entries):
    d = np.zeros((n, n))
    for (s, t), v in entries.items():
        d[s, t] = v
    return TrafficMatrix(d)


def test_link_delay_closed_form():
    assert link_delay(10.0, 5.0) == pytest.approx(0.2)
    assert link_delay(10.0, 0.0) == pytest.approx(0.1)
    # past the knee: 1/0.1 + (10 - 9.9) / 0.1**2 = 10 + 10
    assert link_delay(10.0, 10.0) == pytest.approx(20.0, rel=1e-9)


def test_link_delay_rejects_bad_capacity():
    with pytest.raises(ValueError):
        link_delay(0.0, 1.0)


def test_link_delay_smooth_at_knee():
    c, h = 10.0, 1e-6
    knee = RHO_STAR * c
    left = (link_delay(c, knee) - link_delay(c, knee - h)) / h
    right = (link_delay(c, knee + h) - link_delay(c, knee)) / h
    assert link_delay(c, knee + h) - link_delay(c, knee - h) == pytest.approx(2 * h / (c * (1 - RHO_STAR)) ** 2, rel=1e-3)
    assert left == pytest.approx(right, rel=1e-3)


@settings(max_examples=200, deadline=None)
@given(a=st.floats(0, 50), b=st.floats(0, 50))
def test_link_delay_increasing_and_finite(a, b):
    lo, hi = sorted((a, b))
    dl, dh = link_delay(10.0, lo), link_delay(10.0, hi)
    assert np.isfinite(dh)
    assert dh >= dl
    if hi - lo > 1e-9:
        assert dh > dl


def test_two_node_network():
    t = make_topology(2, [(0, 1)])
    tm = tm_from(2, {(0, 1): 5.0})
    rep = evaluate(t, tm, LinkWeights([0.5]))
    assert rep.loads.tolist() == [5.0, 0.0]
    assert rep.mean_delay == pytest.approx(0.2)
    assert reward(rep) == pytest.approx(-0.2)


def test_line_network():
    t = make_topology(3, [(0, 1), (1, 2)])
    tm = tm_from(3, {(0, 2): 4.0})
    rep = evaluate(t, tm, uniform_weights(2))
    assert rep.loads[t.edge_id(0, 1)] == 4.0
    assert rep.loads[t.edge_id(1, 2)] == 4.0
    assert rep.pair_delay[0, 2] == pytest.approx(1 / 3)
    assert rep.mean_delay == pytest.approx(1 / 3)


def test_triangle_all_pairs_each_edge_carries_one():
    t = make_topology(3, [(0, 1), (1, 2), (0, 2)])
    tm = tm_from(3, {(s, d): 1.0 for s in range(3) for d in range(3) if s != d})
    loads = link_loads(t, tm, shortest_paths(t, uniform_weights(3)))
    assert loads.tolist() == [1.0] * 6


def test_reward_orders_reports():
    t = make_topology(3, [(0, 1), (1, 2), (0, 2)])
    busy = tm_from(3, {(0, 2): 4.0})
    direct = evaluate(t, busy, uniform_weights(3))
    assert direct.mean_delay == pytest.approx(1 / 6)
    heavy = evaluate(t, busy.scaled(2.0), uniform_weights(3))
    assert heavy.mean_delay == pytest.approx(1 / 2)
    assert reward(direct) > reward(heavy)


def test_matches_brute_force_oracle():
    rng = random.Random(17)
    nrng = np.random.default_rng(17)
    for _ in range(60):
        n = rng.randint(2, 6)
        pairs = random_connected_graph(rng, n)
        caps = [rng.choice([5.0, 10.0, 20.0]) for _ in pairs]
        from drlroute.topology import PhysicalLink, Topology

        t = Topology(n, tuple(PhysicalLink(i, a, b, c) for i, ((a, b), c) in enumerate(zip(pairs, caps))))
        w = random_weights(len(pairs), nrng)
        tm = gravity_tm(n, rng.uniform(1, 40), nrng)
        got = evaluate(t, tm, w).mean_delay
        want = brute_force_mean_delay(n, pairs, caps, w.w.tolist(), tm.demand.tolist())
        assert got == pytest.approx(want, rel=1e-9)


@pytest.fixture(scope="module")
def topo():
    return generate_scale_free(14, 21, 10.0, 7)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), total=st.floats(5, 300), factor=st.floats(1.0, 3.0))
def test_scaling_traffic_never_reduces_delay(topo, seed, total, factor):
    tm = gravity_tm(topo, total, seed)
    w = random_weights(topo.num_links, seed)
    base = evaluate(topo, tm, w).mean_delay
    assert evaluate(topo, tm.scaled(factor), w).mean_delay >= base


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_load_conservation(topo, seed):
    tm = gravity_tm(topo, 100.0, seed)
    rc = shortest_paths(topo, random_weights(topo.num_links, seed))
    hops = sum(tm.demand[s, d] * (len(rc.path(s, d)) - 1) for s in range(14) for d in range(14) if s != d)
    assert link_loads(topo, tm, rc).sum() == pytest.approx(hops, rel=1e-12)


def test_batch_path_agrees_with_single(topo):
    rc = shortest_paths(topo, random_weights(topo.num_links, 1))
    tms = [gravity_tm(topo, total, k) for k, total in enumerate([20.0, 100.0, 250.0])]
    batch = batch_mean_delay(topo, np.array([tm.demand for tm in tms]), rc)
    single = [evaluate_routing(topo, tm, rc).mean_delay for tm in tms]
    assert batch == pytest.approx(single, rel=1e-12)


def test_hop_delay_shifts_by_mean_hops():
    t = make_topology(3, [(0, 1), (1, 2)])
    tm = tm_from(3, {(0, 2): 4.0})
    rc = shortest_paths(t, uniform_weights(2))
    assert evaluate_routing(t, tm, rc, hop_delay=0.5).mean_delay == pytest.approx(1 / 3 + 1.0)


def test_report_export(tmp_path, topo):
    rep = evaluate(topo, gravity_tm(topo, 50.0, 0), uniform_weights(topo.num_links))
    save_report(rep, tmp_path / "r.json")
    import json

    data = json.loads((tmp_path / "r.json").read_text())
    assert data["mean_delay"] == rep.mean_delay
    assert len(data["loads"]) == 42
