import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drlroute.topology import (
    PhysicalLink,
    Topology,
    TopologyError,
    generate_scale_free,
    load_topology,
    make_topology,
    save_topology,
    total_capacity,
    validate,
)


def test_fourteen_node_topology():
    t = generate_scale_free(14, 21, 10.0, seed=7)
    assert t.n == 14
    assert t.num_links == 21
    assert t.average_degree() == 3.0
    assert validate(t).ok
    assert all(link.capacity == 10.0 for link in t.links)


@pytest.mark.parametrize("seed", range(5))
def test_three_nodes_two_links_is_a_tree(seed):
    t = generate_scale_free(3, 2, 1.0, seed)
    assert validate(t).ok
    assert t.degrees().sum() == 4
    assert sorted(t.degrees()) == [1, 1, 2]


def test_hubs_present_in_most_seeds():
    skewed = 0
    for seed in range(100):
        deg = generate_scale_free(14, 21, 10.0, seed).degrees()
        assert deg.max() >= math.ceil(2 * 21 / 14)
        skewed += deg.max() > deg.mean()
    assert skewed >= 95


@pytest.mark.parametrize("n,links", [(3, 1), (3, 4), (2, 1), (14, 92)])
def test_infeasible_sizes_rejected(n, links):
    with pytest.raises(TopologyError):
        generate_scale_free(n, links, 10.0, 0)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(3, 25), data=st.data(), seed=st.integers(0, 2**32 - 1))
def test_generator_hits_exact_link_count(n, data, seed):
    links = data.draw(st.integers(n - 1, n * (n - 1) // 2))
    t = generate_scale_free(n, links, 2.5, seed)
    report = validate(t)
    assert report.ok, report.messages
    assert t.num_links == links


def test_generation_is_deterministic():
    a = generate_scale_free(14, 21, 10.0, 3)
    b = generate_scale_free(14, 21, 10.0, 3)
    assert a == b
    assert a != generate_scale_free(14, 21, 10.0, 4)


@pytest.mark.parametrize("caps,expected", [([10.0] * 21, 210.0), ([5.0], 5.0), ([3.0, 4.0, 5.0], 12.0)])
def test_total_capacity(caps, expected):
    n = len(caps) + 1
    links = tuple(PhysicalLink(i, i, i + 1, c) for i, c in enumerate(caps))
    assert total_capacity(Topology(n, links)) == expected


def test_validate_flags_disconnected_and_duplicates():
    triangles = make_topology(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])
    report = validate(triangles)
    assert not report.checks["connected"]
    assert report.checks["no_duplicate_links"]

    dup = make_topology(3, [(0, 1), (1, 2), (1, 0)])
    report = validate(dup)
    assert not report.checks["no_duplicate_links"]
    assert report.checks["connected"]

    loop = make_topology(3, [(0, 1), (1, 2), (2, 2)])
    assert not validate(loop).checks["no_self_loops"]


def test_directed_view_has_two_full_capacity_edges_per_link():
    t = make_topology(3, [(0, 1), (1, 2)], 4.0)
    assert t.edges() == [(0, 1), (1, 0), (1, 2), (2, 1)]
    assert t.edge_capacities().tolist() == [4.0] * 4
    assert t.edge_id(2, 1) == 3


def test_round_trip(tmp_path):
    t = generate_scale_free(14, 21, 10.0, 11)
    path = tmp_path / "topo.json"
    save_topology(t, path, {"config_digest": "x"})
    assert load_topology(path) == t


def test_load_rejects_bad_capacity(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"n": 2, "links": [{"a": 0, "b": 1, "capacity": 0}]}))
    with pytest.raises(TopologyError, match="capacity"):
        load_topology(path)


def test_load_rejects_node_out_of_range(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"n": 2, "links": [{"a": 0, "b": 2, "capacity": 1}]}))
    with pytest.raises(TopologyError):
        load_topology(path)


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(TopologyError):
        load_topology(path)
