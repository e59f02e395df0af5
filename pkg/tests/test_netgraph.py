import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncga.genome import CODED, NONE, random_population
from ncga.netgraph import (Network, NetworkError, TopologyParseError, block_layout, build_butterfly,
                           build_butterfly_prime, build_cascade, build_dense, build_named,
                           emit_topology, load_topology, longest_path, max_flow, oracle_feasible,
                           search_space_size)


def nx_min_cut(net: Network) -> int:
    """Max-flow with networkx on the multigraph (parallel links add capacity)."""
    g = nx.DiGraph()
    for link in net.links:
        if g.has_edge(link.tail, link.head):
            g[link.tail][link.head]["capacity"] += 1
        else:
            g.add_edge(link.tail, link.head, capacity=1)
    return min(nx.maximum_flow_value(g, net.source, t) for t in net.sinks)


def nx_oracle(net: Network, states) -> bool:
    """Line-graph max-flow in networkx, built independently of the package."""
    layout = block_layout(net)
    active = {}
    for b, s in zip(layout.blocks, states):
        active[b.out_link] = set(b.inputs) if s == CODED else set() if s == NONE else {b.inputs[s]}
    for t in net.sinks:
        g = nx.DiGraph()
        for e in net.links:
            g.add_edge(("in", e.id), ("out", e.id), capacity=1)
            if e.tail == net.source:
                g.add_edge("S", ("in", e.id), capacity=1)
            if e.head == t:
                g.add_edge(("out", e.id), "T", capacity=1)
        for e1 in net.links:
            for e2 in net.links:
                if e1.head == e2.tail and (e2.id not in active or e1.id in active[e2.id]):
                    g.add_edge(("out", e1.id), ("in", e2.id), capacity=1)
        if nx.maximum_flow_value(g, "S", "T") < net.rate:
            return False
    return True


def test_butterfly_shape(butterfly):
    assert len(butterfly.nodes) == 7 and len(butterfly.links) == 9
    assert butterfly.rate == 2 and butterfly.min_cut() == 2
    assert butterfly.merging_nodes == ("z",)
    layout = block_layout(butterfly)
    assert len(layout) == 1 and layout.ks == (2,)
    assert search_space_size(layout) == 4
    assert longest_path(butterfly) == 4


def test_butterfly_prime_shape(butterfly_prime):
    assert len(butterfly_prime.links) == 10
    layout = block_layout(butterfly_prime)
    assert [b.node for b in layout.blocks] == ["z", "z", "w", "w"]
    assert search_space_size(layout) == 4 ** 2 * 4 ** 2


@pytest.mark.parametrize("depth", [1, 2, 3, 4])
def test_cascade_shape(depth):
    net = build_cascade(depth)
    copies = 2 ** depth - 1
    assert len(net.links) == 10 * copies
    assert len(net.sinks) == 2 ** depth
    assert longest_path(net) == 4 * depth
    # z and w in every copy, plus each inner sink that feeds a child copy
    assert len(block_layout(net)) == 4 * copies + 2 * (copies - 1)
    assert net.min_cut() == 2


def test_network_g_dimensions(cascade4):
    layout = block_layout(cascade4)
    assert len(layout) == 88 and set(layout.ks) == {2}
    assert search_space_size(layout) == 4 ** 88
    assert longest_path(cascade4) == 16


def test_cascade_depth_limits():
    with pytest.raises(ValueError):
        build_cascade(0)
    with pytest.raises(ValueError):
        build_cascade(17)


@pytest.mark.parametrize("n,s", [(5, 2), (8, 3), (10, 4)])
def test_dense_rate_and_cross_check(n, s):
    net = build_dense(n, s)
    assert net.rate == nx_min_cut(net)
    assert net.merging_nodes == tuple(str(i) for i in range(3, n))
    assert all(len(net.in_links[v]) >= 2 for v in net.merging_nodes)


@pytest.mark.parametrize("name", ["butterfly", "butterfly_prime", "cascade:2", "cascade:3", "dense:7:3"])
def test_min_cut_matches_networkx(name):
    net = build_named(name)
    assert net.min_cut() == nx_min_cut(net)


def test_validation_errors():
    with pytest.raises(NetworkError, match="cycle"):
        Network.from_edges([("s", "a"), ("a", "b"), ("b", "a"), ("b", "t")], "s", ["t"], rate=1)
    with pytest.raises(NetworkError, match="self-loop"):
        Network.from_edges([("s", "a"), ("a", "a"), ("a", "t")], "s", ["t"], rate=1)
    with pytest.raises(NetworkError, match="unreachable"):
        Network.from_edges([("s", "a")], "s", ["t"], rate=1)
    with pytest.raises(NetworkError, match="unachievable"):
        Network.from_edges([("s", "a"), ("a", "t")], "s", ["t"], rate=2)
    with pytest.raises(NetworkError, match="incoming"):
        Network.from_edges([("s", "t"), ("t", "s")], "s", ["t"], rate=1)
    with pytest.raises(NetworkError):
        Network.from_edges([("s", "t")], "s", ["t"], rate=0)


def test_named_selectors():
    assert len(build_named("cascade:2").links) == 30
    for bad in ("nope", "cascade", "cascade:x", "dense:3"):
        with pytest.raises(ValueError):
            build_named(bad)


@pytest.mark.parametrize("name", ["butterfly", "butterfly_prime", "cascade:2", "dense:6:2"])
def test_topology_roundtrip(name):
    net = build_named(name)
    text = emit_topology(net)
    assert text.endswith("\n") and "\r" not in text
    again = load_topology(text)
    assert emit_topology(again) == text
    assert again.rate == net.rate and again.sinks == net.sinks
    assert block_layout(again).ks == block_layout(net).ks


def test_topology_parse_errors():
    good = "source s\nsinks t\nrate 1\nlink s t\n"
    assert load_topology("# comment\n" + good).rate == 1
    cases = {
        "source s\nsource s\n": 2,
        "source s\nsinks t\nrate x\n": 3,
        "source s\nsinks t\nrate 1\nlink s\n": 4,
        "source s\nsinks t\nrate 1\nedge s t\n": 4,
    }
    for text, line in cases.items():
        with pytest.raises(TopologyParseError) as err:
            load_topology(text)
        assert err.value.lineno == line
    with pytest.raises(TopologyParseError):
        load_topology("sinks t\nrate 1\nlink s t\n")


def test_max_flow_small():
    # two disjoint paths plus a shared bottleneck
    edges = [(0, 1), (0, 2), (1, 3), (2, 3), (1, 2)]
    assert max_flow(4, edges, 0, 3) == 2
    assert max_flow(4, edges, 0, 3, limit=1) == 1


def test_butterfly_oracle(butterfly):
    layout = block_layout(butterfly)
    feasible = [s for s in (CODED, NONE, 0, 1) if oracle_feasible(butterfly, [s], layout)]
    assert feasible == [CODED]


def test_oracle_rejects_wrong_layout(butterfly, butterfly_prime):
    with pytest.raises(ValueError):
        oracle_feasible(butterfly, [CODED, CODED])


def test_all_coded_is_feasible_everywhere():
    for name in ["butterfly", "butterfly_prime", "cascade:3", "dense:7:3", "dense:8:4:2"]:
        net = build_named(name)
        assert oracle_feasible(net, [CODED] * len(block_layout(net)))


def test_butterfly_prime_oracle_exhaustive(butterfly_prime):
    states = [CODED, NONE, 0, 1]
    for combo in itertools.product(states, repeat=4):
        assert oracle_feasible(butterfly_prime, combo) == nx_oracle(butterfly_prime, combo)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["cascade:2", "dense:6:2", "dense:7:3"]))
def test_oracle_matches_networkx(seed, name):
    net = build_named(name)
    layout = block_layout(net)
    pop = random_population(layout, 4, np.random.default_rng(seed))
    for row in pop:
        assert oracle_feasible(net, row, layout) == nx_oracle(net, row)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_oracle_monotone_under_activation(seed):
    """Turning a block to CODED never breaks feasibility."""
    net = build_cascade(2)
    layout = block_layout(net)
    rng = np.random.default_rng(seed)
    row = random_population(layout, 1, rng)[0]
    before = oracle_feasible(net, row, layout)
    b = int(rng.integers(len(layout)))
    row[b] = CODED
    assert oracle_feasible(net, row, layout) >= before


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 7), st.integers(0, 7)), min_size=1, max_size=20))
def test_random_dags_cross_check(pairs):
    edges = [(f"n{min(a, b)}", f"n{max(a, b)}") for a, b in pairs if a != b]
    edges = [("n0", "n1")] + edges
    g = nx.MultiDiGraph(edges)
    reach = nx.descendants(g, "n0")
    sinks = sorted(reach - {"n0"})[-2:]
    keep = [(u, v) for u, v in edges if u == "n0" or u in reach]
    net = Network.from_edges(keep, "n0", sinks)
    assert net.rate == nx_min_cut(net)
    assert net.topo_order[0] == "n0"
    pos = {v: i for i, v in enumerate(net.topo_order)}
    assert all(pos[l.tail] < pos[l.head] for l in net.links)
