import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dpfedrec.bus import MessageBus
from dpfedrec.graph import build_graph, item, user
from dpfedrec.khop import (
    ExtensionMode,
    IntersectionVertexMissing,
    Share,
    ShareDecodeError,
    build_share,
    decode_share,
    encode_share,
    extend_all,
    khop_extension,
)
from dpfedrec.privacy import PrivacyBudget, PrivacyLedger

from strategies import bipartite_graphs, component_of, within_k


def _path():
    # u1 - p1 - u2 - p2
    return build_graph([(user(1), item(1), 4.0), (user(2), item(1), 2.0), (user(2), item(2), 5.0)])


def test_k0_is_intersection():
    g = _path()
    s = build_share(g, {user(1), item(1)}, 0)
    assert s.vertices == {user(1), item(1)}
    assert set(s.edges) == {(user(1), item(1))}


def test_path_k2():
    s = build_share(_path(), {user(1)}, 2)
    assert s.vertices == {user(1), item(1), user(2)}
    assert set(s.edges) == {(user(1), item(1)), (user(2), item(1))}


def test_empty_intersection():
    s = build_share(_path(), set(), 3)
    assert s.num_edges() == 0 and not s.vertices


def test_missing_intersection_vertex():
    with pytest.raises(IntersectionVertexMissing):
        build_share(_path(), {user(9)}, 1)
    with pytest.raises(ValueError):
        build_share(_path(), {user(1)}, -1)


@given(bipartite_graphs(max_users=12, max_items=12), st.data())
def test_share_matches_floyd_warshall_oracle(g, data):
    if not g.users:
        return
    seeds = set(data.draw(st.lists(st.sampled_from(sorted(g.users)), max_size=3)))
    for k in (0, 1, 2, 5):
        s = build_share(g, seeds, k)
        expect = within_k(g, seeds, k) if seeds else set()
        assert s.vertices == expect
        assert set(s.edges) == {e for e in g.edges if e[0] in expect and e[1] in expect}
        assert all(s.edges[e] == g.edges[e] for e in s.edges)


@given(bipartite_graphs(max_users=10, max_items=10), st.data())
def test_monotone_and_saturating(g, data):
    if not g.users:
        return
    seeds = set(data.draw(st.lists(st.sampled_from(sorted(g.users)), min_size=1, max_size=3)))
    prev = set()
    for k in range(0, 8):
        cur = build_share(g, seeds, k).vertices
        assert prev <= cur
        prev = cur
    big = build_share(g, seeds, len(g.vertices))
    comp = component_of(g, seeds)
    assert big == g.subgraph(comp)


def _two_clients():
    # client 0 and 1 share user 0 only
    g0 = build_graph([(user(0), item(0), 5.0), (user(1), item(0), 3.0), (user(1), item(1), 2.0)])
    g1 = build_graph(
        [(user(0), item(10), 1.0), (user(2), item(10), 4.0), (user(2), item(11), 4.0), (user(3), item(12), 2.0)]
    )
    return g0, g1


def test_single_client_unchanged():
    g0, _ = _two_clients()
    assert khop_extension(0, [g0], k=3) == g0


def test_disjoint_users_unchanged():
    g0 = build_graph([(user(0), item(0), 5.0)])
    g1 = build_graph([(user(1), item(1), 5.0)])
    res = extend_all([g0, g1], k=4)
    assert res.graphs == [g0, g1]


def test_plain_extension_adds_reachable_component():
    g0, g1 = _two_clients()
    ext = extend_all([g0, g1], k=10).graphs
    reach1 = component_of(g1, {user(0)})
    extra1 = {e for e in g1.edges if e[0] in reach1}
    assert ext[0].num_edges() == g0.num_edges() + len(extra1)
    reach0 = component_of(g0, {user(0)})
    assert ext[1].num_edges() == g1.num_edges() + sum(1 for e in g0.edges if e[0] in reach0)
    assert (user(3), item(12)) not in ext[0].edges


@given(st.lists(bipartite_graphs(max_users=6, max_items=4), min_size=2, max_size=4), st.integers(0, 3))
def test_plain_extension_superset_local_wins(graphs, k):
    # shift item ids so clients own disjoint items, as partitioning guarantees
    shifted = []
    for i, g in enumerate(graphs):
        shifted.append(build_graph((u, item(p.index + 100 * i), w) for u, p, w in g.edge_list()))
    res = extend_all(shifted, k, psi_mode="oracle")
    for g, ext in zip(shifted, res.graphs):
        assert g.vertices <= ext.vertices
        for e, w in g.edges.items():
            assert ext.edges[e] == w


def test_dp_extension_budget_and_determinism():
    g0, g1 = _two_clients()
    g2 = build_graph([(user(9), item(20), 1.0)])
    budget = PrivacyBudget()
    ledgers = [PrivacyLedger(i) for i in range(3)]
    res = extend_all([g0, g1, g2], 2, ExtensionMode.DP, budget, master_seed=3, ledgers=ledgers)
    assert [lg.total_spent() for lg in ledgers] == [2.0, 2.0, 0.0]
    again = extend_all([g0, g1, g2], 2, ExtensionMode.DP, budget, master_seed=3)
    assert again.graphs == res.graphs
    assert res.shares_sent[(0, 1)].graph.noised
    assert not res.shares_sent[(0, 2)].graph.edges


def test_dp_noise_is_per_peer():
    shared = [(user(u), item(0), 3.0) for u in range(6)]
    g0 = build_graph(shared + [(user(u), item(1), 4.0) for u in range(6)])
    g1 = build_graph([(user(u), item(10), 2.0) for u in range(6)])
    g2 = build_graph([(user(u), item(20), 2.0) for u in range(6)])
    res = extend_all([g0, g1, g2], 1, "dp", PrivacyBudget(), master_seed=0)
    w1 = res.shares_sent[(0, 1)].graph.edge_list()
    w2 = res.shares_sent[(0, 2)].graph.edge_list()
    assert w1 != w2


def test_dp_requires_budget():
    g0, g1 = _two_clients()
    with pytest.raises(ValueError):
        extend_all([g0, g1], 1, "dp")


def test_share_bytes_roundtrip():
    g0, _ = _two_clients()
    share = Share(2, 5, build_share(g0, {user(0)}, 2), 2)
    blob = encode_share(share)
    assert decode_share(blob) == share
    with pytest.raises(ShareDecodeError):
        decode_share(blob[:-3])
    with pytest.raises(ShareDecodeError):
        decode_share(blob + b"x")
    with pytest.raises(ShareDecodeError):
        decode_share(b"XXXX" + blob[4:])


def test_extension_traffic_is_tagged():
    g0, g1 = _two_clients()
    bus = MessageBus(range(2))
    extend_all([g0, g1], 2, bus=bus)
    assert bus.total_bytes("psi") > 0 and bus.total_bytes("share") > 0
    assert bus.total_bytes() == bus.total_bytes("psi", "share")
