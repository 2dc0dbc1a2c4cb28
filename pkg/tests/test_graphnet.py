import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import reach_closure
from regsim.graphnet import (
    TopologySchedule,
    UndecidableError,
    WeightedDigraph,
    check_uniform_reachability,
    is_globally_reachable,
    laplacian,
    union_digraph,
)


@st.composite
def digraphs(draw, max_nodes=6):
    n = draw(st.integers(2, max_nodes))
    W = np.zeros((n, n))
    for i in range(1, n):
        for j in range(n):
            if i != j and draw(st.booleans()):
                W[i, j] = draw(st.sampled_from([0.1, 0.5, 1.0, 2.0]))
    return WeightedDigraph(W)


def test_laplacian_examples():
    g = WeightedDigraph.from_edges(3, [(0, 1, 1.0), (1, 2, 2.0)])
    L, Lm = laplacian(g)
    np.testing.assert_array_equal(L, [[0, 0, 0], [-1, 1, 0], [0, -2, 2]])
    np.testing.assert_array_equal(Lm, [[1, 0], [-2, 2]])


def test_edges_round_trip():
    edges = [(0, 1, 1.0), (2, 1, 0.5), (1, 2, 1.0)]
    g = WeightedDigraph.from_edges(3, edges)
    assert sorted(g.edges()) == sorted(edges)


@pytest.mark.parametrize("W, msg", [
    ([[0, 0], [-1, 0]], "nonnegative"),
    ([[0, 0], [0, 1]], "self-loops"),
    ([[0, 1], [0, 0]], "in-edges"),
    ([[0, 0], [0.05, 0]], "alpha_min"),
])
def test_digraph_validation(W, msg):
    with pytest.raises(ValueError, match=msg):
        WeightedDigraph(np.array(W, dtype=float))


@given(digraphs())
@settings(max_examples=150, deadline=None)
def test_laplacian_rows_sum_to_zero(g):
    L, Lm = laplacian(g)
    np.testing.assert_allclose(L.sum(axis=1), 0.0, atol=1e-12)
    np.testing.assert_array_equal(Lm, L[1:, 1:])
    assert np.all(np.diag(L) >= 0)


@given(digraphs())
@settings(max_examples=200, deadline=None)
def test_reachability_matches_floyd_warshall(g):
    R = reach_closure(g.weights)
    assert is_globally_reachable(g, 0) == bool(R[:, 0].all())


@given(digraphs())
@settings(max_examples=100, deadline=None)
def test_reachable_root_means_lminus_eigs_in_rhp(g):
    # standard fact: node 0 globally reachable <=> -L_minus is Hurwitz
    if is_globally_reachable(g):
        _, Lm = laplacian(g)
        assert np.min(np.linalg.eigvals(Lm).real) > 0


def _two_segment():
    g1 = WeightedDigraph.from_edges(5, [(0, 1, 1), (0, 2, 1), (3, 4, 1), (4, 3, 1)])
    g2 = WeightedDigraph.from_edges(5, [(1, 3, 1), (2, 4, 1), (4, 1, 1)])
    return g1, g2, TopologySchedule(((1.0, g1), (1.0, g2)))


def test_schedule_lookup_half_open():
    g1, g2, s = _two_segment()
    assert s.graph_at(0.0) is g1
    assert s.graph_at(0.999) is g1
    assert s.graph_at(1.0) is g2
    assert s.graph_at(2.0) is g1
    assert s.segment_index(3.5) == 1


def test_union_of_full_period_is_reachable():
    g1, g2, s = _two_segment()
    assert not is_globally_reachable(g1)
    assert not is_globally_reachable(g2)
    assert is_globally_reachable(union_digraph(s, 0.0, 2.0))
    assert check_uniform_reachability(s, 2.0, horizon=20.0)
    assert not check_uniform_reachability(s, 1.0, horizon=20.0)


def test_union_requires_increasing_interval():
    _, _, s = _two_segment()
    with pytest.raises(ValueError):
        union_digraph(s, 1.0, 1.0)


@given(st.floats(0, 6), st.floats(0.01, 3), st.floats(0.01, 3))
@settings(max_examples=100, deadline=None)
def test_union_monotone_in_window(t1, a, b):
    _, _, s = _two_segment()
    small = union_digraph(s, t1, t1 + a).weights
    big = union_digraph(s, t1, t1 + a + b).weights
    assert np.all(big >= small)


def test_isolated_exosystem_fails():
    g = WeightedDigraph.from_edges(3, [(1, 2, 1.0), (2, 1, 1.0)])
    s = TopologySchedule(((1.0, g),))
    assert not check_uniform_reachability(s, 1.0, horizon=10.0)


def test_non_repeating_needs_horizon():
    g1, g2, _ = _two_segment()
    s = TopologySchedule(((1.0, g1), (1.0, g2)), repeat=False)
    with pytest.raises(UndecidableError):
        check_uniform_reachability(s, 2.0)
    # the last segment persists, and on its own it does not reach every node
    assert not check_uniform_reachability(s, 2.0, horizon=10.0)
