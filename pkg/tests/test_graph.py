import numpy as np
import pytest
from hypothesis import given, strategies as st

from lingcrel.graph import (
    Dag,
    GraphError,
    all_dags,
    dom_pattern,
    pattern_membership,
    random_dag,
)

from .oracles import dom_brute, edge_matrix, reach_matrix

CHAIN = Dag(3, {(1, 2), (2, 3)})
TRIANGLE = Dag(3, {(1, 2), (1, 3), (2, 3)})


@st.composite
def dags(draw, max_d=7):
    d = draw(st.integers(1, max_d))
    perm = draw(st.permutations(range(1, d + 1)))
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    mask = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    return Dag(d, {(perm[i], perm[j]) for (i, j), keep in zip(pairs, mask) if keep})


# structural queries


def test_chain_queries():
    assert CHAIN.parents(3) == {2}
    assert CHAIN.ancestors(3) == {1, 2}
    assert CHAIN.children(1) == {2}
    assert CHAIN.descendants(1) == {2, 3}


def test_triangle_non_descendants():
    assert TRIANGLE.non_descendants(2) == {1}


def test_out_of_range_node():
    with pytest.raises(GraphError):
        CHAIN.parents(4)
    with pytest.raises(GraphError):
        CHAIN.dom_set(0)


@pytest.mark.parametrize("edges", [{(1, 1)}, {(1, 2), (2, 1)}, {(1, 2), (2, 3), (3, 1)}, {(0, 1)}])
def test_invalid_graphs(edges):
    with pytest.raises(GraphError):
        Dag(3, edges)


@given(dags())
def test_ancestors_match_transitive_closure(g):
    R = reach_matrix(edge_matrix(g))
    for i in g.nodes:
        assert g.ancestors(i) == set(np.flatnonzero(R[:, i - 1]) + 1)
        assert g.descendants(i) == set(np.flatnonzero(R[i - 1]) + 1)
        assert g.non_descendants(i) == set(g.nodes) - g.descendants(i) - {i}


@given(dags())
def test_topological_order_respects_edges(g):
    pos = {v: k for k, v in enumerate(g.topological_order)}
    assert sorted(pos) == list(g.nodes)
    assert all(pos[i] < pos[j] for i, j in g.edges)


# dom sets


def test_dom_chain():
    assert [CHAIN.dom_set(j) for j in (1, 2, 3)] == [set(), set(), {2}]


def test_dom_triangle():
    assert TRIANGLE.dom_set(2) == {1}
    assert TRIANGLE.dom_set(3) == {1, 2}
    assert TRIANGLE.dom_set(3) == dom_brute(TRIANGLE, 3)


def test_dom_edgeless():
    g = Dag(4)
    assert all(g.dom_set(j) == set() for j in g.nodes)


@given(dags())
def test_dom_matches_definition(g):
    for j in g.nodes:
        assert g.dom_set(j) == dom_brute(g, j)
        assert g.dom_set(j) <= g.parents(j)
        assert g.dom_bar(j) == g.dom_set(j) | {j}


# ancestral sets


def test_is_ancestral_examples():
    assert CHAIN.is_ancestral(set())
    assert CHAIN.is_ancestral({1, 2})
    assert not CHAIN.is_ancestral({2})


# random graphs


def test_random_dag_single_node(rng):
    g = random_dag(1, 0.7, rng)
    assert g.d == 1 and not g.edges


def test_random_dag_full(rng):
    g = random_dag(5, 1.0, rng)
    assert g.edges == {(i, j) for i in range(1, 6) for j in range(i + 1, 6)}


@pytest.mark.parametrize("p", [0.0, -0.1, 1.5])
def test_random_dag_rejects_bad_p(rng, p):
    with pytest.raises(ValueError):
        random_dag(3, p, rng)


def test_random_dag_edge_count_mean():
    rng = np.random.default_rng(5)
    counts = [len(random_dag(5, 0.5, rng).edges) for _ in range(10_000)]
    # binomial(10, 0.5): mean 5, sd of the mean 0.0158
    assert abs(np.mean(counts) - 5.0) < 5 * np.sqrt(10 * 0.25 / 10_000)


def test_random_dag_respects_identity_order(rng):
    for _ in range(50):
        assert all(i < j for i, j in random_dag(6, 0.5, rng).edges)


# pattern membership


def test_identity_membership():
    for g in (CHAIN, TRIANGLE, Dag(3)):
        assert pattern_membership(np.eye(3), g, "dom0")
        assert pattern_membership(np.eye(3), g, "dom_bar")
    # exact support is only met when every dom set is empty
    assert pattern_membership(np.eye(3), Dag(3), "dom")
    assert not pattern_membership(np.eye(3), CHAIN, "dom")


def test_chain_effect_respecting_entry():
    m = np.eye(3)
    m[2, 1] = 0.7
    assert pattern_membership(m, CHAIN, "dom0")
    assert pattern_membership(m, CHAIN, "dom")


def test_chain_forbidden_entry():
    m = np.eye(3)
    m[1, 0] = 0.3
    assert not pattern_membership(m, CHAIN, "dom_bar")


def test_dom_class_requires_full_support():
    assert not pattern_membership(np.eye(3), TRIANGLE, "dom")
    assert pattern_membership(np.eye(3) + np.tril(np.ones((3, 3)), -1), TRIANGLE, "dom")


def test_dom0_requires_invertibility():
    m = np.eye(3)
    m[2, 2] = 0.0
    assert pattern_membership(m, CHAIN, "dom_bar")
    assert not pattern_membership(m, CHAIN, "dom0")


def test_pattern_dimension_mismatch():
    with pytest.raises(GraphError):
        pattern_membership(np.eye(2), CHAIN)
    with pytest.raises(ValueError):
        pattern_membership(np.eye(3), CHAIN, "nope")


def test_tolerance_is_a_parameter():
    m = np.eye(3)
    m[1, 0] = 1e-6
    assert not pattern_membership(m, CHAIN, "dom_bar")
    assert pattern_membership(m, CHAIN, "dom_bar", tol=1e-5)


# serialization and enumeration


def test_json_round_trip_and_sorted_edges():
    g = Dag(4, {(3, 4), (1, 2), (1, 4)})
    assert g.to_json() == '{"d":4,"edges":[[1,2],[1,4],[3,4]]}'
    assert Dag.from_json(g.to_json()) == g


def test_relabel():
    assert CHAIN.relabel([3, 2, 1]).edges == {(3, 2), (2, 1)}


@pytest.mark.parametrize("d,count", [(1, 1), (2, 3), (3, 25), (4, 543)])
def test_all_dags_counts(d, count):
    # labelled DAG counts (OEIS A003024)
    assert sum(1 for _ in all_dags(d)) == count


def test_dom_pattern_mask():
    mask = dom_pattern(CHAIN).mask()
    expected = np.eye(3, dtype=bool)
    expected[2, 1] = True
    assert np.array_equal(mask, expected)


# dom-set lemmas (exhaustive versions run in the acceptance suite)


@given(dags())
def test_chain_and_nesting_lemmas(g):
    for i in g.nodes:
        for j in g.parents(i):
            assert g.dom_set(j) <= g.parents(i)
        for j in g.dom_set(i):
            assert g.dom_set(j) <= g.dom_set(i)


@given(dags(), st.data())
def test_ancestral_extension(g, data):
    s = set(data.draw(st.sets(st.sampled_from(list(g.nodes)))))
    for i in set(g.nodes) - s:
        if g.is_ancestral(s) and g.is_ancestral(s | {i}):
            assert g.ancestors(i) <= s


def _random_dom0(g, rng):
    mask = dom_pattern(g).mask()
    while True:
        m = np.where(mask, rng.standard_normal((g.d, g.d)), 0.0)
        if np.linalg.svd(m, compute_uv=False)[-1] > 1e-3:
            return m


@given(dags(max_d=6), st.integers(0, 2**32 - 1))
def test_dom0_closed_under_inverse_and_product(g, seed):
    rng = np.random.default_rng(seed)
    m1, m2 = _random_dom0(g, rng), _random_dom0(g, rng)
    assert pattern_membership(np.linalg.inv(m1), g, "dom0", tol=1e-8)
    assert pattern_membership(m1 @ m2, g, "dom0", tol=1e-8)
