import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from resilient_formation.errors import InvalidTopologyError
from resilient_formation.graph import (
    Graph,
    build_complete,
    build_ring,
    incidence,
    kron_expand,
    laplacian,
)


@st.composite
def connected_graphs(draw, max_nodes=10):
    """Random spanning tree plus random extra edges."""
    n = draw(st.integers(2, max_nodes))
    edges = set()
    for v in range(1, n):
        u = draw(st.integers(0, v - 1))
        edges.add((u, v))
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=2 * n))
    edges |= {(min(a, b), max(a, b)) for a, b in extra if a != b}
    return Graph.from_edges(n, edges)


@st.composite
def any_graphs(draw, max_nodes=8):
    n = draw(st.integers(1, max_nodes))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    return Graph.from_edges(n, chosen)


# --- construction -----------------------------------------------------------------

def test_complete_k5_edge_count_and_laplacian():
    g = build_complete(5)
    assert g.n_edges == 10
    L = laplacian(g).L
    assert np.all(np.diag(L) == 4)
    assert np.all(L[~np.eye(5, dtype=bool)] == -1)


def test_complete_k2_single_edge():
    g = build_complete(2)
    assert g.edges == ((0, 1),)
    np.testing.assert_array_equal(laplacian(g).L, [[1, -1], [-1, 1]])


def test_complete_k5_spectrum_by_eigensolver():
    eig = np.linalg.eigvalsh(laplacian(build_complete(5)).L)
    np.testing.assert_allclose(eig, [0, 5, 5, 5, 5], atol=1e-12)


@pytest.mark.parametrize("n", [0, 1, -3])
def test_complete_rejects_small(n):
    with pytest.raises(InvalidTopologyError):
        build_complete(n)


def test_ring5_spectrum_matches_circulant_formula():
    eig = np.linalg.eigvalsh(laplacian(build_ring(5)).L)
    formula = np.sort([2 - 2 * np.cos(2 * np.pi * k / 5) for k in range(5)])
    np.testing.assert_allclose(eig, formula, atol=1e-12)
    np.testing.assert_allclose(eig, [0, 1.38197, 1.38197, 3.61803, 3.61803], atol=1e-5)


def test_ring3_equals_k3():
    assert build_ring(3).edges == build_complete(3).edges


def test_ring4_degrees():
    assert build_ring(4).degrees.tolist() == [2, 2, 2, 2]


@pytest.mark.parametrize("n", [2, 1, 0])
def test_ring_rejects_small(n):
    with pytest.raises(InvalidTopologyError):
        build_ring(n)


@pytest.mark.parametrize(
    "edges",
    [[(0, 0)], [(0, 1), (1, 0)], [(0, 3)], [(-1, 1)]],
    ids=["self-loop", "duplicate", "out-of-range", "negative"],
)
def test_invalid_edges_rejected(edges):
    with pytest.raises(InvalidTopologyError):
        Graph.from_edges(3, edges)


def test_direct_constructor_requires_normalized_sorted_edges():
    with pytest.raises(InvalidTopologyError):
        Graph(3, ((1, 0),))
    with pytest.raises(InvalidTopologyError):
        Graph(3, ((1, 2), (0, 1)))


def test_connectivity():
    assert build_complete(4).is_connected()
    split = Graph.from_edges(4, [(0, 1), (2, 3)])
    assert split.component_count() == 2
    assert not split.is_connected()


def test_adjacency_is_read_only_symmetric_bool():
    A = build_ring(6).adjacency
    assert A.dtype == bool
    assert np.array_equal(A, A.T)
    with pytest.raises(ValueError):
        A[0, 1] = False


# --- algebraic views ----------------------------------------------------------------

def test_path_p3_laplacian():
    g = Graph.from_edges(3, [(0, 1), (1, 2)])
    np.testing.assert_array_equal(laplacian(g).L, [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])


def test_single_edge_incidence_orientation():
    H = incidence(build_complete(2)).H
    np.testing.assert_array_equal(H, [[1, -1]])


def test_k5_incidence_rows():
    H = incidence(build_complete(5)).H
    assert H.shape == (10, 5)
    assert np.all((H == 1).sum(axis=1) == 1)
    assert np.all((H == -1).sum(axis=1) == 1)
    # +1 sits on the lower endpoint
    for row, (i, j) in zip(H, build_complete(5).edges):
        assert row[i] == 1 and row[j] == -1


@given(any_graphs())
def test_incidence_rank_is_n_minus_components(g):
    H = incidence(g).H
    rank = np.linalg.matrix_rank(H) if g.n_edges else 0
    assert rank == g.n_nodes - g.component_count()


def test_kron_scalar():
    np.testing.assert_array_equal(kron_expand([[2]], 2), [[2, 0], [0, 2]])


@pytest.mark.parametrize("p,n", [(1, 1), (3, 2), (4, 3)])
def test_kron_identity(p, n):
    np.testing.assert_array_equal(kron_expand(np.eye(p), n), np.eye(p * n))


def test_kron_rejects_bad_dimension():
    with pytest.raises(ValueError):
        kron_expand(np.eye(2), 0)


# --- properties ---------------------------------------------------------------------

@given(connected_graphs())
def test_laplacian_properties(g):
    view = laplacian(g)
    L = view.L
    np.testing.assert_array_equal(L, view.D - view.A)
    assert np.abs(L.sum(axis=1)).max() <= 1e-12
    assert np.array_equal(L, L.T)
    eig = np.linalg.eigvalsh(L)
    assert abs(eig[0]) <= 1e-9
    assert eig[1] > 1e-9


@given(connected_graphs())
def test_incidence_gram_equals_laplacian(g):
    H = incidence(g).H
    assert np.abs(H.T @ H - laplacian(g).L).max() <= 1e-12


@given(any_graphs())
def test_zero_eigenvalue_multiplicity_counts_components(g):
    eig = np.linalg.eigvalsh(laplacian(g).L)
    assert int(np.sum(np.abs(eig) < 1e-9)) == g.component_count()


@given(connected_graphs(max_nodes=7), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_kron_applies_laplacian_per_coordinate(g, n, seed):
    X = np.random.default_rng(seed).normal(size=(g.n_nodes, n))
    L = laplacian(g).L
    stacked = kron_expand(L, n) @ X.ravel()
    loop = np.empty_like(X)
    for m in range(n):
        for i in range(g.n_nodes):
            loop[i, m] = sum(L[i, j] * X[j, m] for j in range(g.n_nodes))
    np.testing.assert_allclose(stacked.reshape(X.shape), loop, rtol=0, atol=1e-12)
