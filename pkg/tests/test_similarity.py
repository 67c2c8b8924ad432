import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metricprop import KernelSpec, build_knn_graph, similarity, similarity_to_targets
from metricprop.similarity import kernel_weights, read_graph, write_graph

COS = KernelSpec("cosine")
EUC = KernelSpec("negative-euclidean")


def brute_force_edges(X, k, spec):
    """All-pairs scan with an explicit (similarity desc, index asc) sort."""
    n = len(X)
    edges = set()
    for i in range(n):
        scored = sorted((-similarity(X[i], X[j], spec), j) for j in range(n) if j != i)
        for _, j in scored[:k]:
            edges.add((min(i, j), max(i, j)))
    return edges


def test_similarity_examples():
    assert similarity([1, 0], [0, 1], COS) == pytest.approx(0.0, abs=1e-15)
    assert similarity([1, 1], [1, 0], COS) == pytest.approx(0.70710678, abs=1e-8)
    assert similarity([3, 4], [0, 0], EUC) == pytest.approx(-5.0)
    assert similarity([2, 2], [2, 2], EUC) == 0.0


def test_similarity_errors():
    with pytest.raises(ValueError):
        similarity([1, 0], [1, 0, 0], COS)
    with pytest.raises(ValueError):
        similarity([0, 0], [1, 0], COS)


def test_collinear_k1():
    X = np.array([[0.0], [1.0], [10.0]])
    G = build_knn_graph(X, 1, EUC)
    i, j, _ = G.edges()
    assert set(zip(i.tolist(), j.tolist())) == {(0, 1), (1, 2)}


def test_identical_pair_weight():
    G = build_knn_graph(np.array([[1.0, 2.0], [1.0, 2.0]]), 1, COS)
    _, _, w = G.edges()
    np.testing.assert_allclose(w, [np.e], atol=1e-8)


@pytest.mark.parametrize("spec", [COS, EUC])
def test_matches_brute_force(rng, spec):
    X = rng.standard_normal((200, 6))
    G = build_knn_graph(X, 5, spec)
    i, j, w = G.edges()
    assert set(zip(i.tolist(), j.tolist())) == brute_force_edges(X, 5, spec)
    expected = [np.exp(similarity(X[a], X[b], spec)) for a, b in zip(i, j)]
    np.testing.assert_allclose(w, expected, rtol=1e-12)


def test_ties_go_to_lower_index():
    # point 0 is equidistant from 1..4; k=2 must pick 1 and 2
    X = np.array([[0, 0], [1, 0], [0, 1], [-1, 0], [0, -1]], dtype=float)
    G = build_knn_graph(X, 2, EUC)
    assert set(G.adjacency[0].indices.tolist()) >= {1, 2}
    row0 = G.adjacency[0].indices.tolist()
    assert 3 not in row0 or G.adjacency[3, 0] > 0  # only via symmetrization


def test_k_out_of_range(rng):
    X = rng.standard_normal((5, 2))
    for k in (0, 5, 6):
        with pytest.raises(ValueError):
            build_knn_graph(X, k)


def test_graph_invariants(rng):
    for spec in (COS, EUC, KernelSpec("cosine", exponentiate=False)):
        X = rng.standard_normal((120, 3))
        k = 4
        G = build_knn_graph(X, k, spec)
        W = G.adjacency
        assert (W != W.T).nnz == 0
        assert np.all(W.diagonal() == 0)
        assert np.all(W.data > 0)
        # each row is its own k-list plus every point that listed it
        assert np.diff(W.indptr).min() >= k
        D = W.toarray()
        S = -np.linalg.norm(X[:, None] - X[None], axis=2) if spec == EUC else None
        if S is not None:
            np.fill_diagonal(S, -np.inf)
            own = np.argsort(-S, axis=1, kind="stable")[:, :k]
            A = np.zeros_like(D, dtype=bool)
            A[np.arange(len(X))[:, None], own] = True
            np.testing.assert_array_equal(D > 0, A | A.T)
        if spec == COS:
            assert W.data.max() <= np.e


def test_permutation_invariance(rng):
    X = rng.standard_normal((80, 4))
    G = build_knn_graph(X, 5, EUC)
    for _ in range(5):
        perm = rng.permutation(80)
        Gp = build_knn_graph(X[perm], 5, EUC)
        i, j, _ = Gp.edges()
        mapped = {tuple(sorted((perm[a], perm[b]))) for a, b in zip(i, j)}
        gi, gj, _ = G.edges()
        assert mapped == set(zip(gi.tolist(), gj.tolist()))


def test_non_exponentiated_weights():
    f = np.array([-1.0, 0.0, 0.5])
    w = kernel_weights(f, KernelSpec("cosine", exponentiate=False))
    assert np.all(w > 0)
    np.testing.assert_allclose(w[1:], [1.0, 1.5])


def test_similarity_to_targets_examples():
    X = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 3.0]])
    assert similarity_to_targets(X, [0], [1], COS)[0, 0] == pytest.approx(1.0)
    assert similarity_to_targets(X, [2], [1], COS)[0, 0] == pytest.approx(np.e)
    with pytest.raises(ValueError):
        similarity_to_targets(X, [0, 1], [1], COS)


def test_similarity_block_oracle(rng):
    X = rng.standard_normal((60, 5))
    u, t = np.arange(50), np.arange(50, 60)
    S = similarity_to_targets(X, u, t, COS)
    Xn = X / np.linalg.norm(X, axis=1, keepdims=True)
    np.testing.assert_allclose(S, np.exp(Xn[u] @ Xn[t].T), atol=1e-12)


def test_graph_text_round_trip(tmp_path, rng):
    G = build_knn_graph(rng.standard_normal((40, 3)), 3)
    write_graph(G, tmp_path / "g.txt")
    H = read_graph(tmp_path / "g.txt", 40, 3)
    assert abs(G.adjacency - H.adjacency).max() <= 1e-15


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 40), st.integers(1, 6), st.integers(0, 2**31))
def test_symmetry_property(n, k, seed):
    k = min(k, n - 1)
    X = np.random.default_rng(seed).standard_normal((n, 3))
    W = build_knn_graph(X, k, EUC).adjacency
    assert abs(W - W.T).max() == 0
    assert W.diagonal().sum() == 0
