from dataclasses import replace

import numpy as np
import pytest
from conftest import connected_graph, edge_graph

from metricprop import (
    KernelSpec,
    LabeledSet,
    chunked_propagate,
    fit_spectral,
    gen_synthetic,
    nn_propagate,
    propagate,
    spectral_embedding,
    spectral_propagate,
    split_labeled,
)
from metricprop.core import EmptyClassError, IndexRangeError
from metricprop.confidence import ConfidenceParams, pseudo_label
from metricprop.propagation import UNREACHABLE, chunk_unlabeled, vote

EUC = KernelSpec("negative-euclidean")


def loop_vote(W, labels, unlabeled, C):
    """Direct evaluation: z[u, c] = (1/n_c) * sum_i [y_i == c] * W[i, u]."""
    z = np.zeros((len(unlabeled), C))
    for r, u in enumerate(unlabeled):
        for c in range(C):
            total, count = 0.0, 0
            for i, y in zip(labels.indices, labels.classes):
                if y == c:
                    total += W[i, u]
                    count += 1
            z[r, c] = total / count
    return z


def test_vote_examples():
    lab = LabeledSet([0, 1], [0, 1], 2)
    np.testing.assert_allclose(nn_propagate([[np.e, 1.0]], lab).logits, [[2.71828183, 1.0]], atol=1e-8)
    lab = LabeledSet([0, 1, 2], [0, 0, 1], 2)
    np.testing.assert_allclose(nn_propagate([[2.0, 4.0, 3.0]], lab).logits, [[3.0, 3.0]])


def test_nn_matches_loop(rng):
    S = rng.random((50, 10))
    lab = LabeledSet(np.arange(50, 60), rng.permutation(np.arange(10) % 3), 3)
    W = np.zeros((60, 60))
    W[50:, :50] = S.T
    np.testing.assert_allclose(nn_propagate(S, lab).logits, loop_vote(W, lab, range(50), 3), atol=1e-12)


def test_empty_class():
    with pytest.raises(EmptyClassError):
        vote(np.ones((2, 2)), LabeledSet([0, 1], [0, 0], 2))


def test_spectral_factored_vs_dense(rng):
    n = 100
    M = fit_spectral(connected_graph(rng, n, k=4), 30)
    lab = LabeledSet([3, 10, 40, 77], [0, 1, 2, 1], 3)
    unl = lab.unlabeled(n)
    Wp = spectral_embedding(M)
    fac = spectral_propagate(M, lab, unl).logits
    np.testing.assert_allclose(fac, spectral_propagate(Wp, lab, unl).logits, atol=1e-8)
    np.testing.assert_allclose(fac, loop_vote(Wp, lab, unl, 3), atol=1e-8)


def test_two_edge_graph_inherits_neighbor():
    G = edge_graph((0, 1, 1.0), (2, 3, 1.0), n=4)
    lab = LabeledSet([0, 2], [0, 1], 2)
    res = spectral_propagate(fit_spectral(G, 4), lab, [1, 3])
    np.testing.assert_array_equal(res.logits.argmax(axis=1), [0, 1])


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("k", [5, 10, 20])
def test_two_clusters_one_label_each(seed, k):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(0, 0.1, (40, 2)), rng.normal(5, 0.1, (40, 2))])
    lab = LabeledSet([0, 40], [0, 1], 2)
    res = propagate(X, lab, k=k, eta=10, spec=EUC)
    truth = (res.indices >= 40).astype(int)
    np.testing.assert_array_equal(res.logits.argmax(axis=1), truth)


def test_two_clusters_without_gate_can_fail():
    # with zero components merely dropped, the within-cluster part of W' is
    # mean zero, so far members of the second cluster vote below the 0 they
    # get from the other cluster's label
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(0, 0.1, (40, 2)), rng.normal(5, 0.1, (40, 2))])
    lab = LabeledSet([0, 40], [0, 1], 2)
    res = propagate(X, lab, k=5, eta=10, spec=EUC, null_policy="drop")
    assert np.mean(res.logits.argmax(axis=1) == (res.indices >= 40)) < 0.9


def test_gate_marks_unreachable_classes():
    # components {0,1}, {2,3,4}, {5,6}; labels only in the first two
    G = edge_graph((0, 1, 1.0), (2, 3, 1.0), (3, 4, 1.0), (2, 4, 1.0), (5, 6, 1.0), n=7)
    lab = LabeledSet([0, 2], [0, 1], 2)
    res = spectral_propagate(fit_spectral(G, 7), lab, [1, 3, 4, 5, 6])
    z = res.logits
    assert z[0, 1] == UNREACHABLE and z[0, 0] > UNREACHABLE
    assert np.all(z[1:3, 0] == UNREACHABLE) and np.all(z[1:3, 1] > UNREACHABLE)
    assert np.all(z[3:] == UNREACHABLE)
    assert res.provenance["unreachable"] == 2
    p = pseudo_label(res, ConfidenceParams(alpha_threshold=0.01))
    np.testing.assert_array_equal(p.indices, [1, 3, 4])
    np.testing.assert_array_equal(p.labels, [0, 1, 1])
    np.testing.assert_allclose(p.confidence, 1.0)
    assert p.n_discarded == 2


def test_gate_is_identity_on_connected_graph(rng):
    M = fit_spectral(connected_graph(rng, 60, k=4), 15)
    lab = LabeledSet([0, 7, 20], [0, 1, 1], 2)
    unl = lab.unlabeled(60)
    drop = spectral_propagate(replace(M, null_policy="drop"), lab, unl)
    assert spectral_propagate(M, lab, unl).logits.tobytes() == drop.logits.tobytes()


def test_index_outside_model(rng):
    M = fit_spectral(connected_graph(rng, 30, k=3), 5)
    with pytest.raises(IndexRangeError):
        spectral_propagate(M, LabeledSet([0, 1], [0, 1], 2), [30])


def test_raw_block_injection_equals_nn(rng):
    n = 40
    W = rng.random((n, n))
    W = W + W.T
    lab = LabeledSet([1, 5, 9], [0, 1, 0], 2)
    unl = lab.unlabeled(n)
    a = spectral_propagate(W, lab, unl).logits
    b = nn_propagate(W[np.ix_(unl, lab.indices)], lab, unl).logits
    assert a.tobytes() == b.tobytes()


def test_scale_keeps_argmax(rng):
    S = rng.random((30, 6))
    lab = LabeledSet(np.arange(6), [0, 1, 2, 0, 1, 2], 3)
    z = nn_propagate(S, lab).logits
    for c in (1e-3, 0.5, 7.0, 1e4):
        zc = nn_propagate(S * c, lab).logits
        np.testing.assert_allclose(zc, z * c, rtol=1e-12)
        np.testing.assert_array_equal(zc.argmax(axis=1), z.argmax(axis=1))


def test_within_class_permutation(rng):
    X, y = gen_synthetic("gaussian-blobs", 90, 1.0, 3, seed=2)
    lab = split_labeled(y, 4, seed=1)
    order = np.lexsort((rng.random(len(lab)), lab.classes))
    shuffled = LabeledSet(lab.indices[order], lab.classes[order], 3)
    for method in ("nn", "spectral"):
        a = propagate(X, lab, method=method, k=5, eta=20)
        b = propagate(X, shuffled, method=method, k=5, eta=20)
        np.testing.assert_allclose(a.logits, b.logits, atol=1e-12)


def test_duplicate_labeled_example():
    S = np.array([[2.0, 5.0], [1.0, 4.0]])
    lab = LabeledSet([0, 1], [0, 1], 2)
    dup = LabeledSet([0, 1, 2], [0, 1, 0], 2)
    a = nn_propagate(S, lab).logits
    b = nn_propagate(np.column_stack([S, S[:, 0]]), dup).logits
    np.testing.assert_array_equal(a, b)


def test_chunks_one_bitwise():
    X, y = gen_synthetic("two-moons", 400, 0.05, seed=1)
    lab = split_labeled(y, 5, seed=1)
    a = propagate(X, lab, k=10, eta=30, spec=EUC)
    b = chunked_propagate(X, lab, chunks=1, k=10, eta=30, spec=EUC)
    assert a.logits.tobytes() == b.logits.tobytes()
    np.testing.assert_array_equal(a.indices, b.indices)


def test_duplicate_dataset_chunks():
    X0, y0 = gen_synthetic("two-moons", 300, 0.05, seed=4)
    lab0 = split_labeled(y0, 3, seed=4)
    n = len(X0)
    X = np.empty((2 * n, 2))
    X[0::2], X[1::2] = X0, X0  # interleaved copies
    copy_a, copy_b = np.arange(0, 2 * n, 2), np.arange(1, 2 * n, 2)
    # a labeled point can only sit in one shard graph; label both copies so
    # each shard sees the same supervision as the single-copy run
    unl0 = lab0.unlabeled(n)
    lab = LabeledSet(np.concatenate([copy_a[lab0.indices], copy_b[lab0.indices]]),
                     np.concatenate([lab0.classes, lab0.classes]), 2)
    single = propagate(X0, lab0, k=8, eta=25, spec=EUC)
    shard_a, shard_b = copy_a[unl0], copy_b[unl0]
    # shard graphs include all labeled points (both copies), so compare against
    # a single-copy run over the doubled labeled set instead
    both = chunked_propagate(X, lab, shards=[shard_a, shard_b], k=8, eta=25, spec=EUC)
    rows = {int(u): r for r, u in enumerate(both.indices)}
    za = both.logits[[rows[int(u)] for u in shard_a]]
    zb = both.logits[[rows[int(u)] for u in shard_b]]
    np.testing.assert_allclose(za, zb, atol=1e-8)
    assert single.logits.shape == za.shape


def test_chunking_partition_and_shard_size():
    unl = np.arange(100, 200)
    shards = chunk_unlabeled(unl, 4, seed=0)
    np.testing.assert_array_equal(np.sort(np.concatenate(shards)), unl)
    assert [len(s) for s in shards] == [25] * 4
    X, y = gen_synthetic("two-moons", 60, 0.05, seed=0)
    lab = split_labeled(y, 2)
    with pytest.raises(ValueError):
        chunked_propagate(X, lab, chunks=10, k=10, eta=10)


def test_overlapping_unlabeled_rejected():
    X, y = gen_synthetic("two-moons", 60, 0.05)
    lab = split_labeled(y, 2)
    with pytest.raises(ValueError):
        propagate(X, lab, lab.indices, method="nn")
