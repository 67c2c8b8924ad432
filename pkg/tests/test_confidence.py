import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from metricprop import ConfidenceParams, PropagationResult, margin_confidence, normalize_logits, pseudo_label
from metricprop.confidence import confidence_summary

finite = st.floats(-50, 50, allow_nan=False)


def _result(z):
    z = np.atleast_2d(np.asarray(z, dtype=float))
    return PropagationResult(z, np.arange(len(z)), "test")


def test_normalize_examples():
    np.testing.assert_allclose(normalize_logits([2, 0], 1), [0.88079708, 0.11920292], atol=1e-8)
    np.testing.assert_allclose(normalize_logits([5, -3, 1], 1e6), [1 / 3] * 3, atol=1e-5)
    np.testing.assert_allclose(normalize_logits([7, 7, 7], 3.0), [1 / 3] * 3, atol=1e-15)


def test_normalize_overflow_safe():
    p = normalize_logits([1e308, 0.0], 1.0)
    assert np.all(np.isfinite(p)) and p[0] == 1.0


def test_margin_examples():
    assert margin_confidence([0.7, 0.2, 0.1]) == pytest.approx(0.5)
    assert margin_confidence([0.25] * 4) == 0.0
    assert margin_confidence([1.0, 0.0]) == 1.0
    with pytest.raises(ValueError):
        margin_confidence([1.0])


def test_pseudo_label_examples():
    p = pseudo_label(_result([3, 1]), ConfidenceParams(1.0))
    assert p.labels[0] == 0
    assert p.confidence[0] == pytest.approx(0.76159416, abs=1e-8)
    tie = pseudo_label(_result([1, 1]))
    assert len(tie) == 0 and tie.n_discarded == 1
    kept = pseudo_label(_result([1, 1]), ConfidenceParams(alpha_threshold=0.0))
    assert kept.labels[0] == 0 and kept.confidence[0] == 0.0


def test_pseudo_label_row_oracle(rng):
    z = rng.normal(0, 30, (500, 5))
    params = ConfidenceParams(40.0, 0.01)
    p = pseudo_label(_result(z), params)
    expected = []
    for i, row in enumerate(z):
        e = np.exp((row - row.max()) / params.temperature)
        prob = e / e.sum()
        top = sorted(prob, reverse=True)
        a = top[0] - top[1]
        if a >= params.alpha_threshold:
            expected.append((i, int(np.argmax(row)), a))
    assert p.indices.tolist() == [e[0] for e in expected]
    assert p.labels.tolist() == [e[1] for e in expected]
    np.testing.assert_allclose(p.confidence, [e[2] for e in expected], atol=1e-15)
    assert p.n_discarded == 500 - len(expected)


def test_filter_is_subset(rng):
    z = rng.normal(0, 5, (200, 3))
    full = pseudo_label(_result(z), ConfidenceParams(alpha_threshold=0.0))
    part = pseudo_label(_result(z), ConfidenceParams(alpha_threshold=0.05))
    pos = np.searchsorted(full.indices, part.indices)
    np.testing.assert_array_equal(full.labels[pos], part.labels)
    np.testing.assert_array_equal(full.confidence[pos], part.confidence)
    assert len(part) + part.n_discarded == len(full)


def test_summary_lines(rng):
    p = pseudo_label(_result(rng.normal(0, 50, (100, 2))))
    lines = confidence_summary(p).splitlines()
    assert lines[0] == f"kept,{len(p)}" and lines[1] == f"discarded,{p.n_discarded}"
    assert len(lines) == 12
    assert sum(int(line.split(",")[2]) for line in lines[2:]) == len(p)


# multiples of 1/64 keep z + shift exact, so rounding cannot create ties
dyadic = st.integers(-3200, 3200).map(lambda v: v / 64)


@settings(max_examples=100, deadline=None)
@given(arrays(float, st.integers(2, 6), elements=dyadic), dyadic, st.floats(0.5, 100))
def test_shift_invariance(z, shift, tau):
    a = pseudo_label(_result(z), ConfidenceParams(tau, 0.0))
    b = pseudo_label(_result(z + shift), ConfidenceParams(tau, 0.0))
    assert a.labels.tolist() == b.labels.tolist()
    assert abs(a.confidence[0] - b.confidence[0]) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(finite, finite, st.floats(0.1, 100), st.floats(0.1, 100))
def test_alpha_antitone_in_tau(z0, z1, t1, t2):
    if z0 == z1:
        return
    t1, t2 = sorted((t1, t2))
    a1 = margin_confidence(normalize_logits([z0, z1], t1))
    a2 = margin_confidence(normalize_logits([z0, z1], t2))
    assert a1 >= a2 - 1e-15


@settings(max_examples=50, deadline=None)
@given(arrays(float, st.integers(2, 8), elements=finite), st.floats(0.1, 100))
def test_probabilities_valid(z, tau):
    p = normalize_logits(z, tau)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1) <= 1e-12
