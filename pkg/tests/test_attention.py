"""Attention maps against naive loop implementations."""

import math

import numpy as np
import pytest

from lms3.theory import linear_attention, linear_attention_unsplit, softmax_attention


def naive_softmax_attention(h_list, h_test, w_kq, w_v, d):
    """Independent recomputation with explicit loops and raw softmax."""
    cols = list(h_list) + [h_test]
    logits = [float((w_kq @ h) @ h_test) / math.sqrt(d) for h in cols]
    weights = [math.exp(l) for l in logits]
    total = sum(weights)
    weights = [w / total for w in weights]
    out = np.zeros(w_v.shape[0])
    for w, h in zip(weights, cols):
        out += w * (w_v @ h)
    return out


def test_softmax_no_demonstrations_is_value_projection(rng):
    h_test = rng.standard_normal(4)
    w_kq = rng.standard_normal((4, 4))
    w_v = rng.standard_normal((2, 4))
    out = softmax_attention([], h_test, w_kq, w_v, 4)
    np.testing.assert_allclose(out, w_v @ h_test, atol=1e-14)


def test_softmax_identical_columns_share_weight(rng):
    h_test = rng.standard_normal(4)
    w_kq = rng.standard_normal((4, 4))
    w_v = rng.standard_normal((2, 4))
    out = softmax_attention([h_test, h_test], h_test, w_kq, w_v, 4)
    np.testing.assert_allclose(out, w_v @ h_test, atol=1e-12)


def test_softmax_matches_naive_oracle(rng):
    for _ in range(10):
        h_list = [rng.standard_normal(4) for _ in range(2)]
        h_test = rng.standard_normal(4)
        w_kq = rng.standard_normal((4, 4))
        w_v = rng.standard_normal((3, 4))
        np.testing.assert_allclose(
            softmax_attention(h_list, h_test, w_kq, w_v, 4),
            naive_softmax_attention(h_list, h_test, w_kq, w_v, 4),
            rtol=1e-12, atol=1e-12)


def test_softmax_dimension_mismatch(rng):
    with pytest.raises(ValueError, match="dimension mismatch"):
        softmax_attention([], rng.standard_normal(3), np.eye(4),
                          rng.standard_normal((2, 4)), 4)


def test_linear_no_demonstrations_single_term(rng):
    h_test = rng.standard_normal(5)
    w_kq = rng.standard_normal((5, 5))
    w_v = rng.standard_normal((2, 5))
    expected = (w_v / math.sqrt(5)) @ h_test * float((w_kq @ h_test) @ h_test)
    np.testing.assert_allclose(linear_attention([], h_test, w_kq, w_v, 5),
                               expected, atol=1e-13)


def test_linear_split_equals_unsplit(rng):
    for _ in range(20):
        h_list = [rng.standard_normal(6) for _ in range(3)]
        h_test = rng.standard_normal(6)
        w_kq = rng.standard_normal((6, 6))
        w_v = rng.standard_normal((3, 6))
        split = linear_attention(h_list, h_test, w_kq, w_v, 6)
        unsplit = linear_attention_unsplit(h_list, h_test, w_kq, w_v, 6)
        assert np.max(np.abs(split - unsplit)) < 1e-12


def test_linear_additivity_per_demonstration(rng):
    h1, h2 = rng.standard_normal(4), rng.standard_normal(4)
    h_test = rng.standard_normal(4)
    w_kq = rng.standard_normal((4, 4))
    w_v = rng.standard_normal((2, 4))
    both = linear_attention([h1, h2], h_test, w_kq, w_v, 4)
    one = linear_attention([h1], h_test, w_kq, w_v, 4)
    demo2_term = (w_v / 2.0) @ h2 * float((w_kq @ h2) @ h_test)
    np.testing.assert_allclose(both, one + demo2_term, atol=1e-12)
