"""Single-layer attention over [demonstrations, test], softmax and linear.

The merged key-query matrix w_kq plays the role of both projections:
keys are w_kq @ h and the query is h_test itself.  Linear attention
drops the softmax, which splits the output into a self term plus one
additive term per demonstration; the split and unsplit evaluations are
algebraically identical and both are exposed so tests can compare them.
"""

from __future__ import annotations

import math

import numpy as np


def _stack(h_list, h_test) -> np.ndarray:
    cols = list(h_list) + [h_test]
    return np.column_stack([np.asarray(h, dtype=np.float64) for h in cols])


def softmax_attention(h_list, h_test, w_kq, w_v, d: int) -> np.ndarray:
    """Attention output for the test position, softmax over k+1 slots."""
    h_test = np.asarray(h_test, dtype=np.float64)
    w_kq = np.asarray(w_kq, dtype=np.float64)
    w_v = np.asarray(w_v, dtype=np.float64)
    if w_kq.shape[1] != h_test.shape[0] or w_v.shape[1] != h_test.shape[0]:
        raise ValueError(
            f"dimension mismatch: w_kq {w_kq.shape}, w_v {w_v.shape}, h_test {h_test.shape}")
    cols = _stack(h_list, h_test)              # (d, k+1)
    logits = (w_kq @ cols).T @ h_test / math.sqrt(d)
    logits = logits - logits.max()             # stable softmax
    weights = np.exp(logits)
    weights /= weights.sum()
    return (w_v @ cols) @ weights


def linear_attention(h_list, h_test, w_kq, w_v, d: int) -> np.ndarray:
    """Softmax-free attention, evaluated as self term + per-demonstration terms."""
    h_test = np.asarray(h_test, dtype=np.float64)
    w_kq = np.asarray(w_kq, dtype=np.float64)
    w_v = np.asarray(w_v, dtype=np.float64)
    if w_kq.shape[1] != h_test.shape[0] or w_v.shape[1] != h_test.shape[0]:
        raise ValueError(
            f"dimension mismatch: w_kq {w_kq.shape}, w_v {w_v.shape}, h_test {h_test.shape}")
    scale = math.sqrt(d)
    out = (w_v / scale) @ h_test * float((w_kq @ h_test) @ h_test)
    for h in h_list:
        h = np.asarray(h, dtype=np.float64)
        out = out + (w_v / scale) @ h * float((w_kq @ h) @ h_test)
    return out


def linear_attention_unsplit(h_list, h_test, w_kq, w_v, d: int) -> np.ndarray:
    """Same map in one matrix expression: w_v [H, h_test] (w_kq [H, h_test])^T h_test / sqrt(d)."""
    h_test = np.asarray(h_test, dtype=np.float64)
    cols = _stack(h_list, h_test)
    w_kq = np.asarray(w_kq, dtype=np.float64)
    w_v = np.asarray(w_v, dtype=np.float64)
    return (w_v @ cols) @ ((w_kq @ cols).T @ h_test) / math.sqrt(d)
