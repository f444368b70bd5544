"""Model-aware similarity and stability scores for ranking demonstrations.

Two quantities are computed per candidate demonstration, both from the
inference model's own projection matrices:

  sim(X)  = || h_test - w_kq @ h ||     distance after the merged
                                        key-query projection
  stab(X) = || (w_v / sqrt(d)) @ h ||   length of the implicit update a
                                        demonstration applies; small
                                        values mean the model barely
                                        moves when shown X

Lower is better for both, so the combined score (product by default,
or sim + lambda1 * stab) is also minimized.  Each item is embedded on
its own, so scoring a pool of M candidates against N tests costs
O(M + N) encoder passes rather than O(M * N).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bundle import DemonstrationPool, ProjectionBundle, TestItem

VARIANT_PRODUCT = "product"
VARIANT_SUM = "sum"
VARIANTS = (VARIANT_PRODUCT, VARIANT_SUM)


class EmptyPoolError(ValueError):
    """Scoring an empty pool; callers should fall back to zero-shot."""


@dataclass(frozen=True)
class ScoreConfig:
    """How sim and stab combine into one score (minimized)."""

    variant: str = VARIANT_PRODUCT
    lambda1: float = 1.0  # weight on stab, sum variant only

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not math.isfinite(self.lambda1) or self.lambda1 < 0:
            raise ValueError(f"lambda1 must be finite and >= 0, got {self.lambda1!r}")


@dataclass(frozen=True)
class ScoredDemonstration:
    id: str
    sim: float
    stab: float
    score: float
    sim_rank_fraction: float  # 1-based ascending sim rank (min rank on ties) / M


def sim(h_test, h, w_kq) -> float:
    """Distance between the test embedding and the projected demonstration."""
    h_test = np.asarray(h_test, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    w_kq = np.asarray(w_kq, dtype=np.float64)
    if w_kq.shape != (h_test.shape[0], h.shape[0]):
        raise ValueError(
            f"dimension mismatch: w_kq {w_kq.shape}, h_test {h_test.shape}, h {h.shape}")
    return float(np.linalg.norm(h_test - w_kq @ h))


def stab(h, w_v, d: int) -> float:
    """Norm of the value projection of h, scaled by 1/sqrt(d)."""
    h = np.asarray(h, dtype=np.float64)
    w_v = np.asarray(w_v, dtype=np.float64)
    if d < 1:
        raise ValueError(f"d must be positive, got {d}")
    if w_v.ndim != 2 or w_v.shape[1] != h.shape[0]:
        raise ValueError(f"dimension mismatch: w_v {w_v.shape}, h {h.shape}")
    return float(np.linalg.norm((w_v / math.sqrt(d)) @ h))


def sim_rank_fractions(sims) -> np.ndarray:
    """1-based ascending ranks of sims (minimum rank on ties), over pool size."""
    sims = np.asarray(sims, dtype=np.float64)
    order = np.sort(sims)
    ranks = np.searchsorted(order, sims, side="left") + 1
    return ranks / sims.size


def score_pool(bundle: ProjectionBundle, pool: DemonstrationPool, test: TestItem,
               cfg: ScoreConfig = ScoreConfig()) -> list[ScoredDemonstration]:
    """Score every demonstration in the pool against one test item.

    Output order matches pool order.  Deterministic: each row is computed
    independently, so permuting the pool permutes the output identically.
    """
    if len(pool) == 0:
        raise EmptyPoolError("cannot score an empty demonstration pool")
    if pool.d != bundle.d:
        raise ValueError(f"pool dimension {pool.d} does not match bundle d={bundle.d}")
    h_test = np.asarray(test.embedding, dtype=np.float64)
    if h_test.shape[0] != bundle.d:
        raise ValueError(
            f"test embedding length {h_test.shape[0]} does not match bundle d={bundle.d}")

    sims = np.empty(len(pool))
    stabs = np.empty(len(pool))
    for i, item in enumerate(pool.items):
        sims[i] = sim(h_test, item.embedding, bundle.w_kq)
        stabs[i] = stab(item.embedding, bundle.w_v, bundle.d)

    if cfg.variant == VARIANT_PRODUCT:
        scores = sims * stabs
    else:
        scores = sims + cfg.lambda1 * stabs
    fractions = sim_rank_fractions(sims)

    return [
        ScoredDemonstration(id=item.id, sim=float(sims[i]), stab=float(stabs[i]),
                            score=float(scores[i]), sim_rank_fraction=float(fractions[i]))
        for i, item in enumerate(pool.items)
    ]


def zscore_normalize(scores) -> np.ndarray:
    """Center and scale to sample mean 0 and sample standard deviation 1.

    Uses the n-1 denominator.  A constant input has zero spread and maps
    to all zeros rather than dividing by zero.
    """
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError("zscore_normalize needs a flat list of at least 2 values")
    mean = arr.mean()
    sd = arr.std(ddof=1)
    if sd == 0.0:
        return np.zeros_like(arr)
    return (arr - mean) / sd
