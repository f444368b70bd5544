"""Top-k selection with a relative-rank rejection gate and zero-shot fallback.

Candidates are taken in score order (ascending by default: scores are
built from quantities that should be small).  Each of the first k is
kept only if its sim value ranks within the top lambda fraction of the
pool; a candidate that fails the gate is rejected and NOT replaced by
the next one, so rejection shrinks the prompt.  If nothing survives,
the verdict is zero-shot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .scoring import ScoredDemonstration

POLARITY_MIN = "min"  # smaller score is better (default)
POLARITY_MAX = "max"
POLARITIES = (POLARITY_MIN, POLARITY_MAX)


@dataclass(frozen=True)
class SelectionConfig:
    k: int
    lambda_: float = 1.0  # keep a candidate only if sim_rank_fraction <= lambda_
    polarity: str = POLARITY_MIN

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be at least 1, got {self.k}")
        if not (0.0 < self.lambda_ <= 1.0) or not math.isfinite(self.lambda_):
            raise ValueError(f"lambda_ must be in (0, 1], got {self.lambda_!r}")
        if self.polarity not in POLARITIES:
            raise ValueError(f"polarity must be one of {POLARITIES}, got {self.polarity!r}")


@dataclass(frozen=True)
class RejectedDemonstration:
    id: str
    sim_rank_fraction: float


@dataclass(frozen=True)
class SelectionResult:
    chosen: tuple[ScoredDemonstration, ...]  # best score first
    rejected: tuple[RejectedDemonstration, ...]
    zero_shot: bool
    pool_size: int


def select_lms3(scored: list[ScoredDemonstration],
                cfg: SelectionConfig) -> SelectionResult:
    """Pick up to k demonstrations, rejecting weakly similar candidates.

    Ties in score break by pool order, so the result is deterministic.
    An empty scored list yields an immediate zero-shot verdict.
    """
    if not scored:
        return SelectionResult(chosen=(), rejected=(), zero_shot=True, pool_size=0)

    sign = 1.0 if cfg.polarity == POLARITY_MIN else -1.0
    order = sorted(range(len(scored)), key=lambda i: (sign * scored[i].score, i))

    chosen = []
    rejected = []
    for i in order[:cfg.k]:
        cand = scored[i]
        if cand.sim_rank_fraction <= cfg.lambda_:
            chosen.append(cand)
        else:
            rejected.append(RejectedDemonstration(id=cand.id,
                                                  sim_rank_fraction=cand.sim_rank_fraction))
    return SelectionResult(chosen=tuple(chosen), rejected=tuple(rejected),
                           zero_shot=not chosen, pool_size=len(scored))


@dataclass(frozen=True)
class SweepRow:
    lambda_: float
    mean_chosen: float
    zero_shot_rate: float


def sweep_lambda(scored_per_test: list[list[ScoredDemonstration]],
                 lambdas: list[float], k: int,
                 polarity: str = POLARITY_MIN) -> list[SweepRow]:
    """Selection statistics for each rejection threshold over a test set."""
    if not scored_per_test:
        raise ValueError("sweep_lambda needs at least one scored test")
    rows = []
    for lam in lambdas:
        cfg = SelectionConfig(k=k, lambda_=lam, polarity=polarity)
        results = [select_lms3(scored, cfg) for scored in scored_per_test]
        n = len(results)
        rows.append(SweepRow(
            lambda_=lam,
            mean_chosen=sum(len(r.chosen) for r in results) / n,
            zero_shot_rate=sum(r.zero_shot for r in results) / n,
        ))
    return rows
