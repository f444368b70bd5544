"""Demonstration selection driven by the inference model's own projections.

Candidates are ranked by a model-aware similarity (distance after the
merged key-query projection) combined with an inference-stability term
(norm of the value projection); a relative-rank gate rejects weak
candidates outright, falling back to zero-shot.  A bundled theory lab
re-derives the guarantees behind those scores on synthetic tasks where
exact retraining is available as ground truth.
"""

from .bundle import (
    BundleError,
    Demonstration,
    DemonstrationPool,
    ProjectionBundle,
    TestItem,
    load_bundle,
    write_bundle,
)
from .scoring import (
    EmptyPoolError,
    ScoreConfig,
    ScoredDemonstration,
    score_pool,
    sim,
    sim_rank_fractions,
    stab,
    zscore_normalize,
)
from .selection import (
    RejectedDemonstration,
    SelectionConfig,
    SelectionResult,
    SweepRow,
    select_lms3,
    sweep_lambda,
)
from .baselines import (
    Bm25Index,
    Bm25Params,
    Bm25Selection,
    TfidfSelection,
    bm25_score,
    build_bm25_index,
    select_bm25,
    select_random,
    select_tfidf,
    tokenize,
)
from . import theory

__version__ = "0.1.0"

__all__ = [
    "Bm25Index",
    "Bm25Params",
    "Bm25Selection",
    "BundleError",
    "Demonstration",
    "DemonstrationPool",
    "EmptyPoolError",
    "ProjectionBundle",
    "RejectedDemonstration",
    "ScoreConfig",
    "ScoredDemonstration",
    "SelectionConfig",
    "SelectionResult",
    "SweepRow",
    "TestItem",
    "TfidfSelection",
    "bm25_score",
    "build_bm25_index",
    "load_bundle",
    "score_pool",
    "select_bm25",
    "select_lms3",
    "select_random",
    "select_tfidf",
    "sim",
    "sim_rank_fractions",
    "stab",
    "sweep_lambda",
    "theory",
    "tokenize",
    "write_bundle",
    "zscore_normalize",
]
