"""Reference selectors: random draw, TF-IDF nearest, Okapi BM25.

All three rank on demonstration problem text only.  Tokenization is
lowercase with splits on non-alphanumeric runs; digits are kept because
math problems carry meaningful numbers.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .bundle import DemonstrationPool

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def select_random(pool: DemonstrationPool, k: int, seed: int) -> list[str]:
    """k distinct ids, uniform without replacement.

    Reproducible: PCG64 seeded with `seed` drives a partial Fisher-Yates
    shuffle over pool order.
    """
    m = len(pool)
    if k > m:
        raise ValueError(f"cannot draw k={k} from a pool of {m}")
    rng = np.random.Generator(np.random.PCG64(seed))
    idx = list(range(m))
    for i in range(k):
        j = i + int(rng.integers(0, m - i))
        idx[i], idx[j] = idx[j], idx[i]
    return [pool.items[i].id for i in idx[:k]]


# ---------------------------------------------------------------------------
# TF-IDF


@dataclass(frozen=True)
class TfidfSelection:
    ids: tuple[str, ...]
    scores: tuple[float, ...]   # cosine similarity, aligned with ids
    empty_query: bool           # query had no tokens; pool-order prefix returned


def _tfidf_vectors(token_lists: list[list[str]], df: Counter, n_docs: int) -> list[dict]:
    """Raw tf times smoothed idf = ln((1+N)/(1+df)) + 1, L2-normalized."""
    vecs = []
    for tokens in token_lists:
        tf = Counter(tokens)
        vec = {t: count * (math.log((1 + n_docs) / (1 + df[t])) + 1.0)
               for t, count in tf.items()}
        norm = math.sqrt(sum(w * w for w in vec.values()))
        if norm > 0:
            vec = {t: w / norm for t, w in vec.items()}
        vecs.append(vec)
    return vecs


def select_tfidf(pool: DemonstrationPool, query: str, k: int) -> TfidfSelection:
    """k ids with the highest TF-IDF cosine to the query; pool order on ties."""
    m = len(pool)
    if m == 0:
        raise ValueError("cannot select from an empty pool")
    if k > m:
        raise ValueError(f"cannot select k={k} from a pool of {m}")

    doc_tokens = [tokenize(item.problem) for item in pool.items]
    query_tokens = tokenize(query)
    if not query_tokens:
        prefix = pool.items[:k]
        return TfidfSelection(ids=tuple(it.id for it in prefix),
                              scores=tuple(0.0 for _ in prefix), empty_query=True)

    df = Counter()
    for tokens in doc_tokens:
        for t in set(tokens):
            df[t] += 1
    vecs = _tfidf_vectors(doc_tokens + [query_tokens], df, m)
    doc_vecs, query_vec = vecs[:m], vecs[m]

    sims = [sum(w * doc.get(t, 0.0) for t, w in query_vec.items()) for doc in doc_vecs]
    order = sorted(range(m), key=lambda i: (-sims[i], i))[:k]
    return TfidfSelection(ids=tuple(pool.items[i].id for i in order),
                          scores=tuple(float(sims[i]) for i in order), empty_query=False)


# ---------------------------------------------------------------------------
# BM25


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.5
    b: float = 0.75

    def __post_init__(self):
        if not math.isfinite(self.k1) or self.k1 <= 0:
            raise ValueError(f"k1 must be a positive real, got {self.k1!r}")
        if not math.isfinite(self.b) or not (0.0 <= self.b <= 1.0):
            raise ValueError(f"b must be in [0, 1], got {self.b!r}")


@dataclass(frozen=True)
class Bm25Index:
    """Per-document term frequencies plus the corpus statistics BM25 needs."""

    term_freqs: tuple[Counter, ...]
    doc_lens: tuple[int, ...]
    avgdl: float
    df: Counter
    n_docs: int


def build_bm25_index(docs: list[str]) -> Bm25Index:
    token_lists = [tokenize(doc) for doc in docs]
    term_freqs = tuple(Counter(tokens) for tokens in token_lists)
    doc_lens = tuple(len(tokens) for tokens in token_lists)
    df = Counter()
    for tf in term_freqs:
        for t in tf:
            df[t] += 1
    avgdl = sum(doc_lens) / len(doc_lens) if doc_lens else 0.0
    return Bm25Index(term_freqs=term_freqs, doc_lens=doc_lens, avgdl=avgdl,
                     df=df, n_docs=len(docs))


def bm25_score(query: str, doc_index: int, index: Bm25Index,
               params: Bm25Params = Bm25Params()) -> float:
    """Okapi BM25 score of one document against the query.

    idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)); a term absent from the
    document contributes 0.
    """
    tf = index.term_freqs[doc_index]
    dl = index.doc_lens[doc_index]
    if index.avgdl == 0:
        return 0.0
    norm = params.k1 * (1.0 - params.b + params.b * dl / index.avgdl)
    score = 0.0
    for t in tokenize(query):
        f = tf.get(t, 0)
        if f == 0:
            continue
        df = index.df[t]
        idf = math.log(1.0 + (index.n_docs - df + 0.5) / (df + 0.5))
        score += idf * f * (params.k1 + 1.0) / (f + norm)
    return score


@dataclass(frozen=True)
class Bm25Selection:
    ids: tuple[str, ...]
    scores: tuple[float, ...]


def select_bm25(pool: DemonstrationPool, query: str, k: int,
                params: Bm25Params = Bm25Params()) -> Bm25Selection:
    """k ids with the highest BM25 score; pool order breaks ties."""
    m = len(pool)
    if m == 0:
        raise ValueError("cannot select from an empty pool")
    if k > m:
        raise ValueError(f"cannot select k={k} from a pool of {m}")
    index = build_bm25_index([item.problem for item in pool.items])
    scores = [bm25_score(query, i, index, params) for i in range(m)]
    order = sorted(range(m), key=lambda i: (-scores[i], i))[:k]
    return Bm25Selection(ids=tuple(pool.items[i].id for i in order),
                         scores=tuple(float(scores[i]) for i in order))
