"""Seeded random instances for the Monte-Carlo verification runs.

Three families, matched to what each run must guarantee:

* regression tasks: planted linear map plus target noise; generic
  ground for pretraining and influence-vs-retraining comparisons.
* theorem instances: constructed so every premise of the sufficient
  condition holds exactly (pretrained weights realize the rank-one
  attention update, all demonstrations share one evaluation target).
  On these, a condition that holds MUST come with a first-order loss
  drop; any exception is an implementation bug, not sampling noise.
* generic instances: everything drawn independently; used for the
  bound chain, whose inequalities hold for arbitrary inputs.

Projection matrices are drawn with entries of standard deviation
1/sqrt(d), the usual attention initialization scale, which keeps the
bilinear forms O(1) so float comparisons at 1e-12 stay meaningful.
Per-trial generators come from PCG64 seeded with
SeedSequence(seed, spawn_key=(trial,)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .quadratic import PretrainedModel, SyntheticTask, pretrain

# proximity scale of the test point to the transformed demonstration,
# sampled log-uniform; wide enough to mix holds=True and holds=False trials
TAU_LOG10_RANGE = (-5.0, 0.0)

# influence probes sit well inside the first-order regime at eps = 1/size
PROBE_SCALE = 0.05      # probe input norm relative to the test embedding
PROBE_ALIGNMENT = 0.1   # probe residual size relative to the test residual


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=seed, spawn_key=(trial,))))


@dataclass(frozen=True)
class TheoremInstance:
    task: SyntheticTask
    model: PretrainedModel
    h_list: tuple[np.ndarray, ...]
    h_test: np.ndarray
    w_kq: np.ndarray
    w_v: np.ndarray

    @property
    def h(self) -> np.ndarray:
        return self.h_list[0]


def make_regression_task(rng: np.random.Generator, d: int, d_prime: int, size: int,
                         ridge: float = 1e-6,
                         noise: float = 0.1) -> tuple[SyntheticTask, np.ndarray]:
    """Planted-map regression task; returns the task and the planted map."""
    w_star = rng.standard_normal((d_prime, d))
    inputs = rng.standard_normal((size, d))
    targets = inputs @ w_star.T + noise * rng.standard_normal((size, d_prime))
    return SyntheticTask(pretrain_inputs=inputs, pretrain_targets=targets,
                         ridge=ridge), w_star


def make_theorem_instance(rng: np.random.Generator, d: int, d_prime: int, size: int,
                          ridge: float = 1e-6, k: int = 1) -> TheoremInstance:
    """Instance on which the sufficient-condition checks are exact theorems.

    Construction:
      1. draw projections and a first demonstration, place the test
         embedding near the transformed demonstration at a random
         proximity scale tau;
      2. pretrain on targets realized by the rank-one attention update,
         so the minimizer inherits its norm bound (the ridge only
         shrinks it);
      3. pick the shared evaluation target from the first demonstration
         and draw further demonstrations from the affine set on which
         the demonstration-gradient identity keeps holding.
    """
    w_kq = rng.standard_normal((d, d)) / math.sqrt(d)
    w_v = rng.standard_normal((d_prime, d)) / math.sqrt(d)
    h1 = rng.standard_normal(d)
    tau = 10.0 ** rng.uniform(*TAU_LOG10_RANGE)
    h_test = w_kq @ h1 + tau * rng.standard_normal(d)

    update = np.outer((w_v / math.sqrt(d)) @ h_test, w_kq @ h_test)
    inputs = rng.standard_normal((size, d))
    task = SyntheticTask(pretrain_inputs=inputs, pretrain_targets=inputs @ update.T,
                         ridge=ridge)
    model = pretrain(task)

    h_list = [h1]
    if k > 1:
        # gradient-consistency map: demonstrations must agree on G @ h
        gmap = w_v / math.sqrt(d) - model.w_hat @ w_kq
        null_basis = _null_space(gmap)
        for _ in range(k - 1):
            if null_basis.shape[1] > 0:
                h_list.append(h1 + tau * null_basis @ rng.standard_normal(null_basis.shape[1]))
            else:
                h_list.append(h1.copy())
    return TheoremInstance(task=task, model=model, h_list=tuple(h_list),
                           h_test=h_test, w_kq=w_kq, w_v=w_v)


def make_generic_instance(rng: np.random.Generator, d: int, d_prime: int, size: int,
                          ridge: float = 1e-6, k: int = 1) -> TheoremInstance:
    """Everything independent: embeddings, projections, noisy planted task."""
    task, _ = make_regression_task(rng, d, d_prime, size, ridge=ridge)
    model = pretrain(task)
    w_kq = rng.standard_normal((d, d)) / math.sqrt(d)
    w_v = rng.standard_normal((d_prime, d)) / math.sqrt(d)
    h_list = tuple(rng.standard_normal(d) for _ in range(k))
    h_test = rng.standard_normal(d)
    return TheoremInstance(task=task, model=model, h_list=h_list,
                           h_test=h_test, w_kq=w_kq, w_v=w_v)


def make_influence_probe(rng: np.random.Generator, model: PretrainedModel,
                         w_star: np.ndarray, noise: float = 0.1,
                         scale: float = PROBE_SCALE,
                         alignment: float = PROBE_ALIGNMENT):
    """Test point plus an upweighted probe in the clean first-order regime.

    The probe is a shrunk copy of the test embedding and its target is
    set so the probe residual is a small multiple of the test residual:
    the influence is then bounded away from zero and the second-order
    remainder stays a small fraction of the first-order term.
    Returns (z0, z0_target, h_test, test_target).
    """
    d = model.w_hat.shape[1]
    d_prime = model.w_hat.shape[0]
    h_test = rng.standard_normal(d)
    test_target = w_star @ h_test + noise * rng.standard_normal(d_prime)
    test_residual = model.w_hat @ h_test - test_target
    z0 = scale * h_test
    z0_target = model.w_hat @ z0 - alignment * test_residual
    return z0, z0_target, h_test, test_target


def _null_space(a: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the null space, columns; (n, 0) if trivial."""
    _, s, vt = np.linalg.svd(a)
    if s.size == 0:
        return vt.T
    cutoff = s[0] * max(a.shape) * np.finfo(np.float64).eps
    rank = int(np.sum(s > cutoff))
    return vt[rank:].T
