"""Closed-form least-squares pretraining, influence, and exact retraining.

The model is linear, F(z) = W z with W of shape (d', d), and the loss at
a labeled point is the squared loss

    L(z, W) = 0.5 * || W z - t ||^2 .

Minimizing the mean loss over the pretraining set (plus an optional
ridge term 0.5 * ridge * ||W||_F^2) has a normal-equations solution, the
Hessian of the vectorized objective is an explicit (d*d') x (d*d')
matrix, and the objective upweighted by epsilon at extra points can be
re-minimized exactly.  That exact retraining is the ground-truth oracle
the first-order influence predictions are judged against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# relative eigenvalue floor below which the normal equations count as singular;
# kept below 1/CONDITION_LIMIT so merely ill-conditioned systems still pretrain
# and get reported at influence time instead
_SINGULAR_RTOL = 1e-14

CONDITION_LIMIT = 1e12


class SingularHessianError(np.linalg.LinAlgError):
    """The (ridged) normal equations are numerically singular."""


class IllConditionedError(np.linalg.LinAlgError):
    """Hessian condition number exceeds CONDITION_LIMIT."""


@dataclass(frozen=True)
class SyntheticTask:
    """Pretraining data for the linear model, with squared loss fixed."""

    pretrain_inputs: np.ndarray   # (size, d)
    pretrain_targets: np.ndarray  # (size, d_prime)
    ridge: float = 0.0

    def __post_init__(self):
        z = np.asarray(self.pretrain_inputs, dtype=np.float64)
        t = np.asarray(self.pretrain_targets, dtype=np.float64)
        if z.ndim != 2 or t.ndim != 2 or z.shape[0] != t.shape[0]:
            raise ValueError(
                f"inputs {z.shape} and targets {t.shape} must be 2-d with equal row counts")
        if z.shape[0] < z.shape[1]:
            raise ValueError(
                f"need at least d={z.shape[1]} pretraining points for a positive "
                f"definite Hessian, got {z.shape[0]}")
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(t))):
            raise ValueError("pretraining data must be finite")
        if not math.isfinite(self.ridge) or self.ridge < 0:
            raise ValueError(f"ridge must be finite and >= 0, got {self.ridge!r}")
        object.__setattr__(self, "pretrain_inputs", z)
        object.__setattr__(self, "pretrain_targets", t)

    @property
    def size(self) -> int:
        return self.pretrain_inputs.shape[0]

    @property
    def d(self) -> int:
        return self.pretrain_inputs.shape[1]

    @property
    def d_prime(self) -> int:
        return self.pretrain_targets.shape[1]


@dataclass(frozen=True)
class HessianSpectrum:
    """Extreme eigenvalues of the pretraining Hessian and of its inverse."""

    eig_min_h: float
    eig_max_h: float
    eig_max_hinv: float
    eig_min_hinv: float


@dataclass(frozen=True)
class PretrainedModel:
    """Minimizer of the (ridged) mean pretraining loss, with its Hessian."""

    w_hat: np.ndarray      # (d_prime, d)
    hessian: np.ndarray    # (d*d_prime, d*d_prime), row-major vec(W) layout
    spectrum: HessianSpectrum
    gradient_norm: float   # Frobenius norm of the objective gradient at w_hat
    gram: np.ndarray       # (d, d) ridged second-moment matrix of the inputs
    cross: np.ndarray      # (d_prime, d) target-input cross moment

    @property
    def condition_number(self) -> float:
        return self.spectrum.eig_max_h / self.spectrum.eig_min_h


def point_loss(w, z, target) -> float:
    r = np.asarray(w) @ np.asarray(z) - np.asarray(target)
    return 0.5 * float(r @ r)


def point_grad(w, z, target) -> np.ndarray:
    """Gradient of the squared loss in W: residual times z transposed."""
    z = np.asarray(z, dtype=np.float64)
    r = np.asarray(w) @ z - np.asarray(target, dtype=np.float64)
    return np.outer(r, z)


def pretrain(task: SyntheticTask) -> PretrainedModel:
    """Solve the normal equations and diagonalize the explicit Hessian."""
    z = task.pretrain_inputs
    t = task.pretrain_targets
    second_moment = z.T @ z / task.size
    gram = second_moment + task.ridge * np.eye(task.d)
    cross = t.T @ z / task.size

    gram_eigs = np.linalg.eigvalsh(gram)
    if gram_eigs[0] <= _SINGULAR_RTOL * max(gram_eigs[-1], 1.0):
        raise SingularHessianError(
            f"normal equations singular: smallest eigenvalue {gram_eigs[0]:.3e} "
            f"(ridge={task.ridge})")

    w_hat = np.linalg.solve(gram, cross.T).T

    # Hessian of the vectorized objective; rows of W are independent blocks.
    hessian = np.kron(np.eye(task.d_prime), gram)
    eig_h = np.linalg.eigvalsh(hessian)
    eig_hinv = np.linalg.eigvalsh(np.linalg.inv(hessian))
    spectrum = HessianSpectrum(eig_min_h=float(eig_h[0]), eig_max_h=float(eig_h[-1]),
                               eig_max_hinv=float(eig_hinv[-1]),
                               eig_min_hinv=float(eig_hinv[0]))

    grad = w_hat @ gram - cross
    return PretrainedModel(w_hat=w_hat, hessian=hessian, spectrum=spectrum,
                           gradient_norm=float(np.linalg.norm(grad)),
                           gram=gram, cross=cross)


def influence(model: PretrainedModel, z0, z0_target, h_test, test_target) -> float:
    """First-order effect on the test loss of upweighting the point z0.

    Negative values predict that upweighting z0 lowers the test loss.
    Solves the Hessian system for the upweighted gradient instead of
    forming the inverse.
    """
    if model.condition_number > CONDITION_LIMIT:
        raise IllConditionedError(
            f"Hessian condition number {model.condition_number:.3e} exceeds "
            f"{CONDITION_LIMIT:.0e}")
    g0 = point_grad(model.w_hat, z0, z0_target)
    gt = point_grad(model.w_hat, h_test, test_target)
    x = np.linalg.solve(model.hessian, g0.ravel())
    return -float(gt.ravel() @ x)


def predict_test_loss(base_loss: float, influence_value: float,
                      pretrain_size: int) -> float:
    """First-order test loss after upweighting by epsilon = 1/pretrain_size."""
    if pretrain_size < 1:
        raise ValueError(f"pretrain_size must be at least 1, got {pretrain_size}")
    return base_loss + influence_value / pretrain_size


def retrain_oracle(task: SyntheticTask, upweighted: list[tuple[np.ndarray, np.ndarray]],
                   epsilon: float, h_test, test_target) -> tuple[np.ndarray, float]:
    """Exactly minimize the mean loss plus epsilon times the upweighted losses.

    Independent of the influence machinery: this is the ground truth the
    first-order predictions are compared against.  Returns the retrained
    weights and the test loss under them.
    """
    z = task.pretrain_inputs
    t = task.pretrain_targets
    gram = z.T @ z / task.size + task.ridge * np.eye(task.d)
    cross = t.T @ z / task.size
    for zi, ti in upweighted:
        zi = np.asarray(zi, dtype=np.float64)
        ti = np.asarray(ti, dtype=np.float64)
        gram = gram + epsilon * np.outer(zi, zi)
        cross = cross + epsilon * np.outer(ti, zi)

    eigs = np.linalg.eigvalsh(gram)
    if eigs[0] <= _SINGULAR_RTOL * max(eigs[-1], 1.0):
        raise SingularHessianError(
            f"upweighted normal equations singular: smallest eigenvalue {eigs[0]:.3e}")
    w_eps = np.linalg.solve(gram, cross.T).T
    return w_eps, point_loss(w_eps, h_test, test_target)
