"""Pretraining, influence, and the exact retraining oracle."""

import numpy as np
import pytest

from lms3.theory import (
    IllConditionedError,
    SingularHessianError,
    SyntheticTask,
    influence,
    make_influence_probe,
    make_regression_task,
    point_grad,
    point_loss,
    predict_test_loss,
    pretrain,
    retrain_oracle,
    trial_rng,
)


def objective_gradient(task, w):
    """Gradient of the full pretraining objective, written out directly."""
    z, t = task.pretrain_inputs, task.pretrain_targets
    grad = np.zeros_like(w)
    for i in range(task.size):
        grad += np.outer(w @ z[i] - t[i], z[i])
    return grad / task.size + task.ridge * w


def test_orthonormal_design_zero_targets():
    d = 5
    task = SyntheticTask(pretrain_inputs=np.eye(d),
                         pretrain_targets=np.zeros((d, 3)), ridge=0.0)
    model = pretrain(task)
    np.testing.assert_allclose(model.w_hat, np.zeros((3, d)), atol=1e-14)
    # second moment is I/d, replicated across the 3 output rows
    np.testing.assert_allclose(model.spectrum.eig_min_h, 1 / d, rtol=1e-12)
    np.testing.assert_allclose(model.spectrum.eig_max_h, 1 / d, rtol=1e-12)


def test_realizable_targets_recover_planted_map(rng):
    d, d_prime = 6, 3
    w_star = rng.standard_normal((d_prime, d))
    inputs = rng.standard_normal((40, d))
    task = SyntheticTask(pretrain_inputs=inputs, pretrain_targets=inputs @ w_star.T,
                         ridge=0.0)
    model = pretrain(task)
    assert np.max(np.abs(model.w_hat - w_star)) < 1e-8


def test_gradient_norm_small_at_optimum(rng):
    task, _ = make_regression_task(rng, d=6, d_prime=3, size=64)
    model = pretrain(task)
    assert model.gradient_norm < 1e-8
    assert np.linalg.norm(objective_gradient(task, model.w_hat)) < 1e-8


def test_spectrum_inverse_consistency(rng):
    task, _ = make_regression_task(rng, d=8, d_prime=4, size=256)
    spec = pretrain(task).spectrum
    assert spec.eig_min_h > 0
    assert abs(spec.eig_max_hinv * spec.eig_min_h - 1.0) < 1e-8
    assert abs(spec.eig_min_hinv * spec.eig_max_h - 1.0) < 1e-8


def test_rank_deficient_without_ridge_is_singular():
    inputs = np.ones((6, 3))  # rank one
    task = SyntheticTask(pretrain_inputs=inputs, pretrain_targets=np.ones((6, 2)),
                         ridge=0.0)
    with pytest.raises(SingularHessianError):
        pretrain(task)


def test_too_few_points_rejected():
    with pytest.raises(ValueError, match="at least d=4"):
        SyntheticTask(pretrain_inputs=np.ones((3, 4)), pretrain_targets=np.ones((3, 2)))


# ---------------------------------------------------------------------------
# influence


def test_influence_zero_for_perfectly_fit_point(rng):
    task, _ = make_regression_task(rng, d=5, d_prime=2, size=50)
    model = pretrain(task)
    z0 = rng.standard_normal(5)
    z0_target = model.w_hat @ z0  # zero residual, zero gradient
    h_test = rng.standard_normal(5)
    value = influence(model, z0, z0_target, h_test, rng.standard_normal(2))
    assert value == 0.0


def test_influence_aligned_gradients_identity_hessian(rng):
    # inputs scaled so the second moment (hence the Hessian) is the identity
    d, d_prime = 4, 2
    inputs = np.sqrt(d) * np.eye(d)
    w_star = rng.standard_normal((d_prime, d))
    task = SyntheticTask(pretrain_inputs=inputs, pretrain_targets=inputs @ w_star.T,
                         ridge=0.0)
    model = pretrain(task)
    np.testing.assert_allclose(model.hessian, np.eye(d * d_prime), atol=1e-12)

    h_test = rng.standard_normal(d)
    t_test = rng.standard_normal(d_prime)
    expected = -float(np.linalg.norm(point_grad(model.w_hat, h_test, t_test)) ** 2)
    got = influence(model, h_test, t_test, h_test, t_test)
    assert got == pytest.approx(expected, rel=1e-12)


def test_influence_ill_conditioned_reported():
    # spread the input scales so the condition number passes 1e12
    inputs = np.diag([1.0, 3.2e-7])
    task = SyntheticTask(pretrain_inputs=inputs, pretrain_targets=np.zeros((2, 2)),
                         ridge=0.0)
    model = pretrain(task)
    assert model.condition_number > 1e12
    with pytest.raises(IllConditionedError):
        influence(model, np.ones(2), np.zeros(2), np.ones(2), np.zeros(2))


def test_influence_linear_in_upweighted_gradient(rng):
    task, w_star = make_regression_task(rng, d=6, d_prime=3, size=64)
    model = pretrain(task)
    h_test = rng.standard_normal(6)
    t_test = w_star @ h_test
    za, ta = rng.standard_normal(6), rng.standard_normal(3)
    zb, tb = rng.standard_normal(6), rng.standard_normal(3)
    single_sum = (influence(model, za, ta, h_test, t_test)
                  + influence(model, zb, tb, h_test, t_test))
    # joint evaluation through the summed gradient
    g = point_grad(model.w_hat, za, ta) + point_grad(model.w_hat, zb, tb)
    gt = point_grad(model.w_hat, h_test, t_test)
    joint = -float(gt.ravel() @ np.linalg.solve(model.hessian, g.ravel()))
    assert joint == pytest.approx(single_sum, abs=1e-12)


# ---------------------------------------------------------------------------
# first-order prediction vs exact retraining


def test_predict_identity_cases():
    assert predict_test_loss(1.0, 0.0, 10) == 1.0
    assert predict_test_loss(1.0, -0.5, 100) == pytest.approx(0.995, abs=1e-15)
    with pytest.raises(ValueError):
        predict_test_loss(1.0, 0.0, 0)


def test_retrain_eps_zero_returns_base(rng):
    task, w_star = make_regression_task(rng, d=5, d_prime=2, size=40)
    model = pretrain(task)
    h_test = rng.standard_normal(5)
    t_test = w_star @ h_test
    w_eps, loss = retrain_oracle(task, [(rng.standard_normal(5), rng.standard_normal(2))],
                                 0.0, h_test, t_test)
    np.testing.assert_allclose(w_eps, model.w_hat, atol=1e-12)
    assert loss == pytest.approx(point_loss(model.w_hat, h_test, t_test), rel=1e-12)


def test_retrain_fixed_point_for_fit_point(rng):
    task, _ = make_regression_task(rng, d=5, d_prime=2, size=40)
    model = pretrain(task)
    z0 = rng.standard_normal(5)
    t0 = model.w_hat @ z0
    for eps in (0.01, 0.5, 3.0):
        w_eps, _ = retrain_oracle(task, [(z0, t0)], eps,
                                  rng.standard_normal(5), rng.standard_normal(2))
        np.testing.assert_allclose(w_eps, model.w_hat, atol=1e-10)


def test_prediction_second_order_accurate(rng):
    # the error against exact retraining must shrink ~4x when eps halves
    for trial in range(10):
        gen = trial_rng(991, trial)
        task, w_star = make_regression_task(gen, d=8, d_prime=4, size=256)
        model = pretrain(task)
        z0, t0, h_test, t_test = make_influence_probe(gen, model, w_star)
        value = influence(model, z0, t0, h_test, t_test)
        base = point_loss(model.w_hat, h_test, t_test)

        def oracle_delta(eps):
            _, loss = retrain_oracle(task, [(z0, t0)], eps, h_test, t_test)
            return loss - base

        eps = 1.0 / task.size
        err_full = abs(value * eps - oracle_delta(eps))
        err_half = abs(value * eps / 2 - oracle_delta(eps / 2))
        assert err_full / abs(oracle_delta(eps)) <= 1e-3
        assert 3.5 <= err_full / err_half <= 4.5


def test_oracle_sign_matches_influence_when_dominant(rng):
    # whenever the first-order term dominates the estimated curvature term
    # by 10x, the exact loss change has the predicted sign
    agreements = checked = 0
    for trial in range(25):
        gen = trial_rng(555, trial)
        task, w_star = make_regression_task(gen, d=6, d_prime=3, size=128)
        model = pretrain(task)
        z0, t0, h_test, t_test = make_influence_probe(gen, model, w_star)
        value = influence(model, z0, t0, h_test, t_test)
        base = point_loss(model.w_hat, h_test, t_test)
        eps = 1.0 / task.size

        def oracle_delta(e):
            _, loss = retrain_oracle(task, [(z0, t0)], e, h_test, t_test)
            return loss - base

        delta = oracle_delta(eps)
        # Richardson estimate of the quadratic remainder coefficient
        curvature = (oracle_delta(eps) - 2 * oracle_delta(eps / 2)) * 2 / eps ** 2
        if abs(value) * eps > 10 * abs(curvature) * eps ** 2:
            checked += 1
            agreements += (np.sign(delta) == np.sign(value * eps))
    assert checked > 0
    assert agreements == checked
