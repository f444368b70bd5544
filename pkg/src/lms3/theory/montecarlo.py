"""Monte-Carlo drivers aggregating per-trial reports into verdicts.

Each trial owns its seed and instance, so trials can run on a thread
pool; results are collected by trial index and the aggregation is a
deterministic reduction, which keeps reports byte-identical across
reruns and thread counts.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict

from .conditions import bound_chain, check_theorem1, check_theorem2
from .instances import (
    make_generic_instance,
    make_influence_probe,
    make_regression_task,
    make_theorem_instance,
    trial_rng,
)
from .quadratic import influence, point_loss, pretrain, retrain_oracle

# joint first-order change must equal the sum of single-demonstration ones
ADDITIVITY_TOL = 1e-12
# first-order prediction vs exact retraining, at eps = 1/pretrain_size
INFLUENCE_REL_TOL = 1e-3
# halving eps must shrink the prediction error about fourfold
RICHARDSON_RANGE = (3.5, 4.5)


def _map_trials(fn, trials: int, threads: int) -> list:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, range(trials)))
    return [fn(t) for t in range(trials)]


def run_theorem_trials(trials: int, d: int, d_prime: int, pretrain_size: int,
                       seed: int, ridge: float = 1e-6, k: int = 1,
                       threads: int = 1) -> dict:
    """Check the k-shot sufficient condition on premise-satisfying instances.

    Counts how often the condition holds, whether any holding trial
    fails to predict a loss drop (taylor_violations: must stay 0), how
    often prediction and exact retraining agree in sign, bound-chain
    failures on the same instances, and, for k > 1, the gap between the
    joint prediction and the sum of single-demonstration predictions.
    """

    def one(trial: int) -> dict:
        rng = trial_rng(seed, trial)
        inst = make_theorem_instance(rng, d, d_prime, pretrain_size,
                                     ridge=ridge, k=k)
        report = check_theorem2(inst.task, inst.model, inst.h_list, inst.h_test,
                                inst.w_kq, inst.w_v)
        record = {"trial": trial, **asdict(report)}
        chain_bad = 0
        for h in inst.h_list:
            chain = bound_chain(inst.task, inst.model, h, inst.h_test,
                                inst.w_kq, inst.w_v)
            chain_bad += not chain.chain_ok
        record["chain_violations"] = chain_bad
        if k > 1:
            singles = sum(
                check_theorem1(inst.task, inst.model, h, inst.h_test,
                               inst.w_kq, inst.w_v).predicted_delta
                for h in inst.h_list)
            record["additivity_gap"] = abs(report.predicted_delta - singles)
        return record

    records = _map_trials(one, trials, threads)

    aggregate = {
        "trials": trials,
        "holds_count": sum(r["holds"] for r in records),
        "taylor_violations": sum(
            1 for r in records if r["holds"] and r["predicted_delta"] >= 0),
        "oracle_sign_agreements": sum(
            1 for r in records if r["predicted_delta"] * r["oracle_delta"] > 0),
        "chain_violations": sum(r["chain_violations"] for r in records),
    }
    if k > 1:
        gaps = [r["additivity_gap"] for r in records]
        aggregate["additivity_violations"] = sum(g > ADDITIVITY_TOL for g in gaps)
        aggregate["max_additivity_gap"] = max(gaps) if gaps else 0.0
    return {"kind": f"theorem{1 if k == 1 else 2}", "k": k,
            "aggregate": aggregate, "trials": records}


def run_bound_trials(trials: int, d: int, d_prime: int, pretrain_size: int,
                     seed: int, ridge: float = 1e-6, threads: int = 1) -> dict:
    """Check the inequality chain on fully generic instances."""

    def one(trial: int) -> dict:
        rng = trial_rng(seed, trial)
        inst = make_generic_instance(rng, d, d_prime, pretrain_size, ridge=ridge)
        chain = bound_chain(inst.task, inst.model, inst.h, inst.h_test,
                            inst.w_kq, inst.w_v)
        return {"trial": trial, **asdict(chain)}

    records = _map_trials(one, trials, threads)
    aggregate = {
        "trials": trials,
        "holds_count": None,
        "taylor_violations": None,
        "oracle_sign_agreements": None,
        "chain_violations": sum(1 for r in records if not r["chain_ok"]),
    }
    return {"kind": "bounds", "aggregate": aggregate, "trials": records}


def run_influence_trials(trials: int, d: int, d_prime: int, pretrain_size: int,
                         seed: int, ridge: float = 1e-6, threads: int = 1) -> dict:
    """Compare first-order loss-change predictions with exact retraining.

    At eps = 1/pretrain_size the prediction must match the retrained
    loss change within INFLUENCE_REL_TOL relative error, and halving
    eps must shrink the error by a factor within RICHARDSON_RANGE.
    """
    eps = 1.0 / pretrain_size

    def one(trial: int) -> dict:
        rng = trial_rng(seed, trial)
        task, w_star = make_regression_task(rng, d, d_prime, pretrain_size,
                                            ridge=ridge)
        model = pretrain(task)
        z0, z0_target, h_test, test_target = make_influence_probe(rng, model, w_star)
        infl = influence(model, z0, z0_target, h_test, test_target)
        base = point_loss(model.w_hat, h_test, test_target)

        def oracle_delta(e: float) -> float:
            _, loss = retrain_oracle(task, [(z0, z0_target)], e, h_test, test_target)
            return loss - base

        delta_full = oracle_delta(eps)
        delta_half = oracle_delta(eps / 2)
        err_full = abs(infl * eps - delta_full)
        err_half = abs(infl * (eps / 2) - delta_half)
        rel_error = err_full / abs(delta_full)
        richardson = err_full / err_half
        return {
            "trial": trial,
            "influence": infl,
            "predicted_delta": infl * eps,
            "oracle_delta": delta_full,
            "relative_error": rel_error,
            "richardson_factor": richardson,
        }

    records = _map_trials(one, trials, threads)
    lo, hi = RICHARDSON_RANGE
    aggregate = {
        "trials": trials,
        "max_relative_error": max(r["relative_error"] for r in records),
        "min_richardson_factor": min(r["richardson_factor"] for r in records),
        "max_richardson_factor": max(r["richardson_factor"] for r in records),
        "tolerance_violations": sum(
            1 for r in records
            if r["relative_error"] > INFLUENCE_REL_TOL
            or not (lo <= r["richardson_factor"] <= hi)),
    }
    return {"kind": "influence", "aggregate": aggregate, "trials": records}
