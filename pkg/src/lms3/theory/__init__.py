"""Numerical laboratory for the influence-function view of in-context learning.

The lab works entirely on small synthetic least-squares tasks where the
pretrained weights, the Hessian, the influence of an upweighted point,
and the exactly retrained weights all have closed forms.  That makes
every claimed inequality checkable against ground truth rather than
against another approximation.
"""

from .attention import linear_attention, linear_attention_unsplit, softmax_attention
from .quadratic import (
    HessianSpectrum,
    IllConditionedError,
    PretrainedModel,
    SingularHessianError,
    SyntheticTask,
    influence,
    point_loss,
    point_grad,
    predict_test_loss,
    pretrain,
    retrain_oracle,
)
from .conditions import (
    BoundChainReport,
    ConditionReport,
    bound_chain,
    check_theorem1,
    check_theorem2,
)
from .instances import (
    TheoremInstance,
    make_generic_instance,
    make_influence_probe,
    make_regression_task,
    make_theorem_instance,
    trial_rng,
)
from .montecarlo import run_bound_trials, run_influence_trials, run_theorem_trials

__all__ = [
    "BoundChainReport",
    "ConditionReport",
    "HessianSpectrum",
    "IllConditionedError",
    "PretrainedModel",
    "SingularHessianError",
    "SyntheticTask",
    "TheoremInstance",
    "bound_chain",
    "check_theorem1",
    "check_theorem2",
    "influence",
    "linear_attention",
    "linear_attention_unsplit",
    "make_generic_instance",
    "make_influence_probe",
    "make_regression_task",
    "make_theorem_instance",
    "point_grad",
    "point_loss",
    "predict_test_loss",
    "pretrain",
    "retrain_oracle",
    "run_bound_trials",
    "run_influence_trials",
    "run_theorem_trials",
    "softmax_attention",
    "trial_rng",
]
