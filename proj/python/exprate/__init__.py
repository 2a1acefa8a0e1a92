"""Kappa-N and bonus-malus experience rating with CPG and Tweedie models."""

import json

from ._core import (
    ArgumentError,
    BmsStructure,
    ConsistencyError,
    ConvergenceError,
    DivergenceError,
    ExperienceModel,
    ExprateError,
    FoldAssignmentError,
    ParseError,
    Portfolio,
    SchemaError,
    deviance_response,
    fit_bms,
    fit_bms_structure,
    fit_kappa_n,
    fit_standard,
    joint_log_density,
    level_trajectory,
    load_portfolio,
    logarithmic_score,
    model_loglik,
    off_balance_factor,
    p_from_shape,
    predict_contracts,
    relativity_table,
    save_portfolio,
    split_train_test,
)
from ._core import _simulate

__version__ = "0.1.0"


def simulate(spec=None, **overrides):
    """Simulated portfolio, truth columns and the full spec used.

    Keys are those of the simulate command's spec.json; anything not given
    keeps its default.
    """
    merged = dict(spec or {})
    merged.update(overrides)
    portfolio, truth, used = _simulate(json.dumps(merged))
    return portfolio, truth, json.loads(used)
