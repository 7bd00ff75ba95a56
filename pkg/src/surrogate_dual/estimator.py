"""scikit-learn style front-end: hyper-parameters in ``__init__``, work in ``fit``."""

from __future__ import annotations

import math
import os
from typing import Mapping

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .minlp import SolveLimits
from .model import AggregationMatrix, Model, load_model, model_from_dict
from .surrogate import SYMMETRY_MODES, BendersConfig, run_benders


def check_model(model) -> Model:
    """Accept a :class:`Model`, a JSON-like mapping or a path to an instance file."""
    if isinstance(model, Model):
        return model
    if isinstance(model, Mapping):
        return model_from_dict(model)
    if isinstance(model, (str, os.PathLike)):
        return load_model(model)
    raise TypeError(f"cannot interpret {type(model).__name__} as a model")


def check_warm_start(warm_start, m: int) -> AggregationMatrix | None:
    if warm_start is None:
        return None
    lam = warm_start if isinstance(warm_start, AggregationMatrix) else AggregationMatrix.from_array(warm_start)
    if lam.m != m:
        raise ValueError(f"warm start has {lam.m} columns, the model has {m} constraints")
    return lam


class SurrogateDual(BaseEstimator):
    """Surrogate dual bound of a polynomial MINLP.

    After ``fit`` the estimator exposes ``bound_``, ``lambda_`` (best
    aggregation, ``K x m``), ``n_iter_``, ``reason_`` and the full ``report_``.
    """

    def __init__(
        self,
        K=1,
        epsilon=1e-6,
        alpha=0.2,
        stall_limit=20,
        trust_radius=0.1,
        max_iterations=50,
        time_limit=math.inf,
        target_bound=None,
        symmetry="first",
        gap_limit=1e-4,
        node_limit=20_000,
    ):
        self.K = K
        self.epsilon = epsilon
        self.alpha = alpha
        self.stall_limit = stall_limit
        self.trust_radius = trust_radius
        self.max_iterations = max_iterations
        self.time_limit = time_limit
        self.target_bound = target_bound
        self.symmetry = symmetry
        self.gap_limit = gap_limit
        self.node_limit = node_limit

    def _config(self) -> BendersConfig:
        if self.symmetry not in SYMMETRY_MODES:
            raise ValueError(f"symmetry must be one of {SYMMETRY_MODES}")
        return BendersConfig(
            K=int(self.K),
            epsilon=float(self.epsilon),
            alpha=float(self.alpha),
            stall_limit=int(self.stall_limit),
            trust_radius=float(self.trust_radius),
            max_iterations=int(self.max_iterations),
            time_limit=float(self.time_limit),
            target_bound=self.target_bound,
            symmetry=self.symmetry,
            sub_limits=SolveLimits(node_limit=int(self.node_limit), gap_limit=float(self.gap_limit)),
        )

    def fit(self, X, y=None, warm_start=None):
        model = check_model(X)
        report = run_benders(model, self._config(), check_warm_start(warm_start, model.m))
        self.report_ = report
        self.bound_ = report.bound
        self.lambda_ = report.best_lambda.as_array()
        self.n_iter_ = report.iterations
        self.reason_ = report.reason
        return self

    def score(self, X=None, y=None) -> float:
        """The dual bound found by ``fit`` (larger is better)."""
        check_is_fitted(self, "bound_")
        return float(self.bound_)
