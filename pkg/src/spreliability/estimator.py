"""scikit-learn style wrapper around the branch-and-cut solver."""
from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .bnb import SolveResult, solve
from .model import CutMode, RelaxationConfig
from .reliability import trace_values
from .validation import check_instance, check_masks


class ReliabilityMaximizer(BaseEstimator):
    """Pick the edge subset of a series-parallel graph with the highest all-terminal reliability.

    ``fit`` takes an instance (object, JSON text, path or parsed mapping) and
    solves it. ``predict`` scores masks on the fitted instance; with no
    argument it returns the optimal mask.

    Parameters
    ----------
    cut_mode : {"none", "envelope", "improved"}
        Which envelope cuts the relaxation separates.
    time_limit, node_limit : optional
        Search limits; when hit, ``status_`` reports which one and ``gap_`` is
        the remaining relative gap.
    """

    def __init__(self, cut_mode="improved", time_limit: Optional[float] = None, node_limit: Optional[int] = None,
                 max_cuts_per_node: int = 20, max_rounds: int = 5, violation_tol: float = 1e-6,
                 variable_benders: bool = False):
        self.cut_mode = cut_mode
        self.time_limit = time_limit
        self.node_limit = node_limit
        self.max_cuts_per_node = max_cuts_per_node
        self.max_rounds = max_rounds
        self.violation_tol = violation_tol
        self.variable_benders = variable_benders

    def _config(self) -> RelaxationConfig:
        return RelaxationConfig(
            cut_mode=CutMode.parse(self.cut_mode),
            max_cuts_per_node=self.max_cuts_per_node,
            max_rounds=self.max_rounds,
            violation_tol=self.violation_tol,
            variable_benders=self.variable_benders,
        )

    def fit(self, instance, y=None):
        inst = check_instance(instance)
        result: SolveResult = solve(inst, self._config(), self.time_limit, self.node_limit)
        self.instance_ = inst
        self.n_edges_ = inst.m
        self.result_ = result
        self.mask_ = np.array(result.mask, dtype=np.int8)
        self.reliability_ = result.reliability
        self.bound_ = result.bound
        self.gap_ = result.gap
        self.status_ = result.status
        return self

    def _check_fitted(self):
        if not hasattr(self, "result_"):
            raise NotFittedError("call fit before using this estimator")

    def predict(self, masks=None) -> np.ndarray:
        """Reliability of each mask (rows of 0/1 or bitstrings); the optimal mask if omitted."""
        self._check_fitted()
        if masks is None:
            return self.mask_.copy()
        X = check_masks(masks, self.n_edges_)
        p, seq = self.instance_.p, self.instance_.seq
        out = np.empty(X.shape[0])
        for i, row in enumerate(X):
            Y, _, Ob = trace_values(p, seq, row.tolist())
            out[i] = Y[-1] * Ob[-1]
        return out

    def score(self, masks=None, y=None) -> float:
        """Best reliability among ``masks`` (the fitted optimum when omitted)."""
        self._check_fitted()
        if masks is None:
            return float(self.reliability_)
        return float(self.predict(masks).max())
