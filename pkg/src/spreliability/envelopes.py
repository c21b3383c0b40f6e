"""Composition functions and their concave overestimators.

The three reductions are ``f1 = xy``, ``f2 = x + y - xy`` (parallel) and
``f3 = xy / (x + y - xy)`` (series). Every cut here is returned as a
:class:`LinearCut` over the role names ``"x"``, ``"y"`` (operands) and ``"z"``
(result); the model layer remaps roles to LP column indices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .reliability import trace_values

_DOM_TOL = 1e-12
MAX_COEF = 1e8


@dataclass(frozen=True)
class Box:
    Lx: float
    Ux: float
    Ly: float
    Uy: float

    def __post_init__(self):
        for lo, hi, name in ((self.Lx, self.Ux, "x"), (self.Ly, self.Uy, "y")):
            if not (-_DOM_TOL <= lo <= hi + _DOM_TOL and hi <= 1 + _DOM_TOL):
                raise ValueError(f"invalid {name} bounds [{lo}, {hi}]")


@dataclass(frozen=True)
class LinearCut:
    """Row ``sum(coefs[v] * v) <= rhs`` (or ``==``).

    ``scope`` is ``None`` for globally valid rows, otherwise the id of the
    branch-and-bound node whose subtree the row is valid in.
    """

    coefs: Mapping
    rhs: float
    sense: str = "<="
    scope: Optional[int] = None
    family: str = ""
    key: object = None

    @property
    def is_global(self) -> bool:
        return self.scope is None

    def activity(self, values) -> float:
        return sum(c * values[v] for v, c in self.coefs.items())

    def violation(self, values) -> float:
        """Positive when ``values`` breaks the row."""
        act = self.activity(values) - self.rhs
        return abs(act) if self.sense == "==" else act

    def bound(self, target, values) -> float:
        """Value of ``target`` that makes the row tight, given the other variables."""
        rest = sum(c * values[v] for v, c in self.coefs.items() if v != target)
        return (self.rhs - rest) / self.coefs[target]

    def remap(self, mapping, **changes) -> "LinearCut":
        coefs: dict = {}
        for v, c in self.coefs.items():
            j = mapping[v]
            coefs[j] = coefs.get(j, 0.0) + c
        return LinearCut(coefs, self.rhs, **{"sense": self.sense, "scope": self.scope,
                                              "family": self.family, "key": self.key, **changes})

    def with_scope(self, scope, key=None) -> "LinearCut":
        return LinearCut(self.coefs, self.rhs, self.sense, scope, self.family, key if key is not None else self.key)

    def is_safe(self) -> bool:
        if not math.isfinite(self.rhs):
            return False
        return all(math.isfinite(c) and abs(c) <= MAX_COEF for c in self.coefs.values())


def _overestimator(cx, cy, const, family) -> LinearCut:
    """Row ``z <= cx*x + cy*y + const``."""
    return LinearCut({"z": 1.0, "x": -cx, "y": -cy}, const, family=family)


# ---------------------------------------------------------------------------
# the composition functions


def _check_unit(*vals):
    for v in vals:
        if not (-_DOM_TOL <= v <= 1 + _DOM_TOL) or math.isnan(v):
            raise ValueError(f"argument {v} outside [0, 1]")


def f1(x, y):
    _check_unit(x, y)
    return x * y


def f2(x, y):
    _check_unit(x, y)
    return x + y - x * y


def f3(x, y):
    _check_unit(x, y)
    den = x + y - x * y
    if den == 0.0:
        return 0.0
    return x * y / den


# ---------------------------------------------------------------------------
# bilinear pieces


def mccormick_f1_cuts(box: Box) -> tuple[LinearCut, LinearCut]:
    """The two concave McCormick rows for ``z = xy``."""
    return (
        _overestimator(box.Ly, box.Ux, -box.Ux * box.Ly, "mccormick"),
        _overestimator(box.Uy, box.Lx, -box.Lx * box.Uy, "mccormick"),
    )


def f2_overestimator_cuts(box: Box) -> tuple[LinearCut, LinearCut]:
    """Concave envelope rows for ``z = x + y - xy`` (from the convex envelope of ``xy``)."""
    return (
        _overestimator(1.0 - box.Ly, 1.0 - box.Lx, box.Lx * box.Ly, "f2"),
        _overestimator(1.0 - box.Uy, 1.0 - box.Ux, box.Ux * box.Uy, "f2"),
    )


# ---------------------------------------------------------------------------
# series envelope over [0, Ux] x [0, Uy]


def _check_envelope_domain(x, y, Ux, Uy):
    _check_unit(Ux, Uy)
    if not (-_DOM_TOL <= x <= Ux + _DOM_TOL and -_DOM_TOL <= y <= Uy + _DOM_TOL):
        raise ValueError(f"point ({x}, {y}) outside [0, {Ux}] x [0, {Uy}]")


def _first_piece(x, y, Ux, Uy) -> bool:
    # x/Ux >= y/Uy without dividing; ties take the first piece
    return x * Uy >= y * Ux


def f3_envelope(x, y, Ux, Uy) -> float:
    """Concave envelope of ``f3`` over the box ``[0, Ux] x [0, Uy]``."""
    _check_envelope_domain(x, y, Ux, Uy)
    if Ux == 0.0 or Uy == 0.0 or (x == 0.0 and y == 0.0):
        return 0.0
    # xy / (x + y - Ux*y) written so that Ux = 1 returns y exactly (x > 0 on this piece)
    if _first_piece(x, y, Ux, Uy):
        return y / (1.0 + (y / x) * (1.0 - Ux))
    return x / (1.0 + (x / y) * (1.0 - Uy))


def f3_envelope_gradient(x, y, Ux, Uy) -> tuple[float, float]:
    """Gradient of the active envelope piece (homogeneous of degree 0)."""
    _check_envelope_domain(x, y, Ux, Uy)
    if Ux == 0.0 or Uy == 0.0:
        return 0.0, 0.0
    if x == 0.0 and y == 0.0:
        raise ValueError("envelope gradient is undefined at the origin")
    if _first_piece(x, y, Ux, Uy):
        den = x + y - Ux * y
        return (y / den) ** 2 * (1.0 - Ux), (x / den) ** 2
    den = x + y - x * Uy
    return (y / den) ** 2, (x / den) ** 2 * (1.0 - Uy)


def f3_tangent_cut(xstar, ystar, Ux, Uy) -> LinearCut:
    """Tangent plane of the envelope at ``(xstar, ystar)``; always passes through the origin."""
    if xstar == 0.0 and ystar == 0.0:
        raise ValueError("no unique tangent at the origin")
    gx, gy = f3_envelope_gradient(xstar, ystar, Ux, Uy)
    return _overestimator(gx, gy, 0.0, "tangent")


def f3_default_cuts() -> tuple[LinearCut, LinearCut]:
    """``z <= x`` and ``z <= y``: the envelope tangents at ``(0, Uy)`` and ``(Ux, 0)``."""
    return _overestimator(1.0, 0.0, 0.0, "default"), _overestimator(0.0, 1.0, 0.0, "default")


def f3_fixed_edge_cut(p, ykstar) -> LinearCut:
    """Tangent of ``y -> f3(p, y)`` at ``ykstar``, as a row over roles ``y`` and ``z``.

    ``f3(p, .)`` is concave on [0, 1], so the row is valid for every ``y``.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError(f"fixed operand value must lie in (0, 1], got {p}")
    _check_unit(ykstar)
    den = ykstar + p - ykstar * p
    slope = (p / den) ** 2
    value = p * ykstar / den
    return LinearCut({"z": 1.0, "y": -slope}, value - slope * ykstar, family="fixed_edge")


def f3_corner_cuts(Lj, Uj, Lk, Uk) -> tuple[LinearCut, LinearCut]:
    """Two overestimators of ``f3`` on ``[Lj, Uj] x [Lk, Uk]``, both tight at ``(Lj, Lk)``."""
    Box(Lj, Uj, Lk, Uk)
    if Lj == 0.0 and Lk == 0.0:
        raise ValueError("corner (0, 0): the series envelope is already exact there")
    base = f3(Lj, Lk)
    # divide before squaring so tiny bounds do not underflow to 0/0
    d_ll = Lj + Lk - Lj * Lk
    d_ul = Uj + Lk - Uj * Lk
    d_lu = Lj + Uk - Lj * Uk
    gx_a, gy_a = (Lk / d_ll) ** 2, (Uj / d_ul) ** 2
    gx_b, gy_b = (Uk / d_lu) ** 2, (Lj / d_ll) ** 2
    return (
        _overestimator(gx_a, gy_a, base - gx_a * Lj - gy_a * Lk, "corner"),
        _overestimator(gx_b, gy_b, base - gx_b * Lj - gy_b * Lk, "corner"),
    )


# ---------------------------------------------------------------------------
# bounds


@dataclass
class BoundSet:
    """Lower/upper bounds of Y, Omega and OmegaBar per id (0-based arrays of length 2m-1)."""

    LY: np.ndarray
    UY: np.ndarray
    LO: np.ndarray
    UO: np.ndarray
    LOb: np.ndarray
    UOb: np.ndarray
    fixed: tuple = field(default=())

    @property
    def LR(self) -> float:
        return float(self.LY[-1] * self.LOb[-1])

    @property
    def UR(self) -> float:
        return float(self.UY[-1] * self.UOb[-1])

    def collapsed(self, idx: int) -> bool:
        return self.LY[idx] == self.UY[idx]


def propagate_bounds(instance, fixed=None) -> BoundSet:
    """Bounds implied by a partial fixing (entries 0, 1 or None per edge).

    Every reduction is nondecreasing in both operands, so the lower bounds are
    the trace with free edges off and the upper bounds the trace with free
    edges on.
    """
    m = instance.m
    if fixed is None:
        fixed = (None,) * m
    fixed = tuple(fixed)
    if len(fixed) != m:
        raise ValueError(f"fixing has length {len(fixed)}, instance has {m} edges")
    lo_mask = [1 if f == 1 else 0 for f in fixed]
    hi_mask = [0 if f == 0 else 1 for f in fixed]
    LY, LO, LOb = trace_values(instance.p, instance.seq, lo_mask)
    UY, UO, UOb = trace_values(instance.p, instance.seq, hi_mask)
    return BoundSet(np.array(LY), np.array(UY), np.array(LO), np.array(UO),
                    np.array(LOb), np.array(UOb), fixed)
