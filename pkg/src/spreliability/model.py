"""Linear relaxation of the reliability maximization model.

Variables per instance with ``m`` edges: ``X_e`` (selection), and for every
id ``i = 1..2m-1`` the reduced reliability ``Y_i``, the correction factor
``Omega_i`` and the running product ``OmegaBar_i``; finally ``R``. Constant
variables (``Omega`` of leaves and parallel steps, ``OmegaBar`` of leaves) are
kept in the map with fixed bounds, which the simplex treats as substituted
constants. Every equality of the exact model is relaxed to ``<=`` its concave
overestimator; maximizing ``R`` makes those rows the only ones that matter.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .envelopes import (
    BoundSet,
    Box,
    LinearCut,
    f2_overestimator_cuts,
    f3_corner_cuts,
    f3_default_cuts,
    f3_fixed_edge_cut,
    mccormick_f1_cuts,
    propagate_bounds,
)
from .lp import LPProblem
from .spgraph import Instance


class ModelError(ValueError):
    pass


class CutMode(str, enum.Enum):
    WITHOUT_CUTS = "none"
    ENVELOPE_CUTS = "envelope"
    IMPROVED_ENVELOPE_CUTS = "improved"

    @classmethod
    def parse(cls, value) -> "CutMode":
        if isinstance(value, cls):
            return value
        aliases = {"without": cls.WITHOUT_CUTS, "withoutcuts": cls.WITHOUT_CUTS,
                   "envelopecuts": cls.ENVELOPE_CUTS, "improvedenvelopecuts": cls.IMPROVED_ENVELOPE_CUTS}
        key = str(value).lower().replace("_", "").replace("-", "")
        for mode in cls:
            if key == mode.value:
                return mode
        if key in aliases:
            return aliases[key]
        raise ValueError(f"unknown cut mode {value!r}; choose none, envelope or improved")


@dataclass(frozen=True)
class RelaxationConfig:
    cut_mode: CutMode = CutMode.IMPROVED_ENVELOPE_CUTS
    max_cuts_per_node: int = 20
    max_rounds: int = 5
    violation_tol: float = 1e-6
    # per-variable Benders rows on Y/Omega/OmegaBar; off by default because they
    # grow the LP faster than they shrink the tree
    variable_benders: bool = False

    def __post_init__(self):
        object.__setattr__(self, "cut_mode", CutMode.parse(self.cut_mode))
        if self.violation_tol <= 0 or self.max_cuts_per_node <= 0 or self.max_rounds < 0:
            raise ValueError("tolerances and limits must be positive")


@dataclass(frozen=True)
class VarMap:
    """Dense column layout: X, then Y, Omega, OmegaBar (ids 1..2m-1 each), then R."""

    m: int

    @property
    def n_ids(self) -> int:
        return 2 * self.m - 1

    @property
    def n_vars(self) -> int:
        return self.m + 3 * self.n_ids + 1

    def X(self, e: int) -> int:
        return e - 1

    def Y(self, i: int) -> int:
        return self.m + i - 1

    def Om(self, i: int) -> int:
        return self.m + self.n_ids + i - 1

    def Ob(self, i: int) -> int:
        return self.m + 2 * self.n_ids + i - 1

    @property
    def R(self) -> int:
        return self.m + 3 * self.n_ids

    @property
    def x_slice(self) -> slice:
        return slice(0, self.m)

    def names(self) -> list[str]:
        out = [f"X{e}" for e in range(1, self.m + 1)]
        for prefix in ("Y", "Om", "Ob"):
            out += [f"{prefix}{i}" for i in range(1, self.n_ids + 1)]
        return out + ["R"]


def _check_bounds(bounds: BoundSet):
    for lo, hi, name in ((bounds.LY, bounds.UY, "Y"), (bounds.LO, bounds.UO, "Omega"), (bounds.LOb, bounds.UOb, "OmegaBar")):
        if np.any(lo > hi + 1e-12):
            i = int(np.argmax(lo - hi)) + 1
            raise ModelError(f"inconsistent bounds for {name}{i}: L={lo[i - 1]} > U={hi[i - 1]}")


def objective(vm: VarMap) -> np.ndarray:
    c = np.zeros(vm.n_vars)
    c[vm.R] = 1.0
    return c


def variable_bounds(vm: VarMap, bounds: BoundSet, fixed=None) -> tuple[np.ndarray, np.ndarray]:
    """Column bounds: X in [0, 1] unless fixed, the rest from ``bounds``."""
    m = vm.m
    lb = np.zeros(vm.n_vars)
    ub = np.ones(vm.n_vars)
    if fixed is not None:
        for e, f in enumerate(fixed, start=1):
            if f is not None:
                lb[vm.X(e)] = ub[vm.X(e)] = float(f)
    ys = slice(vm.Y(1), vm.Y(vm.n_ids) + 1)
    oms = slice(vm.Om(1), vm.Om(vm.n_ids) + 1)
    obs = slice(vm.Ob(1), vm.Ob(vm.n_ids) + 1)
    lb[ys], ub[ys] = bounds.LY, bounds.UY
    lb[oms], ub[oms] = bounds.LO, bounds.UO
    lb[obs], ub[obs] = bounds.LOb, bounds.UOb
    lb[vm.R], ub[vm.R] = bounds.LR, bounds.UR
    # constants stay exactly 1 even if a zero upstream drove the products down
    for i in range(1, m + 1):
        lb[vm.Om(i)] = ub[vm.Om(i)] = 1.0
        lb[vm.Ob(i)] = ub[vm.Ob(i)] = 1.0
    return lb, ub


def static_rows(instance: Instance, vm: VarMap) -> list[LinearCut]:
    """Rows that do not depend on variable bounds."""
    rows = []
    for e, edge in enumerate(instance.edges, start=1):
        rows.append(LinearCut({vm.Y(e): 1.0, vm.X(e): -edge.p}, 0.0, "==", family="leaf", key=("leaf", e)))
    dx, dy = f3_default_cuts()
    for step in instance.seq.steps:
        i, j, k = step.result_id, step.left_id, step.right_id
        if step.is_series:
            roles = {"x": vm.Y(j), "y": vm.Y(k), "z": vm.Y(i)}
            rows.append(dx.remap(roles, key=("dflt_x", i)))
            rows.append(dy.remap(roles, key=("dflt_y", i)))
        else:
            rows.append(LinearCut({vm.Ob(i): 1.0, vm.Ob(i - 1): -1.0}, 0.0, "==", family="chain", key=("obpass", i)))
    rows.append(LinearCut({vm.X(e): 1.0 for e in range(1, vm.m + 1)}, float(instance.budget),
                          family="side", key=("card",)))
    for n, row in enumerate(instance.extra_rows):
        rows.append(LinearCut({vm.X(e): c for e, c in row.coefs.items()}, row.rhs, family="side", key=("extra", n)))
    return rows


def bound_rows(instance: Instance, vm: VarMap, bounds: BoundSet, ids=None, scope=None) -> list[LinearCut]:
    """Envelope rows whose coefficients come from ``bounds``.

    ``ids`` restricts the composition steps emitted (the objective rows are
    always included when ``ids`` is None or contains the root).
    """
    LY, UY, LO, UO, LOb, UOb = bounds.LY, bounds.UY, bounds.LO, bounds.UO, bounds.LOb, bounds.UOb
    rows = []
    for step in instance.seq.steps:
        i, j, k = step.result_id, step.left_id, step.right_id
        if ids is not None and i not in ids:
            continue
        box = Box(LY[j - 1], UY[j - 1], LY[k - 1], UY[k - 1])
        a, b = f2_overestimator_cuts(box)
        if step.is_series:
            roles = {"x": vm.Y(j), "y": vm.Y(k), "z": vm.Om(i)}
            rows.append(a.remap(roles, key=("omA", i), scope=scope))
            rows.append(b.remap(roles, key=("omB", i), scope=scope))
            prod = Box(LOb[i - 2], UOb[i - 2], LO[i - 1], UO[i - 1])
            ma, mb = mccormick_f1_cuts(prod)
            roles = {"x": vm.Ob(i - 1), "y": vm.Om(i), "z": vm.Ob(i)}
            rows.append(ma.remap(roles, key=("obA", i), scope=scope))
            rows.append(mb.remap(roles, key=("obB", i), scope=scope))
        else:
            roles = {"x": vm.Y(j), "y": vm.Y(k), "z": vm.Y(i)}
            rows.append(a.remap(roles, key=("f2a", i), scope=scope))
            rows.append(b.remap(roles, key=("f2b", i), scope=scope))
    root = vm.n_ids
    if ids is None or root in ids:
        ra, rb = mccormick_f1_cuts(Box(LY[root - 1], UY[root - 1], LOb[root - 1], UOb[root - 1]))
        roles = {"x": vm.Y(root), "y": vm.Ob(root), "z": vm.R}
        rows.append(ra.remap(roles, key=("Ra",), scope=scope))
        rows.append(rb.remap(roles, key=("Rb",), scope=scope))
    return rows


def build_relaxation(instance: Instance, bounds: Optional[BoundSet] = None,
                     config: Optional[RelaxationConfig] = None) -> tuple[LPProblem, VarMap]:
    """Root relaxation with X continuous in [0, 1]."""
    config = config or RelaxationConfig()
    bounds = bounds if bounds is not None else propagate_bounds(instance)
    _check_bounds(bounds)
    vm = VarMap(instance.m)
    rows = static_rows(instance, vm) + bound_rows(instance, vm, bounds)
    lb, ub = variable_bounds(vm, bounds, bounds.fixed or None)
    return LPProblem.from_rows(objective(vm), rows, lb, ub), vm


def row_count_bound(m: int) -> int:
    """Upper bound on global rows built for ``m`` edges (leaf + per-step + objective + cardinality)."""
    return m + 6 * (m - 1) + 3


def _changed_ids(instance, local: BoundSet, glob: BoundSet) -> set[int]:
    changed = set()
    for step in instance.seq.steps:
        i, j, k = step.result_id, step.left_id, step.right_id
        if (local.LY[j - 1] != glob.LY[j - 1] or local.UY[j - 1] != glob.UY[j - 1]
                or local.LY[k - 1] != glob.LY[k - 1] or local.UY[k - 1] != glob.UY[k - 1]
                or local.LOb[i - 2] != glob.LOb[i - 2] or local.UOb[i - 2] != glob.UOb[i - 2]):
            changed.add(i)
    if local.UR != glob.UR or local.LR != glob.LR:
        changed.add(instance.seq.root)
    return changed


def refresh_local_rows(instance: Instance, vm: VarMap, local: BoundSet, glob: BoundSet,
                       scope: int, point=None) -> list[LinearCut]:
    """Rows valid in the subtree whose fixings produced ``local``.

    * envelope rows rebuilt from the local bounds (same keys as the global ones,
      which they replace);
    * for an operand whose bounds collapsed to a value ``v``: the exact linear
      rows ``Y_i = v + (1-v) Y_k`` (parallel) or ``Omega_i = v + (1-v) Y_k``
      (series), and in series the tangent of ``f3(v, .)`` at the current
      ``Y_k`` when ``point`` is given;
    * series corner cuts once a lower bound is positive.
    """
    changed = _changed_ids(instance, local, glob)
    rows = bound_rows(instance, vm, local, ids=changed, scope=scope)
    LY, UY = local.LY, local.UY
    for step in instance.seq.steps:
        i, j, k = step.result_id, step.left_id, step.right_id
        if i not in changed:
            continue
        for fixed_op, other in ((j, k), (k, j)):
            if LY[fixed_op - 1] != UY[fixed_op - 1] or LY[other - 1] == UY[other - 1]:
                continue
            v = float(UY[fixed_op - 1])
            target = vm.Y(i) if not step.is_series else vm.Om(i)
            rows.append(LinearCut({target: 1.0, vm.Y(other): -(1.0 - v)}, v, "==", scope, "fixed_edge",
                                  ("feq", i, fixed_op)))
            if step.is_series and v > 0.0 and point is not None:
                yk = min(max(float(point[vm.Y(other)]), LY[other - 1]), UY[other - 1])
                cut = f3_fixed_edge_cut(v, yk).remap({"y": vm.Y(other), "z": vm.Y(i)}, scope=scope)
                if cut.is_safe():
                    rows.append(cut)
        if step.is_series and (LY[j - 1] > 0.0 or LY[k - 1] > 0.0) and UY[i - 1] > LY[i - 1]:
            roles = {"x": vm.Y(j), "y": vm.Y(k), "z": vm.Y(i)}
            ca, cb = f3_corner_cuts(LY[j - 1], UY[j - 1], LY[k - 1], UY[k - 1])
            for name, cut in (("cornerA", ca), ("cornerB", cb)):
                cut = cut.remap(roles, key=(name, i), scope=scope)
                if cut.is_safe():
                    rows.append(cut)
    return rows


# ---------------------------------------------------------------------------
# LP file export


def _lp_expr(coefs, names) -> str:
    parts = []
    for j, v in sorted(coefs.items()):
        if v == 0.0:
            continue
        sign = "-" if v < 0 else "+"
        mag = abs(v)
        term = names[j] if mag == 1.0 else f"{mag:.17g} {names[j]}"
        parts.append(f"{sign} {term}")
    if not parts:
        return "0 " + names[0]
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def write_lp_file(lp: LPProblem, vm: VarMap, path) -> None:
    """Export in the CPLEX LP text layout, with X declared binary."""
    names = vm.names()
    lines = ["\\ series-parallel reliability relaxation", "Maximize",
             " obj: " + _lp_expr({j: v for j, v in enumerate(lp.c) if v}, names), "Subject To"]
    for r in range(lp.r):
        coefs = {j: float(v) for j, v in enumerate(lp.A[r]) if v != 0.0}
        op = "=" if lp.eq[r] else "<="
        lines.append(f" c{r}: {_lp_expr(coefs, names)} {op} {lp.b[r]:.17g}")
    lines.append("Bounds")
    for j, name in enumerate(names):
        lo, hi = lp.lb[j], lp.ub[j]
        if lo == hi:
            lines.append(f" {name} = {lo:.17g}")
        else:
            lines.append(f" {lo:.17g} <= {name} <= {hi:.17g}")
    lines.append("Binary")
    lines.append(" " + " ".join(names[vm.X(e)] for e in range(1, vm.m + 1)))
    lines.append("End")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
