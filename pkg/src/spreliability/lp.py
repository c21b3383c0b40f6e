"""Dense bounded-variable dual simplex.

Problems are ``max c @ x`` subject to rows ``A x <= b`` or ``A x == b`` and
box bounds ``lb <= x <= ub``. Each row gets a slack ``s = b - A x`` with
bounds ``[0, smax]`` (``[0, 0]`` for equalities), where ``smax`` is implied by
the structural box. Infinite structural bounds are replaced by an artificial
box of ``BIG``; an optimum that rests on an artificial bound is reported as
unbounded. With everything boxed, any basis can be made dual feasible by
putting each nonbasic column at the bound its reduced cost favours, so the
dual simplex needs no phase one and warm starts from any nonsingular basis.

Columns ``0..n-1`` are structural, ``n..n+r-1`` are the row slacks.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

FEAS_TOL = 1e-7
OPT_TOL = 1e-7
PIVOT_TOL = 1e-10
BIG = 1e9
BLAND_AFTER = 1000
REFACTOR_EVERY = 64

_SELECT_TOL = 1e-9
_HARRIS_TOL = 1e-9


class LPStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True)
class LPProblem:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    eq: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    row_keys: tuple = ()

    def __post_init__(self):
        r = self.A.shape[0]
        if not self.row_keys:
            object.__setattr__(self, "row_keys", tuple(range(r)))
        if len(self.row_keys) != r or len(self.b) != r or len(self.eq) != r:
            raise ValueError("row data lengths disagree")
        if self.A.ndim != 2 or self.A.shape[1] != len(self.c):
            raise ValueError("A must have shape (rows, len(c))")

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def r(self) -> int:
        return self.A.shape[0]

    @classmethod
    def from_rows(cls, c, rows: Sequence, lb, ub) -> "LPProblem":
        """Build from row objects with ``coefs`` (column -> value), ``rhs``, ``sense`` and ``key``."""
        c = np.asarray(c, dtype=float)
        A, b, eq, keys = _dense_rows(rows, len(c))
        return cls(c, A, b, eq, np.asarray(lb, dtype=float), np.asarray(ub, dtype=float), keys)

    def with_rows(self, rows: Sequence) -> "LPProblem":
        A, b, eq, keys = _dense_rows(rows, self.n, start=self.r)
        return LPProblem(self.c, np.vstack([self.A, A]), np.concatenate([self.b, b]),
                         np.concatenate([self.eq, eq]), self.lb, self.ub, self.row_keys + keys)

    def with_bounds(self, lb, ub) -> "LPProblem":
        return LPProblem(self.c, self.A, self.b, self.eq, np.asarray(lb, float), np.asarray(ub, float), self.row_keys)


def _dense_rows(rows, n, start=0):
    A = np.zeros((len(rows), n))
    b = np.zeros(len(rows))
    eq = np.zeros(len(rows), dtype=bool)
    keys = []
    for i, row in enumerate(rows):
        for j, v in row.coefs.items():
            A[i, j] += v
        b[i] = row.rhs
        eq[i] = row.sense == "=="
        key = getattr(row, "key", None)
        keys.append(key if key is not None else ("row", start + i))
    return A, b, eq, tuple(keys)


@dataclass(frozen=True)
class Basis:
    """Basis description that survives row additions and bound changes.

    Columns are referred to by structural index or ``("slack", row_key)``.
    """

    basic: frozenset
    at_upper: frozenset
    rows: frozenset


@dataclass
class LPSolution:
    status: LPStatus
    x: np.ndarray
    objective: float
    duals: np.ndarray
    basis: Optional[Basis] = None
    iterations: int = 0
    reduced_costs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    # rigorous upper bound on the optimum, from weak duality (nan unless optimal)
    bound: float = math.nan

    @property
    def optimal(self) -> bool:
        return self.status is LPStatus.OPTIMAL


class DualSimplex:
    """One solver state; rows can be appended and the problem re-optimized in place."""

    def __init__(self, lp: LPProblem, basis: Optional[Basis] = None, max_iter: Optional[int] = None):
        self.lp = lp
        self.n = lp.n
        self.max_iter = max_iter
        self.iterations = 0
        self.degenerate = 0
        self.bland = False
        self.artificial = np.zeros(lp.n, dtype=bool)
        self._load(lp)
        if basis is None or not self._warm(basis):
            self._cold()

    # -- setup -----------------------------------------------------------

    def _load(self, lp):
        n = lp.n
        lb = lp.lb.astype(float).copy()
        ub = lp.ub.astype(float).copy()
        lo_inf, hi_inf = ~np.isfinite(lb), ~np.isfinite(ub)
        lb[lo_inf] = -BIG
        ub[hi_inf] = BIG
        self.artificial = lo_inf | hi_inf
        self.bad_bounds = bool(np.any(lb > ub))
        self.A = np.array(lp.A, dtype=float)
        self.b = np.array(lp.b, dtype=float)
        self.eq = np.array(lp.eq, dtype=bool)
        self.row_keys = list(lp.row_keys)
        self.lb = np.concatenate([lb, np.zeros(lp.r)])
        self.ub = np.concatenate([ub, self._slack_upper(self.A, self.b, self.eq, lb, ub)])
        self.cost = np.concatenate([-lp.c.astype(float), np.zeros(lp.r)])
        self.x = np.zeros(n + lp.r)

    @staticmethod
    def _slack_upper(A, b, eq, lb, ub):
        low_activity = np.minimum(A * lb, A * ub).sum(axis=1)
        smax = np.maximum(b - low_activity, 0.0)
        smax = smax + 1e-9 * (1.0 + np.abs(smax))
        smax[eq] = 0.0
        return smax

    @property
    def r(self) -> int:
        return self.A.shape[0]

    def _column(self, j):
        if j < self.n:
            return self.A[:, j]
        col = np.zeros(self.r)
        col[j - self.n] = 1.0
        return col

    def _invert_basis(self, max_norm=None):
        """Basis inverse via the structural block; slack columns are unit vectors.

        With ``T`` the rows whose slack is basic and ``N`` the rest, only
        ``A[N, S]`` (S the basic structural columns) needs a dense inverse.
        """
        r, n = self.r, self.n
        struct_pos = np.flatnonzero(self.head < n)
        slack_pos = np.flatnonzero(self.head >= n)
        cols = self.head[struct_pos]
        t_rows = self.head[slack_pos] - n
        in_t = np.zeros(r, dtype=bool)
        in_t[t_rows] = True
        n_rows = np.flatnonzero(~in_t)
        if n_rows.size != cols.size:
            raise np.linalg.LinAlgError("basis is not square")
        Binv = np.zeros((r, r))
        if cols.size:
            Minv = np.linalg.inv(self.A[np.ix_(n_rows, cols)])
            if not np.all(np.isfinite(Minv)) or (max_norm is not None and np.abs(Minv).max() > max_norm):
                raise np.linalg.LinAlgError("ill-conditioned basis")
            Binv[np.ix_(struct_pos, n_rows)] = Minv
            Binv[np.ix_(slack_pos, n_rows)] = -self.A[np.ix_(t_rows, cols)] @ Minv
        Binv[slack_pos, t_rows] = 1.0
        return Binv

    def _basis_matrix(self):
        B = np.empty((self.r, self.r))
        for i, j in enumerate(self.head):
            B[:, i] = self._column(j)
        return B

    def _cold(self):
        r, n = self.r, self.n
        self.head = np.arange(n, n + r)
        self.Binv = np.eye(r)
        self.is_basic = np.zeros(n + r, dtype=bool)
        self.is_basic[self.head] = True
        self.at_upper = np.zeros(n + r, dtype=bool)
        self.at_upper[:n] = self.cost[:n] < 0.0
        self._recompute()

    def _warm(self, basis: Basis) -> bool:
        n = self.n
        index = {("slack", k): n + i for i, k in enumerate(self.row_keys)}
        head = []
        for ref in basis.basic:
            if isinstance(ref, (int, np.integer)):
                if ref < n:
                    head.append(int(ref))
            elif ref in index:
                head.append(index[ref])
        head.extend(n + i for i, k in enumerate(self.row_keys) if k not in basis.rows)
        if len(head) != self.r or len(set(head)) != len(head):
            return False
        self.head = np.array(sorted(head))
        self.is_basic = np.zeros(n + self.r, dtype=bool)
        self.is_basic[self.head] = True
        self.at_upper = np.zeros(n + self.r, dtype=bool)
        for ref in basis.at_upper:
            j = ref if isinstance(ref, (int, np.integer)) else index.get(ref)
            if j is not None and j < n + self.r and not self.is_basic[j]:
                self.at_upper[j] = True
        try:
            self.Binv = self._invert_basis(max_norm=1e10)
        except np.linalg.LinAlgError:
            return False
        self._recompute()
        return True

    def _recompute(self):
        """Refresh primal values and reduced costs from the current basis inverse."""
        nonbasic = ~self.is_basic
        self.x = np.where(self.at_upper, self.ub, self.lb)
        self.x[self.is_basic] = 0.0
        xs = self.x[: self.n]
        rhs = self.b - self.A @ xs - self.x[self.n:]
        # slack columns are identity, so subtracting x[n:] covers nonbasic slacks
        self.x[self.head] = self.Binv @ rhs
        y = self.cost[self.head] @ self.Binv
        self.y = y
        d = self.cost.copy()
        d[: self.n] -= y @ self.A
        d[self.n:] -= y
        d[self.is_basic] = 0.0
        self.d = d
        # dual feasibility by bound choice: every column is boxed
        free_to_flip = nonbasic & (self.lb < self.ub)
        flip_up = free_to_flip & ~self.at_upper & (d < -OPT_TOL)
        flip_down = free_to_flip & self.at_upper & (d > OPT_TOL)
        if flip_up.any() or flip_down.any():
            self.at_upper[flip_up] = True
            self.at_upper[flip_down] = False
            self._recompute()

    def _refactor(self):
        try:
            self.Binv = self._invert_basis()
        except np.linalg.LinAlgError:
            # updates drifted into a singular basis; the slack basis always works
            self._cold()
            return
        self._recompute()

    # -- rows --------------------------------------------------------------

    def add_rows(self, rows: Sequence):
        """Append rows with basic slacks; the basis stays dual feasible."""
        if not len(rows):
            return
        A_new, b_new, eq_new, keys = _dense_rows(rows, self.n, start=self.r)
        k = len(rows)
        r_old = self.r
        lb_s = self.lb[: self.n]
        ub_s = self.ub[: self.n]
        smax = self._slack_upper(A_new, b_new, eq_new, lb_s, ub_s)
        # basis inverse of [[B, 0], [Rb, I]] is [[Binv, 0], [-Rb Binv, I]]
        Rb = np.zeros((k, r_old))
        struct = self.head < self.n
        Rb[:, struct] = A_new[:, self.head[struct]]
        Binv = np.zeros((r_old + k, r_old + k))
        Binv[:r_old, :r_old] = self.Binv
        Binv[r_old:, :r_old] = -Rb @ self.Binv
        Binv[r_old:, r_old:] = np.eye(k)
        self.Binv = Binv
        n_tot = self.n + r_old
        self.A = np.vstack([self.A, A_new])
        self.b = np.concatenate([self.b, b_new])
        self.eq = np.concatenate([self.eq, eq_new])
        self.row_keys.extend(keys)
        self.lb = np.concatenate([self.lb, np.zeros(k)])
        self.ub = np.concatenate([self.ub, smax])
        self.cost = np.concatenate([self.cost, np.zeros(k)])
        self.x = np.concatenate([self.x, b_new - A_new @ self.x[: self.n]])
        self.d = np.concatenate([self.d, np.zeros(k)])
        self.is_basic = np.concatenate([self.is_basic, np.ones(k, dtype=bool)])
        self.at_upper = np.concatenate([self.at_upper, np.zeros(k, dtype=bool)])
        self.head = np.concatenate([self.head, np.arange(n_tot, n_tot + k)])
        self.y = np.concatenate([self.y, np.zeros(k)])

    # -- iterations ----------------------------------------------------------

    def solve(self) -> LPSolution:
        if self.bad_bounds:
            return self._result(LPStatus.INFEASIBLE)
        limit = self.max_iter if self.max_iter is not None else 50 * (self.n + self.r) + 1000
        since_refactor = 0
        checks = 0
        while True:
            if self.iterations >= limit:
                return self._result(LPStatus.ITERATION_LIMIT)
            if since_refactor >= REFACTOR_EVERY:
                self._refactor()
                since_refactor = 0
            step = self._iterate()
            if step == "optimal":
                # certify against the original rows; refactor only if updates drifted
                if since_refactor == 0 or self._row_residual() <= 1e-10:
                    break
                self._refactor()
                since_refactor = 0
                if self._max_infeasibility() <= FEAS_TOL or checks >= 3:
                    break
                checks += 1
                continue
            if step == "infeasible":
                self._refactor()
                since_refactor = 0
                if self._iterate(dry=True) == "infeasible" or checks >= 3:
                    return self._result(LPStatus.INFEASIBLE)
                checks += 1
                continue
            if step == "refactor":
                self._refactor()
                since_refactor = 0
                continue
            since_refactor += 1
        if self._max_infeasibility() > FEAS_TOL:
            return self._result(LPStatus.ITERATION_LIMIT)
        hit_box = self.artificial & (np.abs(self.x[: self.n]) >= BIG * (1 - 1e-12))
        if hit_box.any():
            return self._result(LPStatus.UNBOUNDED)
        return self._result(LPStatus.OPTIMAL)

    def _row_residual(self) -> float:
        if self.r == 0:
            return 0.0
        res = self.A @ self.x[: self.n] + self.x[self.n:] - self.b
        return float(np.abs(res).max() / (1.0 + np.abs(self.b).max()))

    def _infeasibilities(self):
        xb = self.x[self.head]
        return np.maximum(self.lb[self.head] - xb, xb - self.ub[self.head])

    def _max_infeasibility(self) -> float:
        if self.r == 0:
            return 0.0
        return float(max(self._infeasibilities().max(), 0.0))

    def _iterate(self, dry=False):
        if self.r == 0:
            return "optimal"
        infeas = self._infeasibilities()
        scale = 1.0 + np.abs(self.x[self.head])
        viol = infeas / scale
        cand_rows = np.flatnonzero(viol > _SELECT_TOL)
        if cand_rows.size == 0:
            return "optimal"
        if self.bland:
            p = int(cand_rows[np.argmin(self.head[cand_rows])])
        else:
            p = int(cand_rows[np.argmax(viol[cand_rows])])
        leaving = int(self.head[p])
        below = self.x[leaving] < self.lb[leaving]
        sigma = 1.0 if below else -1.0
        target = self.lb[leaving] if below else self.ub[leaving]

        rho = self.Binv[p]
        alpha = np.concatenate([rho @ self.A, rho])
        abar = sigma * alpha
        movable = ~self.is_basic & (self.lb < self.ub)
        up = self.at_upper
        cand = movable & ((~up & (abar < -PIVOT_TOL)) | (up & (abar > PIVOT_TOL)))
        idx = np.flatnonzero(cand)
        if idx.size == 0:
            return "infeasible"
        if dry:
            return "ok"
        a = abar[idx]
        dj = self.d[idx]
        lower = ~up[idx]
        ratio = np.where(lower, dj / -a, -dj / a)
        ratio = np.maximum(ratio, 0.0)
        if self.bland:
            best = ratio.min()
            ties = idx[ratio <= best + 1e-12]
            q = int(ties.min())
            s = float(ratio[idx == q][0])
        else:
            relaxed = np.where(lower, (dj + _HARRIS_TOL) / -a, (-dj + _HARRIS_TOL) / a)
            theta_max = max(relaxed.min(), 0.0)
            pick = np.flatnonzero(ratio <= theta_max)
            if pick.size == 0:
                if not np.all(np.isfinite(ratio)):
                    return "refactor"
                pick = np.flatnonzero(ratio <= ratio.min())
            k = pick[np.argmax(np.abs(a[pick]))]
            q = int(idx[k])
            s = float(ratio[k])

        col = self.Binv @ self._column(q)
        pivot = col[p]
        if abs(pivot) < PIVOT_TOL or abs(pivot - alpha[q]) > 1e-7 * (1.0 + abs(pivot)):
            return "refactor"

        if s <= 1e-12:
            self.degenerate += 1
            if self.degenerate >= BLAND_AFTER:
                self.bland = True

        # dual update
        self.d += s * abar
        self.d[self.head] = 0.0
        self.d[leaving] = sigma * s
        # primal update
        theta = (self.x[leaving] - target) / pivot
        self.x[self.head] -= theta * col
        self.x[q] += theta
        self.x[leaving] = target
        # basis update
        row_p = self.Binv[p] / pivot
        self.Binv -= np.outer(col, row_p)
        self.Binv[p] = row_p
        self.head[p] = q
        self.is_basic[q] = True
        self.is_basic[leaving] = False
        self.at_upper[leaving] = not below
        self.at_upper[q] = False
        self.d[q] = 0.0
        self.iterations += 1
        return "ok"

    # -- output ----------------------------------------------------------------

    def basis(self) -> Basis:
        n = self.n

        def ref(j):
            return int(j) if j < n else ("slack", self.row_keys[j - n])

        basic = frozenset(ref(j) for j in self.head)
        upper = frozenset(ref(j) for j in np.flatnonzero(self.at_upper & ~self.is_basic))
        return Basis(basic, upper, frozenset(self.row_keys))

    def _result(self, status: LPStatus) -> LPSolution:
        xs = self.x[: self.n].copy()
        if status is LPStatus.OPTIMAL:
            xs = np.clip(xs, self.lp.lb, self.lp.ub)
        obj = float(self.lp.c @ xs) if status is not LPStatus.INFEASIBLE else float("-inf")
        duals = np.zeros(self.r)
        if hasattr(self, "head") and self.r:
            # iterations update reduced costs only, so rebuild the row prices here
            self.y = self.cost[self.head] @ self.Binv
            duals = -self.y.copy()
        bound = math.nan
        if status is LPStatus.OPTIMAL:
            bound = max(dual_bound(self.A, self.b, self.eq, self.lp.c, self.lp.lb, self.lp.ub, duals), obj)
        return LPSolution(status, xs, obj, duals, self.basis() if hasattr(self, "head") else None,
                          self.iterations, -self.d[: self.n].copy() if hasattr(self, "d") else np.zeros(self.n),
                          bound)


def dual_bound(A, b, eq, c, lb, ub, y) -> float:
    """Upper bound on ``max c @ x`` over the rows and box, valid for any multipliers ``y``.

    Inequality multipliers are clipped at zero, so the bound holds even when
    the basis that produced ``y`` is slightly suboptimal. A cushion covers
    rounding in this evaluation and a few ulps of error in the rows themselves.
    """
    y = np.where(eq, y, np.maximum(y, 0.0))
    r = c - y @ A
    nz = r != 0.0
    hi = np.where(r > 0.0, ub, lb)
    if not np.all(np.isfinite(hi[nz])):
        return math.inf
    terms = np.concatenate([y * b, r[nz] * hi[nz]])
    eps = np.finfo(float).eps
    mag = np.where(np.isfinite(lb) & np.isfinite(ub), np.maximum(np.abs(lb), np.abs(ub)), 0.0)
    scale = np.abs(terms).sum() + (np.abs(y) @ np.abs(A) + np.abs(c)) @ mag
    cushion = (len(b) + 4) * eps * scale + 4 * eps * float(np.abs(y) @ (1.0 + np.abs(b)))
    return math.fsum(terms) + cushion


def solve(lp: LPProblem, warm: Optional[Basis] = None, max_iter: Optional[int] = None) -> LPSolution:
    """Solve ``lp``; ``warm`` is a basis from an earlier solve of a related problem."""
    return DualSimplex(lp, warm, max_iter).solve()


def add_rows_and_resolve(lp: LPProblem, solution: LPSolution, cuts: Sequence) -> tuple[LPProblem, LPSolution]:
    """Append ``cuts`` and re-optimize from the previous basis."""
    extended = lp.with_rows(cuts)
    return extended, solve(extended, warm=solution.basis)


def residuals(lp: LPProblem, x) -> dict:
    """Direct feasibility measures of ``x``, independent of any pivoting history."""
    act = lp.A @ x - lp.b
    row_viol = np.where(lp.eq, np.abs(act), np.maximum(act, 0.0))
    bound_viol = np.maximum(np.maximum(lp.lb - x, x - lp.ub), 0.0)
    return {
        "row": float(row_viol.max()) if row_viol.size else 0.0,
        "bound": float(bound_viol.max()) if bound_viol.size else 0.0,
    }
