"""Branch-and-cut over the X variables.

Each node solves the linear relaxation with its fixings, then

* if X is integral, evaluates the true reliability of that mask and adds
  combinatorial Benders cuts until the relaxation agrees with it;
* otherwise separates series-envelope tangent cuts (and, in the improved
  mode, local cuts) for a few rounds before branching on the most
  fractional X.

Benders cuts make the search exact in every cut mode: an integral point is
only accepted once the LP objective matches its evaluated reliability.
"""
from __future__ import annotations

import heapq
import itertools
import json
import logging
import math
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .envelopes import BoundSet, LinearCut, f3_envelope, f3_fixed_edge_cut, f3_tangent_cut, propagate_bounds
from .lp import Basis, DualSimplex, LPProblem, LPStatus
from .model import (
    CutMode,
    RelaxationConfig,
    VarMap,
    bound_rows,
    objective,
    refresh_local_rows,
    static_rows,
    variable_bounds,
)
from .reliability import evaluate, reliability, trace_values
from .spgraph import Instance, all_supports, materialize

log = logging.getLogger(__name__)

INT_TOL = 1e-6
PRUNE_TOL = 1e-9
GAP_TOL = 1e-6
CUT_AGE_LIMIT = 8


@dataclass
class Node:
    id: int
    fixed: tuple
    bounds: BoundSet
    local_cuts: list
    parent_bound: float
    depth: int
    basis: Optional[Basis] = None

    @property
    def free(self) -> list[int]:
        return [e for e, f in enumerate(self.fixed, start=1) if f is None]


@dataclass
class SolveResult:
    mask: Optional[tuple]
    reliability: float
    bound: float
    gap: float
    nodes: int
    cuts: dict
    time_s: float
    status: str
    root_bound: float = float("nan")
    lp_iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def to_json(self) -> str:
        doc = asdict(self)
        doc["mask"] = "".join(str(b) for b in self.mask) if self.mask is not None else None
        return json.dumps(doc, indent=2, sort_keys=True)


def _gap(bound, incumbent) -> float:
    return max(bound - incumbent, 0.0) / max(incumbent, 1e-12)


class BranchAndCut:
    """Search state for one instance; call :meth:`run` once."""

    def __init__(self, instance: Instance, config: Optional[RelaxationConfig] = None,
                 time_limit: Optional[float] = None, node_limit: Optional[int] = None):
        self.inst = instance
        self.config = config or RelaxationConfig()
        self.mode = self.config.cut_mode
        self.time_limit = time_limit
        self.node_limit = node_limit
        self.vm = VarMap(instance.m)
        self.glob = propagate_bounds(instance)
        self.static = static_rows(instance, self.vm)
        self.global_bound_rows = bound_rows(instance, self.vm, self.glob)
        self.pool: list[LinearCut] = []
        self._pool_sigs: dict = {}
        self._pool_active: list[bool] = []
        self._pool_age: list[int] = []
        self._pool_dense: list = []
        self._pool_cache = None
        self.cut_counts: Counter = Counter()
        self.incumbent: Optional[tuple] = None
        self.incumbent_value = -math.inf
        self.supports = all_supports(instance.seq)
        self._prefix_series = self._series_prefix_sets()
        self._ids = itertools.count()
        self.nodes = 0
        self.lp_iterations = 0
        self.root_bound = math.nan

    # -- helpers -------------------------------------------------------------

    def _series_prefix_sets(self):
        out = [frozenset()] * self.inst.m
        acc = frozenset()
        for step in self.inst.seq.steps:
            if step.is_series:
                acc = acc | self.supports[step.result_id - 1]
            out.append(acc)
        return out

    def _elapsed(self) -> float:
        return time.perf_counter() - self._t0

    def _out_of_time(self) -> bool:
        return self.time_limit is not None and self._elapsed() >= self.time_limit

    def _offer(self, mask) -> float:
        mask = tuple(int(v) for v in mask)
        if not self.inst.is_feasible(mask):
            return -math.inf
        value = reliability(self.inst, mask)
        if value > self.incumbent_value + PRUNE_TOL or (self.incumbent is None):
            self.incumbent, self.incumbent_value = mask, value
            self._add_incumbent_cut(mask, value)
        return value

    def _greedy_start(self):
        """Drop edges from the full graph, cheapest reliability loss first, until feasible."""
        mask = [1] * self.inst.m
        while not self.inst.is_feasible(mask):
            best, best_e = -1.0, None
            for e in range(self.inst.m):
                if not mask[e]:
                    continue
                mask[e] = 0
                r = reliability(self.inst, mask)
                mask[e] = 1
                if r > best:
                    best, best_e = r, e
            if best_e is None:
                return
            mask[best_e] = 0
        self._offer(mask)

    def _round(self, node: Node, x):
        order = sorted(range(self.inst.m), key=lambda e: (-x[e], -self.inst.edges[e].p))
        mask = [1 if f == 1 else 0 for f in node.fixed]
        room = self.inst.budget - sum(mask)
        for e in order:
            if room <= 0:
                break
            if node.fixed[e] is None and x[e] > 1e-9:
                mask[e] = 1
                room -= 1
        self._offer(mask)

    def _add_global(self, cut: LinearCut, solver: Optional[DualSimplex] = None) -> bool:
        if not cut.is_safe():
            return False
        sig = (tuple(sorted((k, round(v, 12)) for k, v in cut.coefs.items())), round(cut.rhs, 12), cut.sense)
        idx = self._pool_sigs.get(sig)
        if idx is not None:
            if self._pool_active[idx]:
                return False
            return self._activate([idx], solver) > 0
        self._pool_sigs[sig] = len(self.pool)
        cut = LinearCut(cut.coefs, cut.rhs, cut.sense, None, cut.family, ("g", len(self.pool)))
        self.pool.append(cut)
        self._pool_active.append(True)
        self._pool_age.append(0)
        row = np.zeros(self.vm.n_vars)
        for j, v in cut.coefs.items():
            row[j] += v
        self._pool_dense.append(row)
        self._pool_cache = None
        self.cut_counts[cut.family] += 1
        if solver is not None:
            solver.add_rows([cut])
        return True

    def _activate(self, indices, solver) -> int:
        for i in indices:
            self._pool_active[i] = True
            self._pool_age[i] = 0
        if solver is not None and indices:
            solver.add_rows([self.pool[i] for i in indices])
        return len(indices)

    def _pool_matrix(self):
        if self._pool_cache is None or self._pool_cache[0].shape[0] != len(self.pool):
            self._pool_cache = (np.array(self._pool_dense), np.array([c.rhs for c in self.pool]))
        return self._pool_cache

    def _pool_slack(self, x):
        A, b = self._pool_matrix()
        return b - A @ x

    def _separate_pool(self, x, solver) -> int:
        """Re-activate retired pool rows that ``x`` violates."""
        if not self.pool or all(self._pool_active):
            return 0
        slack = self._pool_slack(x)
        hit = [i for i in np.flatnonzero(slack < -self.config.violation_tol) if not self._pool_active[i]]
        return self._activate(hit, solver)

    def _age_pool(self, x, loose_keys):
        if not self.pool:
            return
        slack = self._pool_slack(x)
        for i in range(len(self.pool)):
            if not self._pool_active[i]:
                continue
            if slack[i] > 1e-6 and ("g", i) in loose_keys:
                self._pool_age[i] += 1
                if self._pool_age[i] >= CUT_AGE_LIMIT:
                    self._pool_active[i] = False
            else:
                self._pool_age[i] = 0

    # -- cuts ----------------------------------------------------------------

    def _add_incumbent_cut(self, mask, value):
        vm = self.vm
        coefs = {vm.R: -1.0}
        for e, on in enumerate(mask, start=1):
            if on:
                coefs[vm.X(e)] = 1.0
        self._add_global(LinearCut(coefs, sum(mask) - value, family="benders_lb"))

    def lazy_cuts(self, mask, x) -> list[LinearCut]:
        """Combinatorial Benders rows for the integral point ``mask`` that ``x`` violates."""
        vm, tol = self.vm, self.config.violation_tol
        Y, Om, Ob = trace_values(self.inst.p, self.inst.seq, mask)
        value = Y[-1] * Ob[-1]
        off = [e for e in range(1, self.inst.m + 1) if not mask[e - 1]]

        def upper(var, val, deps, family):
            coefs = {var: 1.0}
            for e in off:
                if e in deps:
                    coefs[vm.X(e)] = -1.0
            return LinearCut(coefs, val, family=family)

        cuts = [upper(vm.R, value, set(off), "benders")]
        if self.config.variable_benders:
            for i in range(self.inst.m + 1, vm.n_ids + 1):
                deps = self.supports[i - 1]
                cuts.append(upper(vm.Y(i), Y[i - 1], deps, "benders_var"))
                if self.inst.seq.step_for(i).is_series:
                    cuts.append(upper(vm.Om(i), Om[i - 1], deps, "benders_var"))
                    cuts.append(upper(vm.Ob(i), Ob[i - 1], self._prefix_series[i - 1], "benders_var"))
        return [c for c in cuts if c.violation(x) > tol]

    def separate(self, node: Node, x) -> list[LinearCut]:
        """Envelope tangent cuts (and fixed-edge tangents in improved mode) violated by ``x``."""
        if self.mode is CutMode.WITHOUT_CUTS:
            return []
        vm, tol = self.vm, self.config.violation_tol
        U = node.bounds.UY
        found = []
        for step in self.inst.seq.steps:
            if not step.is_series:
                continue
            i, j, k = step.result_id, step.left_id, step.right_id
            Uj, Uk = float(U[j - 1]), float(U[k - 1])
            if Uj <= 0.0 or Uk <= 0.0:
                continue
            xj = min(max(float(x[vm.Y(j)]), 0.0), Uj)
            xk = min(max(float(x[vm.Y(k)]), 0.0), Uk)
            if xj <= 1e-12 and xk <= 1e-12:
                continue
            if x[vm.Y(i)] <= f3_envelope(xj, xk, Uj, Uk) + tol:
                continue
            cut = f3_tangent_cut(xj, xk, Uj, Uk).remap({"x": vm.Y(j), "y": vm.Y(k), "z": vm.Y(i)})
            is_global = Uj == self.glob.UY[j - 1] and Uk == self.glob.UY[k - 1]
            if not is_global:
                cut = cut.with_scope(node.id)
            found.append(cut)
        if self.mode is CutMode.IMPROVED_ENVELOPE_CUTS:
            found.extend(self._fixed_edge_cuts(node, x))
        scored = [(c.violation(x), n, c) for n, c in enumerate(found) if c.is_safe()]
        scored = [t for t in scored if t[0] > tol]
        scored.sort(key=lambda t: (-t[0], t[1]))
        return [c for _, _, c in scored[: self.config.max_cuts_per_node]]

    def _fixed_edge_cuts(self, node: Node, x) -> list[LinearCut]:
        vm = self.vm
        L, U = node.bounds.LY, node.bounds.UY
        out = []
        for step in self.inst.seq.steps:
            if not step.is_series:
                continue
            i, j, k = step.result_id, step.left_id, step.right_id
            for fixed_op, other in ((j, k), (k, j)):
                if L[fixed_op - 1] != U[fixed_op - 1] or L[other - 1] == U[other - 1]:
                    continue
                v = float(U[fixed_op - 1])
                if v <= 0.0:
                    continue
                yk = min(max(float(x[vm.Y(other)]), L[other - 1]), U[other - 1])
                cut = f3_fixed_edge_cut(v, yk).remap({"y": vm.Y(other), "z": vm.Y(i)}, scope=node.id)
                out.append(cut)
        return out

    # -- nodes ---------------------------------------------------------------

    def _node_problem(self, node: Node) -> LPProblem:
        improved = self.mode is CutMode.IMPROVED_ENVELOPE_CUTS
        rows = list(self.static)
        if improved:
            local = refresh_local_rows(self.inst, self.vm, node.bounds, self.glob, node.id)
            replaced = {r.key for r in local}
            rows += [r for r in self.global_bound_rows if r.key not in replaced]
            rows += [r.with_scope(node.id, key=r.key) for r in local]
            self.cut_counts["local_rows"] += len(local)
        else:
            rows += self.global_bound_rows
        # retired rows that are nonbasic in the inherited basis stay, so the basis still fits
        pinned = node.basis.rows - {ref[1] for ref in node.basis.basic if isinstance(ref, tuple)} \
            if node.basis is not None else frozenset()
        rows += [c for c, on in zip(self.pool, self._pool_active) if on or c.key in pinned]
        rows += node.local_cuts
        bounds = node.bounds if improved else self.glob
        lb, ub = variable_bounds(self.vm, bounds, node.fixed)
        return LPProblem.from_rows(objective(self.vm), rows, lb, ub)

    def _add_local(self, node: Node, cuts, solver: DualSimplex):
        keyed = []
        for c in cuts:
            c = LinearCut(c.coefs, c.rhs, c.sense, node.id, c.family, ("l", node.id, len(node.local_cuts)))
            node.local_cuts.append(c)
            self.cut_counts[c.family] += 1
            keyed.append(c)
        solver.add_rows(keyed)

    def _solve_lp(self, solver: DualSimplex, node: Node, lp: LPProblem):
        before = solver.iterations
        sol = solver.solve()
        self.lp_iterations += solver.iterations - before
        if sol.status in (LPStatus.OPTIMAL, LPStatus.INFEASIBLE):
            return sol, solver
        # numerical trouble: retry from scratch with the current rows
        rows_lp = LPProblem(solver.lp.c, solver.A.copy(), solver.b.copy(), solver.eq.copy(),
                            solver.lp.lb, solver.lp.ub, tuple(solver.row_keys))
        fresh = DualSimplex(rows_lp)
        sol = fresh.solve()
        self.lp_iterations += fresh.iterations
        return sol, fresh

    def _process(self, node: Node):
        """Solve a node; return its children (possibly empty) and its final bound."""
        inst, vm = self.inst, self.vm
        if sum(1 for f in node.fixed if f == 1) > inst.budget:
            return [], -math.inf
        if not node.free:
            value = self._offer(node.fixed)
            return [], value
        if node.depth > 0 and self.mode is CutMode.IMPROVED_ENVELOPE_CUTS and node.bounds.UR <= self.incumbent_value + PRUNE_TOL:
            return [], node.bounds.UR

        lp = self._node_problem(node)
        solver = DualSimplex(lp, node.basis)
        sol, solver = self._solve_lp(solver, node, lp)
        rounds = 0
        rounded = False
        while True:
            if sol.status is LPStatus.INFEASIBLE:
                return [], -math.inf
            if sol.status is not LPStatus.OPTIMAL:
                log.warning("node %d: LP status %s, branching without an LP bound", node.id, sol.status.value)
                bound = node.parent_bound
                x = np.full(vm.n_vars, 0.5)
                break
            bound = min(sol.bound, node.parent_bound)
            if node.depth == 0 and math.isnan(self.root_bound):
                self.root_bound = sol.bound
            if bound <= self.incumbent_value + PRUNE_TOL:
                return [], bound
            x = sol.x
            if self._separate_pool(x, solver):
                sol, solver = self._solve_lp(solver, node, lp)
                continue
            xs = x[: inst.m]
            frac = [e for e in node.free if INT_TOL < xs[e - 1] < 1 - INT_TOL]
            if not rounded:
                self._round(node, xs)
                rounded = True
            if not frac:
                mask = tuple(int(round(v)) for v in xs)
                value = self._offer(mask)
                if bound <= value + PRUNE_TOL:
                    return [], bound
                added = [c for c in self.lazy_cuts(mask, x) if self._add_global(c, solver)]
                if added:
                    sol, solver = self._solve_lp(solver, node, lp)
                    continue
                # bound and evaluated mask differ by less than the cut tolerance: split instead
                break
            if rounds < self.config.max_rounds:
                cuts = self.separate(node, x)
                if cuts:
                    rounds += 1
                    for c in cuts:
                        if c.is_global:
                            self._add_global(c, solver)
                    local = [c for c in cuts if not c.is_global]
                    if local:
                        self._add_local(node, local, solver)
                    sol, solver = self._solve_lp(solver, node, lp)
                    continue
            break

        return self.branch(node, sol, solver, bound), bound

    def branch(self, node: Node, sol, solver: DualSimplex, bound: float) -> list[Node]:
        """Split on the most fractional free X (first free X when none is fractional)."""
        inst, x = self.inst, sol.x
        e = None
        if sol.status is LPStatus.OPTIMAL:
            e = branch_variable(x, node.fixed)
        if e is None:
            e = node.free[0]
        basis = solver.basis() if sol.status is LPStatus.OPTIMAL else None
        inherited = node.local_cuts
        if sol.status is LPStatus.OPTIMAL:
            # only rows whose slack is basic can leave without breaking the warm start
            loose = {solver.row_keys[j - solver.n] for j in solver.head if j >= solver.n}
            self._age_pool(x, loose)
            inherited = [c for c in node.local_cuts if not (c.key in loose and -c.violation(x) > 1e-6)]
        children = []
        for val in (0, 1):
            fixed = list(node.fixed)
            fixed[e - 1] = val
            fixed = tuple(fixed)
            if val == 1 and sum(1 for f in fixed if f == 1) > inst.budget:
                continue
            children.append(Node(next(self._ids), fixed, propagate_bounds(inst, fixed), list(inherited),
                                 bound, node.depth + 1, basis))
        return children

    # -- driver ----------------------------------------------------------------

    def run(self) -> SolveResult:
        self._t0 = time.perf_counter()
        inst = self.inst
        self._greedy_start()
        n_vertices = materialize(inst.seq).n
        root = Node(next(self._ids), (None,) * inst.m, self.glob, [], math.inf, 0)
        if inst.budget < n_vertices - 1:
            # no feasible mask spans the vertex set; still report the root relaxation value
            sol = DualSimplex(self._node_problem(root)).solve()
            root_bound = sol.bound if sol.status is LPStatus.OPTIMAL else math.nan
            mask = self.incumbent or (0,) * inst.m
            return SolveResult(mask, reliability(inst, mask), 0.0, 0.0, 0, dict(self.cut_counts),
                               self._elapsed(), "optimal", root_bound, 0)

        heap = [(-math.inf, 0, root.id, root)]
        status = "optimal"
        open_bound = -math.inf
        while heap:
            neg_bound, neg_depth, _, node = heapq.heappop(heap)
            parent_bound = -neg_bound
            if parent_bound <= self.incumbent_value + PRUNE_TOL:
                continue
            if self._out_of_time():
                status = "time_limit"
                open_bound = parent_bound
                break
            if self.node_limit is not None and self.nodes >= self.node_limit:
                status = "node_limit"
                open_bound = parent_bound
                break
            self.nodes += 1
            children, bound = self._process(node)
            log.debug("node=%d depth=%d bound=%.12g incumbent=%.12g cuts=%d open=%d", node.id, node.depth,
                      bound, self.incumbent_value, len(node.local_cuts) + len(self.pool), len(heap))
            for child in children:
                heapq.heappush(heap, (-child.parent_bound, -child.depth, child.id, child))

        if heap and status != "optimal":
            open_bound = max(open_bound, max(-h[0] for h in heap))
        incumbent = max(self.incumbent_value, 0.0)
        best_bound = max(incumbent, open_bound) if status != "optimal" else incumbent
        if math.isinf(best_bound):
            best_bound = 1.0
        return SolveResult(self.incumbent, incumbent, best_bound, _gap(best_bound, incumbent), self.nodes,
                           dict(self.cut_counts), self._elapsed(), status, self.root_bound, self.lp_iterations)


def solve(instance: Instance, config: Optional[RelaxationConfig] = None, time_limit: Optional[float] = None,
          node_limit: Optional[int] = None) -> SolveResult:
    """Maximize all-terminal reliability of ``instance`` under its side constraints."""
    return BranchAndCut(instance, config, time_limit, node_limit).run()


def branch_variable(x, fixed) -> Optional[int]:
    """Most fractional free X (1-based edge id); ties go to the smallest id."""
    frac = [e for e, f in enumerate(fixed, start=1) if f is None and INT_TOL < x[e - 1] < 1 - INT_TOL]
    if not frac:
        return None
    return min(frac, key=lambda e: (abs(x[e - 1] - 0.5), e))
