"""Exact reliability along a composition sequence, plus brute-force oracles."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .spgraph import Instance, materialize

ORACLE_MAX_EDGES = 25
OPTIMIZE_MAX_EDGES = 20


class OracleLimitError(ValueError):
    """The brute-force oracle refuses instances past its size limit."""


@dataclass(frozen=True)
class EvalTrace:
    """Per-id values of the reduction: edge reliability, correction factor, running factor product."""

    Y: np.ndarray
    Omega: np.ndarray
    OmegaBar: np.ndarray
    R: float


def series_value(y1: float, y2: float) -> tuple[float, float]:
    """Reduced reliability and correction factor of two edges in series.

    ``y1*y2 / omega`` is evaluated as ``1 / (1/y1 + 1/y2 - 1)``: every step is
    a monotone rounded operation, so the result never decreases when an
    operand grows, even by one ulp.
    """
    omega = 1.0 - (1.0 - y1) * (1.0 - y2)
    if y1 == 0.0 or y2 == 0.0:
        return 0.0, omega
    return 1.0 / (1.0 / y1 + 1.0 / y2 - 1.0), omega


def trace_values(p, seq, mask) -> tuple[list, list, list]:
    """Plain-list core of :func:`evaluate`; also used with bound vectors instead of a 0/1 mask."""
    m = seq.m
    Y = [p[e] * mask[e] for e in range(m)]
    Om = [1.0] * m
    for step in seq.steps:
        yj = Y[step.left_id - 1]
        yk = Y[step.right_id - 1]
        if step.is_series:
            y, om = series_value(yj, yk)
        else:
            y, om = 1.0 - (1.0 - yj) * (1.0 - yk), 1.0
        Y.append(y)
        Om.append(om)
    Ob = []
    acc = 1.0
    for om in Om:
        acc *= om
        Ob.append(acc)
    return Y, Om, Ob


def evaluate(instance: Instance, x) -> EvalTrace:
    """Run the linear-time series/parallel reduction with edges outside ``x`` switched off."""
    x = [1 if v else 0 for v in x]
    if len(x) != instance.m:
        raise ValueError(f"mask has length {len(x)}, instance has {instance.m} edges")
    Y, Om, Ob = trace_values(instance.p, instance.seq, x)
    return EvalTrace(np.array(Y), np.array(Om), np.array(Ob), Y[-1] * Ob[-1])


def reliability(instance: Instance, x) -> float:
    Y, _, Ob = trace_values(instance.p, instance.seq, x)
    return Y[-1] * Ob[-1]


# ---------------------------------------------------------------------------
# oracles


class _UnionFind:
    __slots__ = ("parent", "components")

    def __init__(self, n):
        self.parent = list(range(n))
        self.components = n

    def find(self, a):
        parent = self.parent
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb
            self.components -= 1


def oracle_reliability(instance: Instance, x) -> float:
    """All-terminal reliability by enumerating every edge-state vector.

    Edges with probability exactly 0 or 1 are deterministic and are not
    enumerated. Connectivity of each state is checked with a union-find over
    the materialized vertex set; probabilities are summed with ``math.fsum``.
    """
    m = instance.m
    if m > ORACLE_MAX_EDGES:
        raise OracleLimitError(f"oracle_reliability is limited to m <= {ORACLE_MAX_EDGES} (got {m})")
    if len(x) != m:
        raise ValueError(f"mask has length {len(x)}, instance has {m} edges")
    graph = materialize(instance.seq)
    probs = [p * (1 if xe else 0) for p, xe in zip(instance.p, x)]
    sure = [(u, v) for (e, u, v), q in zip(graph.edges, probs) if q == 1.0]
    random_edges = [(u, v, q) for (e, u, v), q in zip(graph.edges, probs) if 0.0 < q < 1.0]

    terms = []
    for states in itertools.product((0, 1), repeat=len(random_edges)):
        uf = _UnionFind(graph.n)
        for u, v in sure:
            uf.union(u, v)
        weight = 1.0
        for s, (u, v, q) in zip(states, random_edges):
            if s:
                weight *= q
                uf.union(u, v)
            else:
                weight *= 1.0 - q
        if uf.components == 1:
            terms.append(weight)
    return math.fsum(terms)


def oracle_optimize(instance: Instance) -> tuple[tuple[int, ...], float]:
    """Exhaustive maximizer over feasible masks; ties go to the lexicographically smallest mask."""
    m = instance.m
    if m > OPTIMIZE_MAX_EDGES:
        raise OracleLimitError(f"oracle_optimize is limited to m <= {OPTIMIZE_MAX_EDGES} (got {m})")
    budget = instance.budget
    p, seq = instance.p, instance.seq
    best_mask, best = None, -1.0
    for mask in itertools.product((0, 1), repeat=m):
        if sum(mask) > budget:
            continue
        if instance.extra_rows and not instance.is_feasible(mask):
            continue
        Y, _, Ob = trace_values(p, seq, mask)
        r = Y[-1] * Ob[-1]
        if r > best:
            best, best_mask = r, mask
    if best_mask is None:
        raise ValueError("no mask satisfies the side constraints")
    return best_mask, best
