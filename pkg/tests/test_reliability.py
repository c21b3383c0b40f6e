import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spreliability.reliability import (
    OracleLimitError,
    evaluate,
    oracle_optimize,
    oracle_reliability,
    reliability,
)
from spreliability.spgraph import generate

from conftest import parallel_pair, series_pair, sp_instances, triangle


def brute_force_pairs(p, edges, n):
    """Independent all-terminal reliability: explicit DFS over every up-set."""
    total = []
    for states in itertools.product((0, 1), repeat=len(edges)):
        adj = {v: [] for v in range(n)}
        w = 1.0
        for s, (u, v), q in zip(states, edges, p):
            w *= q if s else 1 - q
            if s:
                adj[u].append(v)
                adj[v].append(u)
        seen, stack = {0}, [0]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        if len(seen) == n:
            total.append(w)
    return math.fsum(total)


def test_series_trace():
    tr = evaluate(series_pair(), [1, 1])
    assert tr.Y[2] == pytest.approx(0.81 / 0.99, abs=1e-15)
    assert tr.Omega[2] == pytest.approx(0.99, abs=1e-15)
    assert tr.R == pytest.approx(0.81, abs=1e-12)


@pytest.mark.parametrize(
    "inst,mask,expected",
    [
        (series_pair(), [1, 1], 0.81),
        (parallel_pair(), [1, 1], 0.99),
        (triangle(), [1, 1, 1], 0.972),
        (triangle(), [1, 1, 0], 0.81),
        (series_pair(), [1, 0], 0.0),
        (triangle(), [0, 0, 0], 0.0),
    ],
)
def test_closed_forms(inst, mask, expected):
    assert abs(evaluate(inst, mask).R - expected) <= 1e-12
    assert abs(oracle_reliability(inst, mask) - expected) <= 1e-12


def test_triangle_against_hand_graph():
    # a 3-cycle written out directly, independent of materialize
    assert brute_force_pairs([0.9] * 3, [(0, 1), (1, 2), (0, 2)], 3) == pytest.approx(0.972, abs=1e-15)


def test_trace_shapes_and_leaf_omegas(tri):
    tr = evaluate(tri, [1, 1, 1])
    assert tr.Y.shape == tr.Omega.shape == tr.OmegaBar.shape == (5,)
    assert np.all(tr.Omega[:3] == 1.0)
    assert tr.Omega[4] == 1.0  # parallel step
    assert np.allclose(tr.OmegaBar, np.cumprod(tr.Omega))
    assert tr.R == tr.Y[-1] * tr.OmegaBar[-1]


def test_mask_length_checked(tri):
    with pytest.raises(ValueError):
        evaluate(tri, [1, 1])


@given(sp_instances(max_m=9), st.data())
def test_evaluate_matches_oracle(inst, data):
    mask = data.draw(st.lists(st.integers(0, 1), min_size=inst.m, max_size=inst.m))
    assert abs(evaluate(inst, mask).R - oracle_reliability(inst, mask)) <= 1e-10


@given(sp_instances(max_m=12))
def test_all_zero_mask_is_zero(inst):
    assert reliability(inst, [0] * inst.m) == 0.0


def test_oracle_deterministic_edges_skip_enumeration():
    inst = triangle(p=(1.0, 1.0, 0.0))
    assert oracle_reliability(inst, [1, 1, 1]) == 1.0
    assert evaluate(inst, [1, 1, 1]).R == 1.0


def test_oracle_size_limits():
    with pytest.raises(OracleLimitError):
        oracle_reliability(generate(26, 0), [1] * 26)
    with pytest.raises(OracleLimitError):
        oracle_optimize(generate(21, 0))


def test_optimize_full_budget_takes_everything(tri):
    mask, value = oracle_optimize(tri)
    assert mask == (1, 1, 1) and value == pytest.approx(0.972, abs=1e-12)


def test_optimize_budget_two_keeps_best_path():
    inst = triangle(p=(0.95, 0.9, 0.99), alpha=0.67)
    mask, value = oracle_optimize(inst)
    # every 2-subset of a triangle is a spanning path; the best keeps the two most reliable edges
    assert mask == (1, 0, 1)
    assert value == pytest.approx(0.95 * 0.99, abs=1e-12)


def test_optimize_without_spanning_subset_is_zero():
    inst = triangle(alpha=0.34)  # budget 1 cannot span 3 vertices
    _, value = oracle_optimize(inst)
    assert value == 0.0


@given(sp_instances(max_m=10), st.data())
def test_monotone_in_mask(inst, data):
    mask = data.draw(st.lists(st.integers(0, 1), min_size=inst.m, max_size=inst.m))
    e = data.draw(st.integers(0, inst.m - 1))
    lo, hi = list(mask), list(mask)
    lo[e], hi[e] = 0, 1
    a, b = evaluate(inst, lo), evaluate(inst, hi)
    assert b.R >= a.R
    assert np.all(b.Y >= a.Y) and np.all(b.Omega >= a.Omega) and np.all(b.OmegaBar >= a.OmegaBar)
