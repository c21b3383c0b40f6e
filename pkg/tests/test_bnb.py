import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spreliability.bnb import BranchAndCut, Node, branch_variable, solve
from spreliability.envelopes import f3_envelope, propagate_bounds
from spreliability.model import CutMode, RelaxationConfig
from spreliability.reliability import evaluate, oracle_optimize, reliability
from spreliability.spgraph import generate, make_instance

from conftest import generated, series_pair, sp_instances, triangle

MODES = list(CutMode)


@pytest.mark.parametrize("mode", MODES)
def test_triangle_full_budget(mode):
    r = solve(triangle(), RelaxationConfig(cut_mode=mode))
    assert r.mask == (1, 1, 1)
    assert r.reliability == pytest.approx(0.972, abs=1e-12)
    assert r.gap == 0.0 and r.status == "optimal"


@pytest.mark.parametrize("seed", range(4))
def test_alpha_one_takes_every_edge(seed):
    inst = generate(9, seed, 1.0)
    r = solve(inst)
    assert r.mask == (1,) * 9


@pytest.mark.parametrize("mode", MODES)
@pytest.mark.parametrize("seed", [11, 12, 13])
def test_matches_oracle_m12(mode, seed):
    inst = generate(12, seed, 0.6)
    _, best = oracle_optimize(inst)
    r = solve(inst, RelaxationConfig(cut_mode=mode))
    assert r.status == "optimal"
    assert abs(r.reliability - best) <= 1e-9
    assert r.reliability == reliability(inst, r.mask)
    assert r.root_bound >= best - 1e-9


@settings(max_examples=40)
@given(sp_instances(max_m=8), st.sampled_from(MODES))
def test_matches_oracle_arbitrary_probabilities(inst, mode):
    _, best = oracle_optimize(inst)
    r = solve(inst, RelaxationConfig(cut_mode=mode))
    assert abs(r.reliability - best) <= 1e-9
    assert inst.is_feasible(r.mask)


def test_side_rows_respected():
    inst = make_instance([0.95, 0.9, 0.99], [(4, "S", 1, 2), (5, "P", 4, 3)], 1.0,
                         extra_rows=[({1: 1.0, 3: 1.0}, 1.0)])
    _, best = oracle_optimize(inst)
    r = solve(inst)
    assert inst.is_feasible(r.mask) and r.reliability == pytest.approx(best, abs=1e-12)


def test_no_spanning_budget_gives_zero():
    r = solve(triangle(alpha=0.34))
    assert r.reliability == 0.0 and r.bound == 0.0 and r.status == "optimal"
    assert r.root_bound > 0.0  # the relaxation itself cannot see connectivity


def test_node_limit_reports_gap():
    inst = generate(30, 2, 0.6)
    r = solve(inst, RelaxationConfig(cut_mode="none"), node_limit=5)
    assert r.status == "node_limit" and r.nodes == 5
    assert r.bound >= r.reliability and r.gap > 0
    assert r.reliability == reliability(inst, r.mask)


def test_time_limit_is_respected():
    r = solve(generate(40, 5, 0.6), RelaxationConfig(cut_mode="none"), time_limit=1.0)
    assert r.status in ("time_limit", "optimal")
    assert r.time_s < 5.0


def test_result_json_round_trip():
    r = solve(series_pair())
    doc = json.loads(r.to_json())
    assert doc["mask"] == "11" and doc["status"] == "optimal"
    assert set(doc) >= {"reliability", "bound", "gap", "nodes", "cuts", "time_s", "root_bound"}


def test_branch_variable_rule():
    x = np.array([0.5, 0.3, 0.5, 1.0])
    assert branch_variable(x, (None, None, None, None)) == 1
    assert branch_variable(x, (0, None, None, None)) == 3
    assert branch_variable(np.array([0.0, 1.0]), (None, None)) is None


def _solver_with_root(inst, mode):
    b = BranchAndCut(inst, RelaxationConfig(cut_mode=mode))
    root = Node(0, (None,) * inst.m, b.glob, [], math.inf, 0)
    return b, root


def test_lazy_cut_at_all_ones_is_plain_bound(tri):
    b, _ = _solver_with_root(tri, CutMode.WITHOUT_CUTS)
    x = np.zeros(b.vm.n_vars)
    x[: tri.m] = 1
    x[b.vm.R] = 1.0
    (cut,) = b.lazy_cuts((1, 1, 1), x)
    assert cut.coefs == {b.vm.R: 1.0} and cut.rhs == pytest.approx(0.972)


@given(generated(max_m=9), st.data())
def test_lazy_cuts_never_cut_off_true_points(inst, data):
    b, _ = _solver_with_root(inst, CutMode.WITHOUT_CUTS)
    b.config = RelaxationConfig(variable_benders=True)
    hat = data.draw(st.lists(st.integers(0, 1), min_size=inst.m, max_size=inst.m))
    fake = np.ones(b.vm.n_vars)  # violate everything so every cut is returned
    fake[: inst.m] = hat
    cuts = b.lazy_cuts(tuple(hat), fake)
    other = data.draw(st.lists(st.integers(0, 1), min_size=inst.m, max_size=inst.m))
    tr = evaluate(inst, other)
    vm = b.vm
    point = np.zeros(vm.n_vars)
    point[: inst.m] = other
    point[vm.Y(1): vm.Y(vm.n_ids) + 1] = tr.Y
    point[vm.Om(1): vm.Om(vm.n_ids) + 1] = tr.Omega
    point[vm.Ob(1): vm.Ob(vm.n_ids) + 1] = tr.OmegaBar
    point[vm.R] = tr.R
    for cut in cuts:
        assert cut.violation(point) <= 1e-12, cut.family


def test_separation_returns_violated_tangent():
    inst = series_pair(p=(0.9, 0.9))
    b, root = _solver_with_root(inst, CutMode.ENVELOPE_CUTS)
    vm = b.vm
    x = np.zeros(vm.n_vars)
    x[vm.Y(1)], x[vm.Y(2)] = 0.9, 0.9
    env = f3_envelope(0.9, 0.9, 0.9, 0.9)
    x[vm.Y(3)] = env + 0.08
    (cut,) = b.separate(root, x)
    assert cut.violation(x) == pytest.approx(0.08, abs=1e-12)
    x[vm.Y(3)] = env
    assert abs(cut.violation(x)) <= 1e-12
    assert b.separate(root, x) == []


def test_separation_off_without_cuts():
    inst = series_pair()
    b, root = _solver_with_root(inst, CutMode.WITHOUT_CUTS)
    x = np.ones(b.vm.n_vars)
    assert b.separate(root, x) == []


def test_improved_mode_adds_fixed_edge_tangent():
    inst = series_pair(p=(0.9, 0.8))
    b, _ = _solver_with_root(inst, CutMode.IMPROVED_ENVELOPE_CUTS)
    fixed = (1, None)
    node = Node(1, fixed, propagate_bounds(inst, fixed), [], 1.0, 1)
    vm = b.vm
    x = np.zeros(vm.n_vars)
    x[vm.Y(1)], x[vm.Y(2)], x[vm.Y(3)] = 0.9, 0.5, 0.5
    families = {c.family for c in b.separate(node, x)}
    assert "fixed_edge" in families


@pytest.mark.parametrize("seed", [3, 4])
def test_cut_modes_agree_on_optimum(seed):
    inst = generate(14, seed, 0.6)
    none = solve(inst, RelaxationConfig(cut_mode="none"))
    improved = solve(inst, RelaxationConfig(cut_mode="improved"))
    assert improved.reliability == pytest.approx(none.reliability, abs=1e-9)
