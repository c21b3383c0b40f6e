import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spreliability.envelopes import propagate_bounds
from spreliability.lp import LPProblem, LPStatus, residuals, solve
from spreliability.model import (
    CutMode,
    RelaxationConfig,
    VarMap,
    build_relaxation,
    refresh_local_rows,
    row_count_bound,
    static_rows,
    variable_bounds,
    write_lp_file,
)
from spreliability.reliability import evaluate

from conftest import parallel_pair, series_pair, sp_instances, triangle


def trace_point(inst, mask):
    """Full LP column vector realizing the exact reduction of ``mask``."""
    vm = VarMap(inst.m)
    tr = evaluate(inst, mask)
    x = np.zeros(vm.n_vars)
    x[: inst.m] = mask
    x[vm.Y(1): vm.Y(vm.n_ids) + 1] = tr.Y
    x[vm.Om(1): vm.Om(vm.n_ids) + 1] = tr.Omega
    x[vm.Ob(1): vm.Ob(vm.n_ids) + 1] = tr.OmegaBar
    x[vm.R] = tr.R
    return x


def rows_by_key(lp: LPProblem):
    return {k: (lp.A[i], lp.b[i], lp.eq[i]) for i, k in enumerate(lp.row_keys)}


def test_series_pair_layout():
    inst = series_pair()
    lp, vm = build_relaxation(inst)
    # 2 X, then Y/Omega/OmegaBar for ids 1..3, then R
    assert vm.n_vars == lp.n == 12
    assert vm.names()[:3] == ["X1", "X2", "Y1"] and vm.names()[-1] == "R"
    rows = rows_by_key(lp)
    a, b, _ = rows[("dflt_x", 3)]
    assert a[vm.Y(3)] == 1.0 and a[vm.Y(1)] == -1.0 and b == 0.0
    a, b, _ = rows[("dflt_y", 3)]
    assert a[vm.Y(3)] == 1.0 and a[vm.Y(2)] == -1.0 and b == 0.0


def test_parallel_pair_unit_bounds_rows():
    inst = parallel_pair()
    bounds = propagate_bounds(inst)
    bounds.UY[:] = 1.0  # pretend unit upper bounds
    bounds.LY[:] = 0.0
    lp, vm = build_relaxation(inst, bounds)
    rows = rows_by_key(lp)
    a, b, _ = rows[("f2a", 3)]  # z <= x + y
    assert (a[vm.Y(3)], a[vm.Y(1)], a[vm.Y(2)], b) == (1.0, -1.0, -1.0, 0.0)
    a, b, _ = rows[("f2b", 3)]  # z <= 1 at the U corner
    assert (a[vm.Y(3)], a[vm.Y(1)], a[vm.Y(2)], b) == (1.0, 0.0, 0.0, 1.0)


def test_triangle_root_bound():
    lp, _ = build_relaxation(triangle())
    sol = solve(lp)
    assert sol.status is LPStatus.OPTIMAL and sol.objective >= 0.972 - 1e-12


@given(sp_instances(max_m=9), st.data())
def test_trace_points_are_feasible(inst, data):
    mask = data.draw(st.lists(st.integers(0, 1), min_size=inst.m, max_size=inst.m))
    if sum(mask) > inst.budget:
        return
    lp, vm = build_relaxation(inst)
    res = residuals(lp, trace_point(inst, mask))
    assert res["row"] <= 1e-9 and res["bound"] <= 1e-9


@given(sp_instances(max_m=9), st.data())
def test_local_rows_keep_completions_feasible(inst, data):
    """Rows built for a partial fixing never cut off any completion of it."""
    fixed = data.draw(st.lists(st.sampled_from([0, 1, None]), min_size=inst.m, max_size=inst.m))
    mask = [f if f is not None else data.draw(st.integers(0, 1)) for f in fixed]
    vm = VarMap(inst.m)
    glob, local = propagate_bounds(inst), propagate_bounds(inst, fixed)
    x = trace_point(inst, mask)
    probe = trace_point(inst, [data.draw(st.integers(0, 1)) for _ in range(inst.m)])
    for row in refresh_local_rows(inst, vm, local, glob, scope=7, point=probe):
        assert row.scope == 7
        assert row.violation(x) <= 1e-9, row
    lb, ub = variable_bounds(vm, local, fixed)
    assert np.all(lb - 1e-12 <= x) and np.all(x <= ub + 1e-12)


def test_fix_parallel_operand_gives_equality():
    inst = parallel_pair(p=(0.9, 0.8))
    vm = VarMap(2)
    rows = refresh_local_rows(inst, vm, propagate_bounds(inst, (1, None)), propagate_bounds(inst), scope=1)
    eqs = [r for r in rows if r.key[0] == "feq"]
    assert len(eqs) == 1
    row = eqs[0]
    assert row.sense == "==" and row.rhs == pytest.approx(0.9)
    assert row.coefs[vm.Y(2)] == pytest.approx(-(1 - 0.9))


def test_fix_series_operand_off_zeroes_result():
    inst = series_pair()
    vm = VarMap(2)
    lb, ub = variable_bounds(vm, propagate_bounds(inst, (0, None)), (0, None))
    assert ub[vm.Y(3)] == 0.0 and ub[vm.X(1)] == 0.0


def test_fix_perfect_series_edge_gives_z_le_y():
    inst = series_pair(p=(1.0, 0.9))
    vm = VarMap(2)
    point = np.zeros(vm.n_vars)
    point[vm.Y(2)] = 0.5
    rows = refresh_local_rows(inst, vm, propagate_bounds(inst, (1, None)), propagate_bounds(inst), 1, point)
    tangents = [r for r in rows if r.family == "fixed_edge" and r.sense == "<="]
    assert tangents
    cut = tangents[0]
    assert cut.coefs[vm.Y(3)] == 1.0 and cut.coefs[vm.Y(2)] == pytest.approx(-1.0) and cut.rhs == pytest.approx(0.0)


def test_corner_rows_appear_with_positive_lower_bounds(tri):
    vm = VarMap(3)
    rows = refresh_local_rows(tri, vm, propagate_bounds(tri, (1, None, None)), propagate_bounds(tri), 3)
    keys = {r.key for r in rows}
    assert ("cornerA", 4) in keys and ("cornerB", 4) in keys


@pytest.mark.parametrize("m", [2, 5, 17])
def test_row_count_bound(m):
    from spreliability.spgraph import generate

    lp, _ = build_relaxation(generate(m, m))
    assert lp.r <= row_count_bound(m)


def test_extra_rows_enter_the_model():
    inst = triangle(alpha=1.0)
    from spreliability.spgraph import make_instance

    inst = make_instance(inst.p, [(4, "S", 1, 2), (5, "P", 4, 3)], 1.0, extra_rows=[({1: 1.0, 2: 1.0}, 1.0)])
    keys = [r.key for r in static_rows(inst, VarMap(3))]
    assert ("extra", 0) in keys and ("card",) in keys


def test_cut_mode_parsing():
    assert CutMode.parse("improved") is CutMode.IMPROVED_ENVELOPE_CUTS
    assert RelaxationConfig(cut_mode="none").cut_mode is CutMode.WITHOUT_CUTS
    with pytest.raises(ValueError):
        CutMode.parse("bogus")
    with pytest.raises(ValueError):
        RelaxationConfig(max_rounds=-1)


def test_lp_file_export(tmp_path, tri):
    lp, vm = build_relaxation(tri)
    path = tmp_path / "root.lp"
    write_lp_file(lp, vm, path)
    text = path.read_text()
    assert text.index("Maximize") < text.index("Subject To") < text.index("Bounds") < text.index("Binary")
    assert "X1" in text.split("Binary")[1] and text.rstrip().endswith("End")
