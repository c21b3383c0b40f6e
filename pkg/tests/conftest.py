import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from spreliability.spgraph import PARALLEL, SERIES, generate, make_instance

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def series_pair(p=(0.9, 0.9), alpha=1.0):
    return make_instance(p, [(3, SERIES, 1, 2)], alpha)


def parallel_pair(p=(0.9, 0.9), alpha=1.0):
    return make_instance(p, [(3, PARALLEL, 1, 2)], alpha)


def triangle(p=(0.9, 0.9, 0.9), alpha=1.0):
    return make_instance(p, [(4, SERIES, 1, 2), (5, PARALLEL, 4, 3)], alpha)


@pytest.fixture
def tri():
    return triangle()


@st.composite
def sp_instances(draw, min_m=2, max_m=8, alpha=None, p_values=None):
    """Random composition sequences with arbitrary edge reliabilities in [0, 1]."""
    m = draw(st.integers(min_m, max_m))
    probs = p_values or st.one_of(st.floats(0.0, 1.0), st.sampled_from([0.0, 1.0, 0.5, 0.9]))
    p = [draw(probs) for _ in range(m)]
    live = list(range(1, m + 1))
    steps = []
    next_id = m + 1
    while len(live) > 1:
        i, j = draw(st.lists(st.integers(0, len(live) - 1), min_size=2, max_size=2, unique=True))
        kind = draw(st.sampled_from([SERIES, PARALLEL]))
        steps.append((next_id, kind, live[i], live[j]))
        live = [c for k, c in enumerate(live) if k not in (i, j)] + [next_id]
        next_id += 1
    a = alpha if alpha is not None else draw(st.sampled_from([0.5, 0.7, 1.0]))
    return make_instance(p, steps, a)


@st.composite
def generated(draw, min_m=2, max_m=10, alphas=(0.6, 0.8, 1.0)):
    m = draw(st.integers(min_m, max_m))
    seed = draw(st.integers(0, 2**32))
    return generate(m, seed, draw(st.sampled_from(alphas)))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
