"""Series-parallel instances: composition sequences, concrete graphs, generation and I/O.

A composition sequence builds a series-parallel graph from ``m`` single edges.
Edge ids are ``1..m``; the ``i``-th composition produces id ``m + i`` and the
last one (id ``2m - 1``) is the whole graph.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

SERIES = "S"
PARALLEL = "P"

_MASK64 = (1 << 64) - 1


class InstanceError(ValueError):
    """Raised for malformed or invalid instance data."""


@dataclass(frozen=True)
class EdgeDef:
    id: int
    p: float


@dataclass(frozen=True)
class Composition:
    result_id: int
    kind: str
    left_id: int
    right_id: int

    @property
    def is_series(self) -> bool:
        return self.kind == SERIES


@dataclass(frozen=True)
class CompositionSequence:
    m: int
    steps: tuple[Composition, ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    @property
    def n_ids(self) -> int:
        return 2 * self.m - 1

    @property
    def root(self) -> int:
        return 2 * self.m - 1

    def step_for(self, node_id: int) -> Composition:
        return self.steps[node_id - self.m - 1]


@dataclass(frozen=True)
class ExtraRow:
    """Side constraint ``sum(coefs[e] * X_e) <= rhs`` over edge ids."""

    coefs: dict
    rhs: float

    def activity(self, mask) -> float:
        return sum(c * mask[e - 1] for e, c in self.coefs.items())


@dataclass(frozen=True)
class Instance:
    edges: tuple[EdgeDef, ...]
    seq: CompositionSequence
    alpha: float = 1.0
    extra_rows: tuple[ExtraRow, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "extra_rows", tuple(self.extra_rows))

    @property
    def m(self) -> int:
        return self.seq.m

    @property
    def p(self) -> list[float]:
        return [e.p for e in self.edges]

    @property
    def budget(self) -> int:
        # guard against alpha*m landing just below an integer (0.29 * 100)
        return int(math.floor(self.alpha * self.m + 1e-9))

    def is_feasible(self, mask) -> bool:
        if sum(mask) > self.budget:
            return False
        return all(row.activity(mask) <= row.rhs + 1e-9 for row in self.extra_rows)


@dataclass(frozen=True)
class ConcreteGraph:
    n: int
    edges: tuple[tuple[int, int, int], ...]  # (edge_id, u, v)


# ---------------------------------------------------------------------------
# validation


def validate(seq: CompositionSequence) -> list[str]:
    """Return the list of invariant violations; an empty list means the sequence is valid."""
    problems = []
    m = seq.m
    if m < 1:
        return [f"m must be >= 1, got {m}"]
    if len(seq.steps) != m - 1:
        problems.append(f"expected {m - 1} steps, got {len(seq.steps)}")
    used = set()
    for i, step in enumerate(seq.steps):
        expected = m + i + 1
        if step.result_id != expected:
            problems.append(f"step {i}: result id {step.result_id} should be {expected}")
        if step.kind not in (SERIES, PARALLEL):
            problems.append(f"step {i}: unknown kind {step.kind!r}")
        if step.left_id == step.right_id:
            problems.append(f"step {i}: operand {step.left_id} used twice in one step")
        for operand in (step.left_id, step.right_id):
            if not 1 <= operand < expected:
                problems.append(f"step {i}: operand {operand} is not defined before id {expected}")
            elif operand in used:
                problems.append(f"step {i}: operand {operand} reused")
            used.add(operand)
    root = 2 * m - 1
    if root in used:
        problems.append(f"root id {root} used as an operand")
    missing = sorted(set(range(1, root)) - used)
    if missing and not problems:
        problems.append(f"ids never used as operands: {missing}")
    return problems


def check_sequence(seq: CompositionSequence) -> CompositionSequence:
    problems = validate(seq)
    if problems:
        raise InstanceError("invalid composition sequence: " + "; ".join(problems))
    return seq


def check_instance_data(inst: Instance) -> Instance:
    check_sequence(inst.seq)
    ids = [e.id for e in inst.edges]
    if ids != list(range(1, inst.seq.m + 1)):
        raise InstanceError(f"edge ids must be exactly 1..{inst.seq.m} in order, got {ids}")
    for e in inst.edges:
        if not (0.0 <= e.p <= 1.0) or math.isnan(e.p):
            raise InstanceError(f"edge {e.id}: reliability {e.p} outside [0, 1]")
    if not (0.0 < inst.alpha <= 1.0):
        raise InstanceError(f"alpha must lie in (0, 1], got {inst.alpha}")
    for row in inst.extra_rows:
        for e in row.coefs:
            if not 1 <= e <= inst.seq.m:
                raise InstanceError(f"extra row references unknown edge {e}")
    return inst


# ---------------------------------------------------------------------------
# structure


def support(seq: CompositionSequence, node_id: int) -> frozenset[int]:
    """Leaf edge ids below ``node_id`` in the composition tree."""
    if not 1 <= node_id <= seq.n_ids:
        raise IndexError(f"id {node_id} outside 1..{seq.n_ids}")
    return all_supports(seq)[node_id - 1]


def all_supports(seq: CompositionSequence) -> list[frozenset[int]]:
    sets = [frozenset([e]) for e in range(1, seq.m + 1)]
    for step in seq.steps:
        sets.append(sets[step.left_id - 1] | sets[step.right_id - 1])
    return sets


def materialize(seq: CompositionSequence) -> ConcreteGraph:
    """Build a vertex/edge realization of the sequence.

    Edge ``e`` starts as its own two-terminal graph ``(s, t) = (2e-2, 2e-1)``.
    Merged vertices are tracked with a union-find and relabelled 0..n-1 in order
    of first appearance when scanning edges by id.
    """
    check_sequence(seq)
    m = seq.m
    parent = list(range(2 * m))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    terminals = {e: (2 * e - 2, 2 * e - 1) for e in range(1, m + 1)}
    for step in seq.steps:
        s1, t1 = terminals.pop(step.left_id)
        s2, t2 = terminals.pop(step.right_id)
        if step.is_series:
            union(t1, s2)
            terminals[step.result_id] = (s1, t2)
        else:
            union(s1, s2)
            union(t1, t2)
            terminals[step.result_id] = (s1, t1)

    labels: dict[int, int] = {}
    edges = []
    for e in range(1, m + 1):
        ends = []
        for raw in (2 * e - 2, 2 * e - 1):
            r = find(raw)
            if r not in labels:
                labels[r] = len(labels)
            ends.append(labels[r])
        edges.append((e, ends[0], ends[1]))
    return ConcreteGraph(n=len(labels), edges=tuple(edges))


# ---------------------------------------------------------------------------
# random generation


class SplitMix64:
    """The splitmix64 generator (Steele, Lea, Flood), fixed so instances reproduce anywhere."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randbelow(self, n: int) -> int:
        return min(int(self.random() * n), n - 1)


def generate(m: int, seed: int, alpha: float = 1.0, p_low: float = 0.9, p_high: float = 1.0) -> Instance:
    """Random series-parallel instance with ``m`` edges.

    All reliabilities are drawn first, then two distinct live components are
    picked (index ``i`` uniform over ``k`` live components, index ``j`` uniform
    over the remaining ``k - 1``) and joined in parallel if ``u < 0.5``, in
    series otherwise. The joined component is appended to the live list.
    """
    if m < 2:
        raise ValueError(f"need at least 2 edges, got m={m}")
    rng = SplitMix64(seed)
    edges = [EdgeDef(e, rng.uniform(p_low, p_high)) for e in range(1, m + 1)]
    live = list(range(1, m + 1))
    steps = []
    next_id = m + 1
    while len(live) > 1:
        k = len(live)
        i = rng.randbelow(k)
        j = rng.randbelow(k - 1)
        if j >= i:
            j += 1
        g1, g2 = live[i], live[j]
        kind = PARALLEL if rng.random() < 0.5 else SERIES
        steps.append(Composition(next_id, kind, g1, g2))
        live = [c for c in live if c != g1 and c != g2]
        live.append(next_id)
        next_id += 1
    return Instance(edges, CompositionSequence(m, steps), alpha)


def make_instance(p: Iterable[float], steps: Iterable, alpha: float = 1.0, extra_rows=()) -> Instance:
    """Convenience constructor from plain tuples ``(result_id, kind, left, right)``."""
    p = list(p)
    comps = [s if isinstance(s, Composition) else Composition(*s) for s in steps]
    rows = [r if isinstance(r, ExtraRow) else ExtraRow(dict(r[0]), float(r[1])) for r in extra_rows]
    inst = Instance([EdgeDef(i + 1, float(v)) for i, v in enumerate(p)], CompositionSequence(len(p), comps), alpha, rows)
    return check_instance_data(inst)


# ---------------------------------------------------------------------------
# file I/O


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def dumps_instance(inst: Instance) -> str:
    """Serialize to JSON text; floats carry 17 significant digits."""
    # floats go in as raw tokens so the digit count is exact
    def num(x):
        return _RawFloat(_fmt(x))

    doc = {
        "m": inst.m,
        "edges": [{"id": e.id, "p": num(e.p)} for e in inst.edges],
        "steps": [{"id": s.result_id, "op": s.kind, "left": s.left_id, "right": s.right_id} for s in inst.seq.steps],
        "alpha": num(inst.alpha),
        "extra_rows": [
            {"coefs": {str(e): num(c) for e, c in sorted(r.coefs.items())}, "rhs": num(r.rhs)}
            for r in inst.extra_rows
        ],
    }
    return _encode(doc) + "\n"


class _RawFloat(str):
    pass


def _encode(obj, indent=0) -> str:
    pad = "  " * indent
    if isinstance(obj, _RawFloat):
        return str(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        flat = all(not isinstance(v, (dict, list)) for v in obj.values())
        items = [f"{json.dumps(k)}: {_encode(v, indent + 1)}" for k, v in obj.items()]
        if flat:
            return "{" + ", ".join(items) + "}"
        return "{\n" + ",\n".join(pad + "  " + it for it in items) + "\n" + pad + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(pad + "  " + _encode(v, indent + 1) for v in obj) + "\n" + pad + "]"
    return json.dumps(obj)


def write_instance(inst: Instance, path) -> None:
    Path(path).write_text(dumps_instance(inst), encoding="utf-8")


def loads_instance(text: str) -> Instance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise InstanceError("top level must be a JSON object")

    def field_(obj, name, kind, where):
        if name not in obj:
            raise InstanceError(f"{where}: missing field {name!r}")
        val = obj[name]
        if kind is float and isinstance(val, int) and not isinstance(val, bool):
            val = float(val)
        if not isinstance(val, kind) or isinstance(val, bool):
            raise InstanceError(f"{where}: field {name!r} must be {kind.__name__}, got {val!r}")
        return val

    m = field_(doc, "m", int, "instance")
    edges = []
    seen = set()
    for k, e in enumerate(field_(doc, "edges", list, "instance")):
        where = f"edges[{k}]"
        if not isinstance(e, dict):
            raise InstanceError(f"{where}: expected an object")
        eid = field_(e, "id", int, where)
        if eid in seen:
            raise InstanceError(f"{where}: duplicate edge id {eid}")
        seen.add(eid)
        edges.append(EdgeDef(eid, field_(e, "p", float, where)))
    edges.sort(key=lambda e: e.id)
    steps = []
    for k, s in enumerate(field_(doc, "steps", list, "instance")):
        where = f"steps[{k}]"
        if not isinstance(s, dict):
            raise InstanceError(f"{where}: expected an object")
        op = field_(s, "op", str, where)
        if op not in (SERIES, PARALLEL):
            raise InstanceError(f"{where}: op must be 'S' or 'P', got {op!r}")
        steps.append(Composition(field_(s, "id", int, where), op, field_(s, "left", int, where), field_(s, "right", int, where)))
    alpha = field_(doc, "alpha", float, "instance") if "alpha" in doc else 1.0
    rows = []
    for k, r in enumerate(doc.get("extra_rows", []) or []):
        where = f"extra_rows[{k}]"
        coefs_raw = field_(r, "coefs", dict, where)
        try:
            coefs = {int(e): float(c) for e, c in coefs_raw.items()}
        except (TypeError, ValueError) as exc:
            raise InstanceError(f"{where}: bad coefficient map: {exc}") from exc
        rows.append(ExtraRow(coefs, field_(r, "rhs", float, where)))
    if len(edges) != m:
        raise InstanceError(f"instance: m={m} but {len(edges)} edges given")
    inst = Instance(edges, CompositionSequence(m, steps), alpha, rows)
    return check_instance_data(inst)


def read_instance(path) -> Instance:
    return loads_instance(Path(path).read_text(encoding="utf-8"))
