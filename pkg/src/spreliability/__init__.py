"""Exact reliability-maximizing edge selection on series-parallel graphs."""
from .bnb import BranchAndCut, SolveResult, solve
from .envelopes import BoundSet, Box, LinearCut, propagate_bounds
from .estimator import ReliabilityMaximizer
from .lp import Basis, DualSimplex, LPProblem, LPSolution, LPStatus
from .model import CutMode, RelaxationConfig, VarMap, build_relaxation
from .reliability import EvalTrace, evaluate, oracle_optimize, oracle_reliability, reliability
from .spgraph import (
    Composition,
    CompositionSequence,
    EdgeDef,
    ExtraRow,
    Instance,
    InstanceError,
    generate,
    make_instance,
    materialize,
    read_instance,
    support,
    validate,
    write_instance,
)

__version__ = "0.1.0"
