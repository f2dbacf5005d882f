"""Dual ascent solvers for graph matching (quadratic assignment) problems."""

from .engine import DualState, Schedule, SolveOptions, check_admissible, dual_bound, run, send_messages
from .errors import (
    AllForbiddenRow,
    DuplicateTriplet,
    FlowInfeasible,
    GraphMatchingError,
    Infeasible,
    InfeasibleAssignment,
    InstanceSyntaxError,
    NoFeasibleLabel,
    NotBijective,
    TooLarge,
)
from .instance import (
    UNASSIGNED,
    Assignment,
    GraphMatchingInstance,
    build_inverse,
    energy,
    load_instance,
    parse_instance,
    random_instance,
    serialize_instance,
)
from .oracle import audit_run, brute_force
from .relaxations import METHODS, build, build_schedule
from .solver import SolveResult, solve

__version__ = "0.1.0"
