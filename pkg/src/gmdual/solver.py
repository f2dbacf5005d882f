"""High level entry point: build a relaxation, run dual ascent, round."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from . import engine
from .instance import Assignment, GraphMatchingInstance
from .relaxations import Relaxation, build
from .rounding import Rounder, mcf_round
from .tighten import tighten


@dataclass
class SolveResult:
    method: str
    lower_bound: float
    upper_bound: float
    assignment: Optional[Assignment]
    iterations: int
    elapsed: float
    relaxation: Relaxation
    state: engine.DualState

    @property
    def gap(self) -> float:
        return self.upper_bound - self.lower_bound


def solve(
    inst: GraphMatchingInstance,
    method: str = "amp-o",
    opts: Optional[engine.SolveOptions] = None,
    progress: Optional[Callable] = None,
) -> SolveResult:
    opts = opts or engine.SolveOptions()
    rel = build(inst, method)
    schedule = rel.schedule()
    on_stall = None
    if opts.tighten:
        on_stall = lambda g, s: tighten(rel, s, opts.tighten_budget)
    state = engine.run(rel.graph, schedule, opts, Rounder(rel), progress, on_stall)
    if state.best_assignment is None and inst.num_nodes:
        cand = mcf_round(rel)
        state.best_assignment = cand
    elif state.best_assignment is None:
        state.best_assignment = Assignment([], 0.0)
    return SolveResult(
        method=method,
        lower_bound=state.lower_bound,
        upper_bound=state.upper_bound,
        assignment=state.best_assignment,
        iterations=state.iteration,
        elapsed=state.elapsed,
        relaxation=rel,
        state=state,
    )
