"""Dual ascent over a factor graph: admissible messages and the sweep loop."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .factors import Coupling, FactorGraph, MarginalCoupling, SimplexFactor
from .instance import Assignment


@dataclass
class MessageUpdate:
    coupling: Coupling
    sender: object
    delta: np.ndarray

    @property
    def receiver(self):
        return self.coupling.other(self.sender)


@dataclass
class Schedule:
    """Factor visiting order with receive/send neighbourhoods per factor."""

    order: list
    recv: dict
    send: dict
    forward: bool = True
    skip_receive_from: frozenset = frozenset()
    _partner: Optional["Schedule"] = field(default=None, repr=False, compare=False)
    _plan: Optional[list] = field(default=None, repr=False, compare=False)

    def reversed(self) -> "Schedule":
        if self._partner is None:
            self._partner = Schedule(
                order=list(reversed(self.order)),
                recv=self.send,
                send=self.recv,
                forward=not self.forward,
                skip_receive_from=self.skip_receive_from,
                _partner=self,
            )
        return self._partner

    def plan(self, g: FactorGraph) -> list:
        """Per visited factor: receive couplings ``[(j, c)]`` and send couplings."""
        if self._plan is None:
            self._plan = [
                (i,
                 [(j, g.coupling(i, j)) for j in self.receive_sources(i)],
                 [g.coupling(i, j) for j in self.send.get(i, ())])
                for i in self.order
            ]
        return self._plan

    def receive_sources(self, i):
        # matching factors only exchange messages through their own send step
        if i in self.skip_receive_from:
            return []
        return [j for j in self.recv.get(i, ()) if j not in self.skip_receive_from]


@dataclass
class SolveOptions:
    max_iter: int = 1000
    gap_tol: float = 1e-8
    round_every: int = 5
    tighten: bool = True
    tighten_budget: int = 50
    stall_iters: int = 10
    stall_tol: float = 1e-8
    time_limit: Optional[float] = None


@dataclass
class DualState:
    lower_bound: float = -math.inf
    iteration: int = 0
    best_assignment: Optional[Assignment] = None
    stall: int = 0
    history: list = field(default_factory=list)
    elapsed: float = 0.0
    tightenings: int = 0

    @property
    def upper_bound(self) -> float:
        return math.inf if self.best_assignment is None else self.best_assignment.energy

    @property
    def gap(self) -> float:
        return self.upper_bound - self.lower_bound


def dual_bound(g: FactorGraph) -> float:
    """Sum over factors of their minimal reparametrized cost."""
    return g.dual_bound()


def _identity_update(delta):
    node = SimplexFactor(np.zeros(len(delta)))
    pair = SimplexFactor(np.zeros(len(delta)))
    return MessageUpdate(MarginalCoupling(node, pair, 0), node, np.asarray(delta, dtype=float))


def check_admissible(updates, theta=None, x_star=None, tol: float = 1e-9) -> bool:
    """True iff the messages have the admissible sign pattern and keep ``x_star`` optimal.

    ``updates`` is a :class:`MessageUpdate`, a list of them from one sender, or
    a bare vector (a message out of a simplex factor with identity coupling).
    ``theta`` and ``x_star`` default to the sender's current costs and cached
    optimum.
    """
    if isinstance(updates, MessageUpdate):
        updates = [updates]
    elif not isinstance(updates, (list, tuple)):
        updates = [_identity_update(updates)]
    if not updates:
        return True
    f = updates[0].sender
    saved_theta = f.theta
    saved_x = f.x_star
    saved_pot = getattr(f, "potentials", None)
    try:
        f.theta = np.array(saved_theta if theta is None else theta, dtype=float)
        if x_star is None:
            x_star = saved_x if saved_x is not None else f.optimize()[0]
        for up in updates:
            d = np.asarray(up.delta, dtype=float)
            nu = up.coupling.nu(f, x_star)
            if np.any(d[nu > 0.5] > tol) or np.any(d[nu < 0.5] < -tol):
                return False
        for up in updates:
            up.coupling.add(f, np.asarray(up.delta, dtype=float), -1.0)
        if not f.is_allowed(x_star):
            return False
        best = f.min_value()
        return f.state_cost(x_star) <= best + tol * max(1.0, abs(best))
    finally:
        f.theta = saved_theta
        f.x_star = saved_x
        if saved_pot is not None:
            f.potentials = saved_pot


def send_messages(g: FactorGraph, i: int, J, hook: Optional[Callable] = None):
    """Optimize factor ``i``, compute maximal admissible messages to ``J`` and apply them.

    Returns the applied :class:`MessageUpdate` list.
    """
    if not J:
        return []
    return _send(g.factors[i], [g.coupling(i, j) for j in J], hook or _no_hook)


def _no_hook(f, updates):
    pass


def _send(f, couplings, hook=None):
    if hook is None:
        if f.needs_optimum:
            f.optimize()
        for c, d in zip(couplings, f.messages(couplings)):
            mask = c.coord_allowed()
            if mask is not None:
                d = np.where(mask, d, 0.0)
            c.add(f, d, -1.0)
            c.add(c.other(f), d, 1.0)
        return None
    f.optimize()
    deltas = f.messages(couplings)
    updates = []
    for c, d in zip(couplings, deltas):
        mask = c.coord_allowed()
        if mask is not None:
            d = np.where(mask, d, 0.0)
        updates.append(MessageUpdate(c, f, d))
    if hook is not None:
        hook(f, updates)
    for up in updates:
        c = up.coupling
        c.add(f, up.delta, -1.0)
        c.add(c.other(f), up.delta, 1.0)
    return updates


class RoundingHook:
    """Protocol for primal heuristics driven from inside a sweep."""

    def begin(self, g: FactorGraph, schedule: Schedule):
        pass

    def visit(self, i: int):
        pass

    def end(self) -> Optional[Assignment]:
        return None


def sweep(g: FactorGraph, schedule: Schedule, round_hook=None, hook=None):
    """One pass of the schedule in its current direction."""
    if round_hook is not None:
        round_hook.begin(g, schedule)
    factors = g.factors
    for i, recv, send in schedule.plan(g):
        for j, c in recv:
            _send(factors[j], [c], hook)
        if round_hook is not None:
            round_hook.visit(i)
        if send:
            _send(factors[i], send, hook)
    if round_hook is not None:
        return round_hook.end()
    return None


def run(
    g: FactorGraph,
    schedule: Schedule,
    opts: Optional[SolveOptions] = None,
    round_hook: Optional[RoundingHook] = None,
    progress: Optional[Callable] = None,
    on_stall: Optional[Callable] = None,
    hook: Optional[Callable] = None,
    after_iteration: Optional[Callable] = None,
) -> DualState:
    """Alternate forward and backward sweeps until the gap closes or progress stops.

    ``on_stall(g, schedule)`` may return a new schedule (after tightening) to
    continue with, or ``None`` to stop.
    """
    opts = opts or SolveOptions()
    state = DualState()
    start = time.perf_counter()
    state.lower_bound = dual_bound(g)
    window_start = 0
    for it in range(1, opts.max_iter + 1):
        state.iteration = it
        rounding = round_hook is not None and (it - 1) % opts.round_every == 0
        candidate = sweep(g, schedule, round_hook if rounding else None, hook)
        if candidate is not None and candidate.energy < state.upper_bound:
            state.best_assignment = candidate
        lb = dual_bound(g)
        state.lower_bound = max(state.lower_bound, lb)
        state.history.append(state.lower_bound)
        state.elapsed = time.perf_counter() - start
        if progress is not None:
            progress(it, state.elapsed, state.lower_bound, state.upper_bound)
        if after_iteration is not None:
            after_iteration(it, g)
        schedule = schedule.reversed()
        if state.upper_bound - state.lower_bound <= opts.gap_tol:
            break
        if opts.time_limit is not None and state.elapsed > opts.time_limit:
            break
        h = state.history
        if len(h) - window_start > opts.stall_iters:
            gain = h[-1] - h[-1 - opts.stall_iters]
            if gain < opts.stall_tol:
                state.stall += 1
                new = on_stall(g, schedule) if on_stall is not None else None
                if new is None:
                    break
                schedule = new
                state.tightenings += 1
                window_start = len(h)
    return state
