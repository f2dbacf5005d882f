"""Exact enumeration and run auditing for small instances."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import engine
from .errors import TooLarge
from .instance import Assignment, GraphMatchingInstance, energy

MAX_LABELINGS = 10 ** 7


def count_labelings(inst: GraphMatchingInstance) -> int:
    """Upper bound on the number of injective labelings the enumeration visits."""
    n, m = inst.num_nodes, inst.num_labels
    prod = 1
    for ls in inst.label_sets:
        prod *= len(ls)
    falling = math.perm(m, n) if n <= m else 0
    return min(prod, falling)


def brute_force(inst: GraphMatchingInstance, limit: int = MAX_LABELINGS) -> Assignment:
    """Exact minimum over all injective labelings (recursive, used-label bitmask)."""
    if count_labelings(inst) > limit:
        raise TooLarge(f"more than {limit} labelings to enumerate")
    n = inst.num_nodes
    if n == 0:
        return Assignment(np.zeros(0, dtype=np.int64), 0.0)
    unary = [c.tolist() for c in inst.unary]
    labels = [ls.tolist() for ls in inst.label_sets]
    # pairwise terms against earlier nodes: back[u] = [(v, matrix oriented (v, u))]
    back = [[] for _ in range(n)]
    for (u, v), m in inst.pairwise.items():
        back[v].append((u, m))
    pos = [0] * n
    best = [math.inf, None]

    def rec(u, used, acc):
        if u == n:
            if acc < best[0]:
                best[0] = acc
                best[1] = list(pos)
            return
        for k, s in enumerate(labels[u]):
            bit = 1 << s
            if used & bit:
                continue
            c = acc + unary[u][k]
            for v, m in back[u]:
                c += m[pos[v], k]
            pos[u] = k
            rec(u + 1, used | bit, c)

    rec(0, 0, 0.0)
    if best[1] is None:
        return Assignment(np.full(n, -1, dtype=np.int64), math.inf)
    lab = np.array([inst.label_sets[u][k] for u, k in enumerate(best[1])], dtype=np.int64)
    return Assignment(lab, energy(inst, lab))


def random_labelings(inst: GraphMatchingInstance, count: int, rng) -> list:
    """Up to ``count`` random feasible labelings (random greedy with restarts)."""
    out = []
    n = inst.num_nodes
    tries = 0
    while len(out) < count and tries < 50 * count:
        tries += 1
        taken = set()
        lab = np.empty(n, dtype=np.int64)
        ok = True
        for u in rng.permutation(n):
            free = [int(s) for s in inst.label_sets[u] if int(s) not in taken]
            if not free:
                ok = False
                break
            s = free[rng.integers(len(free))]
            lab[u] = s
            taken.add(s)
        if ok:
            out.append(lab)
    return out


@dataclass
class AuditReport:
    updates: int = 0
    bound_checks: int = 0
    energy_checks: int = 0
    violations: list = field(default_factory=list)
    state: Optional[engine.DualState] = None

    @property
    def ok(self) -> bool:
        return not self.violations

    def first(self):
        return self.violations[0] if self.violations else None


def audit_run(rel, iters: int, schedule=None, *, labelings: int = 100, seed: int = 0,
              tol: float = 1e-9, opts=None, tighten: bool = False,
              tamper: Optional[Callable] = None, energy_every: int = 10) -> AuditReport:
    """Run ``iters`` sweeps checking every message, the bound and cost preservation."""
    from .tighten import tighten as tighten_step

    g = rel.graph
    schedule = schedule or rel.schedule()
    report = AuditReport()
    rng = np.random.default_rng(seed)
    sample = random_labelings(rel.instance, labelings, rng)
    reference = [energy(rel.instance, lab) for lab in sample]
    last = [g.dual_bound()]
    ctx = {"iteration": 0}

    def check_bound(where):
        now = g.dual_bound()
        report.bound_checks += 1
        if now < last[0] - tol:
            report.violations.append(
                f"iteration {ctx['iteration']}: bound decreased from {last[0]!r} to {now!r} {where}"
            )
        last[0] = now

    def hook(f, updates):
        check_bound(f"before message from {f!r}")
        if tamper is not None:
            tamper(f, updates)
        report.updates += len(updates)
        if not engine.check_admissible(updates):
            report.violations.append(
                f"iteration {ctx['iteration']}: inadmissible message from {f!r} to "
                f"{[u.receiver for u in updates]!r}: {[u.delta.tolist() for u in updates]}"
            )

    def check_energy(it):
        for lab, ref in zip(sample, reference):
            report.energy_checks += 1
            got = rel.decomposed_cost(lab)
            if abs(got - ref) > tol * max(1.0, abs(ref)):
                report.violations.append(
                    f"iteration {it}: decomposed cost {got!r} != energy {ref!r} for {lab.tolist()}"
                )
                return

    def after(it, _g):
        ctx["iteration"] = it + 1
        check_bound(f"at end of iteration {it}")
        if it % energy_every == 0 or it == iters:
            check_energy(it)

    if iters <= 0:
        check_energy(0)
        return report
    opts = opts or engine.SolveOptions()
    opts = engine.SolveOptions(**{**opts.__dict__, "max_iter": iters, "gap_tol": -math.inf})
    on_stall = (lambda _g, s: tighten_step(rel, s, opts.tighten_budget)) if tighten else None
    ctx["iteration"] = 1
    report.state = engine.run(g, schedule, opts, hook=hook, after_iteration=after,
                              on_stall=on_stall)
    if report.state.iteration < iters and report.state.iteration % energy_every != 0:
        check_energy(report.state.iteration)
    return report
