"""Minimum cost flow by successive shortest paths, plus linear assignment.

Potentials follow the convention ``cost(a) - pi[tail] + pi[head] >= 0`` on
every residual arc of an optimal flow.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import Infeasible

_EPS = 1e-12


@dataclass
class FlowNetwork:
    n: int
    tail: list = field(default_factory=list)
    head: list = field(default_factory=list)
    cap: list = field(default_factory=list)
    cost: list = field(default_factory=list)
    supply: Optional[list] = None

    def __post_init__(self):
        if self.supply is None:
            self.supply = [0] * self.n

    def add_arc(self, tail: int, head: int, cap: int, cost: float) -> int:
        if cap < 0:
            raise ValueError("negative capacity")
        if not (0 <= tail < self.n and 0 <= head < self.n):
            raise ValueError("arc endpoint out of range")
        self.tail.append(int(tail))
        self.head.append(int(head))
        self.cap.append(int(cap))
        self.cost.append(float(cost))
        return len(self.tail) - 1

    @property
    def num_arcs(self) -> int:
        return len(self.tail)


@dataclass
class FlowSolution:
    flow: np.ndarray
    potentials: np.ndarray
    objective: float


def reduced_cost_violation(net: FlowNetwork, flow, potentials) -> float:
    """Largest violation of the reduced cost optimality conditions (0 if optimal)."""
    worst = 0.0
    for k in range(net.num_arcs):
        t, h = net.tail[k], net.head[k]
        rc = net.cost[k] - potentials[t] + potentials[h]
        if flow[k] < net.cap[k]:
            worst = max(worst, -rc)
        if flow[k] > 0:
            worst = max(worst, rc)
    return worst


def _bellman_ford(n, tail, head, cap, cost):
    dist = [0.0] * n
    for _ in range(n):
        changed = False
        for t, h, u, c in zip(tail, head, cap, cost):
            if u > 0 and dist[t] + c < dist[h] - _EPS:
                dist[h] = dist[t] + c
                changed = True
        if not changed:
            return [-d for d in dist]
    raise ValueError("network contains a negative cost cycle")


def solve(net: FlowNetwork, potentials=None, flow=None) -> FlowSolution:
    """Optimal integral flow for ``net`` together with certifying potentials.

    ``potentials`` may warm start the solver; they must satisfy the reduced
    cost conditions for the starting flow (``flow``, zero by default),
    otherwise the solver restarts from the zero flow with fresh potentials.
    """
    n = net.n
    m = net.num_arcs
    supply = [int(b) for b in net.supply]
    if len(supply) != n:
        raise ValueError("supply vector has wrong length")
    if sum(supply) != 0:
        raise Infeasible("supplies do not sum to zero")
    tail, head, cost = net.tail, net.head, net.cost
    res = [0] * (2 * m)
    for k in range(m):
        res[2 * k] = net.cap[k]

    adj = [[] for _ in range(n)]
    for k in range(m):
        adj[tail[k]].append(2 * k)
        adj[head[k]].append(2 * k + 1)

    excess = supply
    pi = None
    if potentials is not None:
        pi = [float(p) for p in potentials]
        start = [0] * m if flow is None else [int(x) for x in flow]
        for k in range(m):
            rc = cost[k] - pi[tail[k]] + pi[head[k]]
            if (start[k] < net.cap[k] and rc < -1e-9) or (start[k] > 0 and rc > 1e-9):
                pi = None
                break
        if pi is not None and flow is not None:
            for k in range(m):
                f = start[k]
                if f:
                    res[2 * k] -= f
                    res[2 * k + 1] += f
                    excess[tail[k]] -= f
                    excess[head[k]] += f
    if pi is None:
        if any(c < 0 for c in cost):
            pi = _bellman_ford(n, tail, head, net.cap, cost)
        else:
            pi = [0.0] * n

    inf = float("inf")
    while True:
        sources = [v for v in range(n) if excess[v] > 0]
        if not sources:
            break
        dist = [inf] * n
        pred = [-1] * n
        done = [False] * n
        heap = []
        for v in sources:
            dist[v] = 0.0
            heap.append((0.0, v))
        heapq.heapify(heap)
        sink = -1
        while heap:
            d, v = heapq.heappop(heap)
            if done[v]:
                continue
            done[v] = True
            if excess[v] < 0:
                sink = v
                break
            pv = pi[v]
            for r in adj[v]:
                if res[r] <= 0:
                    continue
                k = r >> 1
                if r & 1:
                    w = tail[k]
                    rc = -cost[k] - pv + pi[w]
                else:
                    w = head[k]
                    rc = cost[k] - pv + pi[w]
                if rc < 0.0:
                    rc = 0.0
                nd = d + rc
                if nd < dist[w]:
                    dist[w] = nd
                    pred[w] = r
                    heapq.heappush(heap, (nd, w))
        if sink < 0:
            raise Infeasible("no augmenting path to a deficit node")
        dt = dist[sink]
        for v in range(n):
            dv = dist[v]
            pi[v] -= dv if (done[v] and dv < dt) else dt

        # bottleneck
        delta = -excess[sink]
        v = sink
        while pred[v] >= 0:
            r = pred[v]
            delta = min(delta, res[r])
            k = r >> 1
            v = head[k] if r & 1 else tail[k]
        source = v
        delta = min(delta, excess[source])
        v = sink
        while v != source:
            r = pred[v]
            res[r] -= delta
            res[r ^ 1] += delta
            k = r >> 1
            v = head[k] if r & 1 else tail[k]
        excess[source] -= delta
        excess[sink] += delta

    flow = np.array([res[2 * k + 1] for k in range(m)], dtype=np.int64)
    objective = float(sum(cost[k] * int(flow[k]) for k in range(m)))
    return FlowSolution(flow, np.asarray(pi, dtype=float), objective)


# ---------------------------------------------------------------------------
# assignment


@dataclass
class AssignmentResult:
    match: np.ndarray          # label index per row, -1 never occurs for a feasible result
    objective: float
    row_potentials: np.ndarray
    col_potentials: np.ndarray
    sink_potential: float = 0.0

    def reduced_costs_ok(self, arc_u, arc_s, cost, tol=1e-9) -> bool:
        """Check ``c - row[u] + col[s] >= 0`` (``= 0`` on matched arcs)."""
        rc = np.asarray(cost) - self.row_potentials[arc_u] + self.col_potentials[arc_s]
        matched = self.match[arc_u] == arc_s
        if np.any(rc[~matched] < -tol) or np.any(np.abs(rc[matched]) > tol):
            return False
        used = np.zeros(len(self.col_potentials), dtype=bool)
        used[self.match[self.match >= 0]] = True
        # label -> sink arcs (injective mode): free labels must not be cheaper than the sink
        slack = self.sink_potential - self.col_potentials
        return bool(np.all(slack[~used] >= -tol) and np.all(slack[used] <= tol))


def solve_assignment(n, m, arc_u, arc_s, cost, mode="injective", potentials=None):
    """Min-cost assignment of rows ``0..n-1`` to columns ``0..m-1``.

    Only arcs ``(arc_u[k], arc_s[k])`` with cost ``cost[k]`` are allowed.
    ``mode="injective"`` matches every row to a distinct column;
    ``mode="bijection"`` additionally requires ``n == m``.
    """
    arc_u = np.asarray(arc_u, dtype=np.int64)
    arc_s = np.asarray(arc_s, dtype=np.int64)
    cost = np.asarray(cost, dtype=float)
    if mode not in ("injective", "bijection"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "bijection" and n != m:
        raise Infeasible(f"bijection needs a square problem, got {n}x{m}")
    if n > m:
        raise Infeasible(f"cannot match {n} rows into {m} columns")
    sink = n + m
    net = FlowNetwork(n + m + 1)
    net.tail = (arc_u).tolist()
    net.head = (arc_s + n).tolist()
    net.cap = [1] * len(arc_u)
    net.cost = cost.tolist()
    for s in range(m):
        net.add_arc(n + s, sink, 1, 0.0)
    net.supply = [1] * n + [0] * m + [-n]

    warm = potentials
    if potentials is None:
        potentials = np.zeros(n + m + 1)
        if len(arc_u):
            rowmin = np.full(n, np.inf)
            np.minimum.at(rowmin, arc_u, cost)
            potentials[:n] = np.where(np.isfinite(rowmin), rowmin, 0.0)
    if n and np.any(np.bincount(arc_u, minlength=n) == 0):
        raise Infeasible("some row has no admissible column")
    start = None
    if warm is None:
        # greedy start on zero reduced cost arcs into free columns
        start = [0] * net.num_arcs
        free = np.ones(m, dtype=bool)
        tight = np.flatnonzero(cost - potentials[arc_u] <= 0.0)
        done = np.zeros(n, dtype=bool)
        for k in tight:
            u, s = arc_u[k], arc_s[k]
            if not done[u] and free[s]:
                done[u] = True
                free[s] = False
                start[k] = 1
                start[len(arc_u) + s] = 1
    sol = solve(net, potentials, start)

    k = len(arc_u)
    match = np.full(n, -1, dtype=np.int64)
    sel = np.flatnonzero(sol.flow[:k] > 0)
    match[arc_u[sel]] = arc_s[sel]
    pi = sol.potentials
    return AssignmentResult(
        match=match,
        objective=float(cost[sel].sum()),
        row_potentials=pi[:n].copy(),
        col_potentials=pi[n:n + m].copy(),
        sink_potential=float(pi[sink]),
    )


def assignment(costs, mode="injective", shape=None) -> AssignmentResult:
    """Linear assignment from a dict ``{(u, s): c}`` or a matrix (``inf`` = missing)."""
    if isinstance(costs, dict):
        if shape is None:
            n = 1 + max((u for u, _ in costs), default=-1)
            m = 1 + max((s for _, s in costs), default=-1)
        else:
            n, m = shape
        keys = sorted(costs)
        arc_u = [u for u, _ in keys]
        arc_s = [s for _, s in keys]
        cost = [costs[key] for key in keys]
    else:
        mat = np.atleast_2d(np.asarray(costs, dtype=float))
        n, m = mat.shape
        arc_u, arc_s = np.nonzero(np.isfinite(mat))
        cost = mat[arc_u, arc_s]
    return solve_assignment(n, m, arc_u, arc_s, cost, mode)
