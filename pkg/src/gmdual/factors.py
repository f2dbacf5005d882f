"""Factor kinds, their coupling maps and closed-form message computations.

Message convention: a factor ``i`` sending ``delta`` along a coupling
subtracts ``A_i^T delta`` from its own costs and the receiver adds
``A_j^T delta`` to its costs.  A message is admissible when ``delta <= 0``
on coordinates the sender's optimum selects, ``delta >= 0`` elsewhere, and
the optimum stays optimal after the update.
"""

from __future__ import annotations

import numpy as np

from . import mcf
from .errors import AllForbiddenRow, FlowInfeasible, Infeasible

INF = np.inf


# ---------------------------------------------------------------------------
# closed-form messages on plain arrays


def _masked(theta, allowed):
    if allowed is None:
        return theta
    return np.where(allowed, theta, INF)


def msg_node_to_edges(theta, num_edges, allowed=None):
    """Message from a simplex factor to each of ``num_edges`` marginal couplings."""
    theta = np.asarray(theta, dtype=float)
    if num_edges < 1:
        raise ValueError("need at least one recipient")
    t = _masked(theta, allowed)
    d = (t - t.min()) / num_edges
    if allowed is not None:
        d[~allowed] = 0.0
    return d


def msg_node_to_label(theta, idx, allowed=None):
    """Message along the single entry ``idx``: its cost minus the best alternative."""
    theta = np.asarray(theta, dtype=float)
    t = _masked(theta, allowed)
    if not np.isfinite(t[idx]):
        return 0.0
    others = np.delete(t, idx)
    if others.size == 0 or not np.isfinite(others.min()):
        return 0.0
    return float(t[idx] - others.min())


def msg_edge_to_node(theta, axis, allowed=None, node_allowed=None):
    """Min-marginal of a pairwise cost matrix along ``axis`` minus its global minimum."""
    t = _masked(np.asarray(theta, dtype=float), allowed)
    mm = t.min(axis=1 - axis)
    gmin = mm.min()
    bad = ~np.isfinite(mm)
    if node_allowed is not None:
        bad &= node_allowed
    if np.any(bad):
        raise AllForbiddenRow(f"labels {np.flatnonzero(bad).tolist()} have no allowed partner")
    d = mm - gmin
    d[~np.isfinite(d)] = 0.0
    return d


def msg_triplet_to_edge(theta, axes, allowed=None):
    """Min over the remaining axis of a triplet cost minus its global minimum."""
    t = _masked(np.asarray(theta, dtype=float), allowed)
    third = ({0, 1, 2} - set(axes)).pop()
    mm = t.min(axis=third)
    d = mm - mm.min()
    d[~np.isfinite(d)] = 0.0
    return d


# ---------------------------------------------------------------------------
# factors


class Factor:
    kind = "factor"
    # closed-form messages find the optimum themselves; only factors whose
    # messages read the cached x* need optimize() before every send
    needs_optimum = False

    def __init__(self, theta, allowed=None, scope=None):
        self.theta = np.array(theta, dtype=float)
        self.allowed = None if allowed is None else np.array(allowed, dtype=bool)
        self.scope = scope
        self.index = -1
        self.x_star = None

    def masked(self):
        return _masked(self.theta, self.allowed)

    def optimize(self):
        t = self.masked()
        flat = int(t.argmin())
        if t.ndim == 1:
            state = flat
        elif t.ndim == 2:
            state = divmod(flat, t.shape[1])
        else:
            state = tuple(int(s) for s in np.unravel_index(flat, t.shape))
        self.x_star = state
        return state, float(t.flat[flat])

    def min_value(self) -> float:
        return float(self.masked().min())

    def state_cost(self, state) -> float:
        return float(self.theta[state])

    def is_allowed(self, state) -> bool:
        return self.allowed is None or bool(self.allowed[state])

    def messages(self, couplings):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.scope})"


class SimplexFactor(Factor):
    """One label out of a finite set; used for nodes, inverse nodes and labels.

    Label factors carry the dummy "unassigned" entry as their last coordinate.
    """

    kind = "simplex"

    def __init__(self, theta, allowed=None, scope=None, dummy=False):
        super().__init__(theta, allowed, scope)
        if self.theta.ndim != 1 or self.theta.size < 1:
            raise ValueError("simplex factor needs a non-empty cost vector")
        self.dummy = dummy

    def messages(self, couplings):
        # Full couplings receive (theta - min) / |J|; an entry coupling on
        # label s receives (theta(s) - min over the other labels) / |J|, which
        # is negative on the optimum.  Both keep the optimum optimal.
        t = self.masked()
        k = len(couplings)
        best = int(t.argmin())
        m = t[best]
        m2 = slack = None
        out = []
        for c in couplings:
            v = c.view(self)
            if v[0] == "full":
                if slack is None:
                    slack = t - m
                    if self.allowed is not None:
                        slack[~self.allowed] = 0.0
                out.append(slack / k)
                continue
            idx = v[1]
            if idx == best:
                if m2 is None:
                    m2 = np.partition(t, 1)[1] if t.size > 1 else INF
                other = m2
            else:
                other = m
            ti = t[idx]
            if ti < INF and other < INF:
                out.append(np.array([(ti - other) / k]))
            else:
                out.append(np.zeros(1))
        return out


class PairwiseFactor(Factor):
    kind = "pairwise"

    def __init__(self, theta, allowed=None, scope=None):
        super().__init__(theta, allowed, scope)
        if self.theta.ndim != 2:
            raise ValueError("pairwise factor needs a cost matrix")

    def messages(self, couplings):
        out = []
        k = len(couplings)
        t = self.masked()
        gmin = t.min()
        for c in couplings:
            v = c.view(self)
            if v[0] == "axis":
                mm = t.min(axis=1 - v[1])
            else:  # identity onto a triplet
                mm = t
            d = (mm - gmin) / k
            d[~np.isfinite(d)] = 0.0
            out.append(d)
        return out


class TripletFactor(Factor):
    kind = "triplet"

    def __init__(self, shape, allowed=None, scope=None):
        super().__init__(np.zeros(shape), allowed, scope)

    def messages(self, couplings):
        k = len(couplings)
        t = self.masked()
        gmin = t.min()
        out = []
        for c in couplings:
            axes = c.view(self)[1]
            third = ({0, 1, 2} - set(axes)).pop()
            d = (t.min(axis=third) - gmin) / k
            d[~np.isfinite(d)] = 0.0
            out.append(d)
        return out


class FlowFactor(Factor):
    """Injective bipartite matching of every node to a distinct label.

    Costs live on arcs ``(arc_node[a], arc_label[a])`` grouped by node, labels
    ascending inside each group.
    """

    kind = "flow"
    needs_optimum = True

    def __init__(self, label_sets, num_labels, scope=("flow",)):
        sizes = [len(ls) for ls in label_sets]
        self.n = len(label_sets)
        self.m = int(num_labels)
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.arc_node = np.repeat(np.arange(self.n), sizes).astype(np.int64)
        self.arc_label = (
            np.concatenate([np.asarray(ls, dtype=np.int64) for ls in label_sets])
            if self.n else np.zeros(0, dtype=np.int64)
        )
        super().__init__(np.zeros(len(self.arc_node)), None, scope)
        order = np.argsort(self.arc_label, kind="stable")
        bounds = np.searchsorted(self.arc_label[order], np.arange(self.m + 1))
        self.arcs_by_label = [order[bounds[s]:bounds[s + 1]] for s in range(self.m)]
        self.potentials = None
        self._value = None
        self._after_send = None

    def optimize(self):
        try:
            res = mcf.solve_assignment(
                self.n, self.m, self.arc_node, self.arc_label, self.theta, mode="injective"
            )
        except Infeasible as exc:
            raise FlowInfeasible(str(exc)) from None
        state = np.empty(self.n, dtype=np.int64)
        for u in range(self.n):
            lo, hi = self.offsets[u], self.offsets[u + 1]
            state[u] = lo + int(np.searchsorted(self.arc_label[lo:hi], res.match[u]))
        self.x_star = state
        self.potentials = np.concatenate(
            [res.row_potentials, res.col_potentials, [res.sink_potential]]
        )
        self._value = float(self.theta[state].sum())
        return state, self._value

    def min_value(self) -> float:
        # right after an admissible send x* is still optimal, no re-solve needed
        if self._after_send is not None and np.array_equal(self.theta, self._after_send):
            return float(self.theta[self.x_star].sum())
        return self.optimize()[1]

    def state_cost(self, state) -> float:
        return float(self.theta[np.asarray(state)].sum())

    def is_allowed(self, state) -> bool:
        return True

    def state_from_labels(self, labels):
        """Arc ids selected by a labeling given as label index per node."""
        out = np.empty(self.n, dtype=np.int64)
        for u, s in enumerate(labels):
            lo, hi = self.offsets[u], self.offsets[u + 1]
            k = lo + int(np.searchsorted(self.arc_label[lo:hi], s))
            if k >= hi or self.arc_label[k] != s:
                raise KeyError((u, s))
            out[u] = k
        return out

    def coords(self, coupling):
        v = coupling.view(self)
        if v[0] == "node":
            u = v[1]
            return np.arange(self.offsets[u], self.offsets[u + 1])
        return self.arcs_by_label[v[1]]

    def messages(self, couplings):
        if self.x_star is None:
            self.optimize()
        out = [None] * len(couplings)
        applied = np.zeros_like(self.theta)
        for side in ("node", "label"):
            idx = [k for k, c in enumerate(couplings) if c.view(self)[0] == side]
            if not idx:
                continue
            if applied.any():
                # later sides see the costs left by earlier ones; fresh optimal
                # potentials certify every optimal matching, so x* is kept
                self.theta -= applied
                keep = self.x_star
                self.optimize()
                self.x_star = keep
            delta = self._flow_message(side, [couplings[k] for k in idx])
            self.theta += applied
            for k in idx:
                out[k] = delta[self.coords(couplings[k])]
            applied += delta
        self._after_send = self.theta - applied
        return out

    def _flow_message(self, side, couplings):
        """Maximal admissible message to one side, solved as a min-cost-flow dual.

        Returns the message on every arc (zero outside the coupled arcs).  The
        new potentials, which certify the optimum for the updated costs, are
        cached.
        """
        n, m = self.n, self.m
        c = self.theta
        matched = np.zeros(len(c), dtype=bool)
        matched[self.x_star] = True
        in_j = np.zeros(len(c), dtype=bool)
        for cp in couplings:
            in_j[self.coords(cp)] = True
        if side == "node":
            deg = np.diff(self.offsets)[self.arc_node]
        else:
            deg = np.array([len(a) for a in self.arcs_by_label], dtype=np.int64)[self.arc_label]
        weight = np.where(in_j & ~matched, 1 - deg, 0).astype(np.int64)

        P = self.potentials
        pu = P[self.arc_node]
        ps = P[n + self.arc_label]
        rc = c - pu + ps
        big = 1.0 + float(np.abs(rc).sum())
        sink = n + m
        used = np.zeros(m, dtype=bool)
        used[self.arc_label[self.x_star]] = True

        net = mcf.FlowNetwork(n + m + 1)
        cap = int(-weight.sum()) + 1
        tail, head, cost = [], [], []
        for a in range(len(c)):
            u, s = int(self.arc_node[a]), n + int(self.arc_label[a])
            if matched[a]:
                tail.append(s); head.append(u); cost.append(-float(c[a]))
            else:
                tail.append(u); head.append(s); cost.append(float(c[a]))
        for s in range(m):
            if used[s]:
                tail.append(sink); head.append(n + s)
            else:
                tail.append(n + s); head.append(sink)
            cost.append(0.0)
        # bound the message on arcs no alternative matching can use
        for a in np.flatnonzero(weight):
            tail.append(n + int(self.arc_label[a])); head.append(int(self.arc_node[a]))
            cost.append(big - float(pu[a]) + float(ps[a]))
        # solve in reduced-cost space: every residual arc starts non-negative,
        # which keeps float noise from showing up as negative cycles
        tail, head = np.asarray(tail), np.asarray(head)
        red = np.maximum(np.asarray(cost) - P[tail] + P[head], 0.0)
        net.tail, net.head, net.cost = tail.tolist(), head.tolist(), red.tolist()
        net.cap = [cap] * len(tail)
        supply = np.zeros(n + m + 1, dtype=np.int64)
        np.add.at(supply, self.arc_node, weight)
        np.add.at(supply, n + self.arc_label, -weight)
        net.supply = supply.tolist()
        sol = mcf.solve(net, np.zeros(n + m + 1))
        Q = P + sol.potentials
        y = Q[self.arc_node] - Q[n + self.arc_label]
        delta = np.where(in_j, c - y, 0.0)
        # clean float noise so that the sign pattern is exact
        delta[in_j & matched] = np.minimum(delta[in_j & matched], 0.0)
        delta[in_j & ~matched] = np.maximum(delta[in_j & ~matched], 0.0)
        self.potentials = Q
        return delta


# ---------------------------------------------------------------------------
# couplings


class Coupling:
    """Linear coupling between two factors; ``view(f)`` says how ``f`` sees it."""

    def __init__(self, a, b):
        self.a = a
        self.b = b

    def other(self, f):
        return self.b if f is self.a else self.a

    def view(self, f):
        raise NotImplementedError

    def size(self) -> int:
        raise NotImplementedError

    def add(self, f, delta, sign=1.0):
        """``theta_f += sign * A_f^T delta``."""
        raise NotImplementedError

    def nu(self, f, state) -> np.ndarray:
        """``A_f x`` for a state of ``f``."""
        raise NotImplementedError

    def coord_allowed(self):
        """Mask over coupling coordinates that may carry non-zero messages."""
        return None

    def __repr__(self):
        return f"{type(self).__name__}({self.a.scope}, {self.b.scope})"


class MarginalCoupling(Coupling):
    """Simplex factor ``node`` is the marginal of ``pair`` along ``axis``."""

    def __init__(self, node, pair, axis):
        super().__init__(node, pair)
        self.axis = axis

    def view(self, f):
        return ("full", None) if f is self.a else ("axis", self.axis)

    def size(self):
        return self.a.theta.size

    def add(self, f, delta, sign=1.0):
        if f is not self.a:
            delta = delta[:, None] if self.axis == 0 else delta[None, :]
        if sign == 1.0:
            f.theta += delta
        elif sign == -1.0:
            f.theta -= delta
        else:
            f.theta += sign * delta

    def nu(self, f, state):
        out = np.zeros(self.size())
        out[state if f is self.a else state[self.axis]] = 1.0
        return out

    def coord_allowed(self):
        return self.a.allowed


class EntryCoupling(Coupling):
    """Entry ``ia`` of simplex ``a`` equals entry ``ib`` of simplex ``b``."""

    def __init__(self, a, ia, b, ib):
        super().__init__(a, b)
        self.ia = ia
        self.ib = ib
        self._ok = None

    def view(self, f):
        return ("entry", self.ia if f is self.a else self.ib)

    def size(self):
        return 1

    def add(self, f, delta, sign=1.0):
        f.theta[self.ia if f is self.a else self.ib] += sign * delta[0]

    def nu(self, f, state):
        return np.array([1.0 if state == (self.ia if f is self.a else self.ib) else 0.0])

    def coord_allowed(self):
        if self._ok is None:
            self._ok = self._coord_allowed()
        return self._ok if self._ok is not False else None

    def _coord_allowed(self):
        ok = True
        if self.a.allowed is not None:
            ok &= bool(self.a.allowed[self.ia])
        if self.b.allowed is not None:
            ok &= bool(self.b.allowed[self.ib])
        return False if ok else np.array([False])


class FlowNodeCoupling(Coupling):
    """Simplex factor of node ``u`` equals the flow factor's arcs leaving ``u``."""

    def __init__(self, node, flow, u):
        super().__init__(node, flow)
        self.u = u
        self._coords = flow.coords(self)

    def view(self, f):
        return ("full", None) if f is self.a else ("node", self.u)

    def size(self):
        return self.a.theta.size

    def add(self, f, delta, sign=1.0):
        if f is self.a:
            f.theta += sign * delta
        else:
            f.theta[self._coords] += sign * delta

    def nu(self, f, state):
        out = np.zeros(self.size())
        if f is self.a:
            out[state] = 1.0
        else:
            out[int(state[self.u]) - int(self.b.offsets[self.u])] = 1.0
        return out

    def coord_allowed(self):
        return self.a.allowed


class FlowLabelCoupling(Coupling):
    """Inverse-node factor of label ``s`` equals the flow factor's arcs entering ``s``."""

    def __init__(self, inode, flow, s):
        super().__init__(inode, flow)
        self.s = s
        self._coords = flow.coords(self)

    def view(self, f):
        return ("full", None) if f is self.a else ("label", self.s)

    def size(self):
        return self.a.theta.size

    def add(self, f, delta, sign=1.0):
        if f is self.a:
            f.theta += sign * delta
        else:
            f.theta[self._coords] += sign * delta

    def nu(self, f, state):
        out = np.zeros(self.size())
        if f is self.a:
            out[state] = 1.0
        else:
            hit = np.flatnonzero(np.isin(self._coords, state))
            out[hit] = 1.0
        return out

    def coord_allowed(self):
        return self.a.allowed


class TripletCoupling(Coupling):
    """Pairwise factor is the marginal of a triplet over ``axes``."""

    _EXPAND = {(0, 1): (slice(None), slice(None), None),
               (0, 2): (slice(None), None, slice(None)),
               (1, 2): (None, slice(None), slice(None))}

    def __init__(self, pair, tri, axes):
        super().__init__(pair, tri)
        self.axes = tuple(axes)

    def view(self, f):
        return ("full", None) if f is self.a else ("axes", self.axes)

    def size(self):
        return self.a.theta.size

    def add(self, f, delta, sign=1.0):
        if f is self.a:
            f.theta += sign * delta
        else:
            f.theta += sign * delta[self._EXPAND[self.axes]]

    def nu(self, f, state):
        out = np.zeros(self.a.theta.shape)
        if f is self.a:
            out[state] = 1.0
        else:
            out[state[self.axes[0]], state[self.axes[1]]] = 1.0
        return out

    def coord_allowed(self):
        return self.a.allowed


# ---------------------------------------------------------------------------


class FactorGraph:
    """Factors plus couplings, at most one coupling per factor pair."""

    def __init__(self):
        self.factors: list[Factor] = []
        self.couplings: dict[tuple[int, int], Coupling] = {}
        self.neighbors: list[list[int]] = []

    def add_factor(self, f: Factor) -> int:
        f.index = len(self.factors)
        self.factors.append(f)
        self.neighbors.append([])
        return f.index

    def add_coupling(self, c: Coupling) -> Coupling:
        i, j = c.a.index, c.b.index
        key = (min(i, j), max(i, j))
        if key in self.couplings:
            raise ValueError(f"factors {i} and {j} are already coupled")
        self.couplings[key] = c
        self.neighbors[i].append(j)
        self.neighbors[j].append(i)
        return c

    def coupling(self, i: int, j: int) -> Coupling:
        return self.couplings[(min(i, j), max(i, j))]

    def dual_bound(self) -> float:
        return float(sum(f.min_value() for f in self.factors))
