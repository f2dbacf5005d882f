"""Primal heuristics: greedy rounding inside a sweep and matching-based rounding."""

from __future__ import annotations

from typing import Optional

import numpy as np

from . import mcf
from .engine import RoundingHook
from .errors import Infeasible, NoFeasibleLabel
from .instance import UNASSIGNED, Assignment, energy


def interleaved_round(theta, taken, pair_terms=(), allowed=None) -> int:
    """Index minimising ``theta`` plus fixed pairwise terms over labels not yet taken.

    ``taken`` is a boolean mask over the node's labels; ``pair_terms`` are
    cost vectors (pairwise rows against already fixed neighbours).
    """
    cost = np.array(theta, dtype=float)
    for row in pair_terms:
        cost = cost + row
    bad = np.asarray(taken, dtype=bool)
    if allowed is not None:
        bad = bad | ~np.asarray(allowed, dtype=bool)
    cost[bad] = np.inf
    if not np.isfinite(cost).any():
        raise NoFeasibleLabel("every label of the node is already taken")
    return int(np.argmin(cost))


class _Tables:
    """Index tables linking each primary-side node label to coupled factors."""

    def __init__(self, rel):
        side = rel.side
        self.label_idx = None
        if rel.labels is not None:
            holders = side.nodes_with_label()
            where = [{int(u): k for k, u in enumerate(h)} for h in holders]
            self.label_idx = [
                np.array([where[int(s)][u] for s in ls], dtype=np.int64)
                for u, ls in enumerate(side.label_sets)
            ]
        self.inode_idx = None
        if rel.inodes is not None:
            inv = rel.inverse
            self.inode_idx = [
                np.array([inv.position(int(s), u) for s in ls], dtype=np.int64)
                for u, ls in enumerate(side.label_sets)
            ]
        self.incident = [[] for _ in range(side.num_nodes)]
        for (u, v), fid in rel.pairs.items():
            self.incident[u].append((v, fid, 0))
            self.incident[v].append((u, fid, 1))


def unary_estimate(rel, tables=None) -> list:
    """Reparametrized unary costs per primary-side node (``inf`` where forbidden)."""
    tables = tables or _Tables(rel)
    g = rel.graph
    side = rel.side
    flow = g.factors[rel.flow] if rel.flow is not None else None
    out = []
    for u in range(side.num_nodes):
        f = g.factors[rel.nodes[u]]
        est = f.masked().copy()
        if tables.label_idx is not None:
            lab = []
            for s, k in zip(side.label_sets[u], tables.label_idx[u]):
                th = g.factors[rel.labels[int(s)]].theta
                lab.append(th[k] - th[-1])
            est = est + np.array(lab)
        if tables.inode_idx is not None:
            est = est + np.array(
                [g.factors[rel.inodes[int(s)]].masked()[k]
                 for s, k in zip(side.label_sets[u], tables.inode_idx[u])]
            )
        if flow is not None:
            est = est + flow.theta[flow.offsets[u]:flow.offsets[u + 1]]
        out.append(est)
    return out


def mcf_round(rel, estimate=None) -> Assignment:
    """Best injective labeling for the reparametrized unary costs, scored on the original."""
    side = rel.side
    est = estimate if estimate is not None else unary_estimate(rel)
    arc_u, arc_s, cost = [], [], []
    for u, (ls, c) in enumerate(zip(side.label_sets, est)):
        ok = np.isfinite(c)
        arc_u.append(np.full(int(ok.sum()), u))
        arc_s.append(ls[ok])
        cost.append(c[ok])
    res = mcf.solve_assignment(
        side.num_nodes, side.num_labels,
        np.concatenate(arc_u) if arc_u else np.zeros(0, dtype=np.int64),
        np.concatenate(arc_s) if arc_s else np.zeros(0, dtype=np.int64),
        np.concatenate(cost) if cost else np.zeros(0),
        mode="injective",
    )
    labels = rel.original_labels(res.match)
    return Assignment(labels, energy(rel.instance, labels))


class Rounder(RoundingHook):
    """Greedy rounding while the sweep visits nodes, then matching rounding at the end."""

    def __init__(self, rel):
        self.rel = rel
        self.tables = _Tables(rel)
        self.node_of = {fid: u for u, fid in enumerate(rel.nodes)}
        self.last: dict = {}

    def begin(self, g, schedule):
        n = self.rel.side.num_nodes
        self.labels = np.full(n, UNASSIGNED, dtype=np.int64)
        self.pos = np.full(n, -1, dtype=np.int64)
        self.taken = np.zeros(self.rel.side.num_labels, dtype=bool)
        self.failed = False

    def visit(self, i):
        u = self.node_of.get(i)
        if u is None or self.failed:
            return
        g = self.rel.graph
        side = self.rel.side
        f = g.factors[i]
        rows = []
        for v, fid, axis in self.tables.incident[u]:
            if self.pos[v] < 0:
                continue
            th = g.factors[fid].masked()
            rows.append(th[:, self.pos[v]] if axis == 0 else th[self.pos[v], :])
        ls = side.label_sets[u]
        try:
            k = interleaved_round(f.theta, self.taken[ls], rows, f.allowed)
        except NoFeasibleLabel:
            self.failed = True
            return
        self.pos[u] = k
        self.labels[u] = ls[k]
        self.taken[ls[k]] = True

    def end(self) -> Optional[Assignment]:
        rel = self.rel
        cands = {}
        if not self.failed and np.all(self.labels != UNASSIGNED):
            labels = rel.original_labels(self.labels)
            cands["interleaved"] = Assignment(labels, energy(rel.instance, labels))
        try:
            cands["mcf"] = mcf_round(rel, unary_estimate(rel, self.tables))
        except Infeasible:
            pass
        self.last = cands
        if not cands:
            return None
        return min(cands.values(), key=lambda a: a.energy)
