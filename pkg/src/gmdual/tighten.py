"""Cutting planes: zero-cost triplet factors on frustrated triangles."""

from __future__ import annotations

import numpy as np

from .errors import DuplicateTriplet
from .factors import TripletCoupling, TripletFactor
from .relaxations import build_schedule, triplet_key


def triangles(pairs) -> list:
    """All ``(u, v, w)`` with ``u < v < w`` whose three edges are present."""
    adj = {}
    for u, v in pairs:
        adj.setdefault(u, set()).add(v)
        adj.setdefault(v, set()).add(u)
    out = []
    for u, v in sorted(pairs):
        for w in sorted(adj[u] & adj[v]):
            if w > v:
                out.append((u, v, w))
    return out


def triangle_score(rel, tri) -> float:
    """How much the triangle's joint minimum exceeds the sum of its parts' minima.

    Always non-negative; positive only if a triplet factor over the triangle
    can raise the bound.
    """
    g = rel.graph
    u, v, w = tri
    tu, tv, tw = (g.factors[rel.nodes[x]].masked() for x in tri)
    puv = g.factors[rel.pairs[(u, v)]].masked()
    puw = g.factors[rel.pairs[(u, w)]].masked()
    pvw = g.factors[rel.pairs[(v, w)]].masked()
    joint = (
        puv[:, :, None] + puw[:, None, :] + pvw[None, :, :]
        + tu[:, None, None] + tv[None, :, None] + tw[None, None, :]
    )
    parts = puv.min() + puw.min() + pvw.min() + tu.min() + tv.min() + tw.min()
    best = joint.min()
    if not np.isfinite(best):
        return 0.0
    return max(0.0, float(best - parts))


def find_violated_cycles(rel, budget: int = 50, tol: float = 1e-9) -> list:
    """Up to ``budget`` triangles with positive score, best first."""
    if budget <= 0:
        return []
    scored = []
    for tri in triangles(rel.pairs):
        if tri in rel.triplets:
            continue
        s = triangle_score(rel, tri)
        if s > tol:
            scored.append((-s, tri))
    scored.sort()
    return [tri for _, tri in scored[:budget]]


def add_triplets(rel, triplets):
    """Insert zero-cost triplet factors; returns the extended (forward) schedule."""
    g = rel.graph
    for tri in triplets:
        tri = tuple(int(x) for x in tri)
        if tri in rel.triplets:
            raise DuplicateTriplet(f"triplet {tri} already present")
        u, v, w = tri
        if not (u < v < w):
            raise ValueError("triplet nodes must be strictly increasing")
        pairs = [g.factors[rel.pairs[(u, v)]], g.factors[rel.pairs[(u, w)]],
                 g.factors[rel.pairs[(v, w)]]]
        shape = (pairs[0].theta.shape[0], pairs[0].theta.shape[1], pairs[1].theta.shape[1])
        allowed = None
        if any(p.allowed is not None for p in pairs):
            ones = [np.ones(p.theta.shape, dtype=bool) if p.allowed is None else p.allowed
                    for p in pairs]
            allowed = ones[0][:, :, None] & ones[1][:, None, :] & ones[2][None, :, :]
        f = TripletFactor(shape, allowed, scope=("tri", u, v, w))
        fid = g.add_factor(f)
        rel.keys[fid] = triplet_key(u, v, w)
        rel.triplets[tri] = fid
        for p, axes in zip(pairs, ((0, 1), (0, 2), (1, 2))):
            g.add_coupling(TripletCoupling(p, f, axes))
    return build_schedule(rel)


def tighten(rel, schedule, budget: int = 50):
    """Stall handler: add triplets and continue in the current direction, or ``None``."""
    found = find_violated_cycles(rel, budget)
    if not found:
        return None
    new = add_triplets(rel, found)
    return new if schedule.forward else new.reversed()
