"""Builders for the five decompositions and their sweep schedules.

Method names combine a decomposition with an orientation:

=========  ===================================================
gm-o/i     node and edge factors, edges added between nodes that
           share a label with the shared diagonal forbidden
amp-o/i    node and edge factors plus one label factor per label
amcf-o/i   node and edge factors plus one matching (flow) factor
amp-c      original and inverse local polytopes, coupled entrywise
amcf-c     original and inverse local polytopes, coupled by a flow factor
=========  ===================================================

``-o`` works on the instance, ``-i`` on its inverse, ``-c`` on both with the
costs split evenly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .engine import Schedule
from .errors import Infeasible, NotBijective
from .factors import (
    EntryCoupling,
    FactorGraph,
    FlowFactor,
    FlowLabelCoupling,
    FlowNodeCoupling,
    MarginalCoupling,
    PairwiseFactor,
    SimplexFactor,
)
from .instance import GraphMatchingInstance, build_inverse, invert_labeling

METHODS = ("gm-o", "gm-i", "amp-o", "amp-i", "amp-c", "amcf-o", "amcf-i", "amcf-c")


@dataclass
class Relaxation:
    method: str
    instance: GraphMatchingInstance
    side: GraphMatchingInstance
    graph: FactorGraph
    nodes: list
    pairs: dict
    inverted: bool = False
    inverse: Optional[GraphMatchingInstance] = None
    inodes: Optional[list] = None
    ipairs: dict = field(default_factory=dict)
    labels: Optional[list] = None
    flow: Optional[int] = None
    triplets: dict = field(default_factory=dict)
    keys: dict = field(default_factory=dict)

    @property
    def family(self) -> str:
        return self.method.split("-")[0]

    def side_labels(self, labels) -> np.ndarray:
        """Labeling of the original instance expressed on the primary side."""
        labels = np.asarray(labels, dtype=np.int64)
        if self.inverted:
            return invert_labeling(labels, self.instance.num_labels)
        return labels

    def original_labels(self, side_labels) -> np.ndarray:
        side_labels = np.asarray(side_labels, dtype=np.int64)
        if self.inverted:
            return invert_labeling(side_labels, self.side.num_labels)
        return side_labels

    def factor_states(self, labels) -> dict:
        """State of every factor induced by a feasible labeling of the original instance."""
        x = self.side_labels(labels)
        side = self.side
        pos = [side.position(u, int(s)) for u, s in enumerate(x)]
        y = ipos = None
        if self.inverse is not None and self.inodes is not None:
            y = invert_labeling(labels, self.instance.num_labels)
            ipos = [self.inverse.position(s, int(u)) for s, u in enumerate(y)]
        holders = None
        states = {}
        for f in self.graph.factors:
            sc = f.scope
            tag = sc[0]
            if tag == "node":
                st = pos[sc[1]]
            elif tag == "pair":
                st = (pos[sc[1]], pos[sc[2]])
            elif tag == "tri":
                st = (pos[sc[1]], pos[sc[2]], pos[sc[3]])
            elif tag == "inode":
                st = ipos[sc[1]]
            elif tag == "ipair":
                st = (ipos[sc[1]], ipos[sc[2]])
            elif tag == "label":
                if holders is None:
                    holders = side.nodes_with_label()
                s = sc[1]
                hit = np.flatnonzero(x[holders[s]] == s)
                st = int(hit[0]) if len(hit) else len(holders[s])
            elif tag == "flow":
                st = f.state_from_labels(x)
            else:
                raise ValueError(f"unknown factor scope {sc}")
            states[f.index] = st
        return states

    def decomposed_cost(self, labels) -> float:
        states = self.factor_states(labels)
        return float(sum(self.graph.factors[i].state_cost(st) for i, st in states.items()))

    def schedule(self) -> Schedule:
        return build_schedule(self)


# ---------------------------------------------------------------------------


def _node_key(u):
    return (0, 2 * u)


def _pair_key(u, v):
    return (0, 2 * u + 1, v)


def _inode_key(s):
    return (2, 2 * s)


def _ipair_key(s, t):
    return (2, 2 * s + 1, t)


def triplet_key(u, v, w):
    return (0, 2 * w + 1, -1, u, v)


FLOW_KEY = (1,)


def _propagate_masks(inst, node_allowed, pair_allowed):
    """Drop labels that some neighbour cannot pair with at all, to a fixpoint."""
    changed = True
    while changed:
        changed = False
        for (u, v), mask in pair_allowed.items():
            eff = mask & node_allowed[u][:, None] & node_allowed[v][None, :]
            for end, rows in ((u, eff.any(axis=1)), (v, eff.any(axis=0))):
                dead = node_allowed[end] & ~rows
                if np.any(dead):
                    node_allowed[end] &= rows
                    changed = True
                    if not node_allowed[end].any():
                        raise Infeasible(f"node {end} has no admissible label left")
    for (u, v), mask in pair_allowed.items():
        mask &= node_allowed[u][:, None] & node_allowed[v][None, :]


def _add_local(g, inst, scale, tags, keys, keyfn, add_shared=False):
    """Node and edge factors of one local polytope; returns (node ids, pair ids).

    Two nodes can never take the same label, so that diagonal is masked on
    every edge.  With ``add_shared`` every pair of nodes sharing a label gets
    a zero-cost edge as well.
    """
    node_tag, pair_tag = tags
    node_key, pair_key = keyfn
    n = inst.num_nodes
    pairwise = dict(inst.pairwise)
    node_allowed = [np.ones(len(ls), dtype=bool) for ls in inst.label_sets]
    pair_allowed = {}
    if add_shared:
        holders = inst.nodes_with_label()
        extra = set()
        for h in holders:
            for a in range(len(h)):
                for b in range(a + 1, len(h)):
                    extra.add((int(h[a]), int(h[b])))
        for key in extra:
            if key not in pairwise:
                u, v = key
                pairwise[key] = np.zeros((len(inst.label_sets[u]), len(inst.label_sets[v])))
    for (u, v) in pairwise:
        same = inst.label_sets[u][:, None] == inst.label_sets[v][None, :]
        if same.any():
            pair_allowed[(u, v)] = ~same
    _propagate_masks(inst, node_allowed, pair_allowed)
    node_allowed = [None if a.all() else a for a in node_allowed]

    nodes = []
    for u in range(n):
        f = SimplexFactor(
            scale * inst.unary[u], node_allowed[u], scope=(node_tag, u),
        )
        nodes.append(g.add_factor(f))
        keys[f.index] = node_key(u)
    pairs = {}
    for (u, v) in sorted(pairwise):
        f = PairwiseFactor(scale * pairwise[(u, v)], pair_allowed.get((u, v)), scope=(pair_tag, u, v))
        pairs[(u, v)] = g.add_factor(f)
        keys[f.index] = pair_key(u, v)
        g.add_coupling(MarginalCoupling(g.factors[nodes[u]], f, 0))
        g.add_coupling(MarginalCoupling(g.factors[nodes[v]], f, 1))
    return nodes, pairs


def _local(inst, add_shared=False):
    g = FactorGraph()
    keys = {}
    nodes, pairs = _add_local(
        g, inst, 1.0, ("node", "pair"), keys, (_node_key, _pair_key), add_shared
    )
    return g, keys, nodes, pairs


def build_r1(inst, method="gm-o") -> Relaxation:
    g, keys, nodes, pairs = _local(inst, add_shared=True)
    return Relaxation(method, inst, inst, g, nodes, pairs, keys=keys)


def build_r2(inst, method="amp-o") -> Relaxation:
    g, keys, nodes, pairs = _local(inst)
    labels = []
    for s, h in enumerate(inst.nodes_with_label()):
        f = SimplexFactor(np.zeros(len(h) + 1), scope=("label", s), dummy=True)
        labels.append(g.add_factor(f))
        keys[f.index] = _inode_key(s)
        for k, u in enumerate(h):
            u = int(u)
            g.add_coupling(EntryCoupling(g.factors[nodes[u]], inst.position(u, s), f, k))
    return Relaxation(method, inst, inst, g, nodes, pairs, labels=labels, keys=keys)


def build_r3(inst, method="amcf-o") -> Relaxation:
    g, keys, nodes, pairs = _local(inst)
    flow = FlowFactor(inst.label_sets, inst.num_labels)
    fid = g.add_factor(flow)
    keys[fid] = FLOW_KEY
    for u in range(inst.num_nodes):
        g.add_coupling(FlowNodeCoupling(g.factors[nodes[u]], flow, u))
    return Relaxation(method, inst, inst, g, nodes, pairs, flow=fid, keys=keys)


def _coupled(inst, method):
    inv = build_inverse(inst)
    g = FactorGraph()
    keys = {}
    nodes, pairs = _add_local(g, inst, 0.5, ("node", "pair"), keys, (_node_key, _pair_key))
    inodes, ipairs = _add_local(g, inv, 0.5, ("inode", "ipair"), keys, (_inode_key, _ipair_key))
    rel = Relaxation(method, inst, inst, g, nodes, pairs, inverse=inv, inodes=inodes,
                     ipairs=ipairs, keys=keys)
    return rel


def build_r4(inst, method="amp-c") -> Relaxation:
    rel = _coupled(inst, method)
    g, inv = rel.graph, rel.inverse
    for u, ls in enumerate(inst.label_sets):
        for k, s in enumerate(ls):
            s = int(s)
            g.add_coupling(EntryCoupling(
                g.factors[rel.nodes[u]], k, g.factors[rel.inodes[s]], inv.position(s, u)
            ))
    return rel


def build_r5(inst, method="amcf-c") -> Relaxation:
    rel = _coupled(inst, method)
    g = rel.graph
    flow = FlowFactor(inst.label_sets, inst.num_labels)
    rel.flow = g.add_factor(flow)
    rel.keys[rel.flow] = FLOW_KEY
    for u in range(inst.num_nodes):
        g.add_coupling(FlowNodeCoupling(g.factors[rel.nodes[u]], flow, u))
    for s in range(inst.num_labels):
        g.add_coupling(FlowLabelCoupling(g.factors[rel.inodes[s]], flow, s))
    return rel


_BUILDERS = {"gm": build_r1, "amp": build_r2, "amcf": build_r3}


def build(inst: GraphMatchingInstance, method: str) -> Relaxation:
    """Factor graph for one of the eight named methods."""
    method = method.lower()
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    family, orient = method.split("-")
    if orient == "c":
        if not inst.is_bijective_size():
            raise NotBijective(
                f"{method} needs |labels| = |nodes|, got {inst.num_labels} != {inst.num_nodes}"
            )
        return (build_r4 if family == "amp" else build_r5)(inst, method)
    if orient == "i":
        inv = build_inverse(inst)
        rel = _BUILDERS[family](inv, method)
        rel.instance = inst
        rel.inverted = True
        return rel
    return _BUILDERS[family](inst, method)


def build_schedule(rel: Relaxation) -> Schedule:
    """Visit every non-edge factor in key order; receive from lower, send to higher neighbours."""
    g = rel.graph
    keys = rel.keys
    order = sorted(
        (f.index for f in g.factors if not isinstance(f, PairwiseFactor)),
        key=lambda i: keys[i],
    )
    recv, send = {}, {}
    for i in order:
        nb = sorted(g.neighbors[i], key=lambda j: keys[j])
        recv[i] = [j for j in nb if keys[j] < keys[i]]
        send[i] = [j for j in nb if keys[j] > keys[i]]
    skip = frozenset([rel.flow]) if rel.flow is not None else frozenset()
    return Schedule(order, recv, send, True, skip)
