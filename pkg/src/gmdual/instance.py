"""Graph matching instances, the inverse construction and instance file I/O.

An instance holds, for every node ``u``, a sorted array of admissible labels
``label_sets[u]`` together with unary costs aligned to it, and for every
edge ``(u, v)`` with ``u < v`` a dense cost matrix of shape
``(len(label_sets[u]), len(label_sets[v]))``.  Missing pairwise entries are
zero.

File format (line oriented, whitespace separated)::

    c <comment>
    p <#nodes> <#labels> <#assignments> <#edges>
    a <aid> <node> <label> <cost>
    e <aid1> <aid2> <cost>
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import InfeasibleAssignment, InstanceSyntaxError, NotBijective

UNASSIGNED = -1


@dataclass
class GraphMatchingInstance:
    label_sets: list[np.ndarray]
    unary: list[np.ndarray]
    pairwise: dict[tuple[int, int], np.ndarray]
    num_labels: int
    node_ids: Optional[list] = None
    label_ids: Optional[list] = None
    _pos: list[dict] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.label_sets = [np.asarray(x, dtype=np.int64) for x in self.label_sets]
        self.unary = [np.asarray(c, dtype=np.float64) for c in self.unary]
        if self.node_ids is None:
            self.node_ids = list(range(self.num_nodes))
        if self.label_ids is None:
            self.label_ids = list(range(self.num_labels))
        self._pos = [{int(s): k for k, s in enumerate(ls)} for ls in self.label_sets]
        self._check()

    def _check(self):
        n = self.num_nodes
        if len(self.unary) != n:
            raise ValueError("unary costs must be given for every node")
        for u, (ls, c) in enumerate(zip(self.label_sets, self.unary)):
            if ls.shape != c.shape:
                raise ValueError(f"node {u}: label set and unary costs differ in size")
            if len(ls) and (ls.min() < 0 or ls.max() >= self.num_labels):
                raise ValueError(f"node {u}: label out of range")
            if len(np.unique(ls)) != len(ls) or np.any(np.diff(ls) < 0):
                raise ValueError(f"node {u}: label set must be sorted and unique")
            if not np.all(np.isfinite(c)):
                raise ValueError(f"node {u}: non-finite unary cost")
        for (u, v), m in self.pairwise.items():
            if not (0 <= u < v < n):
                raise ValueError(f"bad edge {(u, v)}")
            if m.shape != (len(self.label_sets[u]), len(self.label_sets[v])):
                raise ValueError(f"edge {(u, v)}: cost matrix has wrong shape")
            if not np.all(np.isfinite(m)):
                raise ValueError(f"edge {(u, v)}: non-finite pairwise cost")

    @property
    def num_nodes(self) -> int:
        return len(self.label_sets)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return sorted(self.pairwise)

    def position(self, u: int, label: int) -> int:
        """Index of ``label`` inside ``label_sets[u]`` (KeyError if absent)."""
        return self._pos[u][label]

    def has_label(self, u: int, label: int) -> bool:
        return label in self._pos[u]

    def nodes_with_label(self) -> list[np.ndarray]:
        """For every label ``s`` the sorted array of nodes that may take it."""
        out = [[] for _ in range(self.num_labels)]
        for u, ls in enumerate(self.label_sets):
            for s in ls:
                out[int(s)].append(u)
        return [np.asarray(x, dtype=np.int64) for x in out]

    def pair_cost(self, u: int, v: int, su: int, sv: int) -> float:
        """Pairwise cost for ``x_u = su, x_v = sv`` (0 if ``uv`` is not an edge)."""
        if u > v:
            u, v, su, sv = v, u, sv, su
        m = self.pairwise.get((u, v))
        if m is None:
            return 0.0
        return float(m[self._pos[u][su], self._pos[v][sv]])

    def is_bijective_size(self) -> bool:
        return self.num_labels == self.num_nodes


@dataclass
class Assignment:
    labels: np.ndarray
    energy: float = math.nan

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)

    @property
    def is_total(self) -> bool:
        return bool(np.all(self.labels != UNASSIGNED))


# ---------------------------------------------------------------------------
# energy


def check_feasible(inst: GraphMatchingInstance, labels) -> None:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (inst.num_nodes,):
        raise InfeasibleAssignment("assignment must give one label per node")
    if np.any(labels == UNASSIGNED):
        raise InfeasibleAssignment("assignment is not total")
    for u, s in enumerate(labels):
        if not inst.has_label(u, int(s)):
            raise InfeasibleAssignment(f"label {int(s)} not allowed for node {u}")
    if len(np.unique(labels)) != len(labels):
        raise InfeasibleAssignment("labels are not pairwise distinct")


def energy(inst: GraphMatchingInstance, assignment) -> float:
    """Total unary plus pairwise cost of a feasible labeling."""
    labels = assignment.labels if isinstance(assignment, Assignment) else assignment
    labels = np.asarray(labels, dtype=np.int64)
    check_feasible(inst, labels)
    pos = [inst.position(u, int(s)) for u, s in enumerate(labels)]
    total = 0.0
    for u, p in enumerate(pos):
        total += inst.unary[u][p]
    for (u, v), m in inst.pairwise.items():
        total += m[pos[u], pos[v]]
    return float(total)


def make_assignment(inst: GraphMatchingInstance, labels) -> Assignment:
    labels = np.asarray(labels, dtype=np.int64)
    return Assignment(labels, energy(inst, labels))


# ---------------------------------------------------------------------------
# inverse problem


def _matchable(inst: GraphMatchingInstance, mode: str) -> bool:
    from . import mcf

    arcs_u, arcs_s = [], []
    for u, ls in enumerate(inst.label_sets):
        arcs_u.extend([u] * len(ls))
        arcs_s.extend(int(s) for s in ls)
    try:
        mcf.solve_assignment(
            inst.num_nodes, inst.num_labels, np.asarray(arcs_u, dtype=np.int64),
            np.asarray(arcs_s, dtype=np.int64), np.zeros(len(arcs_u)), mode=mode,
        )
    except mcf.Infeasible:
        return False
    return True


def has_perfect_matching(inst: GraphMatchingInstance) -> bool:
    """True iff some bijection between nodes and labels respects the label sets."""
    return inst.is_bijective_size() and _matchable(inst, "bijection")


def has_injective_labeling(inst: GraphMatchingInstance) -> bool:
    """True iff at least one feasible (injective) labeling exists."""
    return inst.num_nodes <= inst.num_labels and _matchable(inst, "injective")


def build_inverse(inst: GraphMatchingInstance) -> GraphMatchingInstance:
    """Matching problem over the inverse permutation (labels become nodes)."""
    if not inst.is_bijective_size():
        raise NotBijective(
            f"inverse needs |labels| = |nodes|, got {inst.num_labels} != {inst.num_nodes}"
        )
    if not has_perfect_matching(inst):
        raise NotBijective("no perfect matching between nodes and labels exists")

    holders = inst.nodes_with_label()
    inv_pos = [{int(u): k for k, u in enumerate(h)} for h in holders]
    unary = []
    for s, h in enumerate(holders):
        unary.append(np.array([inst.unary[u][inst.position(u, s)] for u in h], dtype=float))

    pairwise: dict[tuple[int, int], np.ndarray] = {}
    for (u, v), m in inst.pairwise.items():
        lu, lv = inst.label_sets[u], inst.label_sets[v]
        for a, s in enumerate(lu):
            s = int(s)
            for b, t in enumerate(lv):
                t = int(t)
                if s == t:
                    continue
                if s < t:
                    key, i, j = (s, t), inv_pos[s][u], inv_pos[t][v]
                else:
                    key, i, j = (t, s), inv_pos[t][v], inv_pos[s][u]
                mat = pairwise.get(key)
                if mat is None:
                    mat = np.zeros((len(holders[key[0]]), len(holders[key[1]])))
                    pairwise[key] = mat
                mat[i, j] += m[a, b]
    return GraphMatchingInstance(
        label_sets=holders,
        unary=unary,
        pairwise=pairwise,
        num_labels=inst.num_nodes,
        node_ids=list(inst.label_ids),
        label_ids=list(inst.node_ids),
    )


def invert_labeling(labels, num_labels: int) -> np.ndarray:
    """``y[s] = u`` iff ``x[u] = s``; labels nobody takes map to UNASSIGNED."""
    y = np.full(num_labels, UNASSIGNED, dtype=np.int64)
    for u, s in enumerate(np.asarray(labels)):
        if s != UNASSIGNED:
            y[int(s)] = u
    return y


# ---------------------------------------------------------------------------
# parsing / serialisation


def _float(tok: str, line: int, source) -> float:
    try:
        val = float(tok)
    except ValueError:
        raise InstanceSyntaxError(f"bad number {tok!r}", line, source) from None
    if not math.isfinite(val):
        raise InstanceSyntaxError(f"non-finite cost {tok!r}", line, source)
    return val


def _int(tok: str, line: int, source) -> int:
    try:
        return int(tok)
    except ValueError:
        raise InstanceSyntaxError(f"expected integer, got {tok!r}", line, source) from None


def parse_instance(text, source: Optional[str] = None) -> GraphMatchingInstance:
    """Parse an instance from a string, bytes or a text/binary stream."""
    if hasattr(text, "read"):
        text = text.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8")

    header = None
    assignments: dict[int, tuple[int, int, float, int]] = {}
    edge_lines: list[tuple[int, int, float, int]] = []
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        tok = raw.split()
        if not tok or tok[0].startswith("#") or tok[0] == "c":
            continue
        kind = tok[0]
        if kind == "p":
            if header is not None:
                raise InstanceSyntaxError("duplicate problem line", lineno, source)
            if len(tok) != 5:
                raise InstanceSyntaxError("problem line needs 4 fields", lineno, source)
            header = tuple(_int(t, lineno, source) for t in tok[1:])
        elif kind == "a":
            if len(tok) != 5:
                raise InstanceSyntaxError("assignment line needs 4 fields", lineno, source)
            aid, node, label = (_int(t, lineno, source) for t in tok[1:4])
            cost = _float(tok[4], lineno, source)
            if aid in assignments:
                raise InstanceSyntaxError(f"duplicate assignment id {aid}", lineno, source)
            assignments[aid] = (node, label, cost, lineno)
        elif kind == "e":
            if len(tok) != 4:
                raise InstanceSyntaxError("edge line needs 3 fields", lineno, source)
            a1, a2 = _int(tok[1], lineno, source), _int(tok[2], lineno, source)
            edge_lines.append((a1, a2, _float(tok[3], lineno, source), lineno))
        else:
            raise InstanceSyntaxError(f"unknown line type {kind!r}", lineno, source)
    if header is None:
        raise InstanceSyntaxError("missing problem line", None, source)

    n_decl, m_decl, a_decl, e_decl = header
    if a_decl != len(assignments):
        raise InstanceSyntaxError(
            f"problem line declares {a_decl} assignments, found {len(assignments)}", None, source
        )
    if e_decl != len(edge_lines):
        raise InstanceSyntaxError(
            f"problem line declares {e_decl} edges, found {len(edge_lines)}", None, source
        )

    node_ids = sorted(set(range(n_decl)) | {a[0] for a in assignments.values()})
    label_ids = sorted(set(range(m_decl)) | {a[1] for a in assignments.values()})
    node_idx = {x: i for i, x in enumerate(node_ids)}
    label_idx = {x: i for i, x in enumerate(label_ids)}

    per_node: list[dict[int, float]] = [dict() for _ in node_ids]
    for aid, (node, label, cost, lineno) in assignments.items():
        u, s = node_idx[node], label_idx[label]
        if s in per_node[u]:
            raise InstanceSyntaxError(
                f"label {label} declared twice for node {node}", lineno, source
            )
        per_node[u][s] = cost
    label_sets = [np.array(sorted(d), dtype=np.int64) for d in per_node]
    unary = [np.array([d[s] for s in sorted(d)], dtype=float) for d in per_node]
    pos = [{s: k for k, s in enumerate(sorted(d))} for d in per_node]

    pairwise: dict[tuple[int, int], np.ndarray] = {}
    seen = set()
    for a1, a2, cost, lineno in edge_lines:
        for a in (a1, a2):
            if a not in assignments:
                raise InstanceSyntaxError(f"edge references undeclared assignment {a}", lineno, source)
        key = (min(a1, a2), max(a1, a2))
        if key in seen:
            raise InstanceSyntaxError(f"duplicate edge between assignments {a1} and {a2}", lineno, source)
        seen.add(key)
        n1, l1 = assignments[a1][:2]
        n2, l2 = assignments[a2][:2]
        u, s, v, t = node_idx[n1], label_idx[l1], node_idx[n2], label_idx[l2]
        if u == v or s == t:
            raise InstanceSyntaxError(
                "edge must join assignments with distinct nodes and distinct labels", lineno, source
            )
        if u > v:
            u, v, s, t = v, u, t, s
        mat = pairwise.get((u, v))
        if mat is None:
            mat = np.zeros((len(label_sets[u]), len(label_sets[v])))
            pairwise[(u, v)] = mat
        mat[pos[u][s], pos[v][t]] = cost

    return GraphMatchingInstance(
        label_sets=label_sets,
        unary=unary,
        pairwise=pairwise,
        num_labels=len(label_ids),
        node_ids=node_ids,
        label_ids=label_ids,
    )


def load_instance(path) -> GraphMatchingInstance:
    with open(path, "rb") as fh:
        return parse_instance(fh.read(), source=str(path))


def serialize_instance(inst: GraphMatchingInstance) -> str:
    """Write ``inst`` in the line format read by :func:`parse_instance`."""
    aid = {}
    a_lines = []
    for u, ls in enumerate(inst.label_sets):
        for k, s in enumerate(ls):
            aid[(u, int(s))] = len(a_lines)
            a_lines.append(
                f"a {len(a_lines)} {inst.node_ids[u]} {inst.label_ids[int(s)]} {float(inst.unary[u][k])!r}"
            )
    e_lines = []
    for (u, v), m in sorted(inst.pairwise.items()):
        lu, lv = inst.label_sets[u], inst.label_sets[v]
        for i, j in zip(*np.nonzero(m)):
            s, t = int(lu[i]), int(lv[j])
            if s == t:
                continue
            e_lines.append(f"e {aid[(u, s)]} {aid[(v, t)]} {float(m[i, j])!r}")
    head = f"p {inst.num_nodes} {inst.num_labels} {len(a_lines)} {len(e_lines)}"
    return "\n".join([head, *a_lines, *e_lines]) + "\n"


def random_instance(
    rng: np.random.Generator,
    num_nodes: int,
    num_labels: int,
    *,
    label_density: float = 1.0,
    edge_density: float = 1.0,
    entry_density: float = 1.0,
    integer: bool = False,
    scale: float = 10.0,
) -> GraphMatchingInstance:
    """Random instance with a guaranteed injective labeling.

    A random injective map is always kept inside the label sets so every
    generated instance is feasible.
    """
    if num_labels < num_nodes:
        raise ValueError("need at least as many labels as nodes")
    planted = rng.permutation(num_labels)[:num_nodes]
    label_sets = []
    for u in range(num_nodes):
        mask = rng.random(num_labels) < label_density
        mask[planted[u]] = True
        label_sets.append(np.flatnonzero(mask))

    def draw(shape):
        vals = rng.uniform(-scale, scale, size=shape)
        if integer:
            vals = np.round(vals)
        return vals

    unary = [draw(len(ls)) for ls in label_sets]
    pairwise = {}
    for u in range(num_nodes):
        for v in range(u + 1, num_nodes):
            if rng.random() >= edge_density:
                continue
            m = draw((len(label_sets[u]), len(label_sets[v])))
            if entry_density < 1.0:
                m = m * (rng.random(m.shape) < entry_density)
            same = label_sets[u][:, None] == label_sets[v][None, :]
            m[same] = 0.0
            pairwise[(u, v)] = m
    return GraphMatchingInstance(label_sets, unary, pairwise, num_labels)


def instance_from_arrays(unary: Iterable, pairwise: dict, label_sets=None, num_labels=None):
    """Convenience constructor for dense toy instances.

    ``unary`` is a list of cost vectors; unless ``label_sets`` is given node
    ``u`` may take labels ``0..len(unary[u])-1``.
    """
    unary = [np.asarray(c, dtype=float) for c in unary]
    if label_sets is None:
        label_sets = [np.arange(len(c)) for c in unary]
    if num_labels is None:
        num_labels = int(max((int(ls.max()) + 1 for ls in map(np.asarray, label_sets) if len(ls)), default=0))
    pw = {}
    for (u, v), m in pairwise.items():
        m = np.asarray(m, dtype=float)
        if u > v:
            u, v, m = v, u, m.T
        pw[(u, v)] = m
    return GraphMatchingInstance(list(label_sets), unary, pw, num_labels)
