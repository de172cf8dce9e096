"""Ordered depth-first encoding of a connected graph.

A component is encoded as its ordered DFS spanning tree plus a set of lattice
points ``(m, j)``.  At DFS time ``m`` the stack holds ``D_m + 1`` vertices with
the vertex being explored on top.  Counting stack positions from the top, the
point ``(m, j)`` joins the explored vertex to the entry in position
``#stack - j + 1``; in bottom-up terms that is ``stack[j - 1]``, so ``j = 1`` is
the oldest pending vertex and ``j = D_m`` the one just below the top.

Children are pushed so that the smallest label is explored first.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from ._accel import kernel
from .graphgen import Component
from .seeding import bernoulli_positions, make_rng


@kernel
def _children_csr(parent, root):
    n = parent.shape[0]
    ptr = np.zeros(n + 1, dtype=np.int64)
    for v in range(n):
        if v != root:
            ptr[parent[v] + 1] += 1
    for v in range(n):
        ptr[v + 1] += ptr[v]
    fill = ptr[:-1].copy()
    idx = np.empty(max(n - 1, 0), dtype=np.int64)
    # increasing v keeps each child list sorted
    for v in range(n):
        if v != root:
            p = parent[v]
            idx[fill[p]] = v
            fill[p] += 1
    return ptr, idx


@kernel
def _preorder(child_ptr, child_idx, root):
    n = child_ptr.shape[0] - 1
    order = np.empty(n, dtype=np.int64)
    sizes = np.empty(n, dtype=np.int64)
    height = np.empty(n, dtype=np.int64)
    depth = np.zeros(n, dtype=np.int64)
    stack = np.empty(n + 1, dtype=np.int64)
    stack[0] = root
    top = 1
    m = 0
    while top > 0 and m < n:
        sizes[m] = top
        v = stack[top - 1]
        top -= 1
        order[m] = v
        height[m] = depth[v]
        for t in range(child_ptr[v + 1] - 1, child_ptr[v] - 1, -1):
            c = child_idx[t]
            depth[c] = depth[v] + 1
            stack[top] = c
            top += 1
        m += 1
    return order, sizes, height, m


@kernel
def _contour(order, parent, root):
    n = order.shape[0]
    cv = np.empty(2 * (n - 1) + 1, dtype=np.int64)
    cv[0] = root
    pos = 0
    cur = root
    for m in range(1, n):
        v = order[m]
        p = parent[v]
        while cur != p:
            cur = parent[cur]
            pos += 1
            cv[pos] = cur
        pos += 1
        cv[pos] = v
        cur = v
    while cur != root:
        cur = parent[cur]
        pos += 1
        cv[pos] = cur
    return cv


@dataclass
class OrderedTree:
    """Rooted tree on local vertices ``0..N-1``; children ordered by index."""

    parent: np.ndarray
    labels: np.ndarray | None = None
    child_ptr: np.ndarray = field(init=False, repr=False)
    child_idx: np.ndarray = field(init=False, repr=False)
    dfs_order: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.parent = np.asarray(self.parent, dtype=np.int64)
        n = self.parent.shape[0]
        if n == 0:
            raise ValueError("empty tree")
        roots = np.flatnonzero(self.parent < 0)
        if roots.shape[0] != 1:
            raise ValueError(f"tree must have exactly one root, found {roots.shape[0]}")
        if np.any(self.parent >= n):
            raise ValueError("parent index out of range")
        self.parent[roots[0]] = -1
        if self.labels is None:
            self.labels = np.arange(1, n + 1, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.child_ptr, self.child_idx = _children_csr(self.parent, self.root)
        order, _, _, seen = _preorder(self.child_ptr, self.child_idx, self.root)
        if seen != n:
            raise ValueError("parent array contains a cycle")
        self.dfs_order = order

    @property
    def root(self) -> int:
        return int(np.flatnonzero(self.parent < 0)[0])

    @property
    def size(self) -> int:
        return int(self.parent.shape[0])

    def children(self, v: int) -> np.ndarray:
        return self.child_idx[self.child_ptr[v]:self.child_ptr[v + 1]]

    def edges(self) -> np.ndarray:
        v = np.flatnonzero(self.parent >= 0)
        return np.column_stack([self.parent[v], v]).astype(np.int64)

    def depths(self) -> np.ndarray:
        d = np.zeros(self.size, dtype=np.int64)
        rec = dfs_scan(self)
        d[rec.dfs_order] = rec.height
        return d

    def root_path(self, v: int) -> list:
        path = [int(v)]
        while self.parent[path[-1]] >= 0:
            path.append(int(self.parent[path[-1]]))
        return path[::-1]


@dataclass
class DfsRecord:
    dfs_order: np.ndarray
    stack_sizes: np.ndarray
    height: np.ndarray
    contour: np.ndarray
    contour_vertices: np.ndarray

    @property
    def depth_walk(self) -> np.ndarray:
        return self.stack_sizes - 1

    @property
    def a_T(self) -> int:
        return int(self.depth_walk[1:].sum())

    @property
    def size(self) -> int:
        return int(self.dfs_order.shape[0])


@dataclass
class SurplusPointSet:
    points: np.ndarray = field(default_factory=lambda: np.empty((0, 2), dtype=np.int64))

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64).reshape(-1, 2)
        order = np.lexsort((pts[:, 1], pts[:, 0]))
        self.points = pts[order]

    def __len__(self) -> int:
        return int(self.points.shape[0])

    def validate(self, record: DfsRecord) -> None:
        if len(self) == 0:
            return
        m, j = self.points[:, 0], self.points[:, 1]
        if np.any(m < 0) or np.any(m >= record.size):
            raise ValueError("surplus point time outside 0..#T-1")
        if np.any(j < 1) or np.any(j > record.depth_walk[m]):
            raise ValueError("surplus point level outside 1..D_m")
        if np.any(np.all(self.points[1:] == self.points[:-1], axis=1)):
            raise ValueError("repeated surplus point")


def dfs_scan(tree: OrderedTree) -> DfsRecord:
    order, sizes, height, _ = _preorder(tree.child_ptr, tree.child_idx, tree.root)
    cv = _contour(order, tree.parent, tree.root)
    depth = np.empty(tree.size, dtype=np.int64)
    depth[order] = height
    return DfsRecord(order, sizes, height, depth[cv], cv)


def lattice_points(record: DfsRecord) -> np.ndarray:
    """All admissible ``(m, j)`` with ``1 <= j <= D_m``, in (m, j) order."""
    d = record.depth_walk
    m = np.repeat(np.arange(d.shape[0]), d)
    start = np.cumsum(d) - d
    j = np.arange(m.shape[0]) - np.repeat(start, d) + 1
    return np.column_stack([m, j]).astype(np.int64)


def sample_surplus(record: DfsRecord, p: float, seed) -> SurplusPointSet:
    """Keep each admissible lattice point independently with probability p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    d = record.depth_walk
    cum = np.cumsum(d)
    idx = bernoulli_positions(make_rng(seed), int(cum[-1]) if cum.shape[0] else 0, p)
    m = np.searchsorted(cum, idx, side="right")
    j = idx - (cum[m] - d[m]) + 1
    return SurplusPointSet(np.column_stack([m, j]))


@kernel
def _surplus_pairs(child_ptr, child_idx, root, pts):
    n = child_ptr.shape[0] - 1
    out = np.empty((pts.shape[0], 2), dtype=np.int64)
    stack = np.empty(n + 1, dtype=np.int64)
    stack[0] = root
    top = 1
    k = 0
    for m in range(n):
        v = stack[top - 1]
        while k < pts.shape[0] and pts[k, 0] == m:
            out[k, 0] = v
            out[k, 1] = stack[pts[k, 1] - 1]
            k += 1
        top -= 1
        for t in range(child_ptr[v + 1] - 1, child_ptr[v] - 1, -1):
            stack[top] = child_idx[t]
            top += 1
    return out


def surplus_edges(tree: OrderedTree, points: SurplusPointSet) -> np.ndarray:
    """Local vertex pairs ``(u, v)`` for each point, in point order."""
    points.validate(dfs_scan(tree))
    return _surplus_pairs(tree.child_ptr, tree.child_idx, tree.root, points.points)


def assemble_component(tree: OrderedTree, points: SurplusPointSet, meta=None) -> Component:
    if tree.root != 0 or np.any(np.diff(tree.labels) <= 0):
        raise ValueError("tree must be rooted at its smallest label with labels increasing")
    extra = surplus_edges(tree, points)
    edges = np.concatenate([tree.edges(), extra])
    return Component.from_local_edges(tree.labels, edges, meta)


@kernel
def _decompose(indptr, indices):
    n = indptr.shape[0] - 1
    state = np.zeros(n, dtype=np.int8)
    pos = np.zeros(n, dtype=np.int64)
    parent = np.full(n, -1, dtype=np.int64)
    stack = np.empty(n + 1, dtype=np.int64)
    pts = np.empty((indices.shape[0] // 2 + 1, 2), dtype=np.int64)
    kids = np.empty(n, dtype=np.int64)
    stack[0] = 0
    state[0] = 1
    top = 1
    k = 0
    m = 0
    while top > 0:
        v = stack[top - 1]
        top -= 1
        state[v] = 2
        nk = 0
        for t in range(indptr[v], indptr[v + 1]):
            w = indices[t]
            if state[w] == 1:
                pts[k, 0] = m
                pts[k, 1] = pos[w] + 1
                k += 1
            elif state[w] == 0:
                kids[nk] = w
                nk += 1
        for c in range(nk - 1, -1, -1):
            w = kids[c]
            state[w] = 1
            parent[w] = v
            pos[w] = top
            stack[top] = w
            top += 1
        m += 1
    return parent, pts[:k], m


def decompose_component(component: Component):
    """Ordered DFS tree and surplus points of a component (inverse of assembly)."""
    parent, pts, seen = _decompose(component.indptr, component.indices)
    if seen != component.size:
        raise ValueError("component is not connected")
    return OrderedTree(parent, component.vertices.copy()), SurplusPointSet(pts)


def dfs_to_contour_time(record: DfsRecord, m: int) -> int:
    if not 0 <= m < record.size:
        raise IndexError(f"DFS time {m} outside 0..{record.size - 1}")
    return 2 * int(m) - int(record.height[m])


@dataclass
class EncodedComponent:
    tree: OrderedTree
    points: SurplusPointSet
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_component(cls, component: Component) -> "EncodedComponent":
        tree, pts = decompose_component(component)
        return cls(tree, pts, dict(component.meta))

    def to_component(self) -> Component:
        return assemble_component(self.tree, self.points, self.meta)

    @property
    def surplus(self) -> int:
        return len(self.points)

    def to_json(self) -> str:
        return json.dumps({
            "parent": self.tree.parent.tolist(),
            "dfs_order": self.tree.dfs_order.tolist(),
            "points": self.points.points.tolist(),
            "vertices": self.tree.labels.tolist(),
            **{k: v for k, v in self.meta.items() if k in ("n", "lambda", "seed")},
        })

    @classmethod
    def from_json(cls, text: str) -> "EncodedComponent":
        doc = json.loads(text)
        tree = OrderedTree(np.asarray(doc["parent"]), doc.get("vertices"))
        if list(tree.dfs_order) != list(doc["dfs_order"]):
            raise ValueError("dfs_order does not match parent array")
        meta = {k: doc[k] for k in ("n", "lambda", "seed") if k in doc}
        return cls(tree, SurplusPointSet(np.asarray(doc["points"], dtype=np.int64)), meta)


def write_sequence_csv(path, values, column: str = "value") -> None:
    """Write a process (D, H or C) as rows ``m, value``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", column])
        for m, v in enumerate(np.asarray(values).tolist()):
            w.writerow([m, v])
