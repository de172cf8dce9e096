"""Critical G(n, p) sampling, component extraction and graph distances."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from ._accel import dispatch, njit
from .seeding import bernoulli_positions, check_seed, make_rng


@dataclass(frozen=True)
class GnpParams:
    n: int
    lam: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError("n must be a positive integer")
        check_seed(self.seed)
        p = self.p
        if not (0.0 <= p <= 1.0) or math.isnan(p):
            raise ValueError(f"p = 1/n + lambda n^(-4/3) = {p} lies outside [0, 1]")

    @property
    def p(self) -> float:
        n = float(self.n)
        p = 1.0 / n + float(self.lam) * n ** (-4.0 / 3.0)
        # round-off from with_p can land just outside [0, 1]
        if -1e-12 < p < 0.0:
            return 0.0
        if 1.0 < p < 1.0 + 1e-12:
            return 1.0
        return p

    @classmethod
    def with_p(cls, n: int, p: float, seed: int = 0) -> "GnpParams":
        """Window parameter that reproduces a given edge probability."""
        return cls(n=n, lam=(p - 1.0 / n) * n ** (4.0 / 3.0), seed=seed)


# -- linear pair index -> (i, j), 0-based, i < j, row-major ------------------

@njit
def _pairs_from_index_nb(idx, n):
    m = idx.shape[0]
    out = np.empty((m, 2), dtype=np.int64)
    i = 0
    row_start = 0
    row_len = n - 1
    for t in range(m):
        k = idx[t]
        while k >= row_start + row_len:
            row_start += row_len
            i += 1
            row_len -= 1
        out[t, 0] = i
        out[t, 1] = i + 1 + (k - row_start)
    return out


def _pairs_from_index_np(idx, n):
    idx = np.asarray(idx, dtype=np.int64)
    b = 2 * n - 1
    i = np.floor((b - np.sqrt(float(b) * b - 8.0 * idx)) / 2.0).astype(np.int64)
    i = np.clip(i, 0, n - 2)
    start = i * (2 * n - i - 1) // 2
    # float rounding can put i one row off in either direction
    low = idx < start
    i[low] -= 1
    start = i * (2 * n - i - 1) // 2
    high = idx >= start + (n - 1 - i)
    i[high] += 1
    start = i * (2 * n - i - 1) // 2
    out = np.empty((idx.shape[0], 2), dtype=np.int64)
    out[:, 0] = i
    out[:, 1] = i + 1 + (idx - start)
    return out


pairs_from_index = dispatch(_pairs_from_index_nb, _pairs_from_index_np)


def sample_gnp(params: GnpParams) -> np.ndarray:
    """Edge list of G(n, p) as an ``(E, 2)`` array of 1-based labels, i < j.

    Pairs are visited in row-major order and the gaps between retained pairs
    are geometric, so the cost is proportional to the number of edges.
    """
    n, p = int(params.n), params.p
    total = n * (n - 1) // 2
    if total == 0 or p <= 0.0:
        return np.empty((0, 2), dtype=np.int64)
    idx = bernoulli_positions(make_rng(params.seed), total, p)
    return pairs_from_index(idx, n) + 1


# -- components --------------------------------------------------------------

@njit
def _component_labels_nb(edges0, n):
    parent = np.arange(n)
    for t in range(edges0.shape[0]):
        a = edges0[t, 0]
        b = edges0[t, 1]
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        while parent[b] != b:
            parent[b] = parent[parent[b]]
            b = parent[b]
        if a != b:
            if a < b:
                parent[b] = a
            else:
                parent[a] = b
    # roots are the smallest label in each class
    for v in range(n):
        r = v
        while parent[r] != r:
            r = parent[r]
        parent[v] = r
    return parent


def _component_labels_np(edges0, n):
    if edges0.shape[0] == 0:
        return np.arange(n)
    g = sparse.coo_matrix(
        (np.ones(edges0.shape[0], dtype=np.int8), (edges0[:, 0], edges0[:, 1])), shape=(n, n)
    ).tocsr()
    _, lab = csgraph.connected_components(g, directed=False)
    # relabel each class by its smallest member
    first = np.full(lab.max() + 1, n, dtype=np.int64)
    np.minimum.at(first, lab, np.arange(n))
    return first[lab]


component_labels = dispatch(_component_labels_nb, _component_labels_np)


def component_sizes(edges: np.ndarray, n: int) -> np.ndarray:
    """Sizes of all components, descending."""
    lab = component_labels(np.asarray(edges, dtype=np.int64).reshape(-1, 2) - 1, int(n))
    return np.sort(np.bincount(lab, minlength=n)[np.unique(lab)])[::-1]


@dataclass
class Component:
    """Connected simple graph with labels in increasing order; root is local index 0."""

    vertices: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    meta: dict = field(default_factory=dict)

    root: int = 0

    @property
    def size(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def edge_count(self) -> int:
        return int(self.indices.shape[0] // 2)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def surplus(self) -> int:
        return self.edge_count - self.size + 1

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def local_index(self, label: int) -> int:
        k = int(np.searchsorted(self.vertices, label))
        if k >= self.size or self.vertices[k] != label:
            raise KeyError(f"vertex {label} is not in the component")
        return k

    def local_edges(self) -> np.ndarray:
        rows = np.repeat(np.arange(self.size), self.degrees)
        mask = rows < self.indices
        return np.column_stack([rows[mask], self.indices[mask]]).astype(np.int64)

    def label_edges(self) -> np.ndarray:
        return self.vertices[self.local_edges()]

    def adjacency(self) -> sparse.csr_matrix:
        data = np.ones(self.indices.shape[0])
        return sparse.csr_matrix((data, self.indices, self.indptr), shape=(self.size, self.size))

    @classmethod
    def from_local_edges(cls, vertices, edges_local, meta=None) -> "Component":
        vertices = np.asarray(vertices, dtype=np.int64)
        m = vertices.shape[0]
        e = np.asarray(edges_local, dtype=np.int64).reshape(-1, 2)
        if e.shape[0] and (np.any(e[:, 0] == e[:, 1])):
            raise ValueError("self-loops are not allowed")
        both = np.concatenate([e, e[:, ::-1]])
        order = np.lexsort((both[:, 1], both[:, 0]))
        both = both[order]
        if both.shape[0] > 1 and np.any(np.all(both[1:] == both[:-1], axis=1)):
            raise ValueError("parallel edges are not allowed")
        indptr = np.zeros(m + 1, dtype=np.int64)
        np.add.at(indptr, both[:, 0] + 1, 1)
        indptr = np.cumsum(indptr)
        return cls(vertices=vertices, indptr=indptr, indices=both[:, 1].copy(), meta=dict(meta or {}))

    @classmethod
    def from_label_edges(cls, edges, vertices=None, meta=None) -> "Component":
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if vertices is None:
            vertices = np.unique(e)
        vertices = np.unique(np.asarray(vertices, dtype=np.int64))
        local = np.searchsorted(vertices, e)
        comp = cls.from_local_edges(vertices, local, meta)
        if comp.size > 1 and np.unique(component_labels(comp.local_edges(), comp.size)).shape[0] != 1:
            raise ValueError("edge list is not connected")
        return comp

    # -- serialisation ---------------------------------------------------
    def to_json(self) -> str:
        doc = {
            "n": self.meta.get("n"),
            "lambda": self.meta.get("lambda"),
            "seed": self.meta.get("seed"),
            "vertices": self.vertices.tolist(),
            "edges": sorted(map(list, self.label_edges().tolist())),
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "Component":
        doc = json.loads(text)
        meta = {k: doc.get(k) for k in ("n", "lambda", "seed")}
        edges = np.asarray(doc["edges"], dtype=np.int64).reshape(-1, 2)
        return cls.from_label_edges(edges, vertices=doc["vertices"], meta=meta)


def largest_component(edges: np.ndarray, n: int, meta: dict | None = None) -> Component:
    """Component with most vertices; ties go to the smallest minimum label."""
    e0 = np.asarray(edges, dtype=np.int64).reshape(-1, 2) - 1
    n = int(n)
    lab = component_labels(e0, n)
    counts = np.bincount(lab, minlength=n)
    # counts is indexed by class root = smallest label, so argmax breaks ties correctly
    best = int(np.argmax(counts))
    members = np.flatnonzero(lab == best)
    keep = e0[lab[e0[:, 0]] == best] if e0.shape[0] else e0
    local = np.searchsorted(members, keep)
    return Component.from_local_edges(members + 1, local, meta)


def sample_largest_component(params: GnpParams) -> Component:
    edges = sample_gnp(params)
    meta = {"n": int(params.n), "lambda": float(params.lam), "seed": int(params.seed)}
    return largest_component(edges, params.n, meta)


# -- distances ---------------------------------------------------------------

@njit
def _bfs_nb(indptr, indices, src):
    m = indptr.shape[0] - 1
    dist = np.full(m, -1, dtype=np.int64)
    queue = np.empty(m, dtype=np.int64)
    dist[src] = 0
    queue[0] = src
    head = 0
    tail = 1
    while head < tail:
        v = queue[head]
        head += 1
        for t in range(indptr[v], indptr[v + 1]):
            w = indices[t]
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue[tail] = w
                tail += 1
    return dist


def _bfs_np(indptr, indices, src):
    m = indptr.shape[0] - 1
    g = sparse.csr_matrix((np.ones(indices.shape[0]), indices, indptr), shape=(m, m))
    d = csgraph.shortest_path(g, unweighted=True, directed=False, indices=int(src))
    out = np.where(np.isinf(d), -1, d).astype(np.int64)
    return out


bfs_distances_kernel = dispatch(_bfs_nb, _bfs_np)


def bfs_distances(component: Component, source: int = 0) -> np.ndarray:
    """Hop distances from local vertex ``source`` to every local vertex."""
    return bfs_distances_kernel(component.indptr, component.indices, int(source))


def graph_distance(component: Component, u: int, v: int) -> int:
    """Shortest-path edge count between vertex labels ``u`` and ``v``."""
    iu, iv = component.local_index(u), component.local_index(v)
    if iu == iv:
        return 0
    return int(bfs_distances(component, iu)[iv])
