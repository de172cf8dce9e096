"""Effective resistance on finite electrical networks.

Parallel edges are merged by adding conductances and loops are dropped when
the Laplacian is built.  The raw edge list is kept because shortest-path
distances and edge counts are taken over it.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse import linalg as spla

RESIDUAL_TOL = 1e-10
DIRECT_LIMIT = 100_000


class Network:
    def __init__(self, nodes, edges):
        self.nodes = list(nodes)
        self.index = {v: i for i, v in enumerate(self.nodes)}
        if len(self.index) != len(self.nodes):
            raise ValueError("duplicate node labels")
        raw = []
        for a, b, r in edges:
            r = float(r)
            if not (r > 0 and math.isfinite(r)):
                raise ValueError(f"resistance must be finite and positive, got {r}")
            raw.append((self.index[a], self.index[b], r))
        self.raw_edges = raw
        n = len(self.nodes)
        if raw:
            a, b, r = (np.array(x) for x in zip(*raw))
            a, b = a.astype(np.int64), b.astype(np.int64)
        else:
            a = b = np.empty(0, dtype=np.int64)
            r = np.empty(0)
        keep = a != b
        a, b, c = a[keep], b[keep], 1.0 / r[keep]
        w = sparse.coo_matrix((np.concatenate([c, c]), (np.concatenate([a, b]), np.concatenate([b, a]))), shape=(n, n)).tocsr()
        w.sum_duplicates()
        self.conductance = w
        self.laplacian = (sparse.diags(np.asarray(w.sum(axis=1)).ravel()) - w).tocsc()
        # distances use the shortest of any parallel edges
        self._rgraph = None
        self._ra, self._rb, self._rr = a, b, r[keep]

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def edge_count(self) -> int:
        return len(self.raw_edges)

    def is_connected(self) -> bool:
        return csgraph.connected_components(self.conductance, directed=False)[0] <= 1

    def shortest_path(self, a, b) -> float:
        if self._rgraph is None:
            order = np.lexsort((self._rr, np.maximum(self._ra, self._rb), np.minimum(self._ra, self._rb)))
            lo = np.minimum(self._ra, self._rb)[order]
            hi = np.maximum(self._ra, self._rb)[order]
            rr = self._rr[order]
            first = np.ones(lo.shape[0], dtype=bool)
            first[1:] = (lo[1:] != lo[:-1]) | (hi[1:] != hi[:-1])
            self._rgraph = sparse.csr_matrix((rr[first], (lo[first], hi[first])), shape=(self.n, self.n))
        d = csgraph.dijkstra(self._rgraph, directed=False, indices=self.index[a])
        return float(d[self.index[b]])

    def to_json(self) -> str:
        edges = [[self.nodes[a], self.nodes[b], r] for a, b, r in self.raw_edges]
        return json.dumps({"nodes": self.nodes, "edges": edges})

    @classmethod
    def from_json(cls, text: str) -> "Network":
        d = json.loads(text)
        return cls(d["nodes"], [tuple(e) for e in d["edges"]])

    @classmethod
    def from_component(cls, component, resistance: float = 1.0) -> "Network":
        e = component.local_edges()
        return cls(range(component.size), [(int(a), int(b), resistance) for a, b in e])


def _solve(mat, rhs):
    if mat.shape[0] <= DIRECT_LIMIT:
        x = spla.splu(mat.tocsc()).solve(rhs)
    else:
        x = np.empty_like(rhs)
        cols = rhs if rhs.ndim == 2 else rhs[:, None]
        out = x if rhs.ndim == 2 else x[:, None]
        for j in range(cols.shape[1]):
            out[:, j], info = spla.cg(mat, cols[:, j], rtol=1e-13, maxiter=20 * mat.shape[0])
            if info != 0:
                raise RuntimeError("conjugate gradient did not converge")
    res = np.linalg.norm(mat @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if res > RESIDUAL_TOL:
        raise RuntimeError(f"linear solve residual {res:.2e} exceeds {RESIDUAL_TOL}")
    return x


def _component_of(net: Network, i: int) -> np.ndarray:
    _, lab = csgraph.connected_components(net.conductance, directed=False)
    return np.flatnonzero(lab == lab[i])


def _resistance_idx(net: Network, ia: int, ib: int) -> float:
    if ia == ib:
        return 0.0
    comp = _component_of(net, ia)
    if ib not in set(comp.tolist()):
        raise ValueError("nodes are not connected")
    L = net.laplacian[comp][:, comp].tocsc()
    pos = {v: k for k, v in enumerate(comp.tolist())}
    a, b = pos[ia], pos[ib]
    inner = np.array([k for k in range(comp.shape[0]) if k != a and k != b], dtype=np.int64)
    # potential 1 at a, 0 at b, harmonic elsewhere; energy = current out of a
    if inner.shape[0]:
        f = _solve(L[inner][:, inner], -L[inner][:, [a]].toarray().ravel())
        energy = L[a, a] + float((L[[a]][:, inner] @ f)[0])
    else:
        energy = L[a, a]
    return 1.0 / float(energy)


def effective_resistance(net: Network, a, b) -> float:
    return _resistance_idx(net, net.index[a], net.index[b])


def collapse(net: Network, group, label="__set__") -> Network:
    """Merge a node set into one node; edges inside the set become loops."""
    group = set(group)
    keep = [v for v in net.nodes if v not in group]
    mp = {v: (label if v in group else v) for v in net.nodes}
    edges = [(mp[net.nodes[a]], mp[net.nodes[b]], r) for a, b, r in net.raw_edges]
    return Network(keep + [label], edges)


def effective_resistance_to_set(net: Network, a, B) -> float:
    B = list(B)
    if not B:
        raise ValueError("target set is empty")
    if a in B:
        raise ValueError("source lies in the target set")
    merged = collapse(net, B)
    return effective_resistance(merged, a, "__set__")


def resistance_matrix(net: Network, nodes=None) -> np.ndarray:
    """Pairwise resistances among ``nodes`` from one grounded inverse (connected nets only)."""
    if not net.is_connected():
        raise ValueError("network is not connected")
    idx = np.arange(net.n) if nodes is None else np.array([net.index[v] for v in nodes])
    if net.n == 1:
        return np.zeros((1, 1))
    L = net.laplacian
    red = L[1:][:, 1:].tocsc()
    rhs = np.zeros((net.n - 1, idx.shape[0]))
    for j, i in enumerate(idx):
        if i > 0:
            rhs[i - 1, j] = 1.0
    sol = _solve(red, rhs)
    G = np.zeros((net.n, idx.shape[0]))
    G[1:] = sol
    Gs = G[idx]
    diag = np.diag(Gs)
    return diag[:, None] + diag[None, :] - Gs - Gs.T


def trace_network(net: Network, subset) -> Network:
    """Schur complement of the Laplacian onto ``subset`` as an equivalent network."""
    subset = list(subset)
    if len(subset) < 2:
        raise ValueError("trace needs at least two nodes")
    V = np.array([net.index[v] for v in subset])
    I = np.setdiff1d(np.arange(net.n), V)
    L = net.laplacian
    S = L[V][:, V].toarray()
    if I.shape[0]:
        LII = L[I][:, I].tocsc()
        LIV = L[I][:, V].toarray()
        S = S - L[V][:, I] @ _solve(LII, LIV)
    edges = []
    scale = max(np.abs(np.diag(S)).max(), 1e-300)
    for i in range(len(subset)):
        for j in range(i + 1, len(subset)):
            c = -S[i, j]
            if c > 1e-14 * scale:
                edges.append((subset[i], subset[j], 1.0 / c))
    return Network(subset, edges)


# -- inequality checks -------------------------------------------------------

@dataclass
class ResistanceReport:
    rows: list = field(default_factory=list)  # (pair, d, R, lower, pass)

    @property
    def violations(self) -> list:
        return [r for r in self.rows if not r[4]]

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pair", "d", "R", "lower_bound", "pass"])
            for pair, d, R, lo, ok in self.rows:
                w.writerow([f"{pair[0]}-{pair[1]}", repr(d), repr(R), repr(lo), int(ok)])


def verify_resistance_lower_bound(net: Network, pairs=None, rtol: float = 1e-9) -> ResistanceReport:
    """Check ``d/#E! <= R <= d`` with d the weighted graph distance."""
    if pairs is None:
        pairs = [(net.nodes[i], net.nodes[j]) for i in range(net.n) for j in range(i + 1, net.n)]
    fact = math.factorial(net.edge_count)
    rep = ResistanceReport()
    for a, b in pairs:
        R = effective_resistance(net, a, b)
        d = net.shortest_path(a, b)
        lower = d / fact
        ok = lower <= R * (1 + rtol) and R <= d * (1 + rtol)
        rep.rows.append(((a, b), d, R, lower, ok))
    return rep


def fused_network(space, points=(), mesh: float | None = None):
    """Electrical network of a glued metric graph with unit resistance per unit length.

    Segments are cut at the requested interior points (and optionally on a
    mesh); identified nodes become one network node.  Returns the network and
    the network node of each requested point.
    """
    cuts = {s: [0.0, float(space.seg_len[s])] for s in range(space.seg_len.shape[0])}
    for p in points:
        if isinstance(p, (tuple, list)):
            cuts[int(p[0])].append(float(p[1]))
    if mesh:
        for s, L in enumerate(space.seg_len):
            cuts[s].extend(np.linspace(0, L, max(1, int(round(L / mesh))) + 1).tolist())
    cls = space.classes
    node_of = {}
    edges = []
    extra = space.classes.max() + 1 if space.n_nodes else 0
    for s, offs in cuts.items():
        L = float(space.seg_len[s])
        raw = np.unique(np.clip(offs, 0.0, L))
        # cuts closer than round-off would give near-infinite conductances
        tol = 1e-9 * L
        kept = [0.0]
        for o in raw[1:]:
            if o - kept[-1] > tol:
                kept.append(float(o))
        if L - kept[-1] <= tol:
            kept[-1] = L
        else:
            kept.append(L)
        ids = []
        for o in kept:
            if o <= 0:
                ids.append(int(cls[space.seg_a[s]]))
            elif o >= L:
                ids.append(int(cls[space.seg_b[s]]))
            else:
                ids.append(int(extra))
                extra += 1
        kept_arr = np.asarray(kept)
        for o in raw:
            i = int(np.argmin(np.abs(kept_arr - o)))
            node_of[(s, float(o))] = ids[i]
        for i in range(len(ids) - 1):
            edges.append((ids[i], ids[i + 1], float(kept[i + 1] - kept[i])))
    net = Network(range(int(extra)), edges)

    def locate(p):
        if isinstance(p, (tuple, list)):
            s, o = int(p[0]), float(p[1])
            return node_of[(s, min(max(o, 0.0), float(space.seg_len[s])))]
        return int(cls[int(p)])

    return net, [locate(p) for p in points]


def verify_glued_comparison(space, pairs, rtol: float = 1e-9) -> ResistanceReport:
    """Check ``d_M/(4J+1)! <= R_M <= d_M`` on point pairs of a glued metric graph."""
    pts = [p for pair in pairs for p in pair]
    net, ids = fused_network(space, pts)
    c = 1.0 / math.factorial(4 * space.J + 1)
    uniq = sorted(set(ids))
    Rm = resistance_matrix(net, uniq) if len(uniq) > 1 else np.zeros((1, 1))
    where = {v: i for i, v in enumerate(uniq)}
    rep = ResistanceReport()
    for t, (x, y) in enumerate(pairs):
        d = space.quotient_distance(x, y)
        R = float(Rm[where[ids[2 * t]], where[ids[2 * t + 1]]])
        ok = c * d <= R * (1 + rtol) + 1e-12 and R <= d * (1 + rtol) + 1e-12
        rep.rows.append(((x, y), d, R, c * d, ok))
    return rep


def circle_resistance(r: float, x: float, y: float) -> float:
    """Resistance between positions x, y on a circle of circumference r."""
    d = abs(float(x) - float(y)) % r
    d = min(d, r - d)
    if d <= 0:
        raise ValueError("points coincide")
    return 1.0 / (1.0 / d + 1.0 / (r - d))


def cycle_network(nodes: int, r: float) -> Network:
    """Cycle on ``nodes`` vertices with total resistance r."""
    step = r / nodes
    return Network(range(nodes), [(i, (i + 1) % nodes, step) for i in range(nodes)])
