"""Metric trees with glued node pairs, skeletons, projections and hat trees.

A point of a :class:`GluedMetricGraph` is either a node id or a pair
``(segment, offset)`` with ``offset`` measured from the segment's first end.
Quotient distances collapse each glue class to one vertex and run Dijkstra on
the resulting weighted graph.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from ._accel import kernel
from .dfs_encoding import OrderedTree, decompose_component, dfs_scan, surplus_edges
from .graphgen import Component


def _find(parent, a):
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


def glue_classes(n_nodes: int, pairs) -> np.ndarray:
    """Class id per node, 0..C-1, numbered by smallest member."""
    par = list(range(n_nodes))
    for a, b in pairs:
        ra, rb = _find(par, int(a)), _find(par, int(b))
        if ra != rb:
            par[max(ra, rb)] = min(ra, rb)
    roots = np.array([_find(par, i) for i in range(n_nodes)], dtype=np.int64)
    _, cls = np.unique(roots, return_inverse=True)
    return cls.astype(np.int64)


class GluedMetricGraph:
    """Finite metric tree made of segments, with some node pairs identified."""

    def __init__(self, n_nodes: int, segments, glue_pairs=(), root: int = 0):
        self.n_nodes = int(n_nodes)
        seg = np.asarray(segments, dtype=float).reshape(-1, 3)
        self.seg_a = seg[:, 0].astype(np.int64)
        self.seg_b = seg[:, 1].astype(np.int64)
        self.seg_len = seg[:, 2].copy()
        self.glue_pairs = [(int(a), int(b)) for a, b in glue_pairs]
        self.root = int(root)
        if np.any(self.seg_len <= 0):
            raise ValueError("segment lengths must be positive")
        if seg.shape[0] != self.n_nodes - 1:
            raise ValueError("segments must form a tree on the nodes")
        ends = np.concatenate([self.seg_a, self.seg_b])
        if ends.size and (ends.min() < 0 or ends.max() >= self.n_nodes):
            raise ValueError("segment endpoint out of range")
        for a, b in self.glue_pairs:
            if not (0 <= a < self.n_nodes and 0 <= b < self.n_nodes):
                raise ValueError("glue endpoint out of range")
        self._root_tree()
        self.classes = glue_classes(self.n_nodes, self.glue_pairs)
        self._qgraph = self._class_graph(self.classes)
        self._tgraph = self._class_graph(np.arange(self.n_nodes))

    # -- structure -------------------------------------------------------
    def _root_tree(self):
        n = self.n_nodes
        adj = [[] for _ in range(n)]
        for s, (a, b) in enumerate(zip(self.seg_a, self.seg_b)):
            adj[a].append((b, s))
            adj[b].append((a, s))
        parent = np.full(n, -1, dtype=np.int64)
        pseg = np.full(n, -1, dtype=np.int64)
        depth = np.zeros(n, dtype=np.int64)
        height = np.zeros(n)
        seen = np.zeros(n, dtype=bool)
        seen[self.root] = True
        order = [self.root]
        for v in order:
            for w, s in adj[v]:
                if not seen[w]:
                    seen[w] = True
                    parent[w], pseg[w] = v, s
                    depth[w] = depth[v] + 1
                    height[w] = height[v] + self.seg_len[s]
                    order.append(w)
        if len(order) != n:
            raise ValueError("segments do not form a connected tree")
        self.parent, self.parent_seg, self.depth, self.height = parent, pseg, depth, height
        self.bfs_order = np.asarray(order, dtype=np.int64)

    def _class_graph(self, cls):
        a, b = cls[self.seg_a], cls[self.seg_b]
        keep = a != b
        a, b, w = a[keep], b[keep], self.seg_len[keep]
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        # parallel class edges: keep the shortest
        order = np.lexsort((w, hi, lo))
        lo, hi, w = lo[order], hi[order], w[order]
        first = np.ones(lo.shape[0], dtype=bool)
        first[1:] = (lo[1:] != lo[:-1]) | (hi[1:] != hi[:-1])
        lo, hi, w = lo[first], hi[first], w[first]
        m = int(cls.max()) + 1 if cls.size else 0
        return sparse.csr_matrix((w, (lo, hi)), shape=(m, m))

    @property
    def J(self) -> int:
        return len(self.glue_pairs)

    @property
    def total_length(self) -> float:
        return float(self.seg_len.sum())

    def segments(self) -> list:
        return [(int(a), int(b), float(l)) for a, b, l in zip(self.seg_a, self.seg_b, self.seg_len)]

    # -- distances -------------------------------------------------------
    def _anchors(self, x):
        if isinstance(x, (tuple, list)):
            s, off = int(x[0]), float(x[1])
            if not 0 <= s < self.seg_len.shape[0] or not -1e-12 <= off <= self.seg_len[s] + 1e-12:
                raise ValueError(f"point {x} is not on the complex")
            off = min(max(off, 0.0), self.seg_len[s])
            return [(int(self.seg_a[s]), off), (int(self.seg_b[s]), self.seg_len[s] - off)], (s, off)
        x = int(x)
        if not 0 <= x < self.n_nodes:
            raise ValueError(f"node {x} is not in the complex")
        return [(x, 0.0)], None

    def _distance(self, x, y, glued: bool) -> float:
        cls = self.classes if glued else np.arange(self.n_nodes)
        g = self._qgraph if glued else self._tgraph
        ax, sx = self._anchors(x)
        ay, sy = self._anchors(y)
        best = np.inf
        if sx is not None and sy is not None and sx[0] == sy[0]:
            best = abs(sx[1] - sy[1])
        src = sorted({int(cls[v]) for v, _ in ax})
        dist = csgraph.dijkstra(g, directed=False, indices=src)
        row = {c: dist[i] for i, c in enumerate(src)}
        for vx, ox in ax:
            for vy, oy in ay:
                best = min(best, ox + row[int(cls[vx])][cls[vy]] + oy)
        return float(best)

    def quotient_distance(self, x, y) -> float:
        return self._distance(x, y, True)

    def tree_distance(self, x, y) -> float:
        return self._distance(x, y, False)

    def node_distance_matrix(self, nodes=None, glued: bool = True) -> np.ndarray:
        nodes = np.arange(self.n_nodes) if nodes is None else np.asarray(nodes, dtype=np.int64)
        cls = self.classes if glued else np.arange(self.n_nodes)
        g = self._qgraph if glued else self._tgraph
        d = csgraph.dijkstra(g, directed=False, indices=cls[nodes])
        return d[:, cls[nodes]]

    def geodesic_nodes(self, x: int, y: int) -> list:
        """Node sequence of a shortest quotient path; glued hops appear as repeats of a class."""
        cls = self.classes
        _, pred = csgraph.dijkstra(self._qgraph, directed=False, indices=int(cls[x]), return_predecessors=True)
        path = [int(cls[y])]
        while path[-1] != cls[x]:
            path.append(int(pred[path[-1]]))
        return path[::-1]

    # -- serialisation ---------------------------------------------------
    def to_json(self) -> str:
        return json.dumps({
            "n_nodes": self.n_nodes,
            "segments": [list(s) for s in self.segments()],
            "glue_pairs": [list(p) for p in self.glue_pairs],
            "root": self.root,
        })

    @classmethod
    def from_json(cls, text: str) -> "GluedMetricGraph":
        d = json.loads(text)
        return cls(d["n_nodes"], d["segments"], d["glue_pairs"], d["root"])


def quotient_distance(space: GluedMetricGraph, x, y) -> float:
    return space.quotient_distance(x, y)


# -- branch points -----------------------------------------------------------

def lca(parent: np.ndarray, depth: np.ndarray, x: int, y: int) -> int:
    x, y = int(x), int(y)
    while depth[x] > depth[y]:
        x = int(parent[x])
    while depth[y] > depth[x]:
        y = int(parent[y])
    while x != y:
        x, y = int(parent[x]), int(parent[y])
    return x


def branch_point_in(parent, depth, x, y, z) -> int:
    """Median of three nodes in a rooted tree: the deepest pairwise LCA."""
    cands = [lca(parent, depth, x, y), lca(parent, depth, y, z), lca(parent, depth, x, z)]
    return max(cands, key=lambda v: depth[v])


def branch_point(tree, x: int, y: int, z: int) -> int:
    if isinstance(tree, GluedMetricGraph):
        return branch_point_in(tree.parent, tree.depth, x, y, z)
    return branch_point_in(tree.parent, tree.depths(), x, y, z)


# -- skeletons on glued metric graphs ----------------------------------------

def _ancestor_mask(parent: np.ndarray, nodes) -> np.ndarray:
    mask = np.zeros(parent.shape[0], dtype=bool)
    for v in nodes:
        v = int(v)
        while v >= 0 and not mask[v]:
            mask[v] = True
            v = int(parent[v])
    return mask


@kernel
def _nearest_marked_ancestor(order, parent, mask):
    proj = np.empty(order.shape[0], dtype=np.int64)
    for t in range(order.shape[0]):
        v = order[t]
        if mask[v] or parent[v] < 0:
            proj[v] = v
        else:
            proj[v] = proj[parent[v]]
    return proj


@dataclass
class Skeleton:
    space: GluedMetricGraph
    u: np.ndarray
    v: np.ndarray
    mask: np.ndarray
    xi: np.ndarray | None = None

    @property
    def nodes(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    @property
    def projection(self) -> np.ndarray:
        sp = self.space
        return _nearest_marked_ancestor(sp.bfs_order, sp.parent, self.mask)

    @property
    def total_length(self) -> float:
        sp = self.space
        inside = self.mask[sp.seg_a] & self.mask[sp.seg_b]
        return float(sp.seg_len[inside].sum())

    def as_space(self) -> GluedMetricGraph:
        sp = self.space
        nodes = self.nodes
        new = -np.ones(sp.n_nodes, dtype=np.int64)
        new[nodes] = np.arange(nodes.shape[0])
        inside = self.mask[sp.seg_a] & self.mask[sp.seg_b]
        segs = [(new[a], new[b], l) for a, b, l in zip(sp.seg_a[inside], sp.seg_b[inside], sp.seg_len[inside])]
        pairs = [(new[a], new[b]) for a, b in sp.glue_pairs]
        return GluedMetricGraph(nodes.shape[0], segs, pairs, int(new[sp.root]))

    def to_dict(self) -> dict:
        return {
            "u": self.u.tolist(),
            "v": self.v.tolist(),
            "xi": None if self.xi is None else np.asarray(self.xi).tolist(),
            "nodes": self.nodes.tolist(),
        }


def build_skeleton(space: GluedMetricGraph, k: int, leaf_source, xi=None) -> Skeleton:
    """Union of root paths to ``u_1..u_k`` and to the glue targets.

    The first J leaves are the glue sources; ``leaf_source`` supplies node ids
    for the remaining ``k - J``.
    """
    J = space.J
    if k <= J:
        raise ValueError(f"k = {k} must exceed J = {J}")
    extra = np.asarray(leaf_source, dtype=np.int64)[: k - J]
    if extra.shape[0] < k - J:
        raise ValueError("leaf_source supplies too few leaves")
    u = np.concatenate([np.array([a for a, _ in space.glue_pairs], dtype=np.int64), extra])
    v = np.array([b for _, b in space.glue_pairs], dtype=np.int64)
    mask = _ancestor_mask(space.parent, np.concatenate([u, v, [space.root]]))
    return Skeleton(space, u, v, mask, xi)


def project(space: GluedMetricGraph, skeleton: Skeleton, x):
    """Nearest skeleton point of a tree point (node or ``(segment, offset)``)."""
    if isinstance(x, (tuple, list)):
        s, off = int(x[0]), float(x[1])
        a, b = int(space.seg_a[s]), int(space.seg_b[s])
        if skeleton.mask[a] and skeleton.mask[b]:
            return (s, off)
        child = a if space.parent[a] == b else b
        x = child
    return int(skeleton.projection[int(x)])


@dataclass
class MeasurePack:
    hausdorff_total: float
    projected_mass: np.ndarray

    @property
    def total_mass(self) -> float:
        return float(self.projected_mass.sum())


def push_forward(skeleton: Skeleton, node_mass) -> MeasurePack:
    mass = np.asarray(node_mass, dtype=float)
    if np.any(mass < 0):
        raise ValueError("negative mass")
    out = np.bincount(skeleton.projection, weights=mass, minlength=skeleton.space.n_nodes)
    return MeasurePack(skeleton.total_length, out)


# -- discrete skeletons of graph components ----------------------------------

@dataclass
class DiscreteSkeleton:
    """Skeleton ``C(k)`` of a component: root paths to k leaves plus glue targets."""

    component: Component
    tree: OrderedTree
    record: object
    u: np.ndarray
    v: np.ndarray
    xi: np.ndarray
    mask: np.ndarray
    proj: np.ndarray
    depth: np.ndarray
    sub: Component = field(repr=False)
    nodes: np.ndarray = field(repr=False)

    @property
    def J(self) -> int:
        return int(self.v.shape[0])

    @property
    def k(self) -> int:
        return int(self.u.shape[0])

    @property
    def edge_count(self) -> int:
        return self.sub.edge_count

    @property
    def local_of(self) -> np.ndarray:
        """Map from component index to skeleton index (-1 outside)."""
        out = -np.ones(self.component.size, dtype=np.int64)
        out[self.nodes] = np.arange(self.nodes.shape[0])
        return out

    def measure(self) -> MeasurePack:
        """Counting measure of the component pushed onto skeleton vertices."""
        mass = np.bincount(self.proj, minlength=self.component.size)[self.nodes].astype(float)
        return MeasurePack(float(self.edge_count), mass)

    def to_dict(self) -> dict:
        lab = self.component.vertices
        return {
            "u": lab[self.u].tolist(),
            "v": lab[self.v].tolist(),
            "xi": self.xi.tolist(),
            "vertices": lab[self.nodes].tolist(),
            "edge_count": self.edge_count,
        }


def build_discrete_skeleton(component: Component, k: int, xi, encoding=None) -> DiscreteSkeleton:
    """``C(k)``: leaves ``u_i`` from surplus points, then contour times ``floor(2(Z-1) xi)``."""
    tree, points = encoding if encoding is not None else decompose_component(component)
    rec = dfs_scan(tree)
    J = len(points)
    if k <= J:
        raise ValueError(f"k = {k} must exceed the surplus J = {J}")
    xi = np.asarray(xi, dtype=float)
    if xi.shape[0] < k - J:
        raise ValueError("not enough leaf variates")
    xi = xi[: k - J]
    pairs = surplus_edges(tree, points)
    z = component.size
    ct = np.floor(2 * (z - 1) * xi).astype(np.int64)
    ct = np.clip(ct, 0, rec.contour_vertices.shape[0] - 1)
    u = np.concatenate([pairs[:, 0], rec.contour_vertices[ct]]).astype(np.int64)
    v = pairs[:, 1].astype(np.int64)
    mask = _ancestor_mask(tree.parent, np.concatenate([u, v, [tree.root]]))
    proj = _nearest_marked_ancestor(rec.dfs_order, tree.parent, mask)
    depth = np.empty(z, dtype=np.int64)
    depth[rec.dfs_order] = rec.height
    nodes = np.flatnonzero(mask)
    new = -np.ones(z, dtype=np.int64)
    new[nodes] = np.arange(nodes.shape[0])
    te = tree.edges()
    te = te[mask[te[:, 0]] & mask[te[:, 1]]]
    edges = np.concatenate([new[te], new[pairs]]) if pairs.size else new[te]
    sub = Component.from_local_edges(component.vertices[nodes], edges, component.meta)
    return DiscreteSkeleton(component, tree, rec, u, v, xi, mask, proj, depth, sub, nodes)


def projection_radius(skel: DiscreteSkeleton) -> int:
    """Largest graph distance from a vertex to its projection onto the skeleton."""
    return int((skel.depth - skel.depth[skel.proj]).max())


@dataclass
class HatTree:
    vertices: np.ndarray
    edges: np.ndarray
    pairs: np.ndarray  # (w_i, w~_i)
    flags: dict

    @property
    def is_tree(self) -> bool:
        n = self.vertices.shape[0]
        if self.edges.shape[0] != n - 1:
            return False
        idx = np.searchsorted(self.vertices, self.edges)
        g = sparse.coo_matrix((np.ones(idx.shape[0]), (idx[:, 0], idx[:, 1])), shape=(n, n))
        return csgraph.connected_components(g, directed=False)[0] == 1

    def fused_edges(self) -> np.ndarray:
        """Edges after identifying each ``w~_i`` with ``w_i``; duplicates merged."""
        mp = {int(b): int(a) for a, b in self.pairs}
        e = np.vectorize(lambda x: mp.get(int(x), int(x)), otypes=[np.int64])(self.edges) if self.edges.size else self.edges
        e = np.sort(e, axis=1)
        e = e[e[:, 0] != e[:, 1]]
        return np.unique(e, axis=0)


def hat_tree(skel: DiscreteSkeleton) -> HatTree:
    """Tree spanned by the leaves with a length-two spur ``u_i - v_i - w~_i`` per surplus edge.

    Vertex ids are component indices; the new vertices ``w~_i`` get ids
    ``Z + i``.  ``flags`` records the instances where the spur picture
    degenerates (possible at small n).
    """
    tree, z, J = skel.tree, skel.component.size, skel.J
    tmask = _ancestor_mask(tree.parent, np.concatenate([skel.u, [tree.root]]))
    te = tree.edges()
    te = te[tmask[te[:, 0]] & tmask[te[:, 1]]]
    u, v = skel.u[:J], skel.v
    w = tree.parent[v]
    wt = z + np.arange(J)
    edges = np.concatenate([te, np.column_stack([u, v]), np.column_stack([v, wt])]).astype(np.int64)
    verts = np.unique(np.concatenate([np.flatnonzero(tmask), v, wt]))
    edges = np.sort(edges, axis=1)
    edges = np.unique(edges, axis=0)
    # branch set: pairwise LCAs of root and the surplus sources
    ends = [tree.root] + [int(x) for x in u]
    depth = skel.depth
    branch = {lca(tree.parent, depth, a, b) for a in ends for b in ends}
    on_path = [bool(_ancestor_mask(tree.parent, [int(u[i])])[w[i]]) for i in range(J)]
    flags = {
        "w_in_branch_set": [bool(int(x) in branch) for x in w],
        "v_in_leaf_tree": [bool(tmask[x]) for x in v],
        "repeated_v": bool(np.unique(v).shape[0] < J),
        "w_on_root_path": on_path,
    }
    flags["degenerate"] = bool(any(flags["w_in_branch_set"]) or any(flags["v_in_leaf_tree"]) or flags["repeated_v"])
    return HatTree(verts, edges, np.column_stack([w, wt]).astype(np.int64), flags)
