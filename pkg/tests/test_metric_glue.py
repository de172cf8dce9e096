import itertools
import json
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from critwalk.dfs_encoding import OrderedTree, decompose_component, dfs_scan, surplus_edges
from critwalk.graphgen import GnpParams, bfs_distances, sample_largest_component
from critwalk.metric_glue import (
    GluedMetricGraph, branch_point, build_discrete_skeleton, build_skeleton, glue_classes, hat_tree,
    project, projection_radius, push_forward, quotient_distance,
)
from conftest import star_component


def random_space(seed, n_nodes=12, J=2):
    rng = np.random.default_rng(seed)
    segs = [(int(rng.integers(0, i)), i, float(rng.uniform(0.1, 2.0))) for i in range(1, n_nodes)]
    pairs = []
    while len(pairs) < J:
        a, b = (int(x) for x in rng.integers(0, n_nodes, 2))
        if a != b:
            pairs.append((a, b))
    return GluedMetricGraph(n_nodes, segs, pairs)


def tree_dist_oracle(space, a, b):
    """Path length from root heights and a walk up to the common ancestor."""
    anc = set()
    x = a
    while x >= 0:
        anc.add(x)
        x = int(space.parent[x])
    y = b
    while y not in anc:
        y = int(space.parent[y])
    return space.height[a] + space.height[b] - 2 * space.height[y]


def chain_oracle(space, x, y):
    """Shortest route using each glue pair at most once, in any order and direction."""
    td = lambda p, q: space.tree_distance(p, q)
    best = td(x, y)
    pairs = space.glue_pairs
    for r in range(1, len(pairs) + 1):
        for seq in itertools.permutations(pairs, r):
            for flips in itertools.product((False, True), repeat=r):
                cur, tot = x, 0.0
                for (a, b), f in zip(seq, flips):
                    a, b = (b, a) if f else (a, b)
                    tot += td(cur, a)
                    cur = b
                best = min(best, tot + td(cur, y))
    return best


def leaf_xi(comp, tree, rec):
    """Leaf variates that land exactly on every leaf of the DFS tree."""
    leaves = [v for v in range(tree.size) if tree.children(v).size == 0]
    z = comp.size
    ks = [int(np.flatnonzero(rec.contour_vertices == v)[0]) for v in leaves]
    return np.array([(k + 0.5) / (2 * (z - 1)) for k in ks])


def multi_source_bfs(comp, sources):
    dist = np.full(comp.size, -1)
    q = deque()
    for s in sources:
        dist[s] = 0
        q.append(s)
    while q:
        v = q.popleft()
        for w in comp.neighbors(v):
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                q.append(w)
    return dist


# -- glued metric graphs ----------------------------------------------------

def test_ends_glued_segment():
    sp = GluedMetricGraph(2, [(0, 1, 1.0)], [(0, 1)])
    assert sp.quotient_distance((0, 0.1), (0, 0.9)) == pytest.approx(0.2)
    assert sp.tree_distance((0, 0.1), (0, 0.9)) == pytest.approx(0.8)
    assert quotient_distance(sp, 0, 1) == 0.0


def test_no_glue_equals_tree_distance():
    sp = random_space(3, 20, 0)
    for a in range(20):
        for b in range(20):
            assert sp.quotient_distance(a, b) == pytest.approx(tree_dist_oracle(sp, a, b))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 3), st.data())
def test_quotient_matches_chain_enumeration(seed, J, data):
    sp = random_space(seed, 10, J)
    x = data.draw(st.integers(0, 9))
    s = data.draw(st.integers(0, 8))
    off = data.draw(st.floats(0, 1)) * sp.seg_len[s]
    assert sp.quotient_distance(x, (s, off)) == pytest.approx(
        min(chain_oracle(sp, x, int(sp.seg_a[s])) + off, chain_oracle(sp, x, int(sp.seg_b[s])) + sp.seg_len[s] - off,
            abs(sp.tree_distance(x, (s, off))) if J == 0 else np.inf)
    )
    for y in range(10):
        assert sp.quotient_distance(x, y) == pytest.approx(chain_oracle(sp, x, y))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_quotient_is_pseudometric(seed):
    sp = random_space(seed, 15, 3)
    d = sp.node_distance_matrix()
    assert np.allclose(d, d.T)
    assert np.all(np.diag(d) == 0)
    for k in range(15):
        assert np.all(d <= d[:, [k]] + d[[k], :] + 1e-9)
    assert np.all(d <= sp.node_distance_matrix(glued=False) + 1e-12)


def test_geodesic_lengths_add_up():
    sp = random_space(5, 15, 2)
    d = sp.node_distance_matrix()
    path = sp.geodesic_nodes(0, 14)
    cls = sp.classes
    rep = {int(c): int(np.flatnonzero(cls == c)[0]) for c in path}
    hops = sum(d[rep[a], rep[b]] for a, b in zip(path, path[1:]))
    assert hops == pytest.approx(d[0, 14])


def test_glue_classes():
    assert glue_classes(5, [(3, 1), (1, 4)]).tolist() == [0, 1, 2, 1, 1]
    assert glue_classes(3, []).tolist() == [0, 1, 2]


def test_space_validation():
    with pytest.raises(ValueError):
        GluedMetricGraph(2, [(0, 1, 0.0)])
    with pytest.raises(ValueError):
        GluedMetricGraph(3, [(0, 1, 1.0), (1, 0, 1.0)])
    with pytest.raises(ValueError):
        GluedMetricGraph(2, [(0, 1, 1.0)], [(0, 5)])
    sp = GluedMetricGraph(2, [(0, 1, 1.0)])
    with pytest.raises(ValueError):
        sp.quotient_distance((0, 2.0), 0)
    with pytest.raises(ValueError):
        sp.quotient_distance(7, 0)


def test_space_json_round_trip():
    sp = random_space(9, 8, 2)
    back = GluedMetricGraph.from_json(sp.to_json())
    assert np.allclose(back.node_distance_matrix(), sp.node_distance_matrix())
    assert set(json.loads(sp.to_json())) == {"n_nodes", "segments", "glue_pairs", "root"}


# -- branch points -----------------------------------------------------------

def path_nodes(tree, a, b):
    pa, pb = tree.root_path(a), tree.root_path(b)
    common = [x for x, y in zip(pa, pb) if x == y]
    return set(pa[len(common) - 1:]) | set(pb[len(common) - 1:])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.data())
def test_branch_point_is_path_intersection(seed, data):
    rng = np.random.default_rng(seed)
    n = 30
    parent = np.array([-1] + [int(rng.integers(0, i)) for i in range(1, n)])
    tree = OrderedTree(parent)
    x, y, z = (data.draw(st.integers(0, n - 1)) for _ in range(3))
    common = path_nodes(tree, x, y) & path_nodes(tree, y, z) & path_nodes(tree, x, z)
    assert common == {branch_point(tree, x, y, z)}


def test_branch_point_on_space():
    sp = GluedMetricGraph(4, [(0, 1, 1.0), (1, 2, 1.0), (1, 3, 1.0)])
    assert branch_point(sp, 0, 2, 3) == 1
    assert branch_point(sp, 2, 2, 3) == 2


# -- continuum skeletons -----------------------------------------------------

def test_skeleton_requires_k_above_J():
    sp = random_space(1, 10, 2)
    with pytest.raises(ValueError):
        build_skeleton(sp, 2, [])
    with pytest.raises(ValueError):
        build_skeleton(sp, 4, [5])


def test_bare_segment_skeleton():
    sp = GluedMetricGraph(2, [(0, 1, 1.5)])
    sk = build_skeleton(sp, 1, [1])
    assert sk.total_length == pytest.approx(1.5)
    assert sk.as_space().total_length == pytest.approx(1.5)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_projection_is_nearest_skeleton_point(seed, extra):
    sp = random_space(seed, 25, 2)
    leaves = np.random.default_rng(seed).integers(0, 25, extra)
    sk = build_skeleton(sp, sp.J + extra, leaves)
    nodes = sk.nodes
    d = sp.node_distance_matrix(glued=False)
    for x in range(25):
        px = project(sp, sk, x)
        assert sk.mask[px]
        assert d[x, px] == pytest.approx(d[x, nodes].min())
        if sk.mask[x]:
            assert px == x
    # points on segments
    for s in range(24):
        a, b = int(sp.seg_a[s]), int(sp.seg_b[s])
        p = project(sp, sk, (s, 0.5 * sp.seg_len[s]))
        if sk.mask[a] and sk.mask[b]:
            assert p == (s, 0.5 * sp.seg_len[s])
        else:
            assert sp.tree_distance((s, 0.5 * sp.seg_len[s]), p) == pytest.approx(
                min(sp.tree_distance((s, 0.5 * sp.seg_len[s]), int(v)) for v in nodes))


def test_push_forward_conserves_mass():
    sp = random_space(2, 30, 1)
    sk = build_skeleton(sp, 3, [10, 20])
    mass = np.random.default_rng(0).random(30)
    mp = push_forward(sk, mass)
    assert mp.total_mass == pytest.approx(mass.sum())
    assert np.all(mp.projected_mass[~sk.mask] == 0)
    with pytest.raises(ValueError):
        push_forward(sk, -mass)


def test_skeleton_to_dict():
    sp = random_space(2, 10, 1)
    d = build_skeleton(sp, 2, [4], xi=[0.3]).to_dict()
    assert set(d) == {"u", "v", "xi", "nodes"}


# -- discrete skeletons ------------------------------------------------------

def test_whole_tree_skeleton_has_zero_radius():
    comp = sample_largest_component(GnpParams(2000, 1.0, seed=1))
    tree, pts = decompose_component(comp)
    xi = leaf_xi(comp, tree, dfs_scan(tree))
    sk = build_discrete_skeleton(comp, len(pts) + xi.size, xi)
    assert sk.mask.all()
    assert projection_radius(sk) == 0
    assert sk.edge_count == comp.edge_count


def test_star_single_ray_radius_one():
    comp = star_component(5)
    sk = build_discrete_skeleton(comp, 1, [0.15])
    assert sk.u.tolist() == [1]
    assert sk.nodes.tolist() == [0, 1]
    assert projection_radius(sk) == 1


@pytest.mark.parametrize("seed", range(8))
def test_radius_matches_multi_source_bfs(seed):
    comp = sample_largest_component(GnpParams(5000, 1.0, seed=seed))
    xi = np.random.default_rng(seed).random(60)
    for extra in (1, 5, 20):
        sk = build_discrete_skeleton(comp, comp.surplus + extra, xi)
        dist = multi_source_bfs(comp, sk.nodes)
        assert projection_radius(sk) == dist.max()
        # each vertex's projection realises its distance to the skeleton
        far = np.argsort(dist)[-5:]
        for v in far:
            assert bfs_distances(comp, int(sk.proj[v]))[v] == dist[v]


@pytest.mark.parametrize("seed", range(5))
def test_preimages_connected_and_disjoint(seed):
    comp = sample_largest_component(GnpParams(3000, 1.0, seed=seed))
    xi = np.random.default_rng(seed).random(10)
    sk = build_discrete_skeleton(comp, comp.surplus + 3, xi)
    for x in sk.nodes:
        pre = np.flatnonzero(sk.proj == x)
        assert x in pre
        assert np.intersect1d(pre, sk.nodes).tolist() == [x]
        inside = np.zeros(comp.size, dtype=bool)
        inside[pre] = True
        seen, todo = {int(x)}, [int(x)]
        while todo:
            v = todo.pop()
            for w in comp.neighbors(v):
                if inside[w] and int(w) not in seen:
                    seen.add(int(w))
                    todo.append(int(w))
        assert len(seen) == pre.size


@pytest.mark.parametrize("seed", range(5))
def test_discrete_skeleton_structure(seed):
    comp = sample_largest_component(GnpParams(5000, 1.0, seed=seed))
    xi = np.random.default_rng(seed).random(40)
    prev = None
    for extra in (1, 2, 5, 20):
        sk = build_discrete_skeleton(comp, comp.surplus + extra, xi)
        assert sk.k == sk.J + extra and sk.J == comp.surplus
        assert sk.edge_count == sk.nodes.size - 1 + sk.J
        assert sk.measure().total_mass == comp.size
        if prev is not None:
            assert np.all(sk.mask[prev.mask])  # nested in k
        prev = sk
    tree, pts = decompose_component(comp)
    glue = surplus_edges(tree, pts)
    lab = comp.vertices
    sub_edges = {tuple(sorted(e)) for e in sk.sub.label_edges().tolist()}
    for a, b in glue:
        assert tuple(sorted((lab[a], lab[b]))) in sub_edges
    with pytest.raises(ValueError):
        build_discrete_skeleton(comp, comp.surplus, xi)
    assert set(sk.to_dict()) == {"u", "v", "xi", "vertices", "edge_count"}


# -- hat tree ---------------------------------------------------------------

@pytest.mark.parametrize("seed", range(12))
def test_hat_tree(seed):
    comp = sample_largest_component(GnpParams(10_000, 1.0, seed=seed))
    xi = np.random.default_rng(seed).random(30)
    for extra in (1, 5, 20):
        sk = build_discrete_skeleton(comp, comp.surplus + extra, xi)
        h = hat_tree(sk)
        want = {tuple(sorted(e)) for e in sk.nodes[sk.sub.local_edges()].tolist()}
        got = {tuple(e) for e in h.fused_edges().tolist()}
        assert got == want
        if not h.flags["degenerate"]:
            assert h.is_tree
            assert h.edges.shape[0] == sk.edge_count


def test_hat_tree_without_surplus_is_the_skeleton():
    comp = star_component(4)
    sk = build_discrete_skeleton(comp, 2, [0.15, 0.9])
    h = hat_tree(sk)
    assert h.is_tree and h.pairs.shape == (0, 2)
    assert {tuple(e) for e in h.edges.tolist()} == {(0, 1), (0, 4)}


def test_hat_tree_triangle():
    from conftest import make_component
    comp = make_component([(1, 2), (2, 3), (1, 3)])
    sk = build_discrete_skeleton(comp, 2, [0.1])
    h = hat_tree(sk)
    # u_1 = 1, v_1 = 2, w_1 = 0, new vertex 3
    assert h.pairs.tolist() == [[0, 3]]
    assert {tuple(e) for e in h.edges.tolist()} == {(0, 1), (1, 2), (2, 3)}
    assert h.is_tree
    assert {tuple(e) for e in h.fused_edges().tolist()} == {(0, 1), (1, 2), (0, 2)}
