"""Random walks on components and metric graphs, local times and time changes.

Random numbers are always drawn outside the kernels, so the numba and numpy
backends consume identical uniforms and produce identical walks.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from ._accel import dispatch, kernel, njit
from .graphgen import Component
from .seeding import make_rng

MAX_EXACT_VERTICES = 1_000_000


# -- simple random walk ------------------------------------------------------

@njit
def _walks_nb(indptr, indices, starts, u):
    steps, w = u.shape
    out = np.empty((steps + 1, w), dtype=np.int64)
    for j in range(w):
        x = starts[j]
        out[0, j] = x
        for t in range(steps):
            lo = indptr[x]
            x = indices[lo + int(u[t, j] * (indptr[x + 1] - lo))]
            out[t + 1, j] = x
    return out


def _walks_np(indptr, indices, starts, u):
    steps, w = u.shape
    out = np.empty((steps + 1, w), dtype=np.int64)
    x = np.asarray(starts, dtype=np.int64).copy()
    out[0] = x
    for t in range(steps):
        lo = indptr[x]
        x = indices[lo + (u[t] * (indptr[x + 1] - lo)).astype(np.int64)]
        out[t + 1] = x
    return out


walk_kernel = dispatch(_walks_nb, _walks_np)


@dataclass
class WalkTrace:
    vertices: np.ndarray
    seed: int

    @property
    def steps(self) -> int:
        return int(self.vertices.shape[0] - 1)

    def to_csv(self, path, labels=None) -> None:
        v = self.vertices if labels is None else np.asarray(labels)[self.vertices]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "vertex"])
            for i, x in enumerate(v.tolist()):
                w.writerow([i, x])


def simulate_walks(component: Component, starts, steps: int, seed) -> np.ndarray:
    """``(steps + 1, W)`` array of W independent walks on local indices."""
    starts = np.atleast_1d(np.asarray(starts, dtype=np.int64))
    if np.any(component.degrees[starts] == 0):
        if steps > 0:
            raise ValueError("cannot walk from an isolated vertex")
    u = make_rng(seed).random((int(steps), starts.shape[0]))
    return walk_kernel(component.indptr, component.indices, starts, u)


def simulate_srw(component: Component, start: int = 0, steps: int = 1000, seed=0) -> WalkTrace:
    """Simple random walk from local vertex ``start``."""
    if not 0 <= start < component.size:
        raise ValueError("start vertex outside the component")
    return WalkTrace(simulate_walks(component, [start], steps, seed)[:, 0], int(seed))


# -- exact heat kernel -------------------------------------------------------

@njit
def _heat_nb(indptr, indices, x, steps, lazy):
    n = indptr.shape[0] - 1
    pi = np.zeros(n)
    nxt = np.zeros(n)
    pi[x] = 1.0
    out = np.empty(steps + 1)
    out[0] = 1.0
    for t in range(steps):
        for v in range(n):
            nxt[v] = 0.0
        for v in range(n):
            if pi[v] != 0.0:
                share = pi[v] / (indptr[v + 1] - indptr[v])
                for e in range(indptr[v], indptr[v + 1]):
                    nxt[indices[e]] += share
        if lazy:
            for v in range(n):
                nxt[v] = 0.5 * (nxt[v] + pi[v])
        tmp = pi
        pi = nxt
        nxt = tmp
        out[t + 1] = pi[x]
    return out, pi


def _heat_np(indptr, indices, x, steps, lazy):
    n = indptr.shape[0] - 1
    deg = np.diff(indptr).astype(float)
    A = sparse.csr_matrix((np.ones(indices.shape[0]), indices, indptr), shape=(n, n))
    pi = np.zeros(n)
    pi[x] = 1.0
    out = np.empty(steps + 1)
    out[0] = 1.0
    for t in range(steps):
        nxt = A.T @ (pi / deg)
        pi = 0.5 * (nxt + pi) if lazy else nxt
        out[t + 1] = pi[x]
    return out, pi


heat_kernel = dispatch(_heat_nb, _heat_np)


def _guard(component: Component):
    if component.size > MAX_EXACT_VERTICES:
        raise MemoryError(f"exact heat kernel refused for {component.size} > {MAX_EXACT_VERTICES} vertices")


def return_probabilities(component: Component, x: int, m: int, lazy: bool = False) -> np.ndarray:
    """``p_t(x, x)`` for ``t = 0..m`` by repeated application of the transition operator."""
    _guard(component)
    if m < 0:
        raise ValueError("m must be nonnegative")
    if m > 0 and component.degrees[x] == 0:
        raise ValueError("isolated vertex")
    return heat_kernel(component.indptr, component.indices, int(x), int(m), bool(lazy))[0]


def return_probability(component: Component, x: int, m: int, lazy: bool = False) -> float:
    return float(return_probabilities(component, x, m, lazy)[-1])


def transition_row(component: Component, x: int, m: int, lazy: bool = False) -> np.ndarray:
    """Distribution of the walk at time m started from x."""
    _guard(component)
    return heat_kernel(component.indptr, component.indices, int(x), int(m), bool(lazy))[1]


def write_heat_kernel_csv(path, probs) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "p_m"])
        for m, p in enumerate(np.asarray(probs).tolist()):
            w.writerow([m, repr(p)])


# -- projection onto a skeleton and time changes -----------------------------

@dataclass
class ProjectedWalk:
    projected: np.ndarray  # phi(X_m), component indices
    jumps: np.ndarray  # jump chain J_l, component indices
    jump_times: np.ndarray  # A_l

    def tau(self, m):
        """``max{l : A_l <= m}``."""
        return np.searchsorted(self.jump_times, m, side="right") - 1

    def reconstruct(self, m=None) -> np.ndarray:
        m = np.arange(self.projected.shape[0]) if m is None else np.asarray(m)
        return self.jumps[self.tau(m)]


def project_walk(trace, skel) -> ProjectedWalk:
    """Project a component walk onto a skeleton and extract its jump chain.

    A jump happens at the first time the walk sits at a skeleton vertex
    different from the current one.
    """
    x = trace.vertices if isinstance(trace, WalkTrace) else np.asarray(trace)
    if x.max() >= skel.component.size:
        raise ValueError("trace does not belong to the skeleton's component")
    proj = skel.proj[x]
    t = np.flatnonzero(skel.mask[x])
    if t.shape[0] == 0 or t[0] != 0:
        # start off the skeleton: the chain starts at the projection
        t = np.concatenate([[0], t])
        vals = np.concatenate([[proj[0]], x[t[1:]]])
    else:
        vals = x[t]
    keep = np.ones(vals.shape[0], dtype=bool)
    keep[1:] = vals[1:] != vals[:-1]
    return ProjectedWalk(proj, vals[keep], t[keep])


@dataclass
class LocalTimeField:
    """Degree-normalised visit counts of a jump chain on the skeleton."""

    chain: np.ndarray  # skeleton-local indices
    degree: np.ndarray  # skeleton degrees

    def counts(self, m: int) -> np.ndarray:
        return np.bincount(self.chain[: m + 1], minlength=self.degree.shape[0])

    def at(self, m: int) -> np.ndarray:
        return 2.0 * self.counts(m) / self.degree

    def increments(self) -> np.ndarray:
        """Local-time increment ``2/deg`` picked up at each chain step."""
        return 2.0 / self.degree[self.chain]


def compute_local_times(jumps, skel) -> LocalTimeField:
    """Local times of a jump chain given in component indices."""
    local = skel.local_of[np.asarray(jumps)]
    if np.any(local < 0):
        raise ValueError("jump chain leaves the skeleton")
    return LocalTimeField(local, skel.sub.degrees.astype(float))


@dataclass
class AdditiveFunctional:
    values: np.ndarray  # A_0 .. A_M

    def inverse(self, m):
        """``max{l : A_l <= m}``."""
        return np.searchsorted(self.values, m, side="right") - 1


def additive_functional(lt: LocalTimeField, mass) -> AdditiveFunctional:
    """``A_m = sum_x L_{m-1}(x) mu(x)`` with ``A_0 = 0``."""
    mass = np.asarray(mass, dtype=float)
    if np.any(mass < 0):
        raise ValueError("negative mass")
    inc = lt.increments() * mass[lt.chain]
    vals = np.empty(inc.shape[0] + 1)
    vals[0] = 0.0
    np.cumsum(inc, out=vals[1:])
    return AdditiveFunctional(vals[:-1] if inc.shape[0] else vals)


def time_changed_walk(jumps, af: AdditiveFunctional, times) -> np.ndarray:
    """``J[tau(m)]`` for each requested time m; times past the data reuse the last state."""
    idx = af.inverse(np.asarray(times))
    return np.asarray(jumps)[np.clip(idx, 0, len(jumps) - 1)]


def expected_visits_ratio(component: Component, x: int, y: int) -> float:
    """``deg(y)/deg(x)``: mean visits to y during an excursion from x."""
    d = component.degrees
    return float(d[y] / d[x])


# -- mesh Brownian motion on glued metric graphs -----------------------------

@dataclass
class MeshNet:
    eps: float
    indptr: np.ndarray
    indices: np.ndarray
    points: list  # (segment, offset) or node id per mesh vertex
    node_vertex: np.ndarray  # mesh vertex of each original node

    @property
    def size(self) -> int:
        return int(self.indptr.shape[0] - 1)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)


def build_mesh(space, eps: float | None = None, tol: float = 0.01) -> MeshNet:
    """epsilon-net of a glued metric graph; glued nodes become one mesh vertex."""
    lens = space.seg_len
    if lens.shape[0] == 0:
        raise ValueError("space has no segments")
    base = float(lens.min()) / 20.0
    auto = eps is None
    eps = base if auto else float(eps)
    for refine in range(1, 50):
        pieces = np.maximum(1, np.round(lens / eps)).astype(np.int64)
        if np.all(np.abs(pieces * eps - lens) <= tol * lens):
            break
        if not auto:
            raise ValueError(f"mesh {eps} does not divide the segment lengths within {tol:.0%}")
        eps = base / (refine + 1)
    if eps > lens.min():
        raise ValueError("mesh too coarse relative to the shortest segment")
    cls = space.classes
    ncls = int(cls.max()) + 1
    points = [None] * ncls
    for v in range(space.n_nodes):
        if points[cls[v]] is None:
            points[cls[v]] = int(v)
    a_list, b_list = [], []
    nxt = ncls
    for s in range(lens.shape[0]):
        k = int(pieces[s])
        chain = [int(cls[space.seg_a[s]])]
        for i in range(1, k):
            points.append((s, lens[s] * i / k))
            chain.append(nxt)
            nxt += 1
        chain.append(int(cls[space.seg_b[s]]))
        a_list.extend(chain[:-1])
        b_list.extend(chain[1:])
    a = np.array(a_list + b_list, dtype=np.int64)
    b = np.array(b_list + a_list, dtype=np.int64)
    order = np.lexsort((b, a))
    a, b = a[order], b[order]
    indptr = np.zeros(nxt + 1, dtype=np.int64)
    np.add.at(indptr, a + 1, 1)
    return MeshNet(eps, np.cumsum(indptr), b, points, cls.copy())


@kernel
def _mesh_block(indptr, indices, starts, u, stop, checkpoints, record):
    w, steps = u.shape
    final = np.empty(w, dtype=np.int64)
    exit_step = np.full(w, -1, dtype=np.int64)
    at_cp = np.empty((w, checkpoints.shape[0]), dtype=np.int64)
    visits = np.zeros((w, record.shape[0]), dtype=np.int64)
    for j in range(w):
        x = starts[j]
        c = 0
        t = 0
        while True:
            while c < checkpoints.shape[0] and checkpoints[c] == t:
                at_cp[j, c] = x
                c += 1
            if stop[x]:
                exit_step[j] = t
                break
            for r in range(record.shape[0]):
                if record[r] == x:
                    visits[j, r] += 1
            if t == steps:
                break
            lo = indptr[x]
            x = indices[lo + int(u[j, t] * (indptr[x + 1] - lo))]
            t += 1
        while c < checkpoints.shape[0]:
            at_cp[j, c] = x
            c += 1
        final[j] = x
    return final, exit_step, at_cp, visits


def mesh_bm_batch(mesh: MeshNet, walkers: int, max_time: float, seed, start: int = 0,
                  stop_vertices=(), checkpoints=(), record_vertices=(), block: int = 256):
    """Many independent mesh walks with step time ``eps**2``.

    Walks stop on entering ``stop_vertices`` (checked before each step) or at
    ``max_time``.  ``visits`` counts the steps taken from each recorded vertex.
    """
    steps = int(math.ceil(max_time / mesh.eps ** 2))
    stop = np.zeros(mesh.size, dtype=np.bool_)
    stop[np.asarray(stop_vertices, dtype=np.int64)] = True
    cps = np.asarray([int(round(t / mesh.eps ** 2)) for t in checkpoints], dtype=np.int64)
    rec = np.asarray(record_vertices, dtype=np.int64)
    rng = make_rng(seed)
    parts = []
    for lo in range(0, walkers, block):
        w = min(block, walkers - lo)
        u = rng.random((w, steps))
        parts.append(_mesh_block(mesh.indptr, mesh.indices, np.full(w, start, dtype=np.int64), u, stop, cps, rec))
    final, exit_step, at_cp, visits = (np.concatenate(z) for z in zip(*parts))
    return {
        "final": final,
        "exit_time": np.where(exit_step >= 0, exit_step * mesh.eps ** 2, np.nan),
        "exited": exit_step >= 0,
        "at_checkpoints": at_cp,
        "visits": visits,
        "local_time": visits * (2.0 / mesh.degrees[rec]) * mesh.eps if rec.size else visits.astype(float),
    }


@dataclass
class MeshTrace:
    mesh: MeshNet
    vertices: np.ndarray
    times: np.ndarray
    speed_times: np.ndarray | None = None

    def local_times(self) -> np.ndarray:
        counts = np.bincount(self.vertices[:-1], minlength=self.mesh.size)
        return counts * (2.0 / self.mesh.degrees) * self.mesh.eps

    def position_at(self, t: float, speed: bool = False) -> int:
        clock = self.speed_times if speed else self.times
        i = int(np.searchsorted(clock, t, side="right") - 1)
        return int(self.vertices[max(i, 0)])


def mesh_bm(space, eps: float | None = None, horizon: float = 1.0, seed=0, start: int | None = None,
            speed=None) -> MeshTrace:
    """Mesh walk approximating Brownian motion on a glued metric graph.

    ``speed`` gives nonnegative masses per original node; the additive
    functional ``sum L(x) mu(x)`` is then returned as ``speed_times``.
    """
    mesh = build_mesh(space, eps)
    x0 = int(mesh.node_vertex[space.root if start is None else start])
    steps = int(math.ceil(horizon / mesh.eps ** 2))
    path = walk_kernel(mesh.indptr, mesh.indices, np.array([x0]), make_rng(seed).random((steps, 1)))[:, 0]
    times = np.arange(steps + 1) * mesh.eps ** 2
    spd = None
    if speed is not None:
        mu = np.zeros(mesh.size)
        np.add.at(mu, mesh.node_vertex, np.asarray(speed, dtype=float))
        if np.any(mu < 0):
            raise ValueError("negative mass")
        inc = (2.0 / mesh.degrees[path[:-1]]) * mesh.eps * mu[path[:-1]]
        spd = np.concatenate([[0.0], np.cumsum(inc)])
    return MeshTrace(mesh, path, times, spd)


def star_space(rays: int, length: float = 1.0):
    from .metric_glue import GluedMetricGraph

    return GluedMetricGraph(rays + 1, [(0, i + 1, length) for i in range(rays)], [], root=0)


def star_exit_experiment(rays: int, trials: int, seed, pieces: int = 20, checkpoints=(0.1, 0.5)):
    """Mesh walk from the star centre until it hits a leaf."""
    space = star_space(rays)
    mesh = build_mesh(space, 1.0 / pieces)
    leaves = mesh.node_vertex[1:]
    out = mesh_bm_batch(mesh, trials, max_time=30.0, seed=seed, start=int(mesh.node_vertex[0]),
                        stop_vertices=leaves, checkpoints=checkpoints, record_vertices=[int(mesh.node_vertex[0])])
    where = {int(v): i for i, v in enumerate(leaves)}
    exit_leaf = np.array([where.get(int(v), -1) for v in out["final"]])
    # distance from the centre of each mesh vertex
    dist = np.zeros(mesh.size)
    for v, p in enumerate(mesh.points):
        dist[v] = p[1] if isinstance(p, tuple) else (0.0 if p == 0 else 1.0)
    return {
        "exit_leaf": exit_leaf,
        "exit_time": out["exit_time"],
        "exited": out["exited"],
        "centre_local_time": out["local_time"][:, 0],
        "distance_at": dist[out["at_checkpoints"]],
        "checkpoints": tuple(checkpoints),
        "eps": mesh.eps,
    }


def star_abs_moment(t: float, terms: int = 400) -> float:
    """``E|B_{t ^ tau}|`` for Brownian motion from 0 stopped on leaving (-1, 1)."""
    if t <= 0:
        return 0.0  # the series converges slowly at t = 0
    k = np.arange(1, 2 * terms, 2)
    a = k * np.pi / 2.0
    lam = a ** 2 / 2.0
    sign = np.where(((k - 1) // 2) % 2 == 0, 1.0, -1.0)
    survive = float(np.sum((4.0 / (k * np.pi)) * sign * np.exp(-lam * t)))
    inside = float(np.sum(2.0 * (sign / a - 1.0 / a ** 2) * np.exp(-lam * t)))
    return inside + (1.0 - survive)


# -- small exact validators --------------------------------------------------

@kernel
def _sticky_walk(u, L, p, horizon):
    trials = u.shape[0]
    visits = np.zeros(trials, dtype=np.int64)
    top = 2 * L
    for i in range(trials):
        z = 0
        for t in range(horizon + 1):
            if z == 0:
                visits[i] += 1
            if t == horizon:
                break
            r = u[i, t]
            if z == 0:
                if r < p:
                    z = 1
            elif z == top:
                z = top - 1
            elif r < 0.5:
                z -= 1
            else:
                z += 1
    return visits


def occupation_tail_experiment(L: int, p: float, s: float, t_values, trials: int, seed):
    """Tail of visits to 0 by time ``s L^2`` of a walk on ``{0..2L}`` that leaves 0 w.p. p.

    The walk reflects at ``2L``.  Returns the tail ``P(visits >= t L)`` and the
    decay rate ``-slope`` of ``log tail`` against t (positive tails only).
    """
    if L < 2 or not 0 < p <= 1:
        raise ValueError("need L >= 2 and p in (0, 1]")
    horizon = int(math.floor(s * L * L))
    u = make_rng(seed).random((int(trials), horizon))
    visits = _sticky_walk(u, int(L), float(p), horizon)
    t_values = np.asarray(t_values, dtype=float)
    tail = np.array([(visits >= t * L).mean() for t in t_values])
    ok = (tail > 0) & (t_values > 0)
    rate = float("nan")
    if ok.sum() >= 2:
        rate = -float(np.polyfit(t_values[ok], np.log(tail[ok]), 1)[0])
    return {"t": t_values, "tail": tail, "rate": rate, "visits": visits}


@kernel
def _excursion_counts(indptr, indices, x, y, u, trials, pos, cur):
    counts = np.zeros(trials, dtype=np.int64)
    done = 0
    used = 0
    while done < trials and used < u.shape[0]:
        lo = indptr[pos]
        pos = indices[lo + int(u[used] * (indptr[pos + 1] - lo))]
        used += 1
        if pos == y:
            cur += 1
        if pos == x:
            counts[done] = cur
            cur = 0
            done += 1
    return counts[:done], pos, cur


def visit_counts(component: Component, x: int, y: int, trials: int, seed) -> np.ndarray:
    """Visits to y during each of ``trials`` excursions of the walk from x."""
    rng = make_rng(seed)
    deg = component.degrees
    # mean excursion length is 2E/deg(x)
    chunk = int(trials * max(2.0 * component.edge_count / deg[x], 2.0) * 1.2) + 1000
    got = []
    need = trials
    pos, cur = int(x), 0
    while need > 0:
        c, pos, cur = _excursion_counts(component.indptr, component.indices, int(x), int(y),
                                        rng.random(chunk), need, pos, cur)
        got.append(c)
        need -= c.shape[0]
    return np.concatenate(got)


def eta_exact_moments(deg_x: int, deg_y: int, R: float, kmax: int = 4, terms: int = 20000) -> np.ndarray:
    """Moments of ``N/deg(y) - 1/deg(x)`` under the geometric visit law."""
    a = 1.0 / (deg_x * R)
    q = 1.0 / (deg_y * R)
    j = np.arange(1, terms + 1)
    pj = a * (1 - q) ** (j - 1) * q
    vals = np.concatenate([[0.0], j / deg_y]) - 1.0 / deg_x
    probs = np.concatenate([[1 - a], pj])
    return np.array([float(np.sum(probs * vals ** k)) for k in range(1, kmax + 1)])


def visit_moment_experiment(component: Component, x: int, y: int, trials: int, seed, kmax: int = 4):
    """Monte Carlo moments of ``eta = N/deg(y) - 1/deg(x)`` with the exact values alongside."""
    from .resistance import Network, effective_resistance

    if x == y:
        raise ValueError("x and y must differ")
    net = Network.from_component(component)
    R = effective_resistance(net, x, y)
    deg = component.degrees
    n = visit_counts(component, x, y, trials, seed)
    eta = n / deg[y] - 1.0 / deg[x]
    ks = np.arange(1, kmax + 1)
    est = np.array([np.mean(eta ** k) for k in ks])
    se = np.array([np.std(eta ** k, ddof=1) / np.sqrt(eta.shape[0]) for k in ks])
    return {
        "k": ks,
        "estimate": est,
        "stderr": se,
        "exact": eta_exact_moments(int(deg[x]), int(deg[y]), R, kmax),
        "p_zero": float(np.mean(n == 0)),
        "p_zero_exact": 1.0 - 1.0 / (deg[x] * R),
        "resistance": R,
        "counts": n,
    }
