"""Brownian motion with parabolic drift, its reflected excursions, and gluing.

Paths live on a uniform grid.  Between grid points they are read by linear
interpolation, which makes the tree distance of a sampled excursion exact for
the piecewise-linear function it represents.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .seeding import make_rng

ZERO_TOL = 1e-12


def simulate_parabolic_bm(lam: float, horizon: float, dt: float, seed) -> np.ndarray:
    """Grid samples of ``B_t + lam*t - t**2/2`` on ``[0, horizon]``.

    Each increment is Gaussian with the exact mean of the drift over its
    step, ``(lam - t - dt/2) * dt``, so no bias accumulates in the drift.
    """
    if not dt > 0 or not horizon > 0:
        raise ValueError("dt and horizon must be positive")
    steps = int(round(horizon / dt))
    rng = make_rng(seed)
    t = np.arange(steps) * dt
    inc = np.sqrt(dt) * rng.standard_normal(steps) + (lam - t - 0.5 * dt) * dt
    out = np.empty(steps + 1)
    out[0] = 0.0
    np.cumsum(inc, out=out[1:])
    return out


@dataclass
class ExcursionPath:
    """Nonnegative grid function on ``[0, sigma]``; zero at both ends unless truncated."""

    dt: float
    values: np.ndarray
    truncated: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] < 2:
            raise ValueError("an excursion needs at least two grid points")
        if np.any(self.values < 0):
            raise ValueError("excursion values must be nonnegative")

    @property
    def sigma(self) -> float:
        return (self.values.shape[0] - 1) * self.dt

    @property
    def area(self) -> float:
        v = self.values
        return float(self.dt * (v.sum() - 0.5 * (v[0] + v[-1])))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.shape[0]) * self.dt

    def _check(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < -1e-12) or np.any(s > self.sigma + 1e-12):
            raise ValueError(f"time outside [0, {self.sigma}]")
        return np.clip(s, 0.0, self.sigma)

    def value(self, s):
        s = self._check(s)
        return np.interp(s, self.times, self.values)

    def inf_between(self, s: float, t: float) -> float:
        s, t = sorted((float(self._check(s)), float(self._check(t))))
        lo = int(np.floor(s / self.dt)) + 1
        hi = int(np.ceil(t / self.dt))
        m = min(float(self.value(s)), float(self.value(t)))
        if hi > lo:
            m = min(m, float(self.values[lo:hi].min()))
        return m

    def tree_distance(self, s: float, t: float) -> float:
        return tree_distance(self, s, t)

    def glue_time(self, t: float, x: float) -> float:
        """Last time ``s <= t`` with ``f(s) = x``: the point at height x below t."""
        ft = float(self.value(t))
        if not 0 <= x <= ft + 1e-12:
            raise ValueError("height above the excursion")
        i = int(np.floor(t / self.dt))
        if self.values[min(i, self.values.shape[0] - 1)] <= x:
            # x is reached on the partial step [i*dt, t]
            f0 = self.values[i]
            return i * self.dt + (t - i * self.dt) * ((x - f0) / (ft - f0) if ft > f0 else 1.0)
        below = np.flatnonzero(self.values[: i + 1] <= x)
        j = int(below[-1])
        f0, f1 = self.values[j], self.values[j + 1]
        return (j + (x - f0) / (f1 - f0)) * self.dt

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "value"])
            for t, v in zip(self.times.tolist(), self.values.tolist()):
                w.writerow([t, v])


def tree_distance(f: ExcursionPath, s: float, t: float) -> float:
    """``f(s) + f(t) - 2 inf f`` on the interval between s and t."""
    if s == t:
        f._check(s)
        return 0.0
    d = float(f.value(s)) + float(f.value(t)) - 2.0 * f.inf_between(s, t)
    return max(d, 0.0)


@dataclass
class ReflectedPathDecomposition:
    dt: float
    reflected: np.ndarray
    slices: list  # (start, end) grid indices, inclusive, longest first
    truncated: bool = False

    @property
    def lengths(self) -> np.ndarray:
        return np.array([(b - a) * self.dt for a, b in self.slices])

    def excursion(self, i: int = 0) -> ExcursionPath:
        a, b = self.slices[i]
        vals = self.reflected[a:b + 1].copy()
        vals[0] = 0.0
        trunc = self.truncated and i == 0
        if not trunc:
            vals[-1] = 0.0
        return ExcursionPath(self.dt, np.maximum(vals, 0.0), truncated=trunc)


def reflect_and_decompose(path: np.ndarray, dt: float) -> ReflectedPathDecomposition:
    path = np.asarray(path, dtype=float)
    if path.shape[0] == 0 or path[0] != 0:
        raise ValueError("path must start at 0")
    refl = path - np.minimum.accumulate(path)
    zeros = np.flatnonzero(refl <= ZERO_TOL)
    starts, ends = zeros[:-1], zeros[1:]
    keep = ends - starts >= 2
    slices = list(zip(starts[keep].tolist(), ends[keep].tolist()))
    last = int(zeros[-1])
    tail = None
    if last < path.shape[0] - 1:
        tail = (last, path.shape[0] - 1)
        slices.append(tail)
    # stable sort keeps earlier excursions first among equal lengths
    slices.sort(key=lambda ab: -(ab[1] - ab[0]))
    truncated = bool(slices) and slices[0] == tail
    return ReflectedPathDecomposition(dt, refl, slices, truncated)


def longest_excursion(lam: float, horizon: float, dt: float, seed):
    """Sample ``(Z_1, excursion)``; the excursion carries the truncation flag."""
    dec = reflect_and_decompose(simulate_parabolic_bm(lam, horizon, dt, seed), dt)
    if not dec.slices:
        raise RuntimeError("no excursion on the simulated horizon")
    exc = dec.excursion(0)
    return exc.sigma, exc


@dataclass
class GluePointList:
    pairs: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=float).reshape(-1, 2)

    def __len__(self) -> int:
        return int(self.pairs.shape[0])

    def to_json(self) -> str:
        return json.dumps({"pairs": self.pairs.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "GluePointList":
        return cls(np.asarray(json.loads(text)["pairs"], dtype=float))


def poisson_glue(f: ExcursionPath, seed) -> GluePointList:
    """Points of a unit-rate Poisson process lying under the graph of f, sorted by time."""
    area = f.area
    if area <= 0:
        return GluePointList()
    rng = make_rng(seed)
    count = int(rng.poisson(area))
    top = float(f.values.max())
    got = []
    need = count
    while need > 0:
        batch = max(16, int(2.2 * need * f.sigma * top / area))
        t = rng.uniform(0.0, f.sigma, batch)
        x = rng.uniform(0.0, top, batch)
        ok = (x > 0) & (x <= f.value(t))
        pts = np.column_stack([t[ok], x[ok]])[:need]
        got.append(pts)
        need -= pts.shape[0]
    pairs = np.concatenate(got) if got else np.empty((0, 2))
    return GluePointList(pairs[np.argsort(pairs[:, 0], kind="stable")])


def write_path_csv(path, values: np.ndarray, dt: float) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "value"])
        for i, v in enumerate(np.asarray(values).tolist()):
            w.writerow([i * dt, v])


# -- finite subtrees of the excursion tree -----------------------------------

def excursion_skeleton(f: ExcursionPath, glue: GluePointList, xi, k: int, scale: float = 2.0):
    """Glued metric graph spanned by the root and k marked leaves of the tree of f.

    Leaves ``u_1..u_J`` sit at the glue times, the remaining ``k - J`` at times
    ``sigma * xi``.  Each glue target ``v_i`` is the point at height ``x_i`` on
    the root path of ``u_i``.  Lengths are multiplied by ``scale``.

    Returns ``(space, info)`` where ``info`` holds node heights and the node
    ids of the u's and v's.
    """
    from .metric_glue import GluedMetricGraph

    J = len(glue)
    if k <= J:
        raise ValueError(f"k = {k} must exceed the number of glue points J = {J}")
    xi = np.asarray(xi, dtype=float)[: k - J]
    if xi.shape[0] < k - J:
        raise ValueError("not enough leaf variates")
    times = np.concatenate([glue.pairs[:, 0], f.sigma * xi])
    heights = [0.0]
    parent = [-1]
    order = np.argsort(times, kind="stable")
    leaf_node = np.empty(k, dtype=np.int64)
    stack = [0]
    prev_t = 0.0
    for idx in order:
        t = float(times[idx])
        h = float(f.value(t))
        b = f.inf_between(prev_t, t)
        last = -1
        while heights[stack[-1]] > b:
            last = stack.pop()
        if heights[stack[-1]] < b:
            node = len(heights)
            heights.append(b)
            parent.append(stack[-1])
            if last >= 0:
                parent[last] = node
            stack.append(node)
        if h > heights[stack[-1]]:
            node = len(heights)
            heights.append(h)
            parent.append(stack[-1])
            stack.append(node)
        leaf_node[idx] = stack[-1]
        prev_t = t
    v_node = np.empty(J, dtype=np.int64)
    for i in range(J):
        x = float(glue.pairs[i, 1])
        c = int(leaf_node[i])
        while heights[c] > x and parent[c] >= 0 and heights[parent[c]] >= x:
            c = parent[c]
        if heights[c] > x:
            node = len(heights)
            heights.append(x)
            parent.append(parent[c])
            parent[c] = node
            c = node
        v_node[i] = c
    heights = np.asarray(heights)
    parent = np.asarray(parent, dtype=np.int64)
    kids = np.flatnonzero(parent >= 0)
    segs = [(int(parent[c]), int(c), scale * float(heights[c] - heights[parent[c]])) for c in kids]
    pairs = [(int(leaf_node[i]), int(v_node[i])) for i in range(J) if leaf_node[i] != v_node[i]]
    space = GluedMetricGraph(len(heights), segs, pairs, root=0)
    info = {"heights": heights, "parent": parent, "u": leaf_node, "v": v_node, "times": times, "xi": xi}
    return space, info
