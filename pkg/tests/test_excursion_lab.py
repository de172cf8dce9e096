import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from critwalk.excursion_lab import (
    ExcursionPath, GluePointList, excursion_skeleton, longest_excursion, poisson_glue,
    reflect_and_decompose, simulate_parabolic_bm, tree_distance, write_path_csv,
)


def tent(dt=0.05):
    t = np.arange(int(round(1 / dt)) + 1) * dt
    return ExcursionPath(dt, np.minimum(t, 1 - t))


def random_excursion(seed, n=200):
    rng = np.random.default_rng(seed)
    v = np.abs(np.cumsum(rng.standard_normal(n)))
    v = np.concatenate([[0.0], v, [0.0]])
    return ExcursionPath(0.01, v)


# -- parabolic drift path ------------------------------------------------------

def test_path_starts_at_zero_and_is_seeded():
    a = simulate_parabolic_bm(0.0, 2.0, 0.01, 5)
    assert a[0] == 0.0 and a.shape == (201,)
    assert np.array_equal(a, simulate_parabolic_bm(0.0, 2.0, 0.01, 5))
    assert not np.array_equal(a, simulate_parabolic_bm(0.0, 2.0, 0.01, 6))
    with pytest.raises(ValueError):
        simulate_parabolic_bm(0.0, 1.0, 0.0, 1)


@pytest.mark.parametrize("lam", [0.0, 1.5])
def test_marginal_at_one(lam):
    vals = np.array([simulate_parabolic_bm(lam, 1.0, 0.01, s)[-1] for s in range(20_000)])
    mean = lam - 0.5
    se = 1 / math.sqrt(vals.size)
    assert abs(vals.mean() - mean) < 4 * se
    assert abs(vals.var() - 1.0) < 0.05


# -- reflection and excursions -------------------------------------------------

def test_two_bump_decomposition():
    # bumps of length 0.3 and 0.5 separated by zeros
    p = np.array([0, 1, 1, 0, 1, 1, 1, 1, 0], dtype=float)
    dec = reflect_and_decompose(p, 0.1)
    assert dec.lengths[:2] == pytest.approx([0.5, 0.3])
    assert not dec.truncated
    assert dec.excursion(0).sigma == pytest.approx(0.5)


def test_monotone_path_has_no_excursion():
    dec = reflect_and_decompose(-np.arange(10.0), 0.1)
    assert dec.slices == []
    assert np.all(dec.reflected == 0)


def test_tail_excursion_is_flagged():
    p = np.array([0, -1, 0, 1, 2, 3, 4], dtype=float)
    dec = reflect_and_decompose(p, 1.0)
    assert dec.truncated and dec.slices[0] == (1, 6)
    assert dec.excursion(0).truncated


def test_reflection_identity():
    path = simulate_parabolic_bm(0.0, 5.0, 1e-3, 1)
    dec = reflect_and_decompose(path, 1e-3)
    assert np.allclose(dec.reflected, path - np.minimum.accumulate(path))
    assert np.all(dec.reflected >= 0)
    lengths = dec.lengths
    assert np.all(np.diff(lengths) <= 1e-12)
    assert lengths.sum() <= 5.0 + 1e-9


def test_path_must_start_at_zero():
    with pytest.raises(ValueError):
        reflect_and_decompose(np.array([1.0, 0.0]), 0.1)


def test_longest_excursion_returns_longest():
    z, exc = longest_excursion(0.0, 10.0, 1e-3, 3)
    assert z == pytest.approx(exc.sigma)
    assert exc.values[0] == 0 and np.all(exc.values >= 0)


# -- tree distance -----------------------------------------------------------

def test_tent_tree_distance_examples():
    f = tent()
    assert tree_distance(f, 0.1, 0.5) == pytest.approx(0.4)
    assert tree_distance(f, 0.25, 0.75) == pytest.approx(0.0, abs=1e-12)
    assert f.tree_distance(0.3, 0.3) == 0.0
    with pytest.raises(ValueError):
        tree_distance(f, 0.1, 1.5)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.floats(0, 2.01), min_size=4, max_size=4))
def test_four_point_condition(seed, ts):
    f = random_excursion(seed)
    a, b, c, d = ts
    sums = sorted([
        tree_distance(f, a, b) + tree_distance(f, c, d),
        tree_distance(f, a, c) + tree_distance(f, b, d),
        tree_distance(f, a, d) + tree_distance(f, b, c),
    ])
    assert sums[2] <= sums[1] + 1e-9
    assert tree_distance(f, a, b) == pytest.approx(tree_distance(f, b, a))
    assert tree_distance(f, a, c) <= tree_distance(f, a, b) + tree_distance(f, b, c) + 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 2.01), st.floats(0, 1))
def test_glue_time_is_on_root_path(seed, t, frac):
    f = random_excursion(seed)
    x = frac * float(f.value(t))
    s = f.glue_time(t, x)
    assert s <= t + 1e-12
    assert float(f.value(s)) == pytest.approx(x, abs=1e-9)
    # s is an ancestor of t at height x
    assert tree_distance(f, s, t) == pytest.approx(float(f.value(t)) - x, abs=1e-9)


# -- glue points -------------------------------------------------------------

def test_zero_area_gives_no_points():
    f = ExcursionPath(0.1, np.zeros(5))
    assert len(poisson_glue(f, 1)) == 0


def test_glue_points_under_graph_and_sorted():
    f = random_excursion(4)
    for s in range(50):
        g = poisson_glue(f, s)
        if len(g):
            t, x = g.pairs[:, 0], g.pairs[:, 1]
            assert np.all(np.diff(t) >= 0)
            assert np.all((x > 0) & (x <= f.value(t) + 1e-12))


def test_glue_count_is_poisson_area():
    f = tent(0.01)  # area 1/4
    counts = np.array([len(poisson_glue(f, s)) for s in range(20_000)])
    assert abs(counts.mean() - f.area) < 4 * math.sqrt(f.area / counts.size)
    assert counts.var() == pytest.approx(f.area, rel=0.05)
    # spatial law: uniform under the graph, so E[t] = 1/2
    pts = np.concatenate([poisson_glue(f, s).pairs for s in range(3000)])
    assert abs(pts[:, 0].mean() - 0.5) < 0.02


def test_glue_json_round_trip():
    g = poisson_glue(random_excursion(1), 2)
    back = GluePointList.from_json(g.to_json())
    assert np.array_equal(back.pairs, g.pairs)
    assert set(json.loads(g.to_json())) == {"pairs"}


def test_csv_output(tmp_path):
    write_path_csv(tmp_path / "p.csv", np.array([0.0, 1.0, 0.0]), 0.5)
    assert (tmp_path / "p.csv").read_text().splitlines() == ["t,value", "0.0,0.0", "0.5,1.0", "1.0,0.0"]
    tent(0.5).to_csv(tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text().splitlines()[0] == "t,value"


# -- finite subtrees ---------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.floats(0.001, 0.999), min_size=1, max_size=6))
def test_skeleton_distances_match_tree_distance(seed, xi):
    f = random_excursion(seed)
    space, info = excursion_skeleton(f, GluePointList(), xi, len(xi))
    times = info["times"]
    u = info["u"]
    for i in range(len(xi)):
        assert space.tree_distance(0, int(u[i])) == pytest.approx(2 * float(f.value(times[i])), abs=1e-9)
        for j in range(i):
            want = 2 * tree_distance(f, times[i], times[j])
            assert space.tree_distance(int(u[i]), int(u[j])) == pytest.approx(want, abs=1e-9)


def test_skeleton_with_glue():
    f = random_excursion(7)
    g = poisson_glue(f, 11)
    assert len(g) > 0
    xi = np.random.default_rng(0).random(3)
    space, info = excursion_skeleton(f, g, xi, len(g) + 3)
    assert space.J <= len(g)
    for i in range(len(g)):
        # v_i sits at height x_i on the root path of u_i
        assert info["heights"][info["v"][i]] == pytest.approx(g.pairs[i, 1])
        assert space.tree_distance(0, int(info["v"][i])) == pytest.approx(2 * g.pairs[i, 1])
        assert space.quotient_distance(int(info["u"][i]), int(info["v"][i])) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        excursion_skeleton(f, g, xi, len(g))
