"""Acceptance criteria C1-C9.

Each test prints one PASS/FAIL line (collected into the terminal summary by
conftest) and then asserts.  Tolerances are pinned here; nothing is tuned per
run.  Run alone with ``pytest tests/test_acceptance.py -v``.
"""
import functools
import itertools
import math
import time

import numpy as np
import pytest
from scipy import stats as sstats

import conftest
from critwalk.dfs_encoding import (
    OrderedTree, SurplusPointSet, assemble_component, decompose_component, dfs_scan, dfs_to_contour_time,
    lattice_points,
)
from critwalk.graphgen import Component, GnpParams, component_labels, sample_gnp, sample_largest_component
from critwalk.harness.config import ExperimentConfig
from critwalk.harness.experiments import (
    collect_samples, hat_tree_check, random_glued_tree, random_point, run_displacement_exponent,
    run_resistance_sweep, run_spectral_dimension, run_surplus_compare, run_time_change_consistency,
    run_z1_distribution,
)
from critwalk.metric_glue import build_discrete_skeleton
from critwalk.resistance import (
    Network, circle_resistance, cycle_network, fused_network, resistance_matrix, trace_network,
)
from critwalk.metric_glue import GluedMetricGraph
from critwalk.walk_engine import (
    compute_local_times, occupation_tail_experiment, project_walk, simulate_srw, star_exit_experiment,
    visit_counts, visit_moment_experiment,
)

pytestmark = pytest.mark.slow

# pinned tolerances
C1_MAX_SECONDS = 60.0
C2_MAX_ERROR = 1e-3
C3_MAX_SECONDS = 300.0
C3_TRACE_RTOL = 1e-9
C4_BAND = (-0.77, -0.57)
C5_BAND = (0.28, 0.38)
C5_CROSS_N = 0.10
C6_KS_MAX = 0.1
C6_TV_MAX = 0.1
C8_CHI2_P = 0.01
C8_SE = 3.0


def report(cid, ok, detail):
    line = f"{cid} {'PASS' if ok else 'FAIL'}  {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# -- C1 ------------------------------------------------------------------------

def test_c1_exact_inequalities():
    t = time.perf_counter()
    rep = run_resistance_sweep(ExperimentConfig(seed=2024), graphs=500, glued=100, pairs=50)
    secs = time.perf_counter() - t
    r = rep["results"]
    ok = (r["lower_bound_violations"] == 0 and r["glued_violations"] == 0 and secs < C1_MAX_SECONDS)
    report("C1", ok, f"lower-bound violations {r['lower_bound_violations']}/{r['lower_bound_pairs']}, "
                     f"glued violations {r['glued_violations']}/{r['glued_pairs']}, {secs:.1f}s (< {C1_MAX_SECONDS:.0f}s)")


# -- C2 ------------------------------------------------------------------------

def test_c2_circle_formula():
    N, r = 10_000, 2.0
    # the cycle as a fused network: a segment of length r with its ends glued
    space = GluedMetricGraph(2, [(0, 1, r)], [(0, 1)])
    offsets = [0.0002, 0.0274, 0.5, 1.0, 1.5554, 1.9998]
    net, ids = fused_network(space, [(0, o) for o in offsets], mesh=r / N)
    base = fused_network(space, [0], mesh=r / N)[1][0]
    Rf = resistance_matrix(net, [base] + ids)[0, 1:]
    err_fused = max(abs(Rf[i] - circle_resistance(r, 0.0, o)) for i, o in enumerate(offsets))
    cyc = cycle_network(N, r)
    targets = [1, 137, 2500, 5000, 7777]
    Rc = resistance_matrix(cyc, [0] + targets)[0, 1:]
    err_cycle = max(abs(Rc[i] - circle_resistance(r, 0.0, k * r / N)) for i, k in enumerate(targets))
    ok = net.n >= N and err_fused < C2_MAX_ERROR and err_cycle < C2_MAX_ERROR
    report("C2", ok, f"max error fused {err_fused:.2e}, cycle {err_cycle:.2e} on {net.n}-node networks (< {C2_MAX_ERROR})")


# -- C3 ------------------------------------------------------------------------

def chain_distance(space, x, y):
    td = functools.lru_cache(maxsize=None)(lambda p, q: space.tree_distance(p, q))
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


def edge_set(comp):
    return {tuple(e) for e in comp.label_edges().tolist()}


def round_trip_ok(comp):
    tree, pts = decompose_component(comp)
    return edge_set(assemble_component(tree, pts)) == edge_set(comp) and len(pts) == comp.surplus


def test_c3_oracle_equivalences():
    t = time.perf_counter()
    rng = np.random.default_rng(31)
    # quotient distance vs chain enumeration
    q_bad = q_total = 0
    for _ in range(150):
        sp = random_glued_tree(rng, max_nodes=30, max_glue=3)
        for _ in range(6):
            x, y = random_point(rng, sp), random_point(rng, sp)
            q_total += 1
            q_bad += abs(sp.quotient_distance(x, y) - chain_distance(sp, x, y)) > 1e-9
    # round trip: every connected graph on <= 6 vertices
    ex_bad = ex_total = 0
    for n in range(2, 7):
        allpairs = list(itertools.combinations(range(1, n + 1), 2))
        for mask in range(1, 1 << len(allpairs)):
            e = [allpairs[i] for i in range(len(allpairs)) if mask >> i & 1]
            arr = np.array(e)
            if np.unique(component_labels(arr - 1, n)).size != 1:
                continue
            comp = Component.from_local_edges(np.arange(1, n + 1), arr - 1)
            ex_total += 1
            ex_bad += not round_trip_ok(comp)
    # every component with <= 12 vertices of sampled G(n, p), n <= 12
    s_bad = s_total = 0
    for seed in range(3000):
        n = 2 + seed % 11
        p = 0.15 + 0.7 * ((seed * 7919) % 100) / 100
        e = sample_gnp(GnpParams.with_p(n, p, seed=seed))
        lab = component_labels(e - 1, n)
        for c in np.unique(lab):
            members = np.flatnonzero(lab == c)
            if members.size < 2:
                continue
            keep = e[lab[e[:, 0] - 1] == c]
            comp = Component.from_label_edges(keep, vertices=members + 1)
            s_total += 1
            s_bad += not round_trip_ok(comp)
    # 10^4 random encoded pairs
    r_bad = 0
    for i in range(10_000):
        n = int(rng.integers(1, 60))
        parent = np.array([-1] + [int(rng.integers(0, v)) for v in range(1, n)])
        tree = OrderedTree(parent)
        lp = lattice_points(dfs_scan(tree))
        pts = SurplusPointSet(lp[rng.random(lp.shape[0]) < rng.uniform(0, 0.3)])
        tree2, pts2 = decompose_component(assemble_component(tree, pts))
        r_bad += not (np.array_equal(tree2.parent, tree.parent) and np.array_equal(pts2.points, pts.points))
    # trace preserves pairwise resistances
    t_err = 0.0
    for _ in range(200):
        nodes = int(rng.integers(4, 15))
        edges = [(v, int(rng.integers(0, v)), float(rng.uniform(0.1, 3))) for v in range(1, nodes)]
        edges += [(int(a), int(b), float(rng.uniform(0.1, 3))) for a, b in rng.integers(0, nodes, (nodes, 2))]
        net = Network(range(nodes), edges)
        keep = sorted(rng.choice(nodes, int(rng.integers(2, nodes)), replace=False).tolist())
        before = resistance_matrix(net, keep)
        after = resistance_matrix(trace_network(net, keep), keep)
        t_err = max(t_err, float(np.max(np.abs(after - before) / np.maximum(before, 1e-300))))
    secs = time.perf_counter() - t
    ok = q_bad == 0 and ex_bad == 0 and s_bad == 0 and r_bad == 0 and t_err < C3_TRACE_RTOL and secs < C3_MAX_SECONDS
    report("C3", ok, f"quotient {q_bad}/{q_total} mismatches; round trip exhaustive {ex_bad}/{ex_total}, "
                     f"sampled {s_bad}/{s_total}, random {r_bad}/10000; trace rel err {t_err:.1e}; {secs:.0f}s")


# -- C4 ------------------------------------------------------------------------

def test_c4_spectral_dimension():
    cfg = ExperimentConfig(n=[100_000], replicas=20, seed=2024)
    rep = run_spectral_dimension(cfg)
    r = rep["results"]["per_n"]["100000"]
    s = r["pooled_slope"]
    ok = C4_BAND[0] <= s <= C4_BAND[1] and rep["hard_ok"]
    report("C4", ok, f"pooled slope {s:.3f} +- {r['slope_se']:.3f} over m in {r['window']}, "
                     f"band {list(C4_BAND)} (target -2/3)")


# -- C5 ------------------------------------------------------------------------

def test_c5_displacement():
    cfg = ExperimentConfig(n=[10_000, 100_000], replicas=100, walks=50, seed=2024)
    res = run_displacement_exponent(cfg)["results"]
    slope = res["per_n"]["100000"]["slope"]
    rel = res["cross_n_relative_difference"]
    ok = C5_BAND[0] <= slope <= C5_BAND[1] and rel < C5_CROSS_N
    report("C5", ok, f"slope {slope:.3f} in {list(C5_BAND)} (target 1/3); cross-n relative difference "
                     f"{rel:.3f} (< {C5_CROSS_N})")


# -- C6 ------------------------------------------------------------------------

def test_c6_distributional_convergence():
    cfg = ExperimentConfig(n=[100_000], replicas=2000, seed=2024, dt=1e-4, horizon=10.0)
    samples = collect_samples(cfg)
    z1 = run_z1_distribution(cfg, samples)["results"]
    sp = run_surplus_compare(cfg, samples)["results"]
    ks, tv = z1["ks_at_largest_n"], sp["tv_at_largest_n"]
    ok = ks < C6_KS_MAX and tv < C6_TV_MAX
    report("C6", ok, f"KS(Z1) {ks:.3f} (< {C6_KS_MAX}), TV(J) {tv:.3f} (< {C6_TV_MAX}); 2000 replicas per side, "
                     f"{z1['truncated_excluded']} truncated continuum replicas excluded")


# -- C7 ------------------------------------------------------------------------

def test_c7_time_change_consistency():
    cfg = ExperimentConfig(n=[100_000], replicas=400, k=[1, 5, 20], eps=0.05, t0=0.2, seed=2024)
    rep = run_time_change_consistency(cfg)
    r = rep["results"]["per_n"]["100000"]
    ex = r["exceedance"]
    ok = r["nonincreasing_in_k"] and rep["hard_ok"]
    report("C7", ok, f"exceedance P(sup > 0.05) at k = J+1, J+5, J+20: "
                     f"{', '.join(f'{v:.3f}' for v in ex)} (nonincreasing)")


# -- C8 ------------------------------------------------------------------------

def test_c8_exact_validators():
    parts, ok = [], True
    for D in (3, 5):
        res = star_exit_experiment(D, 10_000, seed=80 + D)
        counts = np.bincount(res["exit_leaf"][res["exited"]], minlength=D)
        pval = sstats.chisquare(counts).pvalue
        t = res["exit_time"][res["exited"]]
        z = abs(t.mean() - 1.0) / (t.std(ddof=1) / math.sqrt(t.size))
        ok &= bool(res["exited"].all()) and pval > C8_CHI2_P and z < C8_SE
        parts.append(f"D={D}: chi2 p {pval:.2f}, mean exit {t.mean():.3f} ({z:.1f} se)")
    # eta on random graphs: mean zero within 3 standard errors
    worst = 0.0
    rng = np.random.default_rng(88)
    for g in range(20):
        comp = sample_largest_component(GnpParams(400, 1.0, seed=800 + g))
        x, y = (int(v) for v in rng.choice(comp.size, 2, replace=False))
        res = visit_moment_experiment(comp, x, y, 4000, seed=900 + g, kmax=1)
        worst = max(worst, abs(res["estimate"][0]) / res["stderr"][0])
    ok &= worst < C8_SE
    parts.append(f"eta mean worst {worst:.2f} se over 20 graphs")
    # triangle: geometric law of visits matched exactly
    tri = Component.from_label_edges(np.array([(1, 2), (2, 3), (1, 3)]))
    n = visit_counts(tri, 0, 1, 40_000, seed=7)
    a, q = 1 - 0.25, 1 / (2 * 2 / 3)
    law = np.array([0.25] + [a * (1 - q) ** (j - 1) * q for j in range(1, 8)])
    law = np.append(law, 1 - law.sum())
    obs = np.bincount(np.minimum(n, 8), minlength=9)
    pl = sstats.chisquare(obs, law * n.size).pvalue
    ok &= pl > C8_CHI2_P
    parts.append(f"triangle law chi2 p {pl:.2f}")
    rates = [occupation_tail_experiment(10, p, 4.0, np.arange(0.5, 6.0, 0.5), 20_000, seed=60)["rate"]
             for p in (0.25, 0.5, 1.0)]
    ok &= bool(np.all(np.diff(rates) > 0))
    parts.append("tail rates " + "/".join(f"{r:.3f}" for r in rates))
    report("C8", ok, "; ".join(parts))


# -- C9 ------------------------------------------------------------------------

def test_c9_structural_identities():
    xi = ExperimentConfig(seed=2024).xi()
    bad = {"reconstruction": 0, "local_time": 0, "hat_tree": 0, "contour": 0}
    checked = 0
    for seed in range(20):
        comp = sample_largest_component(GnpParams(10_000, 0.0, seed=seed))
        tree, pts = enc = decompose_component(comp)
        rec = dfs_scan(tree)
        K = np.array([dfs_to_contour_time(rec, m) for m in range(rec.size)])
        bad["contour"] += not np.array_equal(rec.contour[K], rec.height)
        walk = simulate_srw(comp, 0, 20_000, seed=seed)
        for o in (1, 5, 20):
            sk = build_discrete_skeleton(comp, len(pts) + o, xi, enc)
            pw = project_walk(walk, sk)
            bad["reconstruction"] += not np.array_equal(pw.reconstruct(), pw.projected)
            lt = compute_local_times(pw.jumps, sk)
            m = len(pw.jumps) - 1
            bad["local_time"] += abs(float((sk.sub.degrees / 2.0 * lt.at(m)).sum()) - (m + 1)) > 1e-9
            checked += 1
        bad["hat_tree"] += not hat_tree_check(comp, (1, 5, 20), xi)["fused_equals_skeleton"]
    ok = not any(bad.values())
    report("C9", ok, f"violations {bad} over 20 components / {checked} skeletons")
