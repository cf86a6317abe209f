"""Acceptance criteria, one test (and one PASS/FAIL summary line) per criterion.

Tolerances are pinned to the build contract. Criterion 2 checks a collision
law that the two-point family does not follow; it reports FAIL and is marked
as an expected failure, with the law the family does follow checked next to
it (see the decisions ledger).
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from conftest import grid_slide, random_step, record_criterion
from turnhash import cli, exact, families, polyindex, stepfn, turning
from turnhash.polyindex import PolygonIndexConfig, Variant


def _collision_runs(fam, law, dist, query_side, pairs=20, draws=100_000, seed=0, keep=lambda d: True):
    rng = np.random.default_rng(seed)
    idx = np.arange(draws)
    devs = []
    while len(devs) < pairs:
        f, g = random_step(rng, int(rng.integers(1, 9))), random_step(rng, int(rng.integers(1, 9)))
        d = dist(f, g)
        if not keep(d):
            continue
        hf = fam.data_hash([f], idx)[0]
        hg = (fam.query_hash if query_side else fam.data_hash)([g], idx)[0]
        devs.append(abs(float(np.mean(hf == hg)) - law(d)))
    return np.array(devs)


def test_c1_h1_collision_law():
    t0 = time.perf_counter()
    fam = families.RandomPointFamily(0.0, 1.0, seed=11)
    devs = _collision_runs(fam, fam.collision_prob, stepfn.l1_distance, query_side=False)
    elapsed = time.perf_counter() - t0
    ok = devs.max() <= 0.01 and elapsed < 30
    record_criterion("C1 H1 collision law", ok, f"max |emp - (1 - L1)| = {devs.max():.4f} over 20 pairs x 1e5 draws (tol 0.01), {elapsed:.1f} s (< 30 s)")
    assert ok


@pytest.mark.xfail(strict=True, reason="the family's collision rate is 0.5 - 0.5 L2^2/(b-a)^2; see the decisions ledger")
def test_c2_h2_collision_law_as_stated():
    fam = families.AsymmetricTwoPointFamily(0.0, 1.0, seed=12)
    keep = lambda d: d <= 0.7
    stated = _collision_runs(fam, lambda d: families.h2_collision_prob_stated(d, 0, 1), stepfn.l2_distance, True, keep=keep)
    ok = stated.max() <= 0.01
    record_criterion(
        "C2 H2 collision law 0.5 - L2^2/(b-a)^2",
        ok,
        f"max |emp - stated| = {stated.max():.4f} (tol 0.01); the family follows 0.5 - 0.5 L2^2/(b-a)^2 instead",
    )
    assert ok


def test_c2_h2_collision_law_derived():
    fam = families.AsymmetricTwoPointFamily(0.0, 1.0, seed=12)
    devs = _collision_runs(fam, lambda d: families.h2_collision_prob(d, 0, 1), stepfn.l2_distance, True, keep=lambda d: d <= 0.7)
    ok = devs.max() <= 0.01
    record_criterion("C2' H2 collision law 0.5 - 0.5 L2^2/(b-a)^2", ok, f"max |emp - law| = {devs.max():.4f} over 20 pairs x 1e5 draws (tol 0.01)")
    assert ok


def test_c3_mean_reduce_sandwich():
    rng = np.random.default_rng(13)
    worst_lo, worst_hi = np.inf, np.inf
    for _ in range(10_000):
        f, g = random_step(rng, int(rng.integers(1, 9))), random_step(rng, int(rng.integers(1, 9)))
        r = exact.d1_updown(f, g).distance
        l1 = stepfn.l1_distance(stepfn.mean_reduce(f), stepfn.mean_reduce(g))
        worst_lo = min(worst_lo, l1 - r)
        worst_hi = min(worst_hi, (2 - r) * r - l1)
    f0 = stepfn.make([0, 0.9, 1], [1, 3])
    g0 = stepfn.make([0, 0.9, 1], [3, 1])
    d0 = exact.d1_updown(f0, g0).distance
    l0 = stepfn.l1_distance(stepfn.mean_reduce(f0), stepfn.mean_reduce(g0))
    ok = worst_lo >= -1e-12 and worst_hi >= -1e-12 and abs(l0 - 0.72) <= 1e-9 and abs(d0 - 0.4) <= 1e-9
    record_criterion(
        "C3 mean-reduce sandwich",
        ok,
        f"10^4 pairs, min slack lower {worst_lo:.2e}, upper {worst_hi:.2e}; witness L1 = {l0:.12f}, D1 = {d0:.12f}",
    )
    assert ok


def test_c4_d2_updown_vs_alpha_grid():
    rng = np.random.default_rng(14)
    alphas = np.arange(-1.0, 1.0 + 5e-4, 1e-3)
    worst = 0.0
    for _ in range(1000):
        f, g = random_step(rng, int(rng.integers(1, 9))), random_step(rng, int(rng.integers(1, 9)))
        w, fv, gv = stepfn.common_partition(f, g)
        # exact L2 for every alpha on the grid
        grid = np.sqrt((w[None, :] * (fv[None, :] + alphas[:, None] - gv[None, :]) ** 2).sum(axis=1)).min()
        worst = max(worst, abs(exact.d2_updown(f, g).distance - grid))
    ok = worst <= 1e-3
    record_criterion("C4 exact D2 vertical alignment", ok, f"max |d2_updown - alpha-grid min| = {worst:.2e} over 10^3 pairs (tol 1e-3)")
    assert ok


def test_c5_slide_alignment_vs_grid():
    rng = np.random.default_rng(15)
    worst = 0.0
    for i in range(200):
        f, g = random_step(rng, int(rng.integers(1, 9))), random_step(rng, int(rng.integers(1, 9)))
        for p in (1, 2):
            ref, _ = grid_slide(f, g, p, n=2000)
            worst = max(worst, abs(exact.d_slide(f, g, p).distance - ref))
    ok = worst <= 2e-3
    record_criterion("C5 slide-alignment optimality", ok, f"max |d_slide - (u, alpha) grid| = {worst:.2e} over 200 pairs, p = 1 and 2 (tol 2e-3)")
    assert ok


def test_c6_riemann_bound():
    rng = np.random.default_rng(16)
    worst_ratio = 0.0
    for _ in range(1000):
        k = int(rng.integers(1, 9))
        r, c = float(rng.uniform(0.05, 0.5)), float(rng.uniform(1.2, 4.0))
        f, g = random_step(rng, k), random_step(rng, k)
        n = families.riemann_n(r, c, k, 0.0, 1.0)
        v = stepfn.sample_vec(f, n) - stepfn.sample_vec(g, n)
        err = abs(float(v @ v) - stepfn.l2_distance(f, g) ** 2)
        worst_ratio = max(worst_ratio, err / ((math.sqrt(c) - 1) * r * r))
    ok = worst_ratio <= 1.0
    record_criterion("C6 Riemann sampling bound", ok, f"max error / (sqrt(c)-1) r^2 = {worst_ratio:.3f} over 10^3 pairs (hard bound 1)")
    assert ok


def test_c7_turning_function_bounds():
    rng = np.random.default_rng(17)
    violations = 0
    for i in range(10_000):
        m = 3 + i % 10
        f = turning.turning_function(turning.random_polygon(m, rng))
        b = turning.gon_bounds(m)
        if stepfn.minimum(f) < b.a_m - 1e-9 or stepfn.maximum(f) > b.b_m + 1e-9 or stepfn.span(f) > b.lambda_m / 2 + 1e-9:
            violations += 1
    spiral = []
    for m in (4, 6, 8):
        f = turning.turning_function(turning.make_spiral_polygon(m, 0.1))
        b = turning.gon_bounds(m)
        spiral.append(stepfn.maximum(f) >= b.b_m - 0.1 and stepfn.span(f) >= b.lambda_m / 2 - 0.1)
    ok = violations == 0 and all(spiral)
    record_criterion("C7 turning-function bounds", ok, f"{violations} violations in 10^4 random m-gons (m = 3..12); spiral tight for m = 4, 6, 8: {spiral}")
    assert ok


# -- end-to-end retrieval ------------------------------------------------------------

N_DECOYS, TRIALS = 10_000, 100


@pytest.fixture(scope="module")
def decoys():
    rng = np.random.default_rng(1000)
    return [turning.random_polygon(6, rng, id=f"decoy-{i}") for i in range(N_DECOYS)]


C8_CONFIGS = {
    "mean-reduce": PolygonIndexConfig(6, 1, 10.0, 2.5, Variant.MEAN_REDUCE, 0.1, 1),
    "step-shift": PolygonIndexConfig(6, 1, 24.9, 1.5, Variant.STEP_SHIFT, 0.1, 1),
    "p2": PolygonIndexConfig(6, 2, 1.0, 4.0, None, 0.1, 1),
}


@pytest.mark.slow
@pytest.mark.parametrize("name", list(C8_CONFIGS))
def test_c8_end_to_end_retrieval(decoys, name):
    cfg = C8_CONFIGS[name]
    rng = np.random.default_rng(2000)
    t0 = time.perf_counter()
    queries, plants = [], []
    for t in range(TRIALS):
        q = turning.random_polygon(6, rng, id=f"query-{t}")
        plant = cli.planted_query(q, cfg.r, cfg.p, rng, f"plant-{t}")
        assert exact.polygon_distance(plant, q, cfg.p).distance <= cfg.r
        queries.append(q)
        plants.append(plant)
    stored = decoys + plants
    ix = polyindex.build_polygon_index(stored, cfg)
    by_id = {P.id: P for P in stored}
    res = ix.query_many(queries)
    fresh = [turning.random_polygon(6, rng, id=f"decoy-query-{t}") for t in range(TRIALS)]
    res_decoy = ix.query_many(fresh)
    elapsed = time.perf_counter() - t0
    found = sum(h is not None for h in res)
    limit = cfg.c * cfg.r
    # soundness is re-checked from the raw polygons, independent of the stored functions
    unsound = sum(
        exact.polygon_distance(by_id[h[0]], q, cfg.p).distance > limit + 1e-9
        for q, h in zip(queries + fresh, res + res_decoy)
        if h is not None
    )
    within = float(np.mean([exact.polygon_distance(P, queries[0], cfg.p).distance <= limit for P in decoys[:2000]]))
    ok = found >= 85 and unsound == 0 and elapsed < 600
    record_criterion(
        f"C8 end-to-end retrieval [{name}]",
        ok,
        f"r = {cfg.r}, c = {cfg.c}, k = {ix.params.concat_k}, L = {ix.params.tables_L}: {found}/{TRIALS} trials found a <= cr neighbour, "
        f"{unsound} returns beyond cr over {2 * TRIALS} queries, {elapsed:.0f} s; {within:.0%} of decoys lie within cr of a query",
    )
    assert ok


@pytest.mark.slow
def test_c9_sublinear_candidates(decoys, tmp_path):
    rows = []
    for n in (1_000, 10_000):
        out = cli.run_bench(decoys[:n], 6, 1, "step-shift", [(24.9, 1.5)], repetitions=1, queries=50, delta=0.1, seed=3)
        rows.append(dict(zip(out[0], out[1])))
    path = tmp_path / "bench.csv"
    path.write_text("\n".join(",".join(r.values()) for r in rows))
    a, b = (float(r["mean_candidates"]) for r in rows)
    growth = b / a
    ok = growth < 10
    record_criterion(
        "C9 sublinear candidate scan",
        ok,
        f"mean candidates scanned per query {a:.2f} (n = 10^3) -> {b:.2f} (n = 10^4), growth {growth:.2f} < 10; recall {rows[0]['recall']}, {rows[1]['recall']}",
    )
    assert ok
