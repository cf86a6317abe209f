from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import random_step
from turnhash import families, index, stepfn


def test_derive_params_reference_values():
    p = index.derive_params(1024, 0.9, 0.5, 0.1)
    assert (p.concat_k, p.tables_L) == (10, 7)
    assert p.rho == pytest.approx(math.log(1 / 0.9) / math.log(2))
    assert p.scan_budget == 21


def test_derive_params_failure_bound():
    p = index.derive_params(5000, 0.7, 0.3, 0.05)
    # missing a near item in all L tables has probability at most delta
    assert (1 - p.p1**p.concat_k) ** p.tables_L <= 0.05
    with pytest.raises(ValueError):
        index.derive_params(10, 0.3, 0.7, 0.1)


def test_composite_keys_depend_on_order():
    mult = np.array([3, 5], dtype=np.uint64)
    a = index.composite_keys(np.array([[1, 2], [2, 1], [1, 2]]), mult)
    assert a[0] == a[2] and a[0] != a[1]


def _dataset(rng, n=300):
    data = [random_step(rng, 4) for _ in range(n)]
    return data


def test_planted_near_neighbour_found(rng):
    data = _dataset(rng)
    fam = families.RandomPointFamily(-0.5, 1.5, seed=7)
    ix = index.build(data, fam, r=0.05, c=3.0, delta=0.1, seed=7, distance="l1")
    queries = [stepfn.shift(f, 0.04) for f in data[:50]]
    res = ix.query_many(queries)
    assert sum(x is not None for x in res) >= 45
    for q, hit in zip(queries, res):
        if hit is not None:
            # soundness: every report is checked exactly
            assert stepfn.l1_distance(data[hit[0]], q) == pytest.approx(hit[1])
            assert hit[1] <= 0.15 + 1e-12
    assert ix.stats()["max_scanned_per_query"] <= ix.params.scan_budget


def test_far_queries_never_report(rng):
    data = _dataset(rng, 100)
    fam = families.RandomPointFamily(0.0, 5.0, seed=1)
    ix = index.build(data, fam, r=0.05, c=2.0, delta=0.1, seed=1)
    assert all(x is None for x in ix.query_many([stepfn.constant(4.0)] * 5))


def test_asymmetric_family_index(rng):
    data = _dataset(rng, 200)
    fam = families.AsymmetricTwoPointFamily(-0.5, 1.5, seed=2)
    ix = index.build(data, fam, r=0.1, c=3.0, delta=0.1, seed=2, distance="l2")
    res = ix.query_many([stepfn.shift(f, 0.05) for f in data[:30]])
    assert sum(x is not None for x in res) >= 27


def test_euclidean_index(rng):
    pts = rng.normal(size=(500, 20))
    fam = families.euclidean_lsh_family(20, 0.5, 3.0, seed=3)
    ix = index.build(pts, fam, r=0.5, c=3.0, delta=0.1, seed=3, distance="euclidean")
    q = pts[:40] + 0.3 * rng.normal(size=(40, 20)) / math.sqrt(20)
    res = ix.query_many(q)
    assert sum(x is not None for x in res) >= 36


def test_save_load_round_trip(tmp_path, rng):
    data = _dataset(rng, 150)
    fam = families.mean_reduce_family(0.0, 1.0, 0.1, 2.5, seed=4)
    ix = index.build(data, fam, r=0.1, c=2.5, delta=0.1, seed=4)
    path = tmp_path / "ix.bin"
    ix.save(path)
    back, header, _ = index.LshIndex.load(path)
    assert header["format"] == index.FORMAT
    assert back.params == ix.params and back.family == ix.family
    np.testing.assert_array_equal(back.keys, ix.keys)
    qs = [stepfn.shift(f, 0.3) for f in data[:20]]
    assert back.query_many(qs) == ix.query_many(qs)


def test_load_rejects_foreign_files(tmp_path):
    bad = tmp_path / "x.bin"
    bad.write_bytes(b"NOTANINDEX")
    with pytest.raises(index.IndexFormatError):
        index.LshIndex.load(bad)
    other = tmp_path / "y.bin"
    index.write_arrays(other, {"format": index.FORMAT, "version": 99}, {})
    with pytest.raises(index.IndexFormatError):
        index.LshIndex.load(other)


def test_empty_index():
    fam = families.RandomPointFamily(0.0, 1.0)
    ix = index.build([], fam, r=0.1, c=2.0, delta=0.1)
    assert ix.query(stepfn.constant(0.5)) is None
    assert ix.stats()["queries"] == 1
