from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_step, same_function
from turnhash import stepfn
from turnhash.stepfn import TWO_PI, StepFunctionError


def test_make_merges_equal_neighbours():
    f = stepfn.make([0, 0.25, 0.5, 1], [1.0, 1.0, 2.0])
    assert f.n_pieces == 2
    np.testing.assert_allclose(f.breakpoints, [0, 0.5, 1])


def test_make_drops_tiny_pieces():
    f = stepfn.make([0, 0.5, 0.5 + 1e-12, 1], [1.0, 5.0, 2.0])
    assert f.n_pieces == 2


@pytest.mark.parametrize(
    "bps, vals",
    [([0, 1], []), ([0.1, 1], [1]), ([0, 0.6, 0.5, 1], [1, 2, 3]), ([0, 1], [np.nan])],
)
def test_make_rejects_malformed(bps, vals):
    with pytest.raises(StepFunctionError):
        stepfn.make(bps, vals)


def test_evaluate_is_right_open():
    f = stepfn.make([0, 0.5, 1], [1.0, 2.0])
    assert f(0.0) == 1.0
    assert f(0.5) == 2.0
    assert f(1.0) == 2.0


def test_distances_against_hand_values():
    f = stepfn.make([0, 0.5, 1], [0.0, 1.0])
    g = stepfn.constant(0.25)
    assert stepfn.l1_distance(f, g) == pytest.approx(0.5 * 0.25 + 0.5 * 0.75)
    assert stepfn.l2_distance(f, g) == pytest.approx(np.sqrt(0.5 * 0.0625 + 0.5 * 0.5625))


def test_distance_matches_midpoint_rule(rng):
    xs = (np.arange(200000) + 0.5) / 200000
    for _ in range(10):
        f, g = random_step(rng, 6), random_step(rng, 4)
        d = f(xs) - g(xs)
        assert stepfn.l1_distance(f, g) == pytest.approx(np.abs(d).mean(), abs=1e-4)
        assert stepfn.l2_distance(f, g) == pytest.approx(np.sqrt((d**2).mean()), abs=1e-4)


def test_mean_reduce_has_zero_mean(rng):
    f = random_step(rng, 7, -3, 5)
    assert stepfn.mean(stepfn.mean_reduce(f)) == pytest.approx(0.0, abs=1e-12)


def test_extend_and_slide():
    f = stepfn.make([0, 0.5, 1], [0.0, 1.0])
    ext = stepfn.extend_2pi(f)
    assert ext.domain_end == 2.0
    assert ext(1.25) == pytest.approx(TWO_PI)
    s = stepfn.slide(ext, 0.5)
    assert s(0.0) == 1.0 and s(0.75) == pytest.approx(TWO_PI)
    assert same_function(stepfn.slide(ext, 0.0), f)


def test_slide_rejects_out_of_range_offset():
    ext = stepfn.extend_2pi(stepfn.constant(0.0))
    with pytest.raises(StepFunctionError):
        stepfn.slide(ext, 1.5)


def test_sample_vec_scaling():
    f = stepfn.constant(2.0)
    v = stepfn.sample_vec(f, 4)
    # squared norm equals the squared L2 norm
    assert float(v @ v) == pytest.approx(4.0)


def test_json_round_trip(rng):
    f = random_step(rng, 5)
    assert same_function(stepfn.StepFunction.from_json(f.to_json()), f, 0.0)
    lines = stepfn.to_jsonl([f, f]).strip().splitlines()
    assert len(lines) == 2


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-5, 5))
def test_vertical_shift_properties(seed, alpha):
    r = np.random.default_rng(seed)
    f, g = random_step(r, 5), random_step(r, 3)
    # common shifts leave distances unchanged, and L1 <= L2 on [0, 1]
    assert stepfn.l1_distance(stepfn.shift(f, alpha), stepfn.shift(g, alpha)) == pytest.approx(
        stepfn.l1_distance(f, g), abs=1e-9
    )
    assert stepfn.l1_distance(f, g) <= stepfn.l2_distance(f, g) + 1e-12
    assert stepfn.span(f) == pytest.approx(stepfn.maximum(f) - stepfn.minimum(f))
