"""Exact vertical- and slide-aligned distances between step functions.

These are the ground-truth oracles every probabilistic structure is checked
against. Nothing here samples or grid-searches: the optimal vertical shift
has a closed form (weighted median for L1, mean difference for L2) and the
optimal slide lies on a finite candidate set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from turnhash import stepfn, turning
from turnhash.stepfn import BREAK_TOL, StepFunction
from turnhash.turning import Polygon

# cumulative-weight slack when locating the weighted median
_MEDIAN_TOL = 1e-12


@dataclass(frozen=True)
class AlignedDistance:
    distance: float
    alpha: float
    u: float = 0.0


def _check_p(p: int) -> None:
    if p not in (1, 2):
        raise ValueError(f"p must be 1 or 2, got {p}")


def _weighted_median_rows(h: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Row-wise lower weighted median of ``h`` with non-negative weights ``w``."""
    order = np.argsort(h, axis=1, kind="stable")
    hs = np.take_along_axis(h, order, axis=1)
    ws = np.take_along_axis(w, order, axis=1)
    cum = np.cumsum(ws, axis=1)
    half = 0.5 * cum[:, -1:]
    idx = np.argmax(cum >= half - _MEDIAN_TOL, axis=1)
    return hs[np.arange(len(h)), idx]


def _aligned_rows(w: np.ndarray, h: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Best vertical shift per row for pieces of width ``w`` and gap ``h = g - f``.

    Returns:
        (distance, alpha) arrays, one entry per row.
    """
    if p == 1:
        alpha = _weighted_median_rows(h, w)
        dist = np.sum(w * np.abs(h - alpha[:, None]), axis=1)
    else:
        total = w.sum(axis=1)
        alpha = np.sum(w * h, axis=1) / total
        var = np.sum(w * (h - alpha[:, None]) ** 2, axis=1)
        dist = np.sqrt(np.maximum(var, 0.0))
    return dist, alpha


def _updown(f: StepFunction, g: StepFunction, p: int) -> AlignedDistance:
    stepfn._require_unit(f)
    stepfn._require_unit(g)
    w, fv, gv = stepfn.common_partition(f, g)
    dist, alpha = _aligned_rows(w[None, :], (gv - fv)[None, :], p)
    return AlignedDistance(float(dist[0]), float(alpha[0]), 0.0)


def d1_updown(f: StepFunction, g: StepFunction) -> AlignedDistance:
    """``min_alpha L1(f + alpha, g)`` via the weighted median of ``g - f``.

    Ties (the median straddles two step values) resolve to the lower value.
    """
    return _updown(f, g, 1)


def d2_updown(f: StepFunction, g: StepFunction) -> AlignedDistance:
    """``min_alpha L2(f + alpha, g)``; the optimum is ``alpha = mean(g) - mean(f)``."""
    return _updown(f, g, 2)


def slide_candidates(f: StepFunction, g: StepFunction) -> np.ndarray:
    """Sorted slides at which a breakpoint of the 2pi-extension of ``f`` meets one of ``g``.

    Uses every breakpoint of ``extend_2pi(f)`` in [0, 2) against every
    breakpoint of ``g`` in [0, 1), which also covers the events where a
    discontinuity enters or leaves the sliding window. Always contains 0.
    """
    ext = stepfn.extend_2pi(f)
    df = ext.breakpoints[:-1]
    dg = g.breakpoints[:-1]
    u = np.mod(df[:, None] - dg[None, :], 1.0).ravel()
    u[u > 1.0 - BREAK_TOL] = 0.0
    u = np.unique(np.round(u, 12))
    return u


def _slide_rows(f: StepFunction, g: StepFunction, us: np.ndarray):
    """Merged partitions of ``slide(extend_2pi(f), u)`` and ``g`` for every ``u``.

    Returns:
        widths and gap ``g - f_u`` as (len(us), pieces) arrays; degenerate
        pieces have zero width.
    """
    ext = stepfn.extend_2pi(f)
    fb = ext.breakpoints
    gb = g.breakpoints
    shifted = np.clip(fb[None, :] - us[:, None], 0.0, 1.0)
    pts = np.sort(np.concatenate([shifted, np.broadcast_to(gb, (len(us), len(gb)))], axis=1), axis=1)
    w = np.diff(pts, axis=1)
    mids = pts[:, :-1] + w / 2
    fi = np.clip(np.searchsorted(fb, mids + us[:, None], side="right") - 1, 0, ext.n_pieces - 1)
    gi = np.clip(np.searchsorted(gb, mids, side="right") - 1, 0, g.n_pieces - 1)
    # slivers from rounding the candidate slides; under a 2pi jump they would
    # otherwise add about sqrt(width) * 2pi to the L2 distance
    w[w < BREAK_TOL] = 0.0
    return w, g.values[gi] - ext.values[fi]


def d_slide(f: StepFunction, g: StepFunction, p: int) -> AlignedDistance:
    """``min_{u, alpha} L_p(slide(extend_2pi(f), u) + alpha, g)``.

    Between consecutive alignment events the best vertical fit is a concave
    function of ``u`` (a minimum of linear functions for p=1, linear minus a
    convex square for p=2), so scanning the candidate slides is exact.
    """
    _check_p(p)
    stepfn._require_unit(f)
    stepfn._require_unit(g)
    us = slide_candidates(f, g)
    w, h = _slide_rows(f, g, us)
    dist, alpha = _aligned_rows(w, h, p)
    best = int(np.argmin(dist))
    return AlignedDistance(float(dist[best]), float(alpha[best]), float(us[best]))


def d_slide_many(f: StepFunction, gs: list[StepFunction], p: int) -> np.ndarray:
    """``d_slide(f, g, p).distance`` for every ``g`` in ``gs``."""
    return np.array([d_slide(f, g, p).distance for g in gs])


def polygon_distance(P: Polygon, Q: Polygon, p: int) -> AlignedDistance:
    """Rotation-, scale-, translation- and reference-invariant polygon distance."""
    return d_slide(turning.turning_function(P), turning.turning_function(Q), p)


def aligned_lp(f: StepFunction, g: StepFunction, a: AlignedDistance, p: int) -> float:
    """``L_p(slide(extend_2pi(f), u) + alpha, g)`` for a reported alignment."""
    fu = stepfn.shift(stepfn.slide(stepfn.extend_2pi(f), a.u), a.alpha)
    return stepfn.l1_distance(fu, g) if p == 1 else stepfn.l2_distance(fu, g)


__all__ = [
    "AlignedDistance",
    "aligned_lp",
    "d1_updown",
    "d2_updown",
    "d_slide",
    "d_slide_many",
    "polygon_distance",
    "slide_candidates",
]
