"""Exact algebra for piecewise-constant functions on [0, 1] (or [0, 2]).

A step function is stored as strictly increasing breakpoints
``x_0 = 0 < x_1 < ... < x_n = domain_end`` and one value per piece.
Pieces are right-open, ``[x_{i-1}, x_i)``, and the last piece also owns
``domain_end``. Adjacent pieces never share a value (canonical form), so
the interior breakpoints are exactly the discontinuities.

Distances and means are computed from closed forms over the merged
breakpoint partition; nothing here uses numerical quadrature.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

# breakpoints closer than this are considered equal
BREAK_TOL = 1e-9
# adjacent values closer than this are merged
VALUE_TOL = 1e-9


class StepFunctionError(ValueError):
    """Raised for malformed step-function input."""


@dataclass(frozen=True, eq=False)
class StepFunction:
    breakpoints: np.ndarray
    values: np.ndarray

    @property
    def domain_end(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def n_pieces(self) -> int:
        return len(self.values)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @property
    def discontinuities(self) -> np.ndarray:
        """Interior breakpoints of the canonical form."""
        return self.breakpoints[1:-1]

    def __call__(self, x):
        return evaluate(self, x)

    def __repr__(self) -> str:
        bps = ", ".join(f"{b:.6g}" for b in self.breakpoints)
        vals = ", ".join(f"{v:.6g}" for v in self.values)
        return f"StepFunction(breakpoints=[{bps}], values=[{vals}])"

    def to_dict(self) -> dict:
        return {
            "breakpoints": [float(b) for b in self.breakpoints],
            "values": [float(v) for v in self.values],
            "domain_end": self.domain_end,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "StepFunction":
        f = make(d["breakpoints"], d["values"])
        if "domain_end" in d and abs(f.domain_end - float(d["domain_end"])) > BREAK_TOL:
            raise StepFunctionError("domain_end does not match last breakpoint")
        return f

    @classmethod
    def from_json(cls, s: str) -> "StepFunction":
        return cls.from_dict(json.loads(s))


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _canonical(breakpoints: np.ndarray, values: np.ndarray) -> StepFunction:
    """Drop near-zero-width pieces and merge equal neighbours.

    Assumes non-decreasing breakpoints; used by the internal constructors
    that may legitimately produce degenerate pieces (slides, merges).
    """
    bps = np.asarray(breakpoints, dtype=float)
    vals = np.asarray(values, dtype=float)
    keep = np.diff(bps) > BREAK_TOL
    if not keep.any():
        # everything collapsed; keep the widest piece
        j = int(np.argmax(np.diff(bps)))
        return StepFunction(_freeze(np.array([bps[0], bps[-1]])), _freeze(vals[j : j + 1].copy()))
    vals = vals[keep]
    # right ends of kept pieces; the left end of a kept piece is the right
    # end of the previous kept piece, which absorbs the dropped slivers
    rights = bps[1:][keep]
    rights[-1] = bps[-1]
    bps = np.concatenate([[bps[0]], rights])
    same = np.abs(np.diff(vals)) <= VALUE_TOL
    if same.any():
        start = np.concatenate([[True], ~same])
        vals = vals[start]
        bps = np.concatenate([bps[:-1][start], [bps[-1]]])
    return StepFunction(_freeze(bps.copy()), _freeze(vals.copy()))


def make(breakpoints: Sequence[float], values: Sequence[float]) -> StepFunction:
    """Build a canonical step function.

    Args:
        breakpoints: strictly increasing, starting at 0; the last entry is the
            domain end (1 for ordinary functions, 2 for 2pi-extensions).
        values: one value per piece.

    Raises:
        StepFunctionError: on empty input, length mismatch or bad ordering.
    """
    bps = np.asarray(breakpoints, dtype=float).ravel()
    vals = np.asarray(values, dtype=float).ravel()
    if len(vals) == 0 or len(bps) < 2:
        raise StepFunctionError("step function needs at least one piece")
    if len(bps) != len(vals) + 1:
        raise StepFunctionError(
            f"{len(bps)} breakpoints cannot bound {len(vals)} pieces"
        )
    if bps[0] != 0.0:
        raise StepFunctionError("first breakpoint must be 0")
    if not np.all(np.diff(bps) > 0):
        raise StepFunctionError("breakpoints must be strictly increasing")
    if not (np.all(np.isfinite(bps)) and np.all(np.isfinite(vals))):
        raise StepFunctionError("breakpoints and values must be finite")
    return _canonical(bps, vals)


def constant(c: float, domain_end: float = 1.0) -> StepFunction:
    return make([0.0, domain_end], [c])


def evaluate(f: StepFunction, x):
    """Value of ``f`` at ``x`` (scalar or array), right-open pieces."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa < -BREAK_TOL * 1e-3) or np.any(xa > f.domain_end + BREAK_TOL * 1e-3):
        raise StepFunctionError(f"x outside [0, {f.domain_end}]")
    idx = np.searchsorted(f.breakpoints, xa, side="right") - 1
    idx = np.clip(idx, 0, f.n_pieces - 1)
    out = f.values[idx]
    return float(out) if out.ndim == 0 else out


def shift(f: StepFunction, alpha: float) -> StepFunction:
    """Vertical shift ``f + alpha``."""
    return StepFunction(f.breakpoints, _freeze(f.values + alpha))


def _check_same_domain(f: StepFunction, g: StepFunction) -> None:
    if abs(f.domain_end - g.domain_end) > BREAK_TOL:
        raise StepFunctionError(
            f"domain mismatch: [0, {f.domain_end}] vs [0, {g.domain_end}]"
        )


def _require_unit(f: StepFunction) -> None:
    if abs(f.domain_end - 1.0) > BREAK_TOL:
        raise StepFunctionError("operation needs a function on [0, 1]")


def common_partition(f: StepFunction, g: StepFunction):
    """Widths and the values of ``f`` and ``g`` over their merged partition."""
    _check_same_domain(f, g)
    bps = np.union1d(f.breakpoints, g.breakpoints)
    widths = np.diff(bps)
    mids = bps[:-1] + widths / 2
    fv = f.values[np.searchsorted(f.breakpoints, mids, side="right") - 1]
    gv = g.values[np.searchsorted(g.breakpoints, mids, side="right") - 1]
    return widths, fv, gv


def l1_distance(f: StepFunction, g: StepFunction) -> float:
    w, fv, gv = common_partition(f, g)
    return float(np.sum(w * np.abs(fv - gv)))


def l2_distance(f: StepFunction, g: StepFunction) -> float:
    w, fv, gv = common_partition(f, g)
    return math.sqrt(float(np.sum(w * (fv - gv) ** 2)))


def mean(f: StepFunction) -> float:
    _require_unit(f)
    return float(np.dot(f.widths, f.values))


def mean_reduce(f: StepFunction) -> StepFunction:
    """Vertical shift of ``f`` with zero integral over [0, 1]."""
    return shift(f, -mean(f))


def minimum(f: StepFunction) -> float:
    return float(f.values.min())


def maximum(f: StepFunction) -> float:
    return float(f.values.max())


def span(f: StepFunction) -> float:
    return maximum(f) - minimum(f)


def extend_2pi(f: StepFunction) -> StepFunction:
    """Extend to [0, 2] by ``f(x - 1) + 2pi`` on (1, 2]."""
    _require_unit(f)
    bps = np.concatenate([f.breakpoints, f.breakpoints[1:] + 1.0])
    vals = np.concatenate([f.values, f.values + TWO_PI])
    return _canonical(bps, vals)


def slide(f2: StepFunction, u: float) -> StepFunction:
    """Restrict ``x -> f2(x + u)`` to [0, 1]; ``f2`` lives on [0, 2]."""
    if abs(f2.domain_end - 2.0) > BREAK_TOL:
        raise StepFunctionError("slide needs a function on [0, 2]")
    if not -BREAK_TOL <= u <= 1.0 + BREAK_TOL:
        raise StepFunctionError("slide offset must lie in [0, 1]")
    u = min(max(float(u), 0.0), 1.0)
    bps = f2.breakpoints
    inner = bps[(bps > u + BREAK_TOL) & (bps < u + 1.0 - BREAK_TOL)]
    new_bps = np.concatenate([[0.0], inner - u, [1.0]])
    mids = new_bps[:-1] + np.diff(new_bps) / 2 + u
    vals = f2.values[np.searchsorted(bps, mids, side="right") - 1]
    return _canonical(new_bps, vals)


def sample_vec(f: StepFunction, n: int) -> np.ndarray:
    """``(f(0/n), f(1/n), ..., f((n-1)/n)) / sqrt(n)``."""
    _require_unit(f)
    if n < 1:
        raise StepFunctionError("sample count must be positive")
    grid = np.arange(n) / n
    return evaluate(f, grid) / math.sqrt(n)


def to_jsonl(functions: Iterable[StepFunction]) -> str:
    return "\n".join(f.to_json() for f in functions)
