"""LSH families for step functions and sampled vectors.

Every family draws its hash functions from a seeded stream so that hash
``i`` is a pure function of ``(seed, i)``. Hashing works on whole batches of
step functions at once: a ``StepBatch`` stores padded breakpoint and value
matrices and evaluates all rows at a vector of points with one
``searchsorted`` call.

Families:
    RandomPointFamily        sign of f(x) - y for a random point (x, y).
    MeanReduceFamily         the same on mean-reduced functions, range doubled.
    AsymmetricTwoPointFamily data/query hash pair whose collision rate falls
                             with the L2 distance.
    DiscreteSampleFamily     p-stable projection of the sampled vector
                             (f(0/n), ..., f((n-1)/n)) / sqrt(n), computed
                             without materializing the vector.
    EuclideanFamily          the same p-stable projection on explicit vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import norm

from turnhash import stepfn
from turnhash.stepfn import StepFunction

# second-symbol placeholder when the asymmetric family skips its second point
STAR = 2
# draws per seeded generator block for the scalar-point families
_BLOCK = 1024
# stream tags keep families with equal seeds independent
_TAG_H1, _TAG_H2, _TAG_EUCLID = 1, 2, 3


class FamilyPreconditionError(ValueError):
    """Raised when a family cannot give an (r, cr) guarantee for the request."""


# -- batches -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StepBatch:
    """Padded matrix form of step functions sharing one domain.

    Row ``i`` has ``counts[i]`` pieces; padding repeats the domain end in
    ``breakpoints`` and the last value in ``values`` so padded pieces have
    zero width and never change an evaluation.
    """

    breakpoints: np.ndarray
    values: np.ndarray
    counts: np.ndarray

    @classmethod
    def from_functions(cls, functions: Sequence[StepFunction]) -> "StepBatch":
        if not functions:
            return cls(np.zeros((0, 2)), np.zeros((0, 1)), np.zeros(0, dtype=np.int64))
        end = functions[0].domain_end
        width = max(f.n_pieces for f in functions)
        bps = np.full((len(functions), width + 1), end)
        vals = np.empty((len(functions), width))
        counts = np.empty(len(functions), dtype=np.int64)
        for i, f in enumerate(functions):
            if abs(f.domain_end - end) > stepfn.BREAK_TOL:
                raise stepfn.StepFunctionError("batch mixes domains")
            k = f.n_pieces
            bps[i, : k + 1] = f.breakpoints
            vals[i, :k] = f.values
            vals[i, k:] = f.values[-1]
            counts[i] = k
        return cls(bps, vals, counts)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def domain_end(self) -> float:
        return float(self.breakpoints[0, -1]) if len(self) else 1.0

    def row(self, i: int) -> StepFunction:
        k = int(self.counts[i])
        return stepfn.make(self.breakpoints[i, : k + 1], self.values[i, :k])

    def take(self, rows: np.ndarray) -> "StepBatch":
        return StepBatch(self.breakpoints[rows], self.values[rows], self.counts[rows])

    def shifted(self, offsets: np.ndarray) -> "StepBatch":
        """Row ``i`` becomes ``f_i + offsets[i]``."""
        return StepBatch(self.breakpoints, self.values + np.asarray(offsets)[:, None], self.counts)

    def means(self) -> np.ndarray:
        return np.sum(np.diff(self.breakpoints, axis=1) * self.values, axis=1) / self.domain_end

    def evaluate(self, xs: np.ndarray) -> np.ndarray:
        """Values of every row at every point: shape (len(self), len(xs))."""
        xs = np.asarray(xs, dtype=float)
        n, w = self.values.shape
        if n == 0:
            return np.zeros((0, len(xs)))
        stride = self.domain_end + 1.0
        flat = (self.breakpoints + stride * np.arange(n)[:, None]).ravel()
        probe = (xs[None, :] + stride * np.arange(n)[:, None]).ravel()
        pos = np.searchsorted(flat, probe, side="right").reshape(n, len(xs))
        local = pos - (w + 1) * np.arange(n)[:, None] - 1
        np.clip(local, 0, w - 1, out=local)
        return np.take_along_axis(self.values, local, axis=1)

    def concat(self, other: "StepBatch") -> "StepBatch":
        if len(self) == 0:
            return other
        if len(other) == 0:
            return self
        w = max(self.values.shape[1], other.values.shape[1])
        return StepBatch(
            np.concatenate([_pad_bps(self.breakpoints, w), _pad_bps(other.breakpoints, w)]),
            np.concatenate([_pad_vals(self.values, w), _pad_vals(other.values, w)]),
            np.concatenate([self.counts, other.counts]),
        )


def _pad_bps(b: np.ndarray, w: int) -> np.ndarray:
    extra = w + 1 - b.shape[1]
    return b if extra == 0 else np.concatenate([b, np.repeat(b[:, -1:], extra, axis=1)], axis=1)


def _pad_vals(v: np.ndarray, w: int) -> np.ndarray:
    extra = w - v.shape[1]
    return v if extra == 0 else np.concatenate([v, np.repeat(v[:, -1:], extra, axis=1)], axis=1)


def as_batch(items) -> StepBatch:
    if isinstance(items, StepBatch):
        return items
    if isinstance(items, StepFunction):
        return StepBatch.from_functions([items])
    return StepBatch.from_functions(list(items))


# -- seeded draws --------------------------------------------------------------


def _uniform_draws(seed: int, tag: int, idx: np.ndarray, width: int) -> np.ndarray:
    """Uniform [0, 1) rows for draw indices ``idx``; row ``i`` depends only on (seed, i)."""
    idx = np.asarray(idx, dtype=np.int64)
    out = np.empty((len(idx), width))
    blocks = idx // _BLOCK
    for blk in np.unique(blocks):
        rows = blocks == blk
        u = np.random.default_rng([int(seed), tag, int(blk)]).random((_BLOCK, width))
        out[rows] = u[idx[rows] % _BLOCK]
    return out


def _sign(a: np.ndarray) -> np.ndarray:
    return np.sign(a).astype(np.int64)


# -- scalar-point families -----------------------------------------------------


@dataclass(frozen=True)
class RandomPointFamily:
    """Hash ``h_(x,y)(f) = sign(f(x) - y)`` with x ~ U[0,1], y ~ U[a,b]."""

    a: float
    b: float
    seed: int = 0
    kind: str = field(default="RandomPoint", init=False)

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("family range needs a < b")

    @property
    def symmetric(self) -> bool:
        return True

    def points(self, idx) -> tuple[np.ndarray, np.ndarray]:
        u = _uniform_draws(self.seed, _TAG_H1, np.atleast_1d(idx), 2)
        return u[:, 0], self.a + (self.b - self.a) * u[:, 1]

    def _prepare(self, batch: StepBatch) -> StepBatch:
        return batch

    def data_hash(self, items, idx) -> np.ndarray:
        batch = self._prepare(as_batch(items))
        x, y = self.points(idx)
        return _sign(batch.evaluate(x) - y[None, :])

    query_hash = data_hash

    def hash(self, f: StepFunction, i: int) -> int:
        return int(self.data_hash([f], [i])[0, 0])

    def collision_prob(self, d: float) -> float:
        return h1_collision_prob(d, self.a, self.b)

    def declared(self, r: float, c: float) -> tuple[float, float]:
        return self.collision_prob(r), self.collision_prob(min(c * r, self.b - self.a))

    def descriptor(self) -> dict:
        return {"kind": self.kind, "a": self.a, "b": self.b, "params": {}, "seed": self.seed}


def h1_collision_prob(d: float, a: float, b: float) -> float:
    """``1 - d/(b-a)`` for two functions at L1 distance ``d`` with ranges in [a, b]."""
    if not 0.0 <= d <= (b - a) + 1e-12:
        raise ValueError("L1 distance must lie in [0, b-a]")
    return 1.0 - d / (b - a)


def mean_reduce_probs(a: float, b: float, r: float, c: float) -> tuple[float, float]:
    """Guaranteed collision bounds of the mean-reduce family at (r, cr)."""
    t = r / (b - a)
    return 1.0 - (2.0 - t) * r / (2.0 * (b - a)), 1.0 - c * r / (2.0 * (b - a))


@dataclass(frozen=True)
class MeanReduceFamily(RandomPointFamily):
    """Random-point hash of ``mean_reduce(f)`` over the doubled range [a-b, b-a].

    ``a`` and ``b`` bound the original functions; the drawn points live in
    ``[lo, hi] = [a-b, b-a]``, which contains every mean-reduced function.
    """

    r: float = 0.0
    c: float = 0.0
    kind: str = field(default="MeanReduce", init=False)

    @property
    def lo(self) -> float:
        return self.a - self.b

    @property
    def hi(self) -> float:
        return self.b - self.a

    def points(self, idx) -> tuple[np.ndarray, np.ndarray]:
        u = _uniform_draws(self.seed, _TAG_H1, np.atleast_1d(idx), 2)
        return u[:, 0], self.lo + (self.hi - self.lo) * u[:, 1]

    def _prepare(self, batch: StepBatch) -> StepBatch:
        return batch.shifted(-batch.means())

    def collision_prob(self, d: float) -> float:
        """Collision rate for mean-reduced functions at L1 distance ``d``."""
        return h1_collision_prob(d, self.lo, self.hi)

    @property
    def p1(self) -> float:
        return mean_reduce_probs(self.a, self.b, self.r, self.c)[0]

    @property
    def p2(self) -> float:
        return mean_reduce_probs(self.a, self.b, self.r, self.c)[1]

    def declared(self, r: float, c: float) -> tuple[float, float]:
        _check_mean_reduce(self.a, self.b, r, c)
        return mean_reduce_probs(self.a, self.b, r, c)

    def descriptor(self) -> dict:
        return {"kind": self.kind, "a": self.a, "b": self.b, "params": {"r": self.r, "c": self.c}, "seed": self.seed}


def _check_mean_reduce(a: float, b: float, r: float, c: float) -> None:
    if not 0.0 < r < b - a:
        raise FamilyPreconditionError("mean-reduce family needs 0 < r < b - a")
    if not c > 2.0 - r / (b - a):
        raise FamilyPreconditionError(
            f"mean-reduce family needs c > 2 - r/(b-a) = {2.0 - r / (b - a):.6g}, got c = {c}; "
            "use the step-shift variant instead"
        )


def mean_reduce_family(a: float, b: float, r: float, c: float, seed: int = 0) -> MeanReduceFamily:
    """Mean-reduce family with its declared (p1, p2) at (r, cr).

    Raises:
        FamilyPreconditionError: r outside (0, b-a) or c <= 2 - r/(b-a).
    """
    _check_mean_reduce(a, b, r, c)
    return MeanReduceFamily(a, b, seed, r=r, c=c)


@dataclass(frozen=True)
class AsymmetricTwoPointFamily:
    """Data/query hash pair for the L2 distance.

    Draw ``i`` is ``(x, y1, y2, use_second)``. Both sides report
    ``sign(f(x) - y1)`` first. With ``use_second`` the data side adds
    ``sign(f(x) - y2)`` and the query side the opposite answer
    ``-sign(g(x) - y2)``, so the second symbols agree exactly when ``y2``
    lies strictly between f(x) and g(x); otherwise both add ``STAR``.
    """

    a: float
    b: float
    seed: int = 0
    kind: str = field(default="AsymmetricTwoPoint", init=False)

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("family range needs a < b")

    @property
    def symmetric(self) -> bool:
        return False

    def draws(self, idx):
        u = _uniform_draws(self.seed, _TAG_H2, np.atleast_1d(idx), 4)
        span = self.b - self.a
        return u[:, 0], self.a + span * u[:, 1], self.a + span * u[:, 2], u[:, 3] < 0.5

    def _symbols(self, items, idx, query: bool) -> np.ndarray:
        x, y1, y2, use = self.draws(idx)
        fx = as_batch(items).evaluate(x)
        first = _sign(fx - y1[None, :])
        second = _sign(fx - y2[None, :])
        if query:
            second = -second
        second = np.where(use[None, :], second, STAR)
        # pack the symbol pair into one integer, both parts in {-1, 0, 1, 2}
        return (first + 1) * 4 + (second + 1)

    def data_hash(self, items, idx) -> np.ndarray:
        return self._symbols(items, idx, query=False)

    def query_hash(self, items, idx) -> np.ndarray:
        return self._symbols(items, idx, query=True)

    def pair(self, f: StepFunction, g: StepFunction, i: int) -> tuple[int, int]:
        return int(self.data_hash([f], [i])[0, 0]), int(self.query_hash([g], [i])[0, 0])

    def collision_prob(self, d: float) -> float:
        return h2_collision_prob(d, self.a, self.b)

    def declared(self, r: float, c: float) -> tuple[float, float]:
        return self.collision_prob(r), self.collision_prob(c * r)

    def descriptor(self) -> dict:
        return {"kind": self.kind, "a": self.a, "b": self.b, "params": {}, "seed": self.seed}


def h2_collision_prob(d: float, a: float, b: float) -> float:
    """Data/query collision rate ``0.5 - 0.5 d^2/(b-a)^2`` at L2 distance ``d``.

    Per point x with gap t = |f(x) - g(x)|/(b-a) the first symbols agree with
    probability 1 - t and the second with 0.5 + 0.5 t, giving 0.5 (1 - t^2);
    averaging over x yields the expression above. It reaches 0 exactly at
    the largest possible distance d = b - a and is floored there.
    """
    return max(0.0, 0.5 - 0.5 * (d / (b - a)) ** 2)


def h2_collision_prob_stated(d: float, a: float, b: float) -> float:
    """The published form ``0.5 - d^2/(b-a)^2`` (floored at 0), kept for comparison."""
    return max(0.0, 0.5 - (d / (b - a)) ** 2)


# -- sampled-vector families ---------------------------------------------------


def riemann_n(r: float, c: float, k: int, a: float, b: float) -> int:
    """Sample count making sampled-vector and L2 distances agree to (sqrt(c)-1) r^2."""
    if r <= 0 or c <= 1 or k < 1:
        raise ValueError("riemann_n needs r > 0, c > 1, k >= 1")
    return math.ceil(2 * k * (b - a) ** 2 / ((math.sqrt(c) - 1) * r**2) - 1e-9)


def discrete_sample_params(r: float, c: float) -> tuple[float, float]:
    """Vector-space parameters ``(c^(1/4) r, sqrt(c))``."""
    return c**0.25 * r, math.sqrt(c)


def discrete_sample_embed(f: StepFunction, n: int) -> np.ndarray:
    return stepfn.sample_vec(f, n)


def pstable_collision_prob(d: float, width: float) -> float:
    """Collision rate of ``floor((<v,w> + b)/width)`` at Euclidean distance ``d``."""
    if d <= 0:
        return 1.0
    s = width / d
    return float(1.0 - 2.0 * norm.cdf(-s) - 2.0 / (math.sqrt(2 * math.pi) * s) * (1.0 - math.exp(-s * s / 2)))


@dataclass(frozen=True)
class EuclideanFamily:
    """p-stable projection hash ``floor((<v, w> + offset)/width)`` on R^dimension."""

    dimension: int
    width: float
    seed: int = 0
    kind: str = field(default="Euclidean", init=False)

    @property
    def symmetric(self) -> bool:
        return True

    def projection(self, i: int) -> tuple[np.ndarray, float]:
        rng = np.random.default_rng([int(self.seed), _TAG_EUCLID, int(i)])
        w = rng.standard_normal(self.dimension)
        return w, float(rng.random() * self.width)

    def hash_vectors(self, vectors: np.ndarray, idx) -> np.ndarray:
        v = np.atleast_2d(np.asarray(vectors, dtype=float))
        out = np.empty((len(v), len(np.atleast_1d(idx))), dtype=np.int64)
        for j, i in enumerate(np.atleast_1d(idx)):
            w, off = self.projection(int(i))
            out[:, j] = np.floor((v @ w + off) / self.width).astype(np.int64)
        return out

    data_hash = hash_vectors
    query_hash = hash_vectors

    def collision_prob(self, d: float) -> float:
        return pstable_collision_prob(d, self.width)

    def declared(self, r: float, c: float) -> tuple[float, float]:
        return self.collision_prob(r), self.collision_prob(c * r)

    def descriptor(self) -> dict:
        return {
            "kind": self.kind,
            "a": None,
            "b": None,
            "params": {"dimension": self.dimension, "width": self.width},
            "seed": self.seed,
        }


def euclidean_lsh_family(dimension: int, r_prime: float, c_prime: float, seed: int = 0, width: float | None = None):
    """p-stable family for (r', c'r') with bucket width ``4 r'`` unless given."""
    if c_prime <= 1:
        raise FamilyPreconditionError("Euclidean family needs c' > 1")
    return EuclideanFamily(int(dimension), float(width if width is not None else 4.0 * r_prime), seed)


@dataclass(frozen=True)
class DiscreteSampleFamily:
    """Euclidean p-stable hash of ``sample_vec(f, n)`` for step functions on [0, 1].

    The projection ``<sample_vec(f, n), w>`` equals
    ``sum_p v_p (W[e_p] - W[s_p]) / sqrt(n)`` where ``W`` is the prefix sum
    of ``w`` and ``[s_p, e_p)`` are the sample indices inside piece ``p``, so
    the n-dimensional vector is never built.
    """

    n: int
    width: float
    seed: int = 0
    kind: str = field(default="DiscreteSample", init=False)

    @property
    def symmetric(self) -> bool:
        return True

    @property
    def euclidean(self) -> EuclideanFamily:
        return EuclideanFamily(self.n, self.width, self.seed)

    def sample_bounds(self, batch: StepBatch) -> np.ndarray:
        grid = np.arange(self.n) / self.n
        return np.searchsorted(grid, batch.breakpoints, side="left")

    def project(self, batch: StepBatch, bounds: np.ndarray, i: int) -> np.ndarray:
        w, off = self.euclidean.projection(i)
        prefix = np.concatenate([[0.0], np.cumsum(w)])
        seg = prefix[bounds]
        proj = np.einsum("ij,ij->i", batch.values, seg[:, 1:] - seg[:, :-1]) / math.sqrt(self.n)
        return proj + off

    def data_hash(self, items, idx) -> np.ndarray:
        batch = as_batch(items)
        bounds = self.sample_bounds(batch)
        idx = np.atleast_1d(idx)
        out = np.empty((len(batch), len(idx)), dtype=np.int64)
        for j, i in enumerate(idx):
            out[:, j] = np.floor(self.project(batch, bounds, int(i)) / self.width).astype(np.int64)
        return out

    query_hash = data_hash

    def collision_prob(self, d: float) -> float:
        return pstable_collision_prob(d, self.width)

    def declared(self, r: float, c: float) -> tuple[float, float]:
        """Bounds at L2 distances (r, cr), via the vector-space (r', c'r') guarantee."""
        rp, cp = discrete_sample_params(r, c)
        return self.collision_prob(rp), self.collision_prob(cp * rp)

    def descriptor(self) -> dict:
        return {"kind": self.kind, "a": None, "b": None, "params": {"n": self.n, "width": self.width}, "seed": self.seed}


def discrete_sample_family(n: int, r: float, c: float, seed: int = 0, width: float | None = None):
    """Discrete-sample family for L2 (r, cr) queries, bucket width ``4 c^(1/4) r`` by default."""
    if c <= 1:
        raise FamilyPreconditionError("discrete-sample family needs c > 1")
    rp, _ = discrete_sample_params(r, c)
    return DiscreteSampleFamily(int(n), float(width if width is not None else 4.0 * rp), seed)


def family_from_descriptor(d: dict):
    kind, params = d["kind"], d.get("params", {})
    seed = int(d.get("seed", 0))
    if kind == "RandomPoint":
        return RandomPointFamily(d["a"], d["b"], seed)
    if kind == "MeanReduce":
        return MeanReduceFamily(d["a"], d["b"], seed, r=params["r"], c=params["c"])
    if kind == "AsymmetricTwoPoint":
        return AsymmetricTwoPointFamily(d["a"], d["b"], seed)
    if kind == "DiscreteSample":
        return DiscreteSampleFamily(params["n"], params["width"], seed)
    if kind == "Euclidean":
        return EuclideanFamily(params["dimension"], params["width"], seed)
    raise ValueError(f"unknown family kind {kind!r}")
