"""Polygon near-neighbor structures built from turning functions.

Pipeline per stored polygon: turning function (edge-midpoint reference),
shift so the minimum is 0, then one slide clone per discontinuity (plus the
unslid function). A query clones itself the same way, so for the optimal
alignment some stored clone and some query clone both have an aligned
discontinuity at x = 0 and only a vertical alignment remains. That is
handled by the inner structure:

    p=1, MeanReduce  mean-reduce random-point family on [0, omega]
    p=1, StepShift   vertical clones (each step moved to height 0) on both
                     sides, random-point family on [-omega, omega]
    p=2              mean reduction, then a discrete-sample p-stable family

where ``omega = lambda_m/2 + 2pi`` bounds every clone. Hits are mapped back
to their polygon and accepted only if the exact polygon distance is at most
``c * r``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from turnhash import exact, families, index, stepfn, turning
from turnhash.families import FamilyPreconditionError, StepBatch
from turnhash.stepfn import TWO_PI, StepFunction
from turnhash.turning import Polygon

FORMAT = "turnhash-polyindex"
VERSION = 1
# slack on the hard range assertion for clones
_RANGE_TOL = 1e-9


class Variant(str, enum.Enum):
    MEAN_REDUCE = "mean-reduce"
    STEP_SHIFT = "step-shift"


@dataclass(frozen=True)
class CloneSet:
    original_id: str
    clones: list = field(default_factory=list)
    # ("slide", u) or ("vertical", step value)
    tags: list = field(default_factory=list)


def clone_vertical(f: StepFunction, original_id: str = "") -> CloneSet:
    """One clone ``f - v`` per distinct step value ``v``."""
    vals = np.unique(f.values)
    return CloneSet(original_id, [stepfn.shift(f, -v) for v in vals], [("vertical", float(v)) for v in vals])


def slide_offsets(f: StepFunction) -> np.ndarray:
    """0 and every discontinuity of ``f``."""
    return np.concatenate([[0.0], f.discontinuities])


def clone_slides(f: StepFunction, original_id: str = "") -> CloneSet:
    """``slide(extend_2pi(f), u)`` for u = 0 and each discontinuity of ``f``."""
    ext = stepfn.extend_2pi(f)
    us = slide_offsets(f)
    return CloneSet(original_id, [stepfn.slide(ext, u) for u in us], [("slide", float(u)) for u in us])


def _vertical_batch(batch: StepBatch) -> tuple[StepBatch, np.ndarray]:
    """Vertical clones of every row; returns the clones and their source rows."""
    rows, offsets = [], []
    for i in range(len(batch)):
        vals = np.unique(batch.values[i, : batch.counts[i]])
        rows.append(np.full(len(vals), i))
        offsets.append(vals)
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    offsets = np.concatenate(offsets) if offsets else np.zeros(0)
    return batch.take(rows).shifted(-offsets), rows


@dataclass(frozen=True)
class PolygonIndexConfig:
    m: int
    p: int
    r: float
    c: float
    variant: Variant | None = Variant.MEAN_REDUCE
    delta: float = 0.1
    seed: int = 0
    # p=2 bucket width in units of the vector-space radius
    width_factor: float = 4.0

    @property
    def bounds(self) -> turning.GonBounds:
        return turning.gon_bounds(self.m)

    @property
    def omega(self) -> float:
        return self.bounds.lambda_m / 2 + TWO_PI

    @property
    def pieces(self) -> int:
        # edge-midpoint references always give m+1 pieces
        return self.m + 1

    @property
    def clone_delta(self) -> float:
        """Per-inner-query failure budget after the union bound over query clones."""
        return self.delta / (self.pieces + 1)

    def sample_count(self) -> int:
        return math.ceil(8 * (self.m + 2) * self.omega**2 / ((math.sqrt(self.c) - 1) * self.r**2) - 1e-9)

    def check(self) -> None:
        """Raise FamilyPreconditionError unless the configuration is servable."""
        if self.p not in (1, 2):
            raise FamilyPreconditionError("p must be 1 or 2")
        if self.m < 3:
            raise FamilyPreconditionError("m must be at least 3")
        if not self.c > 1:
            raise FamilyPreconditionError("c must exceed 1")
        if not self.r > 0:
            raise FamilyPreconditionError("r must be positive")
        if not 0 < self.delta < 1:
            raise FamilyPreconditionError("delta must lie in (0, 1)")
        if self.p == 1:
            if self.variant is None:
                raise FamilyPreconditionError("p=1 needs a variant")
            bound = 2.0 - self.r / self.omega
            if self.variant == Variant.MEAN_REDUCE and not self.c > bound:
                raise FamilyPreconditionError(
                    f"mean-reduce needs c > 2 - r/omega = {bound:.6g}; use the step-shift variant"
                )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.value if self.variant is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PolygonIndexConfig":
        d = dict(d)
        d["variant"] = Variant(d["variant"]) if d.get("variant") else None
        return cls(**d)


def polygon_function(P: Polygon) -> StepFunction:
    """Min-zero turning function with the edge-midpoint reference."""
    return turning.normalize_min_zero(turning.turning_function(P))


class PolygonIndex:
    """Polygon (r, cr) structure; build with ``build_polygon_index``."""

    def __init__(self, config: PolygonIndexConfig, polygons, functions, inner: index.LshIndex, parent: np.ndarray):
        self.config = config
        self.polygons = list(polygons)
        self.functions = list(functions)
        self.inner = inner
        self.parent = parent

    @property
    def family(self):
        return self.inner.family

    @property
    def params(self) -> index.IndexParams:
        return self.inner.params

    def query_batch(self, functions: list[StepFunction]) -> tuple[StepBatch, np.ndarray]:
        """Inner-structure query rows for each query function, with owner indices."""
        return _clone_rows(self.config, functions)

    def query_similar(self, Q: Polygon):
        return self.query_many([Q])[0]

    def query_many(self, queries: list[Polygon]) -> list:
        """For each query, ``(polygon id, exact distance)`` within ``c*r`` or None."""
        cfg = self.config
        for Q in queries:
            if Q.m > cfg.m:
                raise turning.PolygonError(f"query has {Q.m} vertices, index declared m={cfg.m}")
        qfuncs = [polygon_function(Q) for Q in queries]
        out = [None] * len(queries)
        if not queries or not self.polygons:
            for _ in queries:
                self.inner.counters.record(0, False)
            return out
        batch, owner = self.query_batch(qfuncs)
        qkeys = self.inner.query_keys(None, batch=batch)
        limit = cfg.c * cfg.r
        for qi, g in enumerate(qfuncs):
            checked: dict[int, float] = {}

            def accept(item: int, g=g, checked=checked):
                pid = int(self.parent[item])
                if pid not in checked:
                    checked[pid] = exact.d_slide(self.functions[pid], g, cfg.p).distance
                d = checked[pid]
                return d if d <= limit else None

            total, hit = 0, None
            for row in np.flatnonzero(owner == qi):
                hit, scanned = self.inner.scan(qkeys[row], accept)
                total += scanned
                if hit is not None:
                    break
            self.inner.counters.record(total, hit is not None)
            if hit is not None:
                pid = int(self.parent[hit[0]])
                out[qi] = (self.polygons[pid].id, hit[1])
        return out

    def stats(self) -> dict:
        s = self.inner.stats()
        s["polygons"] = len(self.polygons)
        s["inner_items"] = self.inner.n_items
        return s

    # -- persistence -------------------------------------------------------

    def save(self, path) -> None:
        b = self.config.bounds
        header = {
            "polyindex": {
                "format": FORMAT,
                "version": VERSION,
                "config": self.config.to_dict(),
                "gon_bounds": asdict(b),
                "polygons": [p.to_record() for p in self.polygons],
            }
        }
        self.inner.save(path, extra_header=header, extra_arrays={"parent": self.parent})

    @classmethod
    def load(cls, path) -> "PolygonIndex":
        inner, header, arrays = index.LshIndex.load(path)
        meta = header.get("polyindex")
        if not meta or meta.get("format") != FORMAT or meta.get("version") != VERSION:
            raise index.IndexFormatError("file does not hold a polygon index of this version")
        config = PolygonIndexConfig.from_dict(meta["config"])
        if meta["gon_bounds"] != asdict(config.bounds):
            raise index.IndexFormatError("stored m-gon bounds do not match the configuration")
        polygons = [turning.validate(r["vertices"], id=r["id"]) for r in meta["polygons"]]
        return cls(config, polygons, [polygon_function(p) for p in polygons], inner, np.asarray(arrays["parent"]))


def _clone_rows(cfg: PolygonIndexConfig, functions: list[StepFunction]) -> tuple[StepBatch, np.ndarray]:
    """Inner-structure rows (clones) for ``functions`` and the owning function index."""
    clones, owner = [], []
    for i, f in enumerate(functions):
        cs = clone_slides(f).clones
        clones.extend(cs)
        owner.extend([i] * len(cs))
    batch = StepBatch.from_functions(clones)
    owner = np.asarray(owner, dtype=np.int64)
    omega = cfg.omega
    if len(batch):
        lo, hi = float(batch.values.min()), float(batch.values.max())
        if lo < -_RANGE_TOL or hi > omega + _RANGE_TOL:
            raise AssertionError(f"slide clone range [{lo}, {hi}] escapes [0, {omega}]")
    if cfg.p == 1 and cfg.variant == Variant.STEP_SHIFT:
        batch, rows = _vertical_batch(batch)
        owner = owner[rows]
        if len(batch) and np.abs(batch.values).max() > omega + _RANGE_TOL:
            raise AssertionError("vertical clone escapes [-omega, omega]")
    elif cfg.p == 2:
        batch = batch.shifted(-batch.means())
    return batch, owner


def inner_family(cfg: PolygonIndexConfig):
    omega = cfg.omega
    if cfg.p == 1 and cfg.variant == Variant.MEAN_REDUCE:
        return families.mean_reduce_family(0.0, omega, cfg.r, cfg.c, seed=cfg.seed)
    if cfg.p == 1:
        return families.RandomPointFamily(-omega, omega, seed=cfg.seed)
    return families.discrete_sample_family(
        cfg.sample_count(), cfg.r, cfg.c, seed=cfg.seed, width=cfg.width_factor * families.discrete_sample_params(cfg.r, cfg.c)[0]
    )


def build_polygon_index(polygons: list[Polygon], config: PolygonIndexConfig) -> PolygonIndex:
    """Build the polygon structure selected by ``config``.

    Raises:
        FamilyPreconditionError: the configuration violates its c-bound or ranges.
        PolygonError: a polygon has more than ``config.m`` vertices.
    """
    config.check()
    for P in polygons:
        if P.m > config.m:
            raise turning.PolygonError(f"polygon {P.id!r} has {P.m} vertices, index declared m={config.m}")
    functions = [polygon_function(P) for P in polygons]
    batch, owner = _clone_rows(config, functions)
    fam = inner_family(config)
    p1, p2 = fam.declared(config.r, config.c)
    params = index.derive_params(len(batch), p1, p2, config.clone_delta, config.r, config.c, config.seed)
    inner = index.LshIndex.build(None, fam, params, distance="l1", batch=batch)
    return PolygonIndex(config, polygons, functions, inner, owner)


__all__ = [
    "CloneSet",
    "PolygonIndex",
    "PolygonIndexConfig",
    "Variant",
    "build_polygon_index",
    "clone_slides",
    "clone_vertical",
    "inner_family",
    "polygon_function",
]
