"""Polygons, their turning functions and m-gon range bounds."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from turnhash import stepfn
from turnhash.stepfn import TWO_PI, StepFunction

# sine of the smallest turn still considered a real corner
COLLINEAR_TOL = 1e-10
# reference fractions this close to a vertex are snapped onto it
VERTEX_SNAP = 1e-12


class PolygonError(ValueError):
    """Raised when a vertex list is not a valid simple polygon."""


@dataclass(frozen=True, eq=False)
class Polygon:
    vertices: np.ndarray
    id: str = ""

    @property
    def m(self) -> int:
        return len(self.vertices)

    def to_record(self) -> dict:
        return {"id": self.id, "vertices": [[float(x), float(y)] for x, y in self.vertices]}

    def to_json(self) -> str:
        return json.dumps(self.to_record())

    @classmethod
    def from_record(cls, rec: dict) -> "Polygon":
        return cls(np.asarray(rec["vertices"], dtype=float), str(rec.get("id", "")))


@dataclass(frozen=True)
class GonBounds:
    m: int
    a_m: float
    b_m: float
    lambda_m: float
    span_bound: float


def signed_area(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _orient(p, q, r) -> float:
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


def _on_segment(p, q, r) -> bool:
    # r known collinear with pq
    return min(p[0], q[0]) <= r[0] <= max(p[0], q[0]) and min(p[1], q[1]) <= r[1] <= max(p[1], q[1])


def segments_intersect(p1, p2, q1, q2) -> bool:
    """Closed-segment intersection test (touching counts)."""
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return True
    if d1 == 0 and _on_segment(q1, q2, p1):
        return True
    if d2 == 0 and _on_segment(q1, q2, p2):
        return True
    if d3 == 0 and _on_segment(p1, p2, q1):
        return True
    if d4 == 0 and _on_segment(p1, p2, q2):
        return True
    return False


def is_simple(vertices: np.ndarray) -> bool:
    m = len(vertices)
    for i in range(m):
        a, b = vertices[i], vertices[(i + 1) % m]
        for j in range(i + 2, m):
            if i == 0 and j == m - 1:
                continue  # adjacent through the closing edge
            c, d = vertices[j], vertices[(j + 1) % m]
            if segments_intersect(a, b, c, d):
                return False
    return True


def validate(vertices, id: str = "") -> Polygon:
    """Check a raw vertex list and return a counterclockwise Polygon.

    Raises:
        PolygonError: fewer than 3 vertices, a zero-length edge, three
            consecutive collinear vertices, or a self-intersection.
    """
    if isinstance(vertices, Polygon):
        id = id or vertices.id
        vertices = vertices.vertices
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2:
        raise PolygonError("vertices must be a list of 2D points")
    m = len(v)
    if m < 3:
        raise PolygonError(f"polygon needs at least 3 vertices, got {m}")
    if not np.all(np.isfinite(v)):
        raise PolygonError("vertex coordinates must be finite")
    edges = np.roll(v, -1, axis=0) - v
    lengths = np.hypot(edges[:, 0], edges[:, 1])
    if np.any(lengths <= 0):
        raise PolygonError("zero-length edge")
    prev = np.roll(edges, 1, axis=0)
    cross = prev[:, 0] * edges[:, 1] - prev[:, 1] * edges[:, 0]
    sines = cross / (lengths * np.roll(lengths, 1))
    if np.any(np.abs(sines) <= COLLINEAR_TOL):
        i = int(np.argmin(np.abs(sines)))
        raise PolygonError(f"collinear consecutive vertices around vertex {i}")
    if not is_simple(v):
        raise PolygonError("polygon is self-intersecting")
    if signed_area(v) < 0:
        v = np.concatenate([v[:1], v[:0:-1]])
    v = v.copy()
    v.flags.writeable = False
    return Polygon(v, id)


def edge_geometry(p: Polygon):
    """Unit-perimeter edge lengths, edge angles and signed exterior angles.

    ``turns[i]`` is the turn taken at the end of edge ``i`` (at vertex i+1).
    """
    v = p.vertices
    edges = np.roll(v, -1, axis=0) - v
    lengths = np.hypot(edges[:, 0], edges[:, 1])
    angles = np.arctan2(edges[:, 1], edges[:, 0])
    nxt = np.roll(edges, -1, axis=0)
    cross = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
    dot = edges[:, 0] * nxt[:, 0] + edges[:, 1] * nxt[:, 1]
    turns = np.arctan2(cross, dot)
    return lengths / lengths.sum(), angles, turns


def turning_function(p: Polygon, reference: float | None = None) -> StepFunction:
    """Turning function of ``p`` measured from a perimeter fraction.

    Args:
        p: a validated (counterclockwise) polygon.
        reference: counterclockwise perimeter fraction from vertex 0 where
            the traversal starts, in [0, 1). Defaults to the midpoint of the
            first edge.
    """
    fracs, angles, turns = edge_geometry(p)
    m = p.m
    if reference is None:
        reference = fracs[0] / 2
    if not 0.0 <= reference < 1.0:
        raise PolygonError("reference must be a perimeter fraction in [0, 1)")
    starts = np.concatenate([[0.0], np.cumsum(fracs)[:-1]])
    e = int(np.searchsorted(starts, reference, side="right") - 1)
    offset = reference - starts[e]
    if offset <= VERTEX_SNAP:
        offset = 0.0
    elif fracs[e] - offset <= VERTEX_SNAP:
        e, offset = (e + 1) % m, 0.0
    order = [(e + i) % m for i in range(m)]
    t0 = float(np.mod(angles[e], TWO_PI))
    # step values along the traversal, one per edge in order
    vals = t0 + np.concatenate([[0.0], np.cumsum(turns[order[:-1]])])
    widths = fracs[order].copy()
    if offset > 0.0:
        widths[0] -= offset
        widths = np.append(widths, offset)
        # the starting edge is revisited after one full counterclockwise loop
        vals = np.append(vals, t0 + TWO_PI)
    bps = np.concatenate([[0.0], np.cumsum(widths)])
    bps[-1] = 1.0
    return stepfn.make(bps, vals)


def normalize_min_zero(f: StepFunction) -> StepFunction:
    return stepfn.shift(f, -stepfn.minimum(f))


def gon_bounds(m: int) -> GonBounds:
    if m < 3:
        raise ValueError("m-gon bounds need m >= 3")
    h = m // 2
    a = -(h - 1) * math.pi
    b = (h + 3) * math.pi
    lam = (2 * h + 2) * math.pi
    return GonBounds(m=m, a_m=a, b_m=b, lambda_m=lam, span_bound=lam / 2)


# -- extremal and random polygon generators ---------------------------------

# smallest spiral slack representable with comfortable float64 headroom
MIN_SPIRAL_EPSILON = 1e-6
# where the zig-zag vertices sit along the edge they split
_ZIG_FORWARD, _ZIG_BACK = 0.75, 0.25


def _spiral_core(k: int) -> np.ndarray:
    """Unsquashed 2k-gon whose turn sequence is L^(k+1) R^(k-1).

    Starts from a quadrilateral with turns L, L, L, R (at vertices 1, 2, 3,
    0) and repeatedly splits the edge between the last left turn and the
    first right turn into a thin zig-zag, adding one left and one right
    near-U-turn each time. Every zig-zag lives in a neighbourhood of the edge
    it replaces, so simplicity is kept by shrinking its offset until the
    polygon stays simple.
    """
    v = [np.array(p, dtype=float) for p in [(1, 1), (2, 3), (0, 0), (3, 2)]]
    last_left = 3
    for _ in range(k - 2):
        p, q = v[last_left], v[(last_left + 1) % len(v)]
        d = q - p
        n = np.array([-d[1], d[0]])
        offset = 0.5
        while True:
            x = p + _ZIG_FORWARD * d - offset * n
            y = p + _ZIG_BACK * d + offset * n
            trial = v[: last_left + 1] + [x, y] + v[last_left + 1 :]
            if is_simple(np.array(trial)):
                break
            offset *= 0.8
            if offset < 1e-12:
                raise PolygonError(f"spiral construction ran out of precision at m={2 * k}")
        v = trial
        last_left += 1
    return np.array(v)


def _rotate(v: np.ndarray, beta: float) -> np.ndarray:
    c, s = math.cos(beta), math.sin(beta)
    return v @ np.array([[c, s], [-s, c]])


def _turn_profile(v: np.ndarray) -> np.ndarray:
    """Turning-function values relative to the first edge, one per edge."""
    e = np.roll(v, -1, axis=0) - v
    nxt = np.roll(e, -1, axis=0)
    turns = np.arctan2(e[:, 0] * nxt[:, 1] - e[:, 1] * nxt[:, 0], np.sum(e * nxt, axis=1))
    return np.concatenate([[0.0], np.cumsum(turns[:-1])])


def _split_second_edge(v: np.ndarray) -> np.ndarray:
    """Insert a slightly bent midpoint vertex on edge 1 (odd vertex counts).

    The bend goes to the right of the edge so the two neighbouring left
    U-turns get slightly smaller and never wrap past pi.
    """
    a, b = v[1], v[2]
    d = b - a
    n = np.array([-d[1], d[0]])
    bend = 1e-3
    while bend > 1e-9:
        w = np.concatenate([v[:2], [a + 0.5 * d - bend * n], v[2:]])
        if is_simple(w):
            return w
        bend *= 0.5
    raise PolygonError("could not place the extra vertex of an odd spiral")


def make_spiral_polygon(m: int, epsilon: float, mirrored: bool = False, id: str = "") -> Polygon:
    """Polygon whose turning function nearly reaches the m-gon range bound.

    The result has 2*floor(m/2) near-U-turns arranged as a rolled, folded
    strip: floor(m/2)+1 consecutive left turns followed by floor(m/2)-1 right
    turns. Starting just below angle 2pi on the first edge, the turning
    function climbs to within ``epsilon`` of (floor(m/2)+3)pi. The mirror
    image, started just above 0, dips to within ``epsilon`` of
    -(floor(m/2)-1)pi. Odd m adds one slightly bent midpoint vertex.

    Args:
        m: vertex count, at least 4.
        epsilon: allowed slack below the bound.
        mirrored: build the reflected polygon attaining the lower bound.

    Raises:
        ValueError: epsilon below 1e-6 or m < 4.
        PolygonError: the construction exceeds double precision (very large m).
    """
    if epsilon < MIN_SPIRAL_EPSILON:
        raise ValueError(f"epsilon must be at least {MIN_SPIRAL_EPSILON} for double precision")
    if m < 4:
        raise ValueError("spiral polygons need m >= 4")
    k = m // 2
    core = _spiral_core(k)
    # squash vertically until the left-turn run loses at most epsilon/2
    squash = 1.0
    while True:
        v = core * np.array([1.0, squash])
        if m % 2:
            v = _split_second_edge(v)
        rel = _turn_profile(v)
        if (k + 1) * math.pi - rel.max() <= epsilon / 2:
            break
        squash *= 0.25
    if mirrored:
        # reflect, restore counterclockwise order, and start where the
        # right-turn run begins so the profile dips first
        v = v[::-1] * np.array([-1.0, 1.0])
        rel = _turn_profile(v)
        start = int(np.argmax(rel))
        v = np.roll(v, -start, axis=0)
        t0 = epsilon / 4
    else:
        t0 = TWO_PI - epsilon / 4
    angle0 = math.atan2(v[1, 1] - v[0, 1], v[1, 0] - v[0, 0])
    v = _rotate(v, t0 - angle0)
    v = v - v.min(axis=0)
    v = v / np.abs(v).max()
    return validate(v, id=id)


def regular_polygon(m: int, radius: float = 1.0, phase: float = 0.0, id: str = "") -> Polygon:
    theta = phase + TWO_PI * np.arange(m) / m
    return validate(np.column_stack([radius * np.cos(theta), radius * np.sin(theta)]), id=id)


def random_polygon(m: int, rng: np.random.Generator, id: str = "", max_tries: int = 1000) -> Polygon:
    """Random simple m-gon by rejection sampling.

    Vertices sit at sorted random angles around the origin with radii drawn
    from [0.2, 1], which gives star-shaped but often non-convex polygons;
    draws that fail validation are rejected.
    """
    for _ in range(max_tries):
        theta = np.sort(rng.uniform(0.0, TWO_PI, m))
        radius = rng.uniform(0.2, 1.0, m)
        try:
            return validate(np.column_stack([radius * np.cos(theta), radius * np.sin(theta)]), id=id)
        except PolygonError:
            continue
    raise PolygonError(f"no valid {m}-gon after {max_tries} draws")


def perturbed_polygon(
    base: Polygon, sigma: float, rng: np.random.Generator, id: str = "", max_tries: int = 1000
) -> Polygon:
    """Jitter every vertex of ``base`` by Gaussian noise of scale ``sigma``."""
    for _ in range(max_tries):
        try:
            return validate(base.vertices + rng.normal(0.0, sigma, base.vertices.shape), id=id)
        except PolygonError:
            continue
    raise PolygonError(f"no valid perturbation after {max_tries} draws")


# -- JSON-lines datasets -----------------------------------------------------


def write_dataset(path, polygons: Sequence[Polygon], m: int | None = None) -> None:
    """Write polygons as JSON lines, optionally led by a ``{"meta": {"m": m}}`` line."""
    with open(path, "w") as fh:
        if m is not None:
            fh.write(json.dumps({"meta": {"m": int(m)}}) + "\n")
        for p in polygons:
            fh.write(p.to_json() + "\n")


def read_dataset(path) -> tuple[list[Polygon], int | None]:
    """Read and validate a JSON-lines polygon file.

    Returns:
        The polygons and the declared m (None when no header is present).

    Raises:
        PolygonError: a record fails validation or an id repeats.
    """
    polygons: list[Polygon] = []
    declared = None
    seen = set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if "meta" in rec:
                declared = rec["meta"].get("m")
                continue
            try:
                p = validate(rec["vertices"], id=str(rec.get("id", lineno)))
            except PolygonError as exc:
                raise PolygonError(f"line {lineno}: {exc}") from exc
            if p.id in seen:
                raise PolygonError(f"line {lineno}: duplicate id {p.id!r}")
            seen.add(p.id)
            polygons.append(p)
    return polygons, declared
