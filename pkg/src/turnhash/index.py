"""Amplified (r, cr) near-neighbor index over any hash family.

Each of ``tables_L`` tables concatenates ``concat_k`` draws of the family
into one composite key (AND); a query probes its key in every table (OR)
and checks candidates with an exact distance, returning the first one
within ``c * r``. Tables are stored as sorted ``uint64`` key arrays with
parallel item-id arrays, so a bucket lookup is a binary search.
"""

from __future__ import annotations

import json
import math
import os
import struct
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from turnhash import exact, families, stepfn

FORMAT = "turnhash-index"
VERSION = 1
_MAGIC = b"TURNHASH"
# multiplier stream tag for composite keys
_TAG_KEYS = 99


class IndexFormatError(ValueError):
    """Raised when an index file is malformed or from another format version."""


@dataclass(frozen=True)
class IndexParams:
    r: float
    c: float
    p1: float
    p2: float
    rho: float
    concat_k: int
    tables_L: int
    delta: float
    seed: int = 0

    @property
    def scan_budget(self) -> int:
        return 3 * self.tables_L


def derive_params(
    n: int, p1: float, p2: float, delta: float, r: float = math.nan, c: float = math.nan, seed: int = 0
) -> IndexParams:
    """Table count and key length for ``n`` items.

    ``concat_k = ceil(ln n / ln(1/p2))`` (at least 1) pushes far-item
    collisions to about one per table; ``tables_L = ceil(ln(1/delta) / p1^k)``
    makes missing a near item in every table at most ``delta``.
    """
    if not 0.0 < p2 < p1 <= 1.0:
        raise ValueError(f"need 0 < p2 < p1 <= 1, got p1={p1}, p2={p2}")
    if not 0.0 < delta < 1.0:
        raise ValueError("failure probability must lie in (0, 1)")
    k = max(1, math.ceil(math.log(max(n, 1)) / math.log(1.0 / p2) - 1e-9))
    if p1 == 1.0:
        return IndexParams(r, c, p1, p2, 0.0, k, 1, delta, seed)
    rho = math.log(1.0 / p1) / math.log(1.0 / p2)
    L = max(1, math.ceil(math.log(1.0 / delta) / p1**k - 1e-9))
    return IndexParams(r, c, p1, p2, rho, k, L, delta, seed)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("TURNHASH_THREADS", "1")))
    except ValueError:
        return 1


def _multipliers(seed: int, table: int, k: int) -> np.ndarray:
    rng = np.random.default_rng([int(seed), _TAG_KEYS, int(table)])
    return rng.integers(0, 2**63, size=k, dtype=np.uint64) * np.uint64(2) + np.uint64(1)


def composite_keys(symbols: np.ndarray, mult: np.ndarray) -> np.ndarray:
    """Hash rows of integer symbols into ``uint64`` keys (wrapping arithmetic)."""
    with np.errstate(over="ignore"):
        return (symbols.astype(np.int64).view(np.uint64) * mult[None, :]).sum(axis=1, dtype=np.uint64)


# exact distances usable for the post-filter, by name (persisted in files)
DISTANCES: dict[str, Callable] = {
    "l1": stepfn.l1_distance,
    "l2": stepfn.l2_distance,
    "d1_updown": lambda f, g: exact.d1_updown(f, g).distance,
    "d2_updown": lambda f, g: exact.d2_updown(f, g).distance,
    "euclidean": lambda u, v: float(np.linalg.norm(np.asarray(u) - np.asarray(v))),
}


class _Counters:
    def __init__(self):
        self.lock = threading.Lock()
        self.queries = 0
        self.scanned = 0
        self.max_scanned = 0
        self.hits = 0

    def record(self, scanned: int, hit: bool) -> None:
        with self.lock:
            self.queries += 1
            self.scanned += scanned
            self.max_scanned = max(self.max_scanned, scanned)
            self.hits += int(hit)


class LshIndex:
    """Immutable LSH index; see module docstring.

    Args:
        params: derived sizes and the (r, c) contract.
        family: any family exposing ``data_hash``/``query_hash``.
        keys, ids: (tables_L, n) arrays, each row sorted by key.
        items: stored objects handed to ``distance`` in the post-filter.
        distance: name in ``DISTANCES`` or a callable ``(item, query) -> float``.
    """

    def __init__(self, params: IndexParams, family, keys: np.ndarray, ids: np.ndarray, items=None, distance="l1"):
        self.params = params
        self.family = family
        self.keys = keys
        self.ids = ids
        self.items = items
        self.distance_name = distance if isinstance(distance, str) else None
        self.distance = DISTANCES[distance] if isinstance(distance, str) else distance
        self.counters = _Counters()

    # -- construction ------------------------------------------------------

    @property
    def n_items(self) -> int:
        return self.keys.shape[1]

    def draw_indices(self, table: int) -> np.ndarray:
        k = self.params.concat_k
        return np.arange(table * k, (table + 1) * k)

    def table_keys(self, batch, table: int, query: bool = False) -> np.ndarray:
        h = self.family.query_hash if query else self.family.data_hash
        sym = h(batch, self.draw_indices(table))
        return composite_keys(sym, _multipliers(self.params.seed, table, self.params.concat_k))

    @classmethod
    def build(
        cls,
        items: Sequence,
        family,
        params: IndexParams,
        distance="l1",
        batch=None,
    ) -> "LshIndex":
        """Hash every item into every table.

        Args:
            items: stored objects (step functions or vectors).
            batch: pre-built hashable form of ``items`` (defaults to a
                ``StepBatch`` of the items, or the stacked vectors).
        """
        if batch is None:
            batch = _default_batch(items)
        n = len(batch)
        L = params.tables_L
        keys = np.empty((L, n), dtype=np.uint64)
        ids = np.empty((L, n), dtype=np.int32)
        shell = cls(params, family, keys, ids, items, distance)

        def fill(t: int) -> None:
            kt = shell.table_keys(batch, t) if n else np.zeros(0, dtype=np.uint64)
            order = np.argsort(kt, kind="stable")
            keys[t] = kt[order]
            ids[t] = order

        with ThreadPoolExecutor(max_workers=_threads()) as pool:
            list(pool.map(fill, range(L)))
        return shell

    # -- querying ----------------------------------------------------------

    def query_keys(self, queries, batch=None) -> np.ndarray:
        """(n_queries, tables_L) probe keys, query-side hashes for asymmetric families."""
        if batch is None:
            batch = _default_batch(queries)
        out = np.empty((len(batch), self.params.tables_L), dtype=np.uint64)
        for t in range(self.params.tables_L):
            out[:, t] = self.table_keys(batch, t, query=True)
        return out

    def bucket(self, table: int, key) -> np.ndarray:
        row = self.keys[table]
        lo = np.searchsorted(row, key, side="left")
        hi = np.searchsorted(row, key, side="right")
        return self.ids[table, lo:hi]

    def candidates(self, qkeys: np.ndarray) -> Iterator[int]:
        """Distinct item ids in probe order (table 0 first, ids ascending)."""
        seen: set[int] = set()
        for t, key in enumerate(qkeys):
            for i in self.bucket(t, key):
                i = int(i)
                if i not in seen:
                    seen.add(i)
                    yield i

    def scan(self, qkeys: np.ndarray, accept: Callable[[int], float | None], budget: int | None = None):
        """Run ``accept`` on up to ``budget`` candidates; first non-None wins.

        Returns:
            ((id, distance) or None, number of candidates scanned)
        """
        budget = self.params.scan_budget if budget is None else budget
        scanned = 0
        for i in self.candidates(qkeys):
            if scanned >= budget:
                break
            scanned += 1
            d = accept(i)
            if d is not None:
                return (i, d), scanned
        return None, scanned

    def _accept_fn(self, q):
        limit = self.params.c * self.params.r

        def accept(i: int):
            d = float(self.distance(self.items[i], q))
            return d if d <= limit else None

        return accept

    def query(self, q):
        """Return ``(id, exact distance)`` of a stored item within ``c * r``, or None."""
        return self.query_many([q])[0]

    def query_many(self, qs: Sequence) -> list:
        """Batch form of ``query``: hash every query once per table."""
        if not len(qs) or self.n_items == 0:
            for _ in qs:
                self.counters.record(0, False)
            return [None] * len(qs)
        qkeys = self.query_keys(qs)
        out = []
        for q, row in zip(qs, qkeys):
            hit, scanned = self.scan(row, self._accept_fn(q))
            self.counters.record(scanned, hit is not None)
            out.append(hit)
        return out

    # -- diagnostics -------------------------------------------------------

    def stats(self) -> dict:
        """Bucket-size histogram and scan counters."""
        sizes = []
        for t in range(self.params.tables_L):
            if self.n_items:
                _, counts = np.unique(self.keys[t], return_counts=True)
                sizes.append(counts)
        sizes = np.concatenate(sizes) if sizes else np.zeros(0, dtype=np.int64)
        hist = np.bincount(sizes) if len(sizes) else np.zeros(1, dtype=np.int64)
        c = self.counters
        return {
            "tables": self.params.tables_L,
            "entries": int(self.keys.size),
            "buckets": int(len(sizes)),
            "bucket_size_histogram": {int(s): int(v) for s, v in enumerate(hist) if v},
            "queries": c.queries,
            "candidates_scanned": c.scanned,
            "max_scanned_per_query": c.max_scanned,
            "hits": c.hits,
        }

    # -- persistence -------------------------------------------------------

    def header(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "params": asdict(self.params),
            "family": self.family.descriptor(),
            "distance": self.distance_name,
        }

    def save(self, path, extra_header: dict | None = None, extra_arrays: dict | None = None) -> None:
        arrays = {"keys": self.keys, "ids": self.ids}
        if isinstance(self.items, families.StepBatch) or _is_function_list(self.items):
            b = self.items if isinstance(self.items, families.StepBatch) else families.as_batch(self.items)
            arrays.update(item_bps=b.breakpoints, item_vals=b.values, item_counts=b.counts)
        elif self.items is not None:
            arrays["item_vectors"] = np.asarray(self.items, dtype=float)
        arrays.update(extra_arrays or {})
        write_arrays(path, {**self.header(), **(extra_header or {})}, arrays)

    @classmethod
    def load(cls, path) -> tuple["LshIndex", dict, dict]:
        """Read an index file; returns (index, header, arrays)."""
        header, arrays = read_arrays(path)
        if header.get("format") != FORMAT or header.get("version") != VERSION:
            raise IndexFormatError(
                f"unsupported index file (format {header.get('format')!r}, version {header.get('version')!r})"
            )
        params = IndexParams(**header["params"])
        family = families.family_from_descriptor(header["family"])
        items = None
        if "item_bps" in arrays:
            b = families.StepBatch(arrays["item_bps"], arrays["item_vals"], arrays["item_counts"])
            items = [b.row(i) for i in range(len(b))]
        elif "item_vectors" in arrays:
            items = arrays["item_vectors"]
        distance = header.get("distance") or "l1"
        return cls(params, family, arrays["keys"], arrays["ids"], items, distance), header, arrays


def _is_function_list(items) -> bool:
    return isinstance(items, (list, tuple)) and len(items) > 0 and isinstance(items[0], stepfn.StepFunction)


def _default_batch(items):
    if isinstance(items, (families.StepBatch, np.ndarray)):
        return items
    items = list(items)
    if items and isinstance(items[0], stepfn.StepFunction):
        return families.StepBatch.from_functions(items)
    if not items:
        return families.StepBatch.from_functions([])
    return np.atleast_2d(np.asarray(items, dtype=float))


def build(items: Sequence, family, r: float, c: float, delta: float, seed: int = 0, distance="l1") -> LshIndex:
    """Derive parameters from the family's declared (p1, p2) at (r, c) and build.

    Raises:
        FamilyPreconditionError: the family cannot serve (r, c).
    """
    p1, p2 = family.declared(r, c)
    params = derive_params(len(items), p1, p2, delta, r, c, seed)
    return LshIndex.build(items, family, params, distance)


# -- binary container: magic, header length, JSON header, raw arrays ----------


def write_arrays(path, header: dict, arrays: dict[str, np.ndarray]) -> None:
    manifest = []
    offset = 0
    blobs = []
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr)
        manifest.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape), "offset": offset})
        blobs.append(a)
        offset += a.nbytes
    head = json.dumps({**header, "arrays": manifest}).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for a in blobs:
            fh.write(a.tobytes())


def read_arrays(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise IndexFormatError("not a turnhash index file")
        (n,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(n))
        data = fh.read()
    arrays = {}
    for spec in header.pop("arrays"):
        dt = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        arrays[spec["name"]] = np.frombuffer(data, dtype=dt, count=count, offset=spec["offset"]).reshape(spec["shape"])
    return header, arrays
