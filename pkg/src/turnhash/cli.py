"""Command-line entry point: ``turnhash <command> [options]``.

Commands:
    gen             write a JSON-lines polygon dataset
    dist            exact D_p distance between two polygons of a dataset
    build           build a polygon index file
    query           query an index with polygons from a file or a JSON record
    eval-collision  Monte-Carlo collision rate of a hash family vs its closed form
    bench           recall / candidate-scan table over a sweep of (r, c)

Exit codes: 0 success, 2 invalid input, 3 parameter precondition violated.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time

import numpy as np

from turnhash import exact, families, index, polyindex, stepfn, turning
from turnhash.families import FamilyPreconditionError

EXIT_OK, EXIT_INVALID, EXIT_PRECONDITION = 0, 2, 3


def fmt(x) -> str:
    """CSV float formatting: 9 significant digits."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.9g}"
    return "" if x is None else str(x)


def _writer(path):
    fh = open(path, "w", newline="") if path and path != "-" else sys.stdout
    return fh, csv.writer(fh, lineterminator="\n")


# -- gen -------------------------------------------------------------------------


def cmd_gen(args) -> int:
    rng = np.random.default_rng(args.seed)
    polys = []
    for i in range(args.count):
        pid = f"{args.kind}-{args.m}-{i}"
        if args.kind == "random":
            polys.append(turning.random_polygon(args.m, rng, id=pid))
        elif args.kind == "regular":
            polys.append(turning.regular_polygon(args.m, phase=rng.uniform(0, stepfn.TWO_PI), id=pid))
        elif args.kind == "perturbed":
            base = turning.regular_polygon(args.m)
            polys.append(turning.perturbed_polygon(base, args.sigma, rng, id=pid))
        else:
            mirrored = args.mirrored if args.mirrored else False
            polys.append(turning.make_spiral_polygon(args.m, args.epsilon, mirrored=mirrored, id=pid))
    turning.write_dataset(args.output, polys, m=args.m)
    return EXIT_OK


# -- dist ------------------------------------------------------------------------


def _by_id(polys, pid):
    for p in polys:
        if p.id == pid:
            return p
    raise turning.PolygonError(f"no polygon with id {pid!r}")


def cmd_dist(args) -> int:
    polys, _ = turning.read_dataset(args.input)
    a = exact.polygon_distance(_by_id(polys, args.a), _by_id(polys, args.b), args.p)
    fh, w = _writer(args.output)
    w.writerow(["id_a", "id_b", "p", "distance", "alpha", "u"])
    w.writerow([args.a, args.b, args.p, fmt(a.distance), fmt(a.alpha), fmt(a.u)])
    if fh is not sys.stdout:
        fh.close()
    return EXIT_OK


# -- build / query -----------------------------------------------------------------


def _config(args, m) -> polyindex.PolygonIndexConfig:
    variant = polyindex.Variant(args.variant) if args.p == 1 else None
    return polyindex.PolygonIndexConfig(m, args.p, args.r, args.c, variant, args.delta, args.seed)


def _declared_m(args, polys, declared):
    m = args.m or declared or max((p.m for p in polys), default=3)
    return int(m)


def cmd_build(args) -> int:
    polys, declared = turning.read_dataset(args.input)
    cfg = _config(args, _declared_m(args, polys, declared))
    ix = polyindex.build_polygon_index(polys, cfg)
    ix.save(args.output)
    s = ix.stats()
    print(
        f"polygons={s['polygons']} inner_items={s['inner_items']} concat_k={ix.params.concat_k} "
        f"tables_L={ix.params.tables_L} p1={fmt(ix.params.p1)} p2={fmt(ix.params.p2)} rho={fmt(ix.params.rho)}",
        file=sys.stderr,
    )
    return EXIT_OK


def _query_polygons(args):
    if args.record:
        rec = json.loads(args.record)
        return [turning.validate(rec["vertices"], id=str(rec.get("id", "query")))]
    polys, _ = turning.read_dataset(args.input)
    return polys


def cmd_query(args) -> int:
    ix = polyindex.PolygonIndex.load(args.index)
    queries = _query_polygons(args)
    results = ix.query_many(queries)
    fh, w = _writer(args.output)
    w.writerow(["query_id", "hit_id", "distance"])
    for q, res in zip(queries, results):
        w.writerow([q.id, res[0] if res else "", fmt(res[1]) if res else ""])
    if fh is not sys.stdout:
        fh.close()
    return EXIT_OK


# -- eval-collision ------------------------------------------------------------------


def _parse_function(text: str) -> stepfn.StepFunction:
    text = text.strip()
    try:
        return stepfn.constant(float(text))
    except ValueError:
        return stepfn.StepFunction.from_dict(json.loads(text))


def cmd_eval_collision(args) -> int:
    f, g = _parse_function(args.f), _parse_function(args.g)
    idx = np.arange(args.trials)
    if args.family == "h1":
        fam = families.RandomPointFamily(args.a, args.b, seed=args.seed)
        d = stepfn.l1_distance(f, g)
        hf, hg = fam.data_hash([f], idx)[0], fam.data_hash([g], idx)[0]
        theory = fam.collision_prob(d)
    elif args.family == "h2":
        fam = families.AsymmetricTwoPointFamily(args.a, args.b, seed=args.seed)
        d = stepfn.l2_distance(f, g)
        hf, hg = fam.data_hash([f], idx)[0], fam.query_hash([g], idx)[0]
        theory = fam.collision_prob(d)
    else:
        fam = families.mean_reduce_family(args.a, args.b, args.r, args.c, seed=args.seed)
        d = stepfn.l1_distance(stepfn.mean_reduce(f), stepfn.mean_reduce(g))
        hf, hg = fam.data_hash([f], idx)[0], fam.data_hash([g], idx)[0]
        theory = fam.collision_prob(d)
    for h in (f, g):
        if stepfn.minimum(h) < args.a or stepfn.maximum(h) > args.b:
            raise stepfn.StepFunctionError(f"function range escapes [{args.a}, {args.b}]")
    emp = float(np.mean(hf == hg)) if args.trials else float("nan")
    fh, w = _writer(args.output)
    w.writerow(["family", "distance", "trials", "empirical", "theoretical", "abs_diff"])
    w.writerow([args.family, fmt(d), args.trials, fmt(emp), fmt(theory), fmt(abs(emp - theory))])
    if fh is not sys.stdout:
        fh.close()
    return EXIT_OK


# -- bench -------------------------------------------------------------------------------

BENCH_COLUMNS = [
    "n", "m", "p", "variant", "r", "c", "delta", "concat_k", "tables_L", "scan_budget", "queries",
    "recall", "filter_precision", "mean_candidates", "max_candidates",
]


def parse_sweep(text: str) -> list[tuple[float, float]]:
    """``"r:c,r:c"`` -> [(r, c), ...]; an empty string is an empty sweep."""
    out = []
    for part in filter(None, (s.strip() for s in text.split(","))):
        r, c = part.split(":")
        out.append((float(r), float(c)))
    return out


def planted_query(P: turning.Polygon, r: float, p: int, rng: np.random.Generator, qid: str) -> turning.Polygon:
    """Rotated, rescaled, jittered copy of ``P`` at oracle-verified D_p <= r."""
    beta = rng.uniform(0, stepfn.TWO_PI)
    c, s = np.cos(beta), np.sin(beta)
    base = turning.validate(P.vertices @ np.array([[c, s], [-s, c]]) * rng.uniform(0.5, 2.0), id=qid)
    sigma = 0.01 * np.ptp(P.vertices, axis=0).max()
    for _ in range(60):
        try:
            Q = turning.perturbed_polygon(base, sigma, rng, id=qid, max_tries=20)
        except turning.PolygonError:
            Q = None
        if Q is not None and exact.polygon_distance(P, Q, p).distance <= r:
            return Q
        sigma /= 2
    return base


def run_bench(polys, m, p, variant, sweep, repetitions, queries, delta, seed, timing=False) -> list[list[str]]:
    rows = [BENCH_COLUMNS + (["build_seconds", "query_seconds"] if timing else [])]
    for r, c in sweep:
        v = polyindex.Variant(variant) if p == 1 else None
        cfg = polyindex.PolygonIndexConfig(m, p, r, c, v, delta, seed)
        t0 = time.perf_counter()
        ix = polyindex.build_polygon_index(polys, cfg)
        t_build = time.perf_counter() - t0
        rng = np.random.default_rng([seed, 7])
        qs = []
        for rep in range(repetitions):
            picks = rng.choice(len(polys), size=min(queries, len(polys)), replace=False)
            qs.extend(planted_query(polys[i], r, p, rng, f"q{rep}-{i}") for i in picks)
        before = ix.stats()
        t0 = time.perf_counter()
        res = ix.query_many(qs)
        t_query = time.perf_counter() - t0
        after = ix.stats()
        scanned = after["candidates_scanned"] - before["candidates_scanned"]
        hits = sum(x is not None for x in res)
        per_query = scanned / len(qs) if qs else 0.0
        row = [
            len(polys), m, p, variant if p == 1 else "", r, c, delta, ix.params.concat_k, ix.params.tables_L,
            ix.params.scan_budget, len(qs), hits / len(qs) if qs else float("nan"),
            hits / scanned if scanned else float("nan"), per_query, after["max_scanned_per_query"],
        ]
        if timing:
            row += [t_build, t_query]
        rows.append([fmt(x) for x in row])
    return rows


def cmd_bench(args) -> int:
    polys, declared = turning.read_dataset(args.input)
    m = _declared_m(args, polys, declared)
    rows = run_bench(
        polys, m, args.p, args.variant, parse_sweep(args.sweep), args.repetitions, args.queries,
        args.delta, args.seed, timing=args.timing,
    )
    fh, w = _writer(args.output)
    w.writerows(rows)
    if fh is not sys.stdout:
        fh.close()
    return EXIT_OK


# -- wiring -----------------------------------------------------------------------------


def _index_options(sp, with_m=True):
    if with_m:
        sp.add_argument("--m", type=int, default=None, help="declared vertex bound (default: file header)")
    sp.add_argument("--p", type=int, choices=[1, 2], default=1)
    sp.add_argument("--r", type=float, required=True)
    sp.add_argument("--c", type=float, required=True)
    sp.add_argument("--variant", choices=[v.value for v in polyindex.Variant], default="mean-reduce")
    sp.add_argument("--delta", type=float, default=0.1)
    sp.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="turnhash", description="Turning-function LSH for polygons.")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("gen", help="generate a polygon dataset")
    sp.add_argument("--kind", choices=["random", "regular", "perturbed", "spiral"], required=True)
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--count", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--output", required=True)
    sp.add_argument("--epsilon", type=float, default=0.1, help="spiral slack")
    sp.add_argument("--mirrored", action="store_true", help="spiral attaining the lower bound")
    sp.add_argument("--sigma", type=float, default=0.02, help="perturbation scale")
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("dist", help="exact polygon distance")
    sp.add_argument("--input", required=True)
    sp.add_argument("--a", required=True, help="first polygon id")
    sp.add_argument("--b", required=True, help="second polygon id")
    sp.add_argument("--p", type=int, choices=[1, 2], default=1)
    sp.add_argument("--output", default="-")
    sp.set_defaults(func=cmd_dist)

    sp = sub.add_parser("build", help="build a polygon index")
    sp.add_argument("--input", required=True)
    sp.add_argument("--output", required=True, help="index file")
    _index_options(sp)
    sp.set_defaults(func=cmd_build)

    sp = sub.add_parser("query", help="query a polygon index")
    sp.add_argument("--index", required=True)
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="JSON-lines file of query polygons")
    src.add_argument("--record", help="one polygon record as JSON")
    sp.add_argument("--output", default="-")
    sp.set_defaults(func=cmd_query)

    sp = sub.add_parser("eval-collision", help="empirical vs closed-form collision rate")
    sp.add_argument("--family", choices=["h1", "h2", "mean-reduce"], required=True)
    sp.add_argument("--f", required=True, help="constant or step-function JSON")
    sp.add_argument("--g", required=True, help="constant or step-function JSON")
    sp.add_argument("--a", type=float, default=0.0)
    sp.add_argument("--b", type=float, default=1.0)
    sp.add_argument("--r", type=float, default=None, help="mean-reduce family r")
    sp.add_argument("--c", type=float, default=None, help="mean-reduce family c")
    sp.add_argument("--trials", type=int, default=100000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--output", default="-")
    sp.set_defaults(func=cmd_eval_collision)

    sp = sub.add_parser("bench", help="recall and candidate-scan benchmark")
    sp.add_argument("--input", required=True)
    sp.add_argument("--output", default="-")
    sp.add_argument("--sweep", default="", help='comma-separated "r:c" pairs')
    sp.add_argument("--repetitions", type=int, default=1)
    sp.add_argument("--queries", type=int, default=20, help="planted queries per repetition")
    sp.add_argument("--m", type=int, default=None)
    sp.add_argument("--p", type=int, choices=[1, 2], default=1)
    sp.add_argument("--variant", choices=[v.value for v in polyindex.Variant], default="mean-reduce")
    sp.add_argument("--delta", type=float, default=0.1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--timing", action="store_true", help="add wall-time columns (not byte-stable)")
    sp.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "family", None) == "mean-reduce" and (args.r is None or args.c is None):
        print("error: mean-reduce needs --r and --c", file=sys.stderr)
        return EXIT_PRECONDITION
    try:
        return args.func(args)
    except FamilyPreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (
        turning.PolygonError,
        stepfn.StepFunctionError,
        index.IndexFormatError,
        json.JSONDecodeError,
        KeyError,
        FileNotFoundError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
