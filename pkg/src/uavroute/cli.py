"""Command line entry point: ``uavroute {generate,solve,bench,report}``."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from .baselines import METHODS, run_method
from .bench import (emit_report, generate_suite_instances, load_config, overlay_csv,
                    report_from_results, run_suite, suite_from_config)
from .geodesic import DistanceCache
from .plan import ObjectiveWeights, objective, save_plan, validate_plan
from .solver import SearchContext, write_trace
from .terrain import GeneratorSpec, load_instance, save_instance


def _generate(args) -> int:
    spec = GeneratorSpec(width=args.width, height=args.height, K=args.k, N=args.n,
                         obstacle_density=args.density, roughness=args.roughness,
                         cell_size=args.cell_size, safety_altitude=args.safety_altitude)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for inst in generate_suite_instances(spec, args.count, args.seed):
        save_instance(inst, out / f"{inst.id}.txt")
        print(out / f"{inst.id}.txt")
    return 0


def _solve(args) -> int:
    inst = load_instance(args.instance)
    weights = ObjectiveWeights(args.alpha)
    cache = DistanceCache()
    ctx = SearchContext(inst, cache, weights)
    trace = []
    opts = {}
    if args.method == "iterative-exchange":
        opts = {"iteration_budget": args.imax, "trace": trace}
    t0 = time.perf_counter()
    plan = run_method(args.method, ctx, args.seed, **opts)
    secs = time.perf_counter() - t0
    findings = validate_plan(inst, plan, cache)
    if findings:
        print("invalid plan: " + "; ".join(findings), file=sys.stderr)
        return 1
    m = objective(plan.lengths, weights)
    print(f"{inst.id} {args.method}: J={m.objective_j:.4f} L_total={m.total_distance:.4f} "
          f"L_max={m.makespan:.4f} ({secs:.3f}s)")
    for k, r in enumerate(plan.routes):
        print(f"  route {k}: {r.task_sequence} length={plan.lengths[k]:.4f}")
    if args.out:
        save_plan(args.out, plan, m, weights, inst.id, args.method)
    if args.trace:
        write_trace(trace, args.trace)
    if args.overlay:
        Path(args.overlay).write_text(overlay_csv(inst, plan), encoding="utf-8")
    return 0


def _bench(args) -> int:
    if args.config:
        suite = load_config(args.config)
    else:
        suite = suite_from_config({})
    if args.trials is not None:
        suite.trials = args.trials
    if args.methods:
        unknown = [m for m in args.methods if m not in METHODS]
        if unknown:
            print(f"unknown methods: {unknown}", file=sys.stderr)
            return 2
        suite.methods = tuple(args.methods)
    result = run_suite(suite, jobs=args.jobs)
    emit_report(result, args.out_dir)
    print((Path(args.out_dir) / "summary.txt").read_text(encoding="utf-8"), end="")
    return 0


def _report(args) -> int:
    for p in report_from_results(args.results, args.out_dir):
        print(p)
    print((Path(args.out_dir) / "summary.txt").read_text(encoding="utf-8"), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uavroute", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a suite of random instances")
    g.add_argument("--out-dir", required=True)
    g.add_argument("--count", type=int, default=10)
    g.add_argument("--seed", type=int, default=0, help="master seed")
    g.add_argument("--width", type=int, default=200)
    g.add_argument("--height", type=int, default=200)
    g.add_argument("--k", type=int, default=4, help="number of UAVs")
    g.add_argument("--n", type=int, default=30, help="number of tasks")
    g.add_argument("--density", type=float, default=0.1, help="obstacle density in [0, 1)")
    g.add_argument("--roughness", type=float, default=0.5)
    g.add_argument("--cell-size", type=float, default=5.0)
    g.add_argument("--safety-altitude", type=float, default=20.0)
    g.set_defaults(func=_generate)

    s = sub.add_parser("solve", help="plan one instance")
    s.add_argument("instance")
    s.add_argument("--method", default="iterative-exchange", choices=sorted(METHODS))
    s.add_argument("--alpha", type=float, default=0.5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--imax", type=int, default=100, help="sweep budget (iterative-exchange)")
    s.add_argument("--out", help="plan file to write")
    s.add_argument("--trace", help="trace CSV to write (iterative-exchange)")
    s.add_argument("--overlay", help="route-overlay CSV to write")
    s.set_defaults(func=_solve)

    b = sub.add_parser("bench", help="run a benchmark suite")
    b.add_argument("--config", help="suite config JSON (defaults when omitted)")
    b.add_argument("--out-dir", required=True)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--trials", type=int)
    b.add_argument("--methods", nargs="+")
    b.set_defaults(func=_bench)

    r = sub.add_parser("report", help="re-aggregate a results.csv")
    r.add_argument("results")
    r.add_argument("--out-dir", required=True)
    r.set_defaults(func=_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
