"""Benchmark suites: run every method on shared instances, aggregate, write reports.

Suite config (JSON; every key optional, defaults shown)::

    {
      "master_seed": 0,
      "trials": 10,
      "alpha": 0.5,
      "iteration_budget": 100,
      "methods": ["iterative-exchange", "nearest-insertion", ...],
      "instances": {"count": 10, "width": 200, "height": 200, "K": 4, "N": 30,
                    "obstacle_density": 0.1, "roughness": 0.5, "cell_size": 5.0,
                    "safety_altitude": 20.0},
      "instance_files": [],
      "method_options": {"genetic-mtsp": {"ga_generations": 200}}
    }

``instance_files`` (paths relative to the config file) replaces generation
when non-empty.

Outputs of :func:`emit_report`:

* ``results.csv``   one row per run: instance,method,trial,seed,objective_j,
  total_distance,makespan,status.  Byte-identical for identical inputs.
* ``timings.csv``   instance,method,trial,solve_seconds (plus oracle warm-up
  rows with method ``<oracle>``).
* ``summary.txt`` / ``summary.csv``  mean and sample std per metric, rows by
  ascending mean J.
* ``boxplot.csv``   method,n,min,q1,median,q3,max of J over all runs.
* ``overlays/<instance>.txt`` terrain snapshot (instance format) and
  ``overlays/<instance>__<method>.csv`` waypoint polylines
  (route,seq,x,y,z with x, y in meters).
* ``traces.csv``    accepted-move traces of iterative-exchange runs.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .baselines import METHODS, run_method
from .geodesic import DistanceCache, Unreachable, stitch_route
from .plan import ObjectiveWeights, Plan, objective, validate_plan
from .solver import SearchContext, TraceRecord
from .terrain import GeneratorSpec, Instance, generate_instance, load_instance, save_instance

log = logging.getLogger(__name__)

METRICS = ("objective_j", "total_distance", "makespan")
DEFAULT_METHODS = tuple(METHODS)


@dataclass
class BenchmarkSuite:
    instances: List[Instance]
    trials: int = 10
    weights: ObjectiveWeights = ObjectiveWeights(0.5)
    methods: Sequence[str] = DEFAULT_METHODS
    method_options: Dict[str, dict] = field(default_factory=dict)
    iteration_budget: int = 100
    master_seed: int = 0
    generator: Optional[GeneratorSpec] = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.instances:
            raise ValueError("suite has no instances")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {sorted(METHODS)}")

    def trial_seed(self, instance_index: int, method: str, trial: int) -> int:
        ss = np.random.SeedSequence([self.master_seed, 1, instance_index,
                                     zlib.crc32(method.encode()), trial])
        return int(ss.generate_state(1)[0])

    def header(self) -> List[str]:
        lines = [f"master_seed={self.master_seed} trials={self.trials} "
                 f"alpha={self.weights.alpha} iteration_budget={self.iteration_budget}",
                 f"instances={len(self.instances)} methods={','.join(self.methods)}"]
        if self.generator is not None:
            lines.append("generator " + " ".join(f"{k}={v}" for k, v in asdict(self.generator).items()))
        return lines


def instance_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([master_seed, 0, index]).generate_state(1)[0])


def generate_suite_instances(spec: GeneratorSpec, count: int, master_seed: int) -> List[Instance]:
    return [generate_instance(spec, instance_seed(master_seed, i), f"inst-{i:03d}")
            for i in range(count)]


def load_config(path) -> BenchmarkSuite:
    path = Path(path)
    cfg = json.loads(path.read_text(encoding="utf-8"))
    return suite_from_config(cfg, base_dir=path.parent)


def suite_from_config(cfg: dict, base_dir=Path(".")) -> BenchmarkSuite:
    known = {"master_seed", "trials", "alpha", "iteration_budget", "methods", "instances",
             "instance_files", "method_options"}
    extra = set(cfg) - known
    if extra:
        raise ValueError(f"unknown config keys: {sorted(extra)}")
    master = int(cfg.get("master_seed", 0))
    files = cfg.get("instance_files") or []
    gen = None
    if files:
        instances = [load_instance(Path(base_dir) / f) for f in files]
    else:
        icfg = dict(cfg.get("instances", {}))
        count = int(icfg.pop("count", 10))
        valid = {f.name for f in fields(GeneratorSpec)}
        bad = set(icfg) - valid
        if bad:
            raise ValueError(f"unknown generator keys: {sorted(bad)}")
        gen = GeneratorSpec(**icfg)
        instances = generate_suite_instances(gen, count, master)
    return BenchmarkSuite(instances=instances,
                          trials=int(cfg.get("trials", 10)),
                          weights=ObjectiveWeights(float(cfg.get("alpha", 0.5))),
                          methods=tuple(cfg.get("methods", DEFAULT_METHODS)),
                          method_options=dict(cfg.get("method_options", {})),
                          iteration_budget=int(cfg.get("iteration_budget", 100)),
                          master_seed=master,
                          generator=gen)


@dataclass
class RunRecord:
    instance: str
    method: str
    trial: int
    seed: int
    objective_j: float = math.nan
    total_distance: float = math.nan
    makespan: float = math.nan
    status: str = "ok"
    seconds: float = 0.0
    trace: List[TraceRecord] = field(default_factory=list)


@dataclass
class MetricSummary:
    mean: float
    std: float


@dataclass
class TrialReport:
    method: str
    records: List[RunRecord]
    summary: Dict[str, MetricSummary]
    mean_seconds: float
    failures: int


@dataclass
class SuiteResult:
    suite: BenchmarkSuite
    records: List[RunRecord]
    reports: List[TrialReport]
    oracle_seconds: Dict[str, float]
    plans: Dict[tuple, Plan]  # (instance id, method) -> plan of trial 0


def aggregate(values: Sequence[float]) -> MetricSummary:
    """Mean and sample (n - 1) standard deviation; a single value has std 0."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return MetricSummary(math.nan, math.nan)
    if arr.size == 1:
        return MetricSummary(float(arr[0]), 0.0)
    return MetricSummary(float(arr.mean()), float(arr.std(ddof=1)))


def _run_instance(suite: BenchmarkSuite, index: int):
    inst = suite.instances[index]
    t0 = time.perf_counter()
    cache = DistanceCache()
    ctx = SearchContext(inst, cache, suite.weights)
    warm = time.perf_counter() - t0
    records, plans = [], {}
    for method in suite.methods:
        opts = dict(suite.method_options.get(method, {}))
        if method == "iterative-exchange":
            opts.setdefault("iteration_budget", suite.iteration_budget)
        for trial in range(suite.trials):
            seed = suite.trial_seed(index, method, trial)
            rec = RunRecord(inst.id, method, trial, seed)
            trace: List[TraceRecord] = []
            if method == "iterative-exchange":
                opts["trace"] = trace
            t1 = time.perf_counter()
            try:
                plan = run_method(method, ctx, seed, **opts)
                rec.seconds = time.perf_counter() - t1
                findings = validate_plan(inst, plan)
                if findings:
                    raise RuntimeError("invalid plan: " + "; ".join(findings[:3]))
                m = objective(ctx.lengths(plan), suite.weights)
                rec.objective_j, rec.total_distance, rec.makespan = (
                    m.objective_j, m.total_distance, m.makespan)
                rec.trace = trace
                if trial == 0:
                    plans[(inst.id, method)] = plan
            except Exception as exc:  # recorded, never aborts the suite
                rec.seconds = time.perf_counter() - t1
                rec.status = f"error: {type(exc).__name__}: {exc}".replace("\n", " ")
                log.warning("%s/%s trial %d failed: %s", inst.id, method, trial, exc)
            records.append(rec)
    return index, records, plans, warm


def run_suite(suite: BenchmarkSuite, jobs: int = 1) -> SuiteResult:
    """Run every (instance, method, trial); output order is independent of ``jobs``."""
    results = {}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = [pool.submit(_run_instance, suite, i) for i in range(len(suite.instances))]
            for f in futs:
                idx, recs, plans, warm = f.result()
                results[idx] = (recs, plans, warm)
    else:
        for i in range(len(suite.instances)):
            idx, recs, plans, warm = _run_instance(suite, i)
            results[idx] = (recs, plans, warm)
    records, plans, oracle = [], {}, {}
    for i in sorted(results):
        recs, p, warm = results[i]
        records += recs
        plans.update(p)
        oracle[suite.instances[i].id] = warm
    return SuiteResult(suite, records, build_reports(records, suite.methods), oracle, plans)


def build_reports(records: Sequence[RunRecord], methods: Sequence[str]) -> List[TrialReport]:
    reports = []
    for method in methods:
        recs = [r for r in records if r.method == method]
        ok = [r for r in recs if r.status == "ok"]
        summary = {m: aggregate([getattr(r, m) for r in ok]) for m in METRICS}
        secs = float(np.mean([r.seconds for r in recs])) if recs else math.nan
        reports.append(TrialReport(method, recs, summary, secs, len(recs) - len(ok)))
    return reports


# -- writers ---------------------------------------------------------------------

RESULT_FIELDS = ["instance", "method", "trial", "seed", "objective_j", "total_distance",
                 "makespan", "status"]


def results_csv(records: Sequence[RunRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_FIELDS)
    for r in records:
        w.writerow([r.instance, r.method, r.trial, r.seed, repr(r.objective_j),
                    repr(r.total_distance), repr(r.makespan), r.status])
    return buf.getvalue()


def read_results(path) -> List[RunRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [RunRecord(r["instance"], r["method"], int(r["trial"]), int(r["seed"]),
                      float(r["objective_j"]), float(r["total_distance"]), float(r["makespan"]),
                      r["status"]) for r in rows]


def summary_rows(reports: Sequence[TrialReport]) -> List[TrialReport]:
    def key(rep):
        j = rep.summary["objective_j"].mean
        return (math.isnan(j), j if not math.isnan(j) else 0.0, rep.method)
    return sorted(reports, key=key)


def summary_table(reports: Sequence[TrialReport], header: Sequence[str] = ()) -> str:
    lines = [f"# {h}" for h in header]
    cols = ("Objective J", "Total distance", "Makespan")
    rows = []
    for rep in summary_rows(reports):
        cells = [f"{rep.summary[m].mean:.4f} ± {rep.summary[m].std:.4f}" for m in METRICS]
        rows.append([rep.method] + cells + [str(rep.failures)])
    head = ["Method", *cols, "Failures"]
    widths = [max(len(r[i]) for r in rows + [head]) for i in range(len(head))]
    fmt = lambda r: "  ".join(c.ljust(widths[i]) for i, c in enumerate(r)).rstrip()
    lines.append(fmt(head))
    lines.append("  ".join("-" * w for w in widths))
    lines += [fmt(r) for r in rows]
    return "\n".join(lines) + "\n"


def summary_csv(reports: Sequence[TrialReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "runs", "failures"] + [f"{m}_{s}" for m in METRICS for s in ("mean", "std")])
    for rep in summary_rows(reports):
        row = [rep.method, len(rep.records), rep.failures]
        for m in METRICS:
            row += [repr(rep.summary[m].mean), repr(rep.summary[m].std)]
        w.writerow(row)
    return buf.getvalue()


def boxplot_stats(values: Sequence[float]) -> Dict[str, float]:
    arr = np.asarray(values, dtype=float)
    q = np.quantile(arr, [0.0, 0.25, 0.5, 0.75, 1.0])
    return dict(zip(("min", "q1", "median", "q3", "max"), (float(v) for v in q)))


def boxplot_csv(records: Sequence[RunRecord], methods: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "n", "min", "q1", "median", "q3", "max"])
    for method in methods:
        vals = [r.objective_j for r in records if r.method == method and r.status == "ok"]
        if not vals:
            continue
        s = boxplot_stats(vals)
        w.writerow([method, len(vals)] + [repr(s[k]) for k in ("min", "q1", "median", "q3", "max")])
    return buf.getvalue()


def traces_csv(records: Sequence[RunRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["instance", "trial", "sweep", "move", "delta_j", "objective_j",
                "total_distance", "makespan"])
    for r in records:
        for t in r.trace:
            w.writerow([r.instance, r.trial, t.sweep, t.kind, repr(t.delta_j),
                        repr(t.objective_j), repr(t.total_distance), repr(t.makespan)])
    return buf.getvalue()


def overlay_csv(instance: Instance, plan: Plan) -> str:
    """Stitched 3D polylines per route (x, y in meters, z at clearance altitude)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["route", "seq", "x", "y", "z"])
    cs = instance.terrain.cell_size
    for k, r in enumerate(plan.routes):
        traj = stitch_route(instance.terrain, instance.starts[k],
                            [instance.tasks[t] for t in r.task_sequence])
        for i, (x, y, z) in enumerate(traj.waypoints):
            w.writerow([k, i, repr(float(x * cs)), repr(float(y * cs)), repr(float(z))])
    return buf.getvalue()


def emit_report(result: SuiteResult, out_dir, formats: Sequence[str] = ("table", "csv", "boxplot-data", "route-overlay")) -> List[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, text):
        p = out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8")
        written.append(p)

    suite = result.suite
    if "csv" in formats:
        put("results.csv", results_csv(result.records))
        put("summary.csv", summary_csv(result.reports))
        tbuf = io.StringIO()
        w = csv.writer(tbuf, lineterminator="\n")
        w.writerow(["instance", "method", "trial", "solve_seconds"])
        for inst_id, secs in result.oracle_seconds.items():
            w.writerow([inst_id, "<oracle>", "", f"{secs:.6f}"])
        for r in result.records:
            w.writerow([r.instance, r.method, r.trial, f"{r.seconds:.6f}"])
        put("timings.csv", tbuf.getvalue())
        if any(r.trace for r in result.records):
            put("traces.csv", traces_csv(result.records))
    if "table" in formats:
        put("summary.txt", summary_table(result.reports, suite.header()))
    if "boxplot-data" in formats:
        put("boxplot.csv", boxplot_csv(result.records, suite.methods))
    if "route-overlay" in formats:
        by_id = {inst.id: inst for inst in suite.instances}
        for inst in suite.instances:
            p = out / "overlays" / f"{inst.id}.txt"
            p.parent.mkdir(parents=True, exist_ok=True)
            save_instance(inst, p)
            written.append(p)
        for (inst_id, method), plan in sorted(result.plans.items()):
            try:
                put(f"overlays/{inst_id}__{method}.csv", overlay_csv(by_id[inst_id], plan))
            except Unreachable as exc:
                log.warning("overlay %s/%s skipped: %s", inst_id, method, exc)
    return written


def report_from_results(results_path, out_dir, methods: Optional[Sequence[str]] = None) -> List[Path]:
    """Re-aggregate a results.csv into summary and box-plot files."""
    records = read_results(results_path)
    if methods is None:
        methods = list(dict.fromkeys(r.method for r in records))
    reports = build_reports(records, methods)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {"summary.txt": summary_table(reports, [f"re-aggregated from {Path(results_path).name}"]),
             "summary.csv": summary_csv(reports),
             "boxplot.csv": boxplot_csv(records, methods)}
    paths = []
    for name, text in files.items():
        (out / name).write_text(text, encoding="utf-8")
        paths.append(out / name)
    return paths
