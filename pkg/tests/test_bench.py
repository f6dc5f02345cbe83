import json
import math

import numpy as np
import pytest

from oracles import sample_quantiles, two_pass_mean_std
from uavroute import bench
from uavroute.baselines import METHODS
from uavroute.bench import (BenchmarkSuite, RunRecord, aggregate, boxplot_stats, build_reports,
                            emit_report, read_results, report_from_results, results_csv,
                            run_suite, suite_from_config, summary_rows, summary_table)
from uavroute.cli import main
from uavroute.geodesic import DistanceCache
from uavroute.plan import load_plan, validate_plan
from uavroute.solver import SearchContext, read_trace
from uavroute.terrain import load_instance

TINY = {"master_seed": 3, "trials": 2,
        "instances": {"count": 2, "width": 30, "height": 30, "K": 2, "N": 6,
                      "obstacle_density": 0.1, "cell_size": 5.0},
        "method_options": {"genetic-mtsp": {"ga_population": 10, "ga_generations": 5}}}


def test_aggregate_examples():
    s = aggregate([2.0, 4.0])
    assert s.mean == 3.0 and s.std == pytest.approx(math.sqrt(2))
    assert aggregate([7.5]).mean == 7.5 and aggregate([7.5]).std == 0.0
    assert math.isnan(aggregate([]).mean)


def test_aggregate_two_pass_oracle():
    vals = np.random.default_rng(11).normal(1000, 50, 100).tolist()
    mean, std = two_pass_mean_std(vals)
    s = aggregate(vals)
    assert s.mean == pytest.approx(mean, rel=1e-12)
    assert s.std == pytest.approx(std, rel=1e-10)


def test_boxplot_quantiles_match_sorted_oracle():
    vals = np.random.default_rng(12).random(37).tolist()
    s = boxplot_stats(vals)
    ref = sample_quantiles(vals, [0, 0.25, 0.5, 0.75, 1])
    assert [s[k] for k in ("min", "q1", "median", "q3", "max")] == pytest.approx(ref, rel=1e-12)


def _records():
    out = []
    for method, js in (("b", [5.0, 7.0]), ("a", [9.0, 9.0]), ("c", [1.0, 2.0])):
        for t, j in enumerate(js):
            out.append(RunRecord("inst-000", method, t, 10 + t, j, j + 1.0, j / 2))
    out.append(RunRecord("inst-000", "a", 2, 99, status="error: boom"))
    return out


def test_results_csv_round_trip(tmp_path):
    recs = _records()
    p = tmp_path / "r.csv"
    p.write_text(results_csv(recs))
    back = read_results(p)
    assert len(back) == len(recs)
    for a, b in zip(recs, back):
        assert (a.instance, a.method, a.trial, a.seed, a.status) == \
            (b.instance, b.method, b.trial, b.seed, b.status)
        for m in bench.METRICS:
            x, y = getattr(a, m), getattr(b, m)
            assert (math.isnan(x) and math.isnan(y)) or x == y
    assert results_csv(back) == results_csv(recs)


def test_summary_sorted_and_failures():
    reports = build_reports(_records(), ["a", "b", "c"])
    assert [r.method for r in summary_rows(reports)] == ["c", "b", "a"]
    a = next(r for r in reports if r.method == "a")
    assert a.failures == 1 and a.summary["objective_j"].std == 0.0
    table = summary_table(reports, ["hdr"]).splitlines()
    assert table[0] == "# hdr"
    assert [ln.split()[0] for ln in table[3:]] == ["c", "b", "a"]


def test_report_from_results(tmp_path):
    (tmp_path / "r.csv").write_text(results_csv(_records()))
    paths = report_from_results(tmp_path / "r.csv", tmp_path / "out")
    assert {p.name for p in paths} == {"summary.txt", "summary.csv", "boxplot.csv"}
    rows = (tmp_path / "out" / "boxplot.csv").read_text().splitlines()
    assert rows[0] == "method,n,min,q1,median,q3,max"
    assert rows[1] == "b,2,5.0,5.5,6.0,6.5,7.0"


def test_config_validation(tmp_path):
    with pytest.raises(ValueError, match="unknown config keys"):
        suite_from_config({"trails": 3})
    with pytest.raises(ValueError, match="unknown generator keys"):
        suite_from_config({"instances": {"colour": 1}})
    with pytest.raises(ValueError, match="unknown methods"):
        suite_from_config({**TINY, "methods": ["annealing"]})
    with pytest.raises(ValueError):
        suite_from_config({**TINY, "trials": 0})


def test_config_instance_files(tmp_path):
    out = tmp_path / "gen"
    assert main(["generate", "--out-dir", str(out), "--count", "2", "--width", "25",
                 "--height", "25", "--k", "2", "--n", "4", "--seed", "5"]) == 0
    cfg = {"instance_files": ["gen/inst-000.txt", "gen/inst-001.txt"], "trials": 1,
           "methods": ["nearest-insertion"]}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    suite = bench.load_config(tmp_path / "c.json")
    assert [i.id for i in suite.instances] == ["inst-000", "inst-001"]
    assert suite.generator is None


def test_single_run_suite_has_zero_std():
    suite = suite_from_config({**TINY, "trials": 1, "methods": ["lpt-balanced"],
                               "instances": {**TINY["instances"], "count": 1}})
    res = run_suite(suite)
    assert len(res.reports) == 1
    assert all(s.std == 0.0 for s in res.reports[0].summary.values())


def test_suite_reproducible_and_deterministic_methods_constant():
    suite = suite_from_config(TINY)
    a = run_suite(suite)
    b = run_suite(suite_from_config(TINY))
    assert results_csv(a.records) == results_csv(b.records)
    assert len(a.records) == 2 * 2 * len(METHODS)
    assert all(r.status == "ok" for r in a.records)
    for rep in a.reports:
        if rep.method in ("nearest-insertion", "lpt-balanced", "hungarian-insertion",
                          "mst-cut-nn", "iterative-exchange"):
            by_inst = {}
            for r in rep.records:
                by_inst.setdefault(r.instance, set()).add(r.objective_j)
            assert all(len(v) == 1 for v in by_inst.values())


def test_trial_seeds_distinct():
    suite = suite_from_config(TINY)
    seeds = {suite.trial_seed(i, m, t) for i in range(2) for m in METHODS for t in range(3)}
    assert len(seeds) == 2 * len(METHODS) * 3


def test_parallel_matches_serial():
    suite = suite_from_config({**TINY, "methods": ["nearest-insertion", "round-robin"]})
    assert results_csv(run_suite(suite, jobs=2).records) == results_csv(run_suite(suite).records)


def test_shared_cache_equals_cold_cache():
    suite = suite_from_config(TINY)
    inst = suite.instances[0]
    warm = SearchContext(inst, DistanceCache(), suite.weights)
    from uavroute.baselines import run_method
    for method in ("nearest-insertion", "iterative-exchange", "hungarian-insertion"):
        cold = SearchContext(inst, DistanceCache(), suite.weights)
        assert run_method(method, warm, 1).sequences == run_method(method, cold, 1).sequences


def test_failure_is_recorded(monkeypatch):
    def boom(ctx, seed, opts):
        raise RuntimeError("exploded")
    monkeypatch.setitem(METHODS, "nearest-insertion", boom)
    suite = suite_from_config({**TINY, "methods": ["nearest-insertion", "lpt-balanced"]})
    res = run_suite(suite)
    bad = [r for r in res.records if r.method == "nearest-insertion"]
    assert all(r.status.startswith("error: RuntimeError: exploded") for r in bad)
    assert all(r.status == "ok" for r in res.records if r.method == "lpt-balanced")
    rep = next(r for r in res.reports if r.method == "nearest-insertion")
    assert rep.failures == 4


def test_emit_report_files(tmp_path):
    suite = suite_from_config({**TINY, "methods": ["iterative-exchange", "nearest-insertion"]})
    res = run_suite(suite)
    emit_report(res, tmp_path)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"results.csv", "timings.csv", "summary.txt", "summary.csv", "boxplot.csv",
            "overlays", "traces.csv"} <= names
    overlay = (tmp_path / "overlays" / "inst-000__iterative-exchange.csv").read_text().splitlines()
    assert overlay[0] == "route,seq,x,y,z"
    assert load_instance(tmp_path / "overlays" / "inst-000.txt") == suite.instances[0]
    assert "master_seed=3" in (tmp_path / "summary.txt").read_text()


# -- CLI -------------------------------------------------------------------------

def test_cli_generate_and_solve(tmp_path, capsys):
    gen = tmp_path / "gen"
    assert main(["generate", "--out-dir", str(gen), "--count", "1", "--width", "30",
                 "--height", "30", "--k", "2", "--n", "6"]) == 0
    inst_path = gen / "inst-000.txt"
    inst = load_instance(inst_path)
    plan_path, trace_path, overlay_path = tmp_path / "p.txt", tmp_path / "t.csv", tmp_path / "o.csv"
    assert main(["solve", str(inst_path), "--alpha", "0.5", "--imax", "20", "--out", str(plan_path),
                 "--trace", str(trace_path), "--overlay", str(overlay_path)]) == 0
    out = capsys.readouterr().out
    assert "iterative-exchange: J=" in out
    rec = load_plan(plan_path)
    assert validate_plan(inst, rec.plan, DistanceCache()) == []
    assert rec.method == "iterative-exchange"
    read_trace(trace_path)
    assert overlay_path.read_text().startswith("route,seq,x,y,z")
    assert main(["solve", str(inst_path), "--method", "genetic-mtsp", "--seed", "3"]) == 0


def test_cli_bench_and_report(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(TINY))
    out = tmp_path / "run"
    assert main(["bench", "--config", str(cfg), "--out-dir", str(out), "--trials", "1",
                 "--methods", "nearest-insertion", "lpt-balanced"]) == 0
    text = capsys.readouterr().out
    assert "nearest-insertion" in text and "Objective J" in text
    rows = (out / "results.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 * 2
    assert main(["bench", "--config", str(cfg), "--out-dir", str(out),
                 "--methods", "annealing"]) == 2
    assert main(["report", str(out / "results.csv"), "--out-dir", str(tmp_path / "rep")]) == 0
    assert (tmp_path / "rep" / "summary.csv").exists()


def test_cli_rejects_bad_args():
    with pytest.raises(SystemExit):
        main([])
    with pytest.raises(SystemExit):
        main(["solve", "x.txt", "--method", "nope"])
