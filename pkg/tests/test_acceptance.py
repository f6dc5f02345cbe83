"""Acceptance criteria 1-7.  Each test prints one PASS/FAIL line; the lines are
collected again in the terminal summary."""
import json
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import check_move_against_recompute, flat_spec, make_ctx, random_move
from oracles import brute_force_optimum, dijkstra_lengths, flood_fill, grid_graph
from uavroute import solver
from uavroute.baselines import METHODS
from uavroute.bench import run_suite, suite_from_config
from uavroute.cli import main
from uavroute.geodesic import DistanceCache, geodesic
from uavroute.plan import ObjectiveWeights, objective, validate_plan
from uavroute.solver import initial_plan, search
from uavroute.terrain import GeneratorSpec, generate_instance

IE, LPT = "iterative-exchange", "lpt-balanced"


# -- 1 ---------------------------------------------------------------------------

def test_criterion_1_small_instance_optimality(verdict):
    t0 = time.perf_counter()
    gaps, exact = [], 0
    for s in range(20):
        inst = generate_instance(flat_spec(3 + s % 5, k=2), 1000 + s)
        ctx = make_ctx(inst, 0.5)
        plan = search(inst, ctx.oracle, ctx=ctx)
        assert validate_plan(inst, plan, ctx.oracle) == []
        j = ctx.J(plan.lengths)
        opt = brute_force_optimum(ctx.matrix, inst.K, inst.N, 0.5)
        gap = (j - opt) / opt
        gaps.append(gap)
        exact += gap <= 1e-9
    secs = time.perf_counter() - t0
    ok = max(gaps) <= 0.02 and exact >= 15 and secs < 60
    verdict(1, ok, f"worst gap {100 * max(gaps):.3f}% (<=2%), exact {exact}/20 (>=15), "
                   f"{secs:.1f}s (<60s)")
    assert ok


# -- 2 and 6 share one run of the default suite -----------------------------------

@pytest.fixture(scope="module")
def default_suite_run():
    suite = suite_from_config({})
    t0 = time.perf_counter()
    res = run_suite(suite)
    return suite, res, time.perf_counter() - t0


def test_criterion_2_ranking(default_suite_run, verdict):
    suite, res, secs = default_suite_run
    assert len(suite.instances) == 10 and suite.trials == 10 and suite.weights.alpha == 0.5
    assert all(r.status == "ok" for r in res.records)
    mean = {rep.method: rep.summary for rep in res.reports}
    J = {m: s["objective_j"].mean for m, s in mean.items()}
    L = {m: s["makespan"].mean for m, s in mean.items()}
    j_ok = all(J[IE] < J[m] for m in J if m != IE)
    others = [m for m in L if m not in (IE, LPT)]
    l_ok = all(L[IE] < L[m] and L[LPT] < L[m] for m in others)
    ok = j_ok and l_ok and secs < 15 * 60
    runner_up = min((m for m in J if m != IE), key=J.get)
    worst_other_l = min(L[m] for m in others)
    verdict(2, ok, f"mean J IE {J[IE]:.2f} < best baseline {runner_up} {J[runner_up]:.2f}; "
                   f"L_max IE {L[IE]:.2f}, LPT {L[LPT]:.2f} < others' min {worst_other_l:.2f}; "
                   f"{secs:.0f}s (<900s)")
    assert ok


def test_criterion_6_monotone_convergence(default_suite_run, verdict):
    suite, res, _ = default_suite_run
    runs = [r for r in res.records if r.method == IE]
    monotone = within = True
    for r in runs:
        js = [t.objective_j for t in r.trace]
        monotone &= all(b < a for a, b in zip(js, js[1:])) and all(t.delta_j < 0 for t in r.trace)
        monotone &= all(math.isclose(b.objective_j - a.objective_j, b.delta_j,
                                     rel_tol=1e-9, abs_tol=1e-9 * a.objective_j)
                        for a, b in zip(r.trace, r.trace[1:]))
        within &= all(1 <= t.sweep <= suite.iteration_budget for t in r.trace)
        if r.trace:
            monotone &= math.isclose(js[-1], r.objective_j, rel_tol=1e-9)
    by_id = {inst.id: inst for inst in suite.instances}
    findings = []
    for (inst_id, method), plan in res.plans.items():
        if method == IE:
            findings += validate_plan(by_id[inst_id], plan, DistanceCache())
    valid = all(r.status == "ok" for r in runs) and not findings
    ok = monotone and within and valid
    moves = sum(len(r.trace) for r in runs)
    verdict(6, ok, f"{len(runs)} traces, {moves} accepted moves strictly decreasing: {monotone}; "
                   f"within I_max={suite.iteration_budget}: {within}; validate_plan clean: {valid}")
    assert ok


# -- 3 ---------------------------------------------------------------------------

def test_criterion_3_delta_equivalence(random_instances, verdict):
    rng = np.random.default_rng(2024)
    counts = {k: 0 for k in solver.MOVE_KINDS}
    worst = 0.0
    for inst in random_instances:
        ctx = make_ctx(inst)
        plan = initial_plan(ctx)
        for kind in solver.MOVE_KINDS:
            for _ in range(12):
                mv = random_move(ctx, plan, rng, kind)
                if mv is None:
                    continue
                worst = max(worst, check_move_against_recompute(ctx, plan, mv))
                counts[kind] += 1
        # also walk the plan so later moves start from non-initial states
        for finder in (solver.best_relocate, solver.best_cross):
            mv = finder(ctx, plan, 1e-9)
            if mv is not None:
                solver.apply_move(ctx, plan, mv)
    total = sum(counts.values())
    ok = total >= 1000 and len(random_instances) >= 20 and min(counts.values()) > 0 \
        and worst <= 1e-9
    verdict(3, ok, f"{total} moves on {len(random_instances)} instances "
                   f"({', '.join(f'{k} {v}' for k, v in counts.items())}); worst rel err {worst:.2e}")
    assert ok


# -- 4 ---------------------------------------------------------------------------

def test_criterion_4_astar_optimality(verdict):
    spec = GeneratorSpec(width=60, height=60, K=2, N=6, obstacle_density=0.2, roughness=0.7,
                         cell_size=5.0, safety_altitude=20.0)
    rng = np.random.default_rng(44)
    pairs = mismatches = bad_cells = bad_alt = 0
    for m in range(5):
        inst = generate_instance(spec, 4400 + m)
        t = inst.terrain
        free = flood_fill(~t.obstacle_mask, inst.starts[0])
        cells = np.argwhere(free)
        graph = grid_graph(t)
        for _ in range(100):
            a, b = (tuple(int(v) for v in cells[i][::-1]) for i in rng.choice(len(cells), 2))
            (ref,) = dijkstra_lengths(t, a, [b], graph)
            g = geodesic(t, a, b)
            pairs += 1
            mismatches += g.length != ref
            xs, ys = g.waypoints[:, 0].astype(int), g.waypoints[:, 1].astype(int)
            bad_cells += int(t.obstacle_mask[ys, xs].sum())
            bad_alt += int(np.sum(g.waypoints[:, 2] - t.elevations[ys, xs] != t.safety_altitude))
    ok = pairs == 500 and mismatches == 0 and bad_cells == 0 and bad_alt == 0
    verdict(4, ok, f"{pairs} pairs on 5 maps: {mismatches} length mismatches vs Dijkstra, "
                   f"{bad_cells} blocked waypoints, {bad_alt} clearance violations")
    assert ok


# -- 5 ---------------------------------------------------------------------------

@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(0, 1e5, allow_nan=False), min_size=1, max_size=10),
       st.floats(0, 1), st.floats(1e-3, 1e3))
def _objective_properties(lengths, alpha, c):
    w = ObjectiveWeights(alpha)
    base = objective(lengths, w).objective_j
    assert objective([c * x for x in lengths], w).objective_j == \
        pytest.approx(c * base, rel=1e-9, abs=1e-9)
    half = objective(lengths, ObjectiveWeights(0.5))
    tol = 1e-12 * max(1.0, half.total_distance)
    assert half.makespan - tol <= half.objective_j <= half.total_distance + tol


def test_criterion_5_objective_arithmetic(verdict):
    vals = [objective([3.0, 5.0], ObjectiveWeights(a)).objective_j for a in (0.5, 1.0, 0.0)]
    examples = vals == [6.5, 8.0, 5.0]
    try:
        _objective_properties()
        props = True
    except AssertionError:
        props = False
    ok = examples and props
    verdict(5, ok, f"[3,5] -> {vals} (expect [6.5, 8.0, 5.0]); homogeneity and "
                   f"L_max <= J <= L_total properties: {props}")
    assert ok


# -- 7 ---------------------------------------------------------------------------

def test_criterion_7_reproducibility(tmp_path, verdict):
    cfg = {"master_seed": 7, "trials": 3,
           "instances": {"count": 3, "width": 80, "height": 80, "K": 3, "N": 12},
           "method_options": {"genetic-mtsp": {"ga_population": 20, "ga_generations": 20}}}
    path = tmp_path / "suite.json"
    path.write_text(json.dumps(cfg))
    outs = []
    for run, jobs in (("a", "1"), ("b", "1"), ("c", "2")):
        assert main(["bench", "--config", str(path), "--out-dir", str(tmp_path / run),
                     "--jobs", jobs]) == 0
        outs.append((tmp_path / run / "results.csv").read_bytes())
    rows = outs[0].count(b"\n") - 1
    same = outs[0] == outs[1]
    ok = same and rows == 3 * 3 * len(METHODS)
    verdict(7, ok, f"two bench runs, {rows} rows: results.csv byte-identical {same}; "
                   f"parallel run (--jobs 2) identical too: {outs[0] == outs[2]}")
    assert ok
