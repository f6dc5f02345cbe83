import numpy as np
import pytest

from uavroute.geodesic import DistanceCache
from uavroute.solver import SearchContext
from uavroute.terrain import GeneratorSpec, Instance, TerrainGrid, generate_instance


def flat_spec(n, k=2, size=30):
    return GeneratorSpec(width=size, height=size, K=k, N=n, obstacle_density=0.0,
                         roughness=0.0, cell_size=1.0, safety_altitude=0.0)


def flat_instance(starts, tasks, size=20, cell_size=1.0):
    return Instance(TerrainGrid.flat(size, size, cell_size), tuple(starts), tuple(tasks), "flat")


def make_ctx(instance, alpha=0.5, neighbors=10):
    from uavroute.plan import ObjectiveWeights
    return SearchContext(instance, DistanceCache(), ObjectiveWeights(alpha), neighbors)


@pytest.fixture
def wall_terrain():
    """20x20 flat grid with a wall at x=10 open only at y=0."""
    mask = np.zeros((20, 20), dtype=bool)
    mask[1:, 10] = True
    return TerrainGrid.flat(20, 20, 1.0, 0.0, mask)


@pytest.fixture(scope="session")
def obstacle_instances():
    spec = GeneratorSpec(width=40, height=40, K=2, N=8, obstacle_density=0.2, roughness=0.6,
                         cell_size=5.0, safety_altitude=20.0)
    return [generate_instance(spec, 500 + i) for i in range(5)]


@pytest.fixture(scope="session")
def random_instances():
    """Small rough-terrain instances with obstacles for solver property tests."""
    out = []
    for i in range(20):
        spec = GeneratorSpec(width=30, height=30, K=2 + i % 3, N=6 + i % 7,
                             obstacle_density=0.1, roughness=0.5, cell_size=5.0,
                             safety_altitude=20.0)
        out.append(generate_instance(spec, 900 + i))
    return out


def random_move(ctx, plan, rng, kind):
    """A random (not necessarily improving) move of one family, or None when the
    plan offers none of that kind."""
    from uavroute import solver
    seqs = plan.sequences
    nonempty = [k for k, s in enumerate(seqs) if s]
    if kind in (solver.RELOCATE, solver.KL):
        i = int(rng.choice(nonempty))
        seq = seqs[i]
        p = 0 if kind == solver.KL else int(rng.integers(len(seq)))
        if kind == solver.KL and rng.random() < 0.5:
            p = len(seq) - 1
        j = int(rng.integers(ctx.K))
        if kind == solver.KL and j == i:
            if ctx.K == 1:
                return None
            j = (i + 1) % ctx.K
        n_after = len(seqs[j]) - (1 if j == i else 0)
        q = int(rng.integers(n_after + 1))
        return solver.relocate_move(ctx, plan, seq[p], j, q, kind=kind)
    if kind == solver.SWAP:
        if len(nonempty) < 2:
            return None
        i, j = (int(v) for v in rng.choice(nonempty, 2, replace=False))
        ta = seqs[i][int(rng.integers(len(seqs[i])))]
        tb = seqs[j][int(rng.integers(len(seqs[j])))]
        qa = int(rng.integers(len(seqs[i])))
        qb = int(rng.integers(len(seqs[j])))
        return solver.swap_move(ctx, plan, ta, tb, qa, qb)
    if kind == solver.TWO_OPT:
        long = [k for k, s in enumerate(seqs) if len(s) >= 2]
        if not long:
            return None
        k = int(rng.choice(long))
        u, v = sorted(int(x) for x in rng.choice(len(seqs[k]), 2, replace=False))
        return solver.two_opt_move(ctx, plan, k, u, v)
    if kind == solver.CROSS:
        if ctx.K < 2:
            return None
        i, j = (int(v) for v in rng.choice(ctx.K, 2, replace=False))
        for _ in range(20):
            la = int(rng.integers(min(3, len(seqs[i])) + 1))
            lb = int(rng.integers(min(3, len(seqs[j])) + 1))
            if la + lb:
                break
        else:
            return None
        sa = int(rng.integers(len(seqs[i]) - la + 1))
        sb = int(rng.integers(len(seqs[j]) - lb + 1))
        return solver.cross_move(ctx, plan, i, sa, la, j, sb, lb,
                                 bool(rng.integers(2)), bool(rng.integers(2)))
    raise ValueError(kind)


def check_move_against_recompute(ctx, plan, move, rel=1e-9):
    """Apply ``move`` to a copy and compare predicted values with a full recomputation
    through the oracle; returns the worst relative error."""
    from uavroute.plan import evaluate, plan_lengths, validate_plan
    from uavroute.solver import apply_move
    after = plan.copy()
    apply_move(ctx, after, move)
    assert validate_plan(ctx.instance, after) == []
    truth = plan_lengths(ctx.instance, ctx.oracle, after)
    m = evaluate(ctx.instance, ctx.oracle, after, ctx.weights)
    before = evaluate(ctx.instance, ctx.oracle, plan, ctx.weights)
    worst = 0.0
    for k, L in move.new_lengths.items():
        worst = max(worst, abs(L - truth[k]) / max(1.0, truth[k]))
    worst = max(worst, abs(move.objective_j - m.objective_j) / max(1.0, m.objective_j))
    true_delta = m.objective_j - before.objective_j
    worst = max(worst, abs(move.delta_j - true_delta) / max(1.0, before.objective_j))
    return worst


_ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion and print it."""
    def emit(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
