"""Comparison planners sharing the Instance / distance-table / Plan contracts.

These are reconstructions of the standard form of each named method, not
reproductions of any particular published implementation.  Every planner
takes a :class:`SearchContext` so all methods see the same distances.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .plan import Plan, RouteOrder
from .solver import (SearchConfig, SearchContext, _best_insertion, initial_plan, order_route,
                     search)


@dataclass(frozen=True)
class BaselineConfig:
    method: str = "nearest-insertion"
    rng_seed: int = 0
    grasp_restarts: int = 10
    grasp_rcl: int = 3
    grasp_local_search: bool = True
    ga_population: int = 60
    ga_generations: int = 200
    ga_tournament: int = 3
    ga_crossover: float = 0.9
    ga_mutation: float = 0.2
    ga_elite: int = 2

    def __post_init__(self):
        for name in ("grasp_restarts", "grasp_rcl", "ga_population", "ga_generations",
                     "ga_tournament"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.ga_elite < self.ga_population:
            raise ValueError("ga_elite must lie in [0, ga_population)")
        if not (0 <= self.ga_crossover <= 1 and 0 <= self.ga_mutation <= 1):
            raise ValueError("GA rates must lie in [0, 1]")


def _finish(ctx: SearchContext, seqs: Sequence[Sequence[int]]) -> Plan:
    plan = Plan.from_sequences(seqs)
    plan.lengths = ctx.lengths(plan)
    return plan


def _ordered(ctx: SearchContext, seqs: Sequence[Sequence[int]]) -> Plan:
    return _finish(ctx, [order_route(ctx, RouteOrder(k, list(s))).task_sequence
                         for k, s in enumerate(seqs)])


# -- insertion construction (shared by nearest insertion and GRASP) -------------

def _insertion_build(ctx: SearchContext, rng: Optional[np.random.Generator],
                     rcl: int) -> List[List[int]]:
    """Nearest-insertion construction; with ``rng`` the next task is drawn from the
    ``rcl`` nearest unassigned tasks instead of always the nearest."""
    K, D = ctx.K, ctx.D
    seqs: List[List[int]] = [[] for _ in range(K)]
    # distance from each unassigned task to the closest node already in a route
    near = [min(D[k][K + t] for k in range(K)) for t in range(ctx.N)]
    left = set(range(ctx.N))
    while left:
        ranked = sorted(left, key=lambda t: (near[t], t))
        if rng is None or rcl == 1:
            t = ranked[0]
        else:
            t = ranked[int(rng.integers(min(rcl, len(ranked))))]
        best = (math.inf, 0, 0)
        for k in range(K):
            d, q = _best_insertion(D, ctx.nodes(k, seqs[k]), K + t)
            if (d, k, q) < best:
                best = (d, k, q)
        _, k, q = best
        seqs[k].insert(q, t)
        left.discard(t)
        row = D[K + t]
        for u in left:
            if row[K + u] < near[u]:
                near[u] = row[K + u]
    return seqs


def nearest_insertion(ctx: SearchContext) -> Plan:
    """Repeatedly take the unassigned task nearest to any routed node and insert it
    at the cheapest position over all routes."""
    return _finish(ctx, _insertion_build(ctx, None, 1))


def randomized_round_robin(ctx: SearchContext, seed: int) -> Plan:
    rng = np.random.default_rng(seed)
    order = rng.permutation(ctx.N).tolist()
    seqs = [order[k::ctx.K] for k in range(ctx.K)]
    return _ordered(ctx, seqs)


def lpt_balanced(ctx: SearchContext) -> Plan:
    """The iterative-exchange initialisation without the exchange loop."""
    return initial_plan(ctx)


def hungarian_insertion(ctx: SearchContext) -> Plan:
    """Rounds of min-cost matching between route ends and unassigned tasks."""
    K, D = ctx.K, ctx.D
    seqs: List[List[int]] = [[] for _ in range(K)]
    ends = list(range(K))
    left = list(range(ctx.N))
    while left:
        cost = np.array([[D[ends[k]][K + t] for t in left] for k in range(K)])
        rows, cols = linear_sum_assignment(cost)
        taken = set()
        for k, c in zip(rows.tolist(), cols.tolist()):
            t = left[c]
            seqs[k].append(t)
            ends[k] = K + t
            taken.add(t)
        left = [t for t in left if t not in taken]
    return _ordered(ctx, seqs)


# -- MST cut ---------------------------------------------------------------------

def minimum_spanning_tree(weights: Sequence[Sequence[float]]) -> List[Tuple[int, int, float]]:
    """Prim's algorithm on a dense symmetric matrix; ties go to the lower index."""
    n = len(weights)
    if n == 0:
        return []
    in_tree = [False] * n
    best = [math.inf] * n
    link = [-1] * n
    best[0] = 0.0
    edges = []
    for _ in range(n):
        u = min((v for v in range(n) if not in_tree[v]), key=lambda v: (best[v], v))
        in_tree[u] = True
        if link[u] >= 0:
            a, b = sorted((link[u], u))
            edges.append((a, b, weights[a][b]))
        row = weights[u]
        for v in range(n):
            if not in_tree[v] and row[v] < best[v]:
                best[v] = row[v]
                link[v] = u
    return edges


def _components(n: int, edges) -> List[int]:
    label = list(range(n))

    def find(x):
        while label[x] != x:
            label[x] = label[label[x]]
            x = label[x]
        return x

    for a, b, _ in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            label[max(ra, rb)] = min(ra, rb)
    return [find(x) for x in range(n)]


def mst_cut(weights: Sequence[Sequence[float]], K: int) -> Tuple[List[Tuple[int, int, float]], List[int]]:
    """Remove the heaviest K-1 tree edges that each separate two start vertices
    (vertices 0..K-1).  Returns the removed edges and a component label per vertex."""
    n = len(weights)
    kept = minimum_spanning_tree(weights)
    removed = []
    for e in sorted(kept, key=lambda e: (-e[2], e[0], e[1])):
        if len(removed) == K - 1:
            break
        trial = [x for x in kept if x != e]
        comp = _components(n, trial)
        # the removed edge must leave a start on both of its sides
        ca, cb = comp[e[0]], comp[e[1]]
        if any(comp[s] == ca for s in range(K)) and any(comp[s] == cb for s in range(K)):
            kept = trial
            removed.append(e)
    return removed, _components(n, kept)


def mst_cut_nn(ctx: SearchContext) -> Plan:
    K = ctx.K
    _, comp = mst_cut(ctx.D, K)
    seqs = [[t for t in range(ctx.N) if comp[K + t] == comp[k]] for k in range(K)]
    return _ordered(ctx, seqs)


# -- GRASP -----------------------------------------------------------------------

def _random_two_opt(ctx: SearchContext, k: int, seq: List[int], rng: np.random.Generator,
                    eps_rel: float = 1e-9) -> List[int]:
    """Open-path 2-opt scanning reversals in a random order, first improvement."""
    D = ctx.D
    n = len(seq)
    if n < 2:
        return seq
    pairs = [(u, v) for u in range(n - 1) for v in range(u + 1, n)]
    improved = True
    while improved:
        improved = False
        nodes = ctx.nodes(k, seq)
        eps = eps_rel * max(1.0, ctx.seq_length(k, seq))
        for idx in rng.permutation(len(pairs)).tolist():
            u, v = pairs[idx]
            a, b, c = nodes[u], nodes[u + 1], nodes[v + 1]
            delta = D[a][c] - D[a][b]
            if v + 1 < n:
                d = nodes[v + 2]
                delta += D[b][d] - D[c][d]
            if delta < -eps:
                seq[u:v + 1] = seq[u:v + 1][::-1]
                improved = True
                break
    return seq


def grasp_two_opt(ctx: SearchContext, config: BaselineConfig = BaselineConfig()) -> Plan:
    """Best-of-restarts randomized insertion construction plus randomized 2-opt.

    Restart r draws from its own child stream of the seed, so a run with more
    restarts always contains the runs of a shorter one.
    """
    streams = np.random.SeedSequence(config.rng_seed).spawn(config.grasp_restarts)
    best, best_j = None, math.inf
    for ss in streams:
        rng = np.random.default_rng(ss)
        seqs = _insertion_build(ctx, rng, config.grasp_rcl)
        if config.grasp_local_search:
            seqs = [_random_two_opt(ctx, k, s, rng) for k, s in enumerate(seqs)]
        plan = _finish(ctx, seqs)
        j = ctx.J(plan.lengths)
        if j < best_j:
            best, best_j = plan, j
    return best


# -- genetic algorithm -----------------------------------------------------------

def decode(perm: Sequence[int], cuts: Sequence[int], K: int) -> List[List[int]]:
    """Split a task permutation at K-1 sorted cut points into K routes."""
    bounds = [0] + list(cuts) + [len(perm)]
    return [list(perm[bounds[k]:bounds[k + 1]]) for k in range(K)]


def _order_crossover(p1: np.ndarray, p2: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = len(p1)
    a, b = sorted(rng.choice(n + 1, size=2, replace=False).tolist())
    child = np.full(n, -1, dtype=np.int64)
    child[a:b] = p1[a:b]
    used = set(p1[a:b].tolist())
    fill = [g for g in np.roll(p2, -b).tolist() if g not in used]
    slots = [(b + i) % n for i in range(n - (b - a))]
    for s, g in zip(slots, fill):
        child[s] = g
    return child


@dataclass
class GAResult:
    plan: Plan
    history: List[float]  # best J after each generation (index 0 = initial population)


def genetic_mtsp_run(ctx: SearchContext, config: BaselineConfig = BaselineConfig()) -> GAResult:
    rng = np.random.default_rng(config.rng_seed)
    N, K = ctx.N, ctx.K
    P = config.ga_population

    def fitness(perm, cuts):
        seqs = decode(perm.tolist(), cuts.tolist(), K)
        return ctx.J([ctx.seq_length(k, s) for k, s in enumerate(seqs)])

    def random_cuts():
        return np.sort(rng.integers(0, N + 1, size=K - 1))

    pop = [(rng.permutation(N), random_cuts()) for _ in range(P)]
    fit = [fitness(p, c) for p, c in pop]
    history = [min(fit)]
    for _ in range(config.ga_generations):
        order = sorted(range(P), key=lambda i: (fit[i], i))
        nxt = [pop[i] for i in order[:config.ga_elite]]
        nfit = [fit[i] for i in order[:config.ga_elite]]
        while len(nxt) < P:
            parents = []
            for _ in range(2):
                entrants = rng.choice(P, size=min(config.ga_tournament, P), replace=False)
                parents.append(min(entrants.tolist(), key=lambda i: (fit[i], i)))
            (p1, c1), (p2, c2) = pop[parents[0]], pop[parents[1]]
            if rng.random() < config.ga_crossover:
                perm = _order_crossover(p1, p2, rng)
                cuts = (c1 if rng.random() < 0.5 else c2).copy()
            else:
                perm, cuts = p1.copy(), c1.copy()
            if rng.random() < config.ga_mutation:
                if K > 1 and rng.random() < 0.5:
                    cuts[int(rng.integers(K - 1))] = int(rng.integers(0, N + 1))
                    cuts = np.sort(cuts)
                elif N > 1:
                    i, j = rng.choice(N, size=2, replace=False).tolist()
                    perm[i], perm[j] = perm[j], perm[i]
            nxt.append((perm, cuts))
            nfit.append(fitness(perm, cuts))
        pop, fit = nxt, nfit
        history.append(min(fit))
    best = min(range(P), key=lambda i: (fit[i], i))
    perm, cuts = pop[best]
    return GAResult(_finish(ctx, decode(perm.tolist(), cuts.tolist(), K)), history)


def genetic_mtsp(ctx: SearchContext, config: BaselineConfig = BaselineConfig()) -> Plan:
    return genetic_mtsp_run(ctx, config).plan


# -- registry --------------------------------------------------------------------

PlanFn = Callable[[SearchContext, int, dict], Plan]


def _iterative_exchange(ctx, seed, opts):
    cfg = SearchConfig(weights=ctx.weights, rng_seed=seed,
                       **{k: v for k, v in opts.items() if k in SearchConfig.__dataclass_fields__
                          and k not in ("weights", "rng_seed")})
    return search(ctx.instance, ctx.oracle, cfg, ctx=ctx, trace=opts.get("trace"))


def _baseline_cfg(seed, opts, method):
    fields = BaselineConfig.__dataclass_fields__
    return replace(BaselineConfig(), method=method, rng_seed=seed,
                   **{k: v for k, v in opts.items() if k in fields and k not in ("method", "rng_seed")})


METHODS: Dict[str, PlanFn] = {
    "iterative-exchange": _iterative_exchange,
    "nearest-insertion": lambda ctx, seed, opts: nearest_insertion(ctx),
    "round-robin": lambda ctx, seed, opts: randomized_round_robin(ctx, seed),
    "lpt-balanced": lambda ctx, seed, opts: lpt_balanced(ctx),
    "hungarian-insertion": lambda ctx, seed, opts: hungarian_insertion(ctx),
    "mst-cut-nn": lambda ctx, seed, opts: mst_cut_nn(ctx),
    "grasp-2opt": lambda ctx, seed, opts: grasp_two_opt(ctx, _baseline_cfg(seed, opts, "grasp-2opt")),
    "genetic-mtsp": lambda ctx, seed, opts: genetic_mtsp(ctx, _baseline_cfg(seed, opts, "genetic-mtsp")),
}

RANDOMIZED = frozenset({"round-robin", "grasp-2opt", "genetic-mtsp"})


def run_method(name: str, ctx: SearchContext, seed: int = 0, **opts) -> Plan:
    try:
        fn = METHODS[name]
    except KeyError:
        raise ValueError(f"unknown method {name!r}; choose from {sorted(METHODS)}") from None
    return fn(ctx, seed, opts)
