"""Iterative-exchange local search for the multi-start open mTSP.

The search state is a :class:`Plan` over anchor indices: starts are anchors
``0..K-1`` and task ``t`` is anchor ``K + t``.  Every neighbourhood evaluates
candidate moves from a handful of edge replacements against cached route
lengths, then applies the single best strictly-improving move.

Trace format (CSV, written by :func:`write_trace`)::

    sweep,move,delta_j,objective_j,total_distance,makespan
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .geodesic import DistanceCache, oracle_distance, pairwise_matrix, refresh_degraded
from .plan import ObjectiveWeights, Plan, RouteOrder, objective, validate_plan
from .terrain import Instance

RELOCATE = "Relocate"
SWAP = "Swap"
TWO_OPT = "TwoOptIntra"
CROSS = "CrossExchange"
KL = "KLRebalance"
MOVE_KINDS = (RELOCATE, SWAP, TWO_OPT, CROSS, KL)

CRITICAL_BAND = 0.05


@dataclass(frozen=True)
class SearchConfig:
    weights: ObjectiveWeights = ObjectiveWeights()
    iteration_budget: int = 100
    candidate_neighbors: int = 10
    rng_seed: int = 0
    epsilon_improve: float = 1e-9
    max_chain: int = 3
    debug: bool = False

    def __post_init__(self):
        if self.iteration_budget < 1:
            raise ValueError("iteration_budget must be >= 1")
        if self.candidate_neighbors < 1:
            raise ValueError("candidate_neighbors must be >= 1")
        if self.max_chain < 1:
            raise ValueError("max_chain must be >= 1")


@dataclass
class MoveDescriptor:
    """One candidate move and its predicted effect.

    Position conventions by kind:

    * Relocate / KLRebalance: source ``(p,)`` is the task's index in the source
      route, target ``(q,)`` the insertion index in the target route as it is
      now.
    * Swap: source ``(pa, qa)`` / target ``(pb, qb)``: each task's current
      index and the insertion index of the incoming task in its route with the
      outgoing task already removed.
    * TwoOptIntra: source ``(u, v)`` reverses ``seq[u..v]``; target empty.
    * CrossExchange: source ``(start, length, rev)`` and target
      ``(start, length, rev)`` name the exchanged contiguous chains; a zero
      length is an insertion slot and ``rev`` = 1 means that chain is reversed
      when it lands in the other route.
    """

    kind: str
    source_route: int
    source_positions: Tuple[int, ...]
    target_route: int
    target_positions: Tuple[int, ...]
    delta_j: float
    new_lengths: Dict[int, float] = field(default_factory=dict)
    objective_j: float = math.nan
    makespan: float = math.nan
    total_distance: float = math.nan

    def rank(self):
        return (self.objective_j, self.makespan, self.total_distance)


@dataclass(frozen=True)
class TraceRecord:
    sweep: int
    kind: str
    delta_j: float
    objective_j: float
    total_distance: float
    makespan: float


class SearchContext:
    """Distance table and neighbour lists for one instance, indexed by anchor."""

    def __init__(self, instance: Instance, oracle: DistanceCache,
                 weights: ObjectiveWeights = ObjectiveWeights(), candidate_neighbors: int = 10,
                 matrix: Optional[np.ndarray] = None):
        self.instance = instance
        self.oracle = oracle
        self.weights = weights
        self.K = instance.K
        self.N = instance.N
        self.candidate_neighbors = candidate_neighbors
        if matrix is None:
            matrix = pairwise_matrix(instance.terrain, instance.anchors, oracle)
        self.set_matrix(matrix)

    def set_matrix(self, matrix: np.ndarray):
        self.matrix = np.asarray(matrix, dtype=float)
        self.D = self.matrix.tolist()
        K, N = self.K, self.N
        m = min(self.candidate_neighbors, max(0, N - 1))
        self.neighbors = []
        for t in range(N):
            row = self.D[K + t]
            order = sorted((u for u in range(N) if u != t), key=lambda u: (row[K + u], u))
            self.neighbors.append(order[:m])

    def refresh(self) -> bool:
        """Re-run A* on degraded pairs; True when the distance table changed."""
        if not self.oracle.degraded:
            return False
        if not refresh_degraded(self.oracle, self.instance.terrain):
            return False
        self.set_matrix(pairwise_matrix(self.instance.terrain, self.instance.anchors,
                                        self.oracle))
        return True

    def nodes(self, k: int, seq: Sequence[int]) -> List[int]:
        return [k] + [self.K + t for t in seq]

    def seq_length(self, k: int, seq: Sequence[int]) -> float:
        D = self.D
        prev = k
        total = 0.0
        for t in seq:
            nxt = self.K + t
            total += D[prev][nxt]
            prev = nxt
        return total

    def lengths(self, plan: Plan) -> List[float]:
        return [self.seq_length(k, r.task_sequence) for k, r in enumerate(plan.routes)]

    def ensure_lengths(self, plan: Plan) -> List[float]:
        if plan.lengths is None or len(plan.lengths) != len(plan.routes):
            plan.lengths = self.lengths(plan)
        return plan.lengths

    def J(self, lengths: Sequence[float]) -> float:
        a = self.weights.alpha
        return a * sum(lengths) + (1.0 - a) * max(lengths)


class _Snapshot:
    """Objective bookkeeping for O(1) scoring of moves touching <= 2 routes."""

    def __init__(self, ctx: SearchContext, lengths: Sequence[float], eps_rel: float):
        self.alpha = ctx.weights.alpha
        self.lengths = list(lengths)
        self.total = sum(self.lengths)
        self.top = sorted(range(len(self.lengths)), key=lambda k: -self.lengths[k])[:3]
        self.makespan = self.lengths[self.top[0]]
        self.J = self.alpha * self.total + (1.0 - self.alpha) * self.makespan
        self.eps = eps_rel * max(1.0, self.J)

    def score(self, changes: Dict[int, float]) -> Tuple[float, float, float]:
        total = self.total
        rest = 0.0
        for k in self.top:
            if k not in changes:
                rest = self.lengths[k]
                break
        makespan = rest
        for k, v in changes.items():
            total += v - self.lengths[k]
            if v > makespan:
                makespan = v
        return self.alpha * total + (1.0 - self.alpha) * makespan, makespan, total

    def describe(self, kind, i, src, j, tgt, changes) -> MoveDescriptor:
        J, makespan, total = self.score(changes)
        return MoveDescriptor(kind, i, tuple(src), j, tuple(tgt), J - self.J, dict(changes),
                              J, makespan, total)

    def improving(self, move: Optional[MoveDescriptor]) -> bool:
        return move is not None and move.delta_j < -self.eps


def _better(a: Optional[MoveDescriptor], b: Optional[MoveDescriptor]) -> bool:
    """True if ``a`` ranks strictly before ``b`` (lower J, then makespan, then total)."""
    if a is None:
        return False
    if b is None:
        return True
    return a.rank() < b.rank()


def _locate(plan: Plan, task: int) -> Tuple[int, int]:
    for k, r in enumerate(plan.routes):
        seq = r.task_sequence
        if task in seq:
            return k, seq.index(task)
    raise KeyError(f"task {task} not in plan")


def _snapshot(ctx: SearchContext, plan: Plan, eps_rel: float = 1e-9) -> _Snapshot:
    return _Snapshot(ctx, ctx.ensure_lengths(plan), eps_rel)


# -- edge-replacement primitives ------------------------------------------------

def _removal_delta(D, nodes: List[int], p: int) -> float:
    """Length change from deleting the task at position p (nodes[0] is the start)."""
    prev, cur = nodes[p], nodes[p + 1]
    if p + 2 < len(nodes):
        nxt = nodes[p + 2]
        return D[prev][nxt] - D[prev][cur] - D[cur][nxt]
    return -D[prev][cur]


def _insertion_delta(D, nodes: List[int], q: int, x: int) -> float:
    """Length change from inserting anchor x before task position q."""
    prev = nodes[q]
    if q + 1 < len(nodes):
        nxt = nodes[q + 1]
        return D[prev][x] + D[x][nxt] - D[prev][nxt]
    return D[prev][x]


def _best_insertion(D, nodes: List[int], x: int) -> Tuple[float, int]:
    best, best_q = math.inf, 0
    for q in range(len(nodes)):
        d = _insertion_delta(D, nodes, q, x)
        if d < best:
            best, best_q = d, q
    return best, best_q


def _prefix(D, nodes: List[int]) -> List[float]:
    """pref[i] = path length from nodes[0] to nodes[i]."""
    pref = [0.0]
    for i in range(1, len(nodes)):
        pref.append(pref[-1] + D[nodes[i - 1]][nodes[i]])
    return pref


def _replace_delta(D, nodes, pref, s, l, chain, chain_len) -> float:
    """Length change from replacing tasks [s, s+l) with ``chain`` (anchor ids).

    ``nodes``/``pref`` describe the route including its start at index 0, so
    task position s sits at nodes[s + 1].
    """
    prev = nodes[s]
    nxt = nodes[s + l + 1] if s + l + 1 < len(nodes) else -1
    if l > 0:
        old = D[prev][nodes[s + 1]] + (pref[s + l] - pref[s + 1])
        if nxt >= 0:
            old += D[nodes[s + l]][nxt]
    else:
        old = D[prev][nxt] if nxt >= 0 else 0.0
    if chain:
        new = D[prev][chain[0]] + chain_len
        if nxt >= 0:
            new += D[chain[-1]][nxt]
    else:
        new = D[prev][nxt] if nxt >= 0 else 0.0
    return new - old


# -- Stage A / Stage B -----------------------------------------------------------

def marginal_cost(oracle: DistanceCache, instance: Instance, route: RouteOrder,
                  task: int) -> float:
    """Nearest-neighbour proxy: min over the start and the route's tasks of D(., task)."""
    terrain = instance.terrain
    pos = instance.tasks[task]
    best = oracle_distance(oracle, terrain, instance.starts[route.uav_index], pos)
    for t in route.task_sequence:
        best = min(best, oracle_distance(oracle, terrain, instance.tasks[t], pos))
    return best


def lpt_order(ctx: SearchContext) -> List[int]:
    """Tasks by descending max_k D(s_k, t), ties by lower task index."""
    K, D = ctx.K, ctx.D
    key = [max(D[k][K + t] for k in range(K)) for t in range(ctx.N)]
    return sorted(range(ctx.N), key=lambda t: (-key[t], t))


def lpt_assign(ctx: SearchContext) -> Plan:
    """Greedy assignment in LPT order onto the route with the smallest J increase,
    using the marginal-cost proxy as the load increment."""
    K, D = ctx.K, ctx.D
    seqs: List[List[int]] = [[] for _ in range(K)]
    proxy = [[D[k][K + t] for t in range(ctx.N)] for k in range(K)]
    loads = [0.0] * K
    for t in lpt_order(ctx):
        best_k, best_j = 0, math.inf
        for k in range(K):
            trial = list(loads)
            trial[k] += proxy[k][t]
            j = ctx.J(trial)
            if j < best_j:
                best_k, best_j = k, j
        loads[best_k] += proxy[best_k][t]
        seqs[best_k].append(t)
        row = D[K + t]
        pk = proxy[best_k]
        for u in range(ctx.N):
            if row[K + u] < pk[u]:
                pk[u] = row[K + u]
    plan = Plan.from_sequences(seqs)
    plan.lengths = ctx.lengths(plan)
    return plan


def nearest_neighbor_order(ctx: SearchContext, k: int, tasks: Sequence[int]) -> List[int]:
    D, K = ctx.D, ctx.K
    left = sorted(tasks)
    out = []
    cur = k
    while left:
        row = D[cur]
        nxt = min(left, key=lambda t: (row[K + t], t))
        out.append(nxt)
        left.remove(nxt)
        cur = K + nxt
    return out


def two_opt_open(ctx: SearchContext, k: int, seq: List[int], eps_rel: float = 1e-9) -> List[int]:
    """First-improving open-path 2-opt to a fixed point; endpoints never joined."""
    D, K = ctx.D, ctx.K
    seq = list(seq)
    n = len(seq)
    if n < 2:
        return seq
    improved = True
    while improved:
        improved = False
        nodes = ctx.nodes(k, seq)
        eps = eps_rel * max(1.0, ctx.seq_length(k, seq))
        for u in range(n - 1):
            a, b = nodes[u], nodes[u + 1]
            for v in range(u + 1, n):
                c = nodes[v + 1]
                delta = D[a][c] - D[a][b]
                if v + 1 < n:
                    d = nodes[v + 2]
                    delta += D[b][d] - D[c][d]
                if delta < -eps:
                    seq[u:v + 1] = seq[u:v + 1][::-1]
                    improved = True
                    break
            if improved:
                break
    return seq


def order_route(ctx: SearchContext, route: RouteOrder) -> RouteOrder:
    """Nearest-neighbour chain from the route's start refined by open 2-opt."""
    k = route.uav_index
    if len(route.task_sequence) <= 1:
        return RouteOrder(k, list(route.task_sequence))
    seq = nearest_neighbor_order(ctx, k, route.task_sequence)
    return RouteOrder(k, two_opt_open(ctx, k, seq))


def initial_plan(ctx: SearchContext) -> Plan:
    plan = lpt_assign(ctx)
    plan.routes = [order_route(ctx, r) for r in plan.routes]
    plan.lengths = ctx.lengths(plan)
    return plan


# -- single moves ----------------------------------------------------------------

def _relocate_lengths(ctx, plan, snap, task, target):
    """(source, position, source length after removal, target nodes after removal)."""
    i, p = _locate(plan, task)
    D = ctx.D
    src_seq = plan.routes[i].task_sequence
    Li = snap.lengths[i] + _removal_delta(D, ctx.nodes(i, src_seq), p)
    if target == i:
        dst = ctx.nodes(i, src_seq[:p] + src_seq[p + 1:])
        base = Li
    else:
        dst = ctx.nodes(target, plan.routes[target].task_sequence)
        base = snap.lengths[target]
    return i, p, Li, dst, base


def relocate_move(ctx: SearchContext, plan: Plan, task: int, target: int, q: int,
                  kind: str = RELOCATE, snap: Optional[_Snapshot] = None) -> MoveDescriptor:
    """Move ``task`` to index ``q`` of route ``target`` (indexing the target after the
    task has left; ``target`` may be the task's own route)."""
    snap = snap or _snapshot(ctx, plan)
    i, p, Li, dst, base = _relocate_lengths(ctx, plan, snap, task, target)
    Lj = base + _insertion_delta(ctx.D, dst, q, ctx.K + task)
    changes = {target: Lj} if target == i else {i: Li, target: Lj}
    return snap.describe(kind, i, (p,), target, (q,), changes)


def relocate_best(ctx: SearchContext, plan: Plan, task: int, target: int,
                  snap: Optional[_Snapshot] = None, kind: str = RELOCATE) -> Optional[MoveDescriptor]:
    """Best insertion of ``task`` into route ``target``; None unless J strictly drops.

    With ``target`` equal to the task's own route this is a single-task
    reinsertion within the route.
    """
    snap = snap or _snapshot(ctx, plan)
    i, p, Li, dst, base = _relocate_lengths(ctx, plan, snap, task, target)
    # J is monotone in the target length, so the cheapest slot is the best one
    d, q = _best_insertion(ctx.D, dst, ctx.K + task)
    changes = {target: base + d} if target == i else {i: Li, target: base + d}
    move = snap.describe(kind, i, (p,), target, (q,), changes)
    return move if snap.improving(move) else None


def swap_move(ctx: SearchContext, plan: Plan, task_a: int, task_b: int, qa: int, qb: int,
              snap: Optional[_Snapshot] = None) -> MoveDescriptor:
    snap = snap or _snapshot(ctx, plan)
    i, pa = _locate(plan, task_a)
    j, pb = _locate(plan, task_b)
    if i == j:
        raise ValueError("swap needs tasks on different routes")
    D, K = ctx.D, ctx.K
    seq_i = plan.routes[i].task_sequence
    seq_j = plan.routes[j].task_sequence
    ni = ctx.nodes(i, seq_i)
    nj = ctx.nodes(j, seq_j)
    ri = ctx.nodes(i, seq_i[:pa] + seq_i[pa + 1:])
    rj = ctx.nodes(j, seq_j[:pb] + seq_j[pb + 1:])
    Li = snap.lengths[i] + _removal_delta(D, ni, pa) + _insertion_delta(D, ri, qa, K + task_b)
    Lj = snap.lengths[j] + _removal_delta(D, nj, pb) + _insertion_delta(D, rj, qb, K + task_a)
    return snap.describe(SWAP, i, (pa, qa), j, (pb, qb), {i: Li, j: Lj})


def swap_best(ctx: SearchContext, plan: Plan, task_a: int, task_b: int,
              snap: Optional[_Snapshot] = None) -> Optional[MoveDescriptor]:
    """Exchange two tasks across routes, each reinserted at its cheapest slot."""
    snap = snap or _snapshot(ctx, plan)
    i, pa = _locate(plan, task_a)
    j, pb = _locate(plan, task_b)
    if i == j:
        raise ValueError("swap needs tasks on different routes")
    D, K = ctx.D, ctx.K
    seq_i = plan.routes[i].task_sequence
    seq_j = plan.routes[j].task_sequence
    ri = ctx.nodes(i, seq_i[:pa] + seq_i[pa + 1:])
    rj = ctx.nodes(j, seq_j[:pb] + seq_j[pb + 1:])
    di, qa = _best_insertion(D, ri, K + task_b)
    dj, qb = _best_insertion(D, rj, K + task_a)
    Li = snap.lengths[i] + _removal_delta(D, ctx.nodes(i, seq_i), pa) + di
    Lj = snap.lengths[j] + _removal_delta(D, ctx.nodes(j, seq_j), pb) + dj
    move = snap.describe(SWAP, i, (pa, qa), j, (pb, qb), {i: Li, j: Lj})
    return move if snap.improving(move) else None


def two_opt_move(ctx: SearchContext, plan: Plan, route: int, u: int, v: int,
                 snap: Optional[_Snapshot] = None) -> MoveDescriptor:
    snap = snap or _snapshot(ctx, plan)
    D = ctx.D
    seq = plan.routes[route].task_sequence
    if not 0 <= u < v < len(seq):
        raise ValueError(f"invalid reversal [{u}:{v}] for a route of {len(seq)} tasks")
    nodes = ctx.nodes(route, seq)
    a, b, c = nodes[u], nodes[u + 1], nodes[v + 1]
    delta = D[a][c] - D[a][b]
    if v + 1 < len(seq):
        d = nodes[v + 2]
        delta += D[b][d] - D[c][d]
    return snap.describe(TWO_OPT, route, (u, v), route, (), {route: snap.lengths[route] + delta})


def two_opt_intra_best(ctx: SearchContext, plan: Plan, route: int,
                       snap: Optional[_Snapshot] = None) -> Optional[MoveDescriptor]:
    """Best strictly-improving subchain reversal in one route (open path)."""
    snap = snap or _snapshot(ctx, plan)
    D = ctx.D
    seq = plan.routes[route].task_sequence
    n = len(seq)
    if n < 2:
        return None
    nodes = ctx.nodes(route, seq)
    best_delta, best_uv = math.inf, None
    for u in range(n - 1):
        a, b = nodes[u], nodes[u + 1]
        dab = D[a][b]
        for v in range(u + 1, n):
            c = nodes[v + 1]
            delta = D[a][c] - dab
            if v + 1 < n:
                d = nodes[v + 2]
                delta += D[b][d] - D[c][d]
            if delta < best_delta:
                best_delta, best_uv = delta, (u, v)
    move = snap.describe(TWO_OPT, route, best_uv, route, (),
                         {route: snap.lengths[route] + best_delta})
    return move if snap.improving(move) else None


def cross_move(ctx: SearchContext, plan: Plan, route_i: int, a_start: int, a_len: int,
               route_j: int, b_start: int, b_len: int, a_rev: bool = False,
               b_rev: bool = False, snap: Optional[_Snapshot] = None) -> MoveDescriptor:
    snap = snap or _snapshot(ctx, plan)
    if route_i == route_j:
        raise ValueError("cross-exchange needs distinct routes")
    D = ctx.D
    si = plan.routes[route_i].task_sequence
    sj = plan.routes[route_j].task_sequence
    if a_len + b_len == 0 or a_start + a_len > len(si) or b_start + b_len > len(sj):
        raise ValueError("invalid chain bounds")
    ni, nj = ctx.nodes(route_i, si), ctx.nodes(route_j, sj)
    pi, pj = _prefix(D, ni), _prefix(D, nj)
    ca = ni[a_start + 1:a_start + a_len + 1]
    cb = nj[b_start + 1:b_start + b_len + 1]
    # symmetric distances: a reversed chain keeps its internal length
    la = pi[a_start + a_len] - pi[a_start + 1] if a_len else 0.0
    lb = pj[b_start + b_len] - pj[b_start + 1] if b_len else 0.0
    Li = snap.lengths[route_i] + _replace_delta(D, ni, pi, a_start, a_len,
                                                cb[::-1] if b_rev else cb, lb)
    Lj = snap.lengths[route_j] + _replace_delta(D, nj, pj, b_start, b_len,
                                                ca[::-1] if a_rev else ca, la)
    return snap.describe(CROSS, route_i, (a_start, a_len, int(a_rev)), route_j,
                         (b_start, b_len, int(b_rev)), {route_i: Li, route_j: Lj})


def _chains(D, nodes, pref, max_chain):
    """(start, length, rev, anchors, internal length) for every chain, including
    empty insertion slots and reversed copies of chains longer than one."""
    n = len(nodes) - 1
    out = [(s, 0, 0, (), 0.0) for s in range(n + 1)]
    for length in range(1, min(max_chain, n) + 1):
        for s in range(n - length + 1):
            chain = tuple(nodes[s + 1:s + length + 1])
            internal = pref[s + length] - pref[s + 1]
            out.append((s, length, 0, chain, internal))
            if length > 1:
                out.append((s, length, 1, chain[::-1], internal))
    return out


def cross_exchange_best(ctx: SearchContext, plan: Plan, route_i: int, route_j: int,
                        max_chain: int = 3,
                        snap: Optional[_Snapshot] = None) -> Optional[MoveDescriptor]:
    """Best exchange of contiguous chains (one side may be empty, either chain may
    land reversed) between two routes."""
    snap = snap or _snapshot(ctx, plan)
    if route_i == route_j:
        raise ValueError("cross-exchange needs distinct routes")
    D = ctx.D
    ni = ctx.nodes(route_i, plan.routes[route_i].task_sequence)
    nj = ctx.nodes(route_j, plan.routes[route_j].task_sequence)
    pi, pj = _prefix(D, ni), _prefix(D, nj)
    chains_i = _chains(D, ni, pi, max_chain)
    chains_j = _chains(D, nj, pj, max_chain)
    Li0, Lj0 = snap.lengths[route_i], snap.lengths[route_j]
    best = None
    best_rank = None
    for a_start, a_len, a_rev, ca, la in chains_i:
        for b_start, b_len, b_rev, cb, lb in chains_j:
            if a_len == 0 and b_len == 0:
                continue
            Li = Li0 + _replace_delta(D, ni, pi, a_start, a_len, cb, lb)
            Lj = Lj0 + _replace_delta(D, nj, pj, b_start, b_len, ca, la)
            rank = snap.score({route_i: Li, route_j: Lj})
            if best_rank is None or rank < best_rank:
                best_rank = rank
                best = (a_start, a_len, a_rev, b_start, b_len, b_rev, Li, Lj)
    if best is None:
        return None
    a_start, a_len, a_rev, b_start, b_len, b_rev, Li, Lj = best
    move = snap.describe(CROSS, route_i, (a_start, a_len, a_rev), route_j,
                         (b_start, b_len, b_rev), {route_i: Li, route_j: Lj})
    return move if snap.improving(move) else None


def _kl_candidates(ctx, plan, src, dst, snap):
    seq = plan.routes[src].task_sequence
    if not seq:
        return []
    ends = [seq[0]] if len(seq) == 1 else [seq[0], seq[-1]]
    D = ctx.D
    nodes = ctx.nodes(src, seq)
    dst_nodes = ctx.nodes(dst, plan.routes[dst].task_sequence)
    out = []
    for t in ends:
        p = seq.index(t)
        Ls = snap.lengths[src] + _removal_delta(D, nodes, p)
        d, q = _best_insertion(D, dst_nodes, ctx.K + t)
        out.append(snap.describe(KL, src, (p,), dst, (q,), {src: Ls, dst: snap.lengths[dst] + d}))
    return out


def kl_rebalance(ctx: SearchContext, plan: Plan, route_i: int, route_j: int,
                 eps_rel: float = 1e-9, debug: bool = False,
                 on_apply: Optional[Callable[[MoveDescriptor], None]] = None) -> List[MoveDescriptor]:
    """Greedily migrate first/last tasks between two routes while J strictly drops.

    Mutates ``plan``; returns the applied migrations in order, each with its
    delta measured against the plan just before it.  ``on_apply`` is called
    right after each migration lands.
    """
    if route_i == route_j:
        raise ValueError("KL rebalance needs distinct routes")
    applied = []
    for _ in range(ctx.N + 1):
        snap = _snapshot(ctx, plan, eps_rel)
        best = None
        for src, dst in ((route_i, route_j), (route_j, route_i)):
            for mv in _kl_candidates(ctx, plan, src, dst, snap):
                if _better(mv, best):
                    best = mv
        if not snap.improving(best):
            break
        apply_move(ctx, plan, best, debug=debug)
        applied.append(best)
        if on_apply is not None:
            on_apply(best)
    return applied


# -- application -----------------------------------------------------------------

def apply_move(ctx: SearchContext, plan: Plan, move: MoveDescriptor, debug: bool = False) -> None:
    """Apply ``move`` in place and refresh the touched route lengths."""
    routes = plan.routes
    i, j = move.source_route, move.target_route
    if move.kind in (RELOCATE, KL):
        (p,), (q,) = move.source_positions, move.target_positions
        t = routes[i].task_sequence.pop(p)
        routes[j].task_sequence.insert(q, t)
    elif move.kind == SWAP:
        (pa, qa), (pb, qb) = move.source_positions, move.target_positions
        ta = routes[i].task_sequence.pop(pa)
        tb = routes[j].task_sequence.pop(pb)
        routes[i].task_sequence.insert(qa, tb)
        routes[j].task_sequence.insert(qb, ta)
    elif move.kind == TWO_OPT:
        u, v = move.source_positions
        seq = routes[i].task_sequence
        seq[u:v + 1] = seq[u:v + 1][::-1]
    elif move.kind == CROSS:
        (sa, la, ra), (sb, lb, rb) = move.source_positions, move.target_positions
        si, sj = routes[i].task_sequence, routes[j].task_sequence
        ca, cb = si[sa:sa + la], sj[sb:sb + lb]
        si[sa:sa + la] = cb[::-1] if rb else cb
        sj[sb:sb + lb] = ca[::-1] if ra else ca
    else:
        raise ValueError(f"unknown move kind {move.kind!r}")
    lengths = ctx.ensure_lengths(plan)
    for k in {i, j}:
        lengths[k] = ctx.seq_length(k, routes[k].task_sequence)
    if debug:
        for k, predicted in move.new_lengths.items():
            assert abs(predicted - lengths[k]) <= 1e-9 * max(1.0, lengths[k]), (move, lengths[k])
        findings = validate_plan(ctx.instance, plan)
        assert not findings, findings


# -- neighbourhoods --------------------------------------------------------------

def critical_routes(lengths: Sequence[float], band: float = CRITICAL_BAND) -> List[int]:
    """Routes attaining the makespan or within ``band`` of it."""
    top = max(lengths)
    return [k for k, L in enumerate(lengths) if L >= (1.0 - band) * top]


def _tiers(ctx: SearchContext, plan: Plan) -> List[List[int]]:
    crit = critical_routes(ctx.ensure_lengths(plan))
    rest = [k for k in range(ctx.K) if k not in crit]
    return [crit, rest] if rest else [crit]


def _relocate_targets(ctx: SearchContext, plan: Plan, task: int, owner: List[int]) -> List[int]:
    near = set(ctx.neighbors[task])
    out = []
    for k, r in enumerate(plan.routes):
        if k == owner[task] or not r.task_sequence or any(t in near for t in r.task_sequence):
            out.append(k)
    return out


def _owners(plan: Plan, N: int) -> List[int]:
    owner = [-1] * N
    for k, r in enumerate(plan.routes):
        for t in r.task_sequence:
            owner[t] = k
    return owner


def best_relocate(ctx: SearchContext, plan: Plan, eps_rel: float) -> Optional[MoveDescriptor]:
    snap = _snapshot(ctx, plan, eps_rel)
    owner = _owners(plan, ctx.N)
    for tier in _tiers(ctx, plan):
        best = None
        for i in tier:
            for t in plan.routes[i].task_sequence:
                for j in _relocate_targets(ctx, plan, t, owner):
                    mv = relocate_best(ctx, plan, t, j, snap)
                    if _better(mv, best):
                        best = mv
        if best is not None:
            return best
    return None


def best_swap(ctx: SearchContext, plan: Plan, eps_rel: float) -> Optional[MoveDescriptor]:
    snap = _snapshot(ctx, plan, eps_rel)
    owner = _owners(plan, ctx.N)
    for tier in _tiers(ctx, plan):
        best = None
        for i in tier:
            for ta in plan.routes[i].task_sequence:
                for tb in ctx.neighbors[ta]:
                    if owner[tb] == i:
                        continue
                    mv = swap_best(ctx, plan, ta, tb, snap)
                    if _better(mv, best):
                        best = mv
        if best is not None:
            return best
    return None


def best_two_opt(ctx: SearchContext, plan: Plan, eps_rel: float) -> Optional[MoveDescriptor]:
    snap = _snapshot(ctx, plan, eps_rel)
    best = None
    for k in range(ctx.K):
        mv = two_opt_intra_best(ctx, plan, k, snap)
        if _better(mv, best):
            best = mv
    return best


def best_cross(ctx: SearchContext, plan: Plan, eps_rel: float,
               max_chain: int = 3) -> Optional[MoveDescriptor]:
    snap = _snapshot(ctx, plan, eps_rel)
    tiers = _tiers(ctx, plan)
    crit = tiers[0]
    first = sorted({(min(i, j), max(i, j)) for i in crit for j in range(ctx.K) if j != i})
    second = [(i, j) for i in range(ctx.K) for j in range(i + 1, ctx.K) if (i, j) not in first]
    for pairs in (first, second):
        best = None
        for i, j in pairs:
            mv = cross_exchange_best(ctx, plan, i, j, max_chain, snap)
            if _better(mv, best):
                best = mv
        if best is not None:
            return best
    return None


def rebalance(ctx: SearchContext, plan: Plan, eps_rel: float, debug: bool = False,
              on_apply: Optional[Callable[[MoveDescriptor], None]] = None) -> List[MoveDescriptor]:
    """KL pass: the makespan route against every other route, lightest first."""
    lengths = ctx.ensure_lengths(plan)
    crit = max(range(ctx.K), key=lambda k: (lengths[k], -k))
    others = sorted((k for k in range(ctx.K) if k != crit), key=lambda k: (lengths[k], k))
    moves = []
    for j in others:
        moves += kl_rebalance(ctx, plan, crit, j, eps_rel, debug, on_apply)
    return moves


def _record(trace, sweep, move, ctx, plan):
    if trace is None:
        return
    m = objective(plan.lengths, ctx.weights)
    rec = TraceRecord(sweep, move.kind, move.delta_j, m.objective_j, m.total_distance, m.makespan)
    if callable(trace):
        trace(rec)
    else:
        trace.append(rec)


def search(instance: Instance, oracle: DistanceCache, config: SearchConfig = SearchConfig(),
           trace=None, ctx: Optional[SearchContext] = None) -> Plan:
    """LPT assignment, per-route ordering, then cyclic neighbourhood sweeps.

    ``trace`` may be a list (records are appended) or a callable receiving
    each :class:`TraceRecord`.
    """
    if ctx is None:
        ctx = SearchContext(instance, oracle, config.weights, config.candidate_neighbors)
    eps = config.epsilon_improve
    plan = initial_plan(ctx)
    for sweep in range(1, config.iteration_budget + 1):
        improved = False
        for finder in (best_relocate, best_swap, best_two_opt):
            mv = finder(ctx, plan, eps)
            if mv is not None:
                apply_move(ctx, plan, mv, config.debug)
                _record(trace, sweep, mv, ctx, plan)
                improved = True
        mv = best_cross(ctx, plan, eps, config.max_chain)
        if mv is not None:
            apply_move(ctx, plan, mv, config.debug)
            _record(trace, sweep, mv, ctx, plan)
            improved = True
        # record each migration as it lands so the trace sees intermediate J values
        if rebalance(ctx, plan, eps, config.debug,
                     lambda mv: _record(trace, sweep, mv, ctx, plan)):
            improved = True
        if ctx.refresh():
            plan.lengths = ctx.lengths(plan)
            improved = True
        if not improved:
            break
    return plan


def write_trace(records: Sequence[TraceRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sweep", "move", "delta_j", "objective_j", "total_distance", "makespan"])
        for r in records:
            w.writerow([r.sweep, r.kind, repr(r.delta_j), repr(r.objective_j),
                        repr(r.total_distance), repr(r.makespan)])


def read_trace(path) -> List[TraceRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [TraceRecord(int(r["sweep"]), r["move"], float(r["delta_j"]), float(r["objective_j"]),
                        float(r["total_distance"]), float(r["makespan"])) for r in rows]
