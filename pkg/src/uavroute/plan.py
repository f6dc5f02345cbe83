"""Routes, plans, and the composite objective J = a * L_total + (1 - a) * L_max.

Plan text format (``uavroute-plan 1``)::

    uavroute-plan 1
    instance <id>
    method <name>
    alpha <float>
    objective_j <float>
    total_distance <float>
    makespan <float>
    routes <K>
    route <k> length <float> tasks <n> <t_1> ... <t_n>
    end
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

from .geodesic import DistanceCache, oracle_distance
from .terrain import Instance

PLAN_FORMAT = "uavroute-plan"
PLAN_VERSION = 1


@dataclass
class RouteOrder:
    uav_index: int
    task_sequence: List[int] = field(default_factory=list)

    def __len__(self):
        return len(self.task_sequence)


@dataclass
class Plan:
    routes: List[RouteOrder]
    lengths: Optional[List[float]] = None

    @classmethod
    def from_sequences(cls, sequences: Sequence[Sequence[int]],
                       lengths: Optional[Sequence[float]] = None) -> "Plan":
        return cls([RouteOrder(k, list(s)) for k, s in enumerate(sequences)],
                   None if lengths is None else list(lengths))

    @property
    def sequences(self) -> List[List[int]]:
        return [r.task_sequence for r in self.routes]

    def copy(self) -> "Plan":
        return Plan([RouteOrder(r.uav_index, list(r.task_sequence)) for r in self.routes],
                    None if self.lengths is None else list(self.lengths))


@dataclass(frozen=True)
class ObjectiveWeights:
    alpha: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class PlanMetrics:
    objective_j: float
    total_distance: float
    makespan: float


def route_length(instance: Instance, oracle: DistanceCache, route: RouteOrder) -> float:
    """Open-path length from the UAV's start through its tasks (no return leg)."""
    seq = route.task_sequence
    if not seq:
        return 0.0
    terrain = instance.terrain
    prev = instance.starts[route.uav_index]
    total = 0.0
    for t in seq:
        pos = instance.tasks[t]
        total += oracle_distance(oracle, terrain, prev, pos)
        prev = pos
    return total


def objective(lengths: Sequence[float], weights: ObjectiveWeights = ObjectiveWeights()) -> PlanMetrics:
    if not lengths:
        raise ValueError("need at least one route length")
    total = math.fsum(lengths)
    makespan = max(lengths)
    a = weights.alpha
    return PlanMetrics(a * total + (1.0 - a) * makespan, total, makespan)


def plan_lengths(instance: Instance, oracle: DistanceCache, plan: Plan) -> List[float]:
    return [route_length(instance, oracle, r) for r in plan.routes]


def evaluate(instance: Instance, oracle: DistanceCache, plan: Plan,
             weights: ObjectiveWeights = ObjectiveWeights()) -> PlanMetrics:
    return objective(plan_lengths(instance, oracle, plan), weights)


def validate_plan(instance: Instance, plan: Plan, oracle: Optional[DistanceCache] = None,
                  rel_tol: float = 1e-9) -> List[str]:
    """Human-readable findings; an empty list means the plan is a valid partition.

    Stale cached lengths are only checked when an oracle is supplied.
    """
    findings = []
    if len(plan.routes) != instance.K:
        findings.append(f"expected {instance.K} routes, found {len(plan.routes)}")
    seen = {}
    for k, r in enumerate(plan.routes):
        if r.uav_index != k:
            findings.append(f"route {k} carries uav_index {r.uav_index}")
        for t in r.task_sequence:
            if not 0 <= t < instance.N:
                findings.append(f"route {k} holds unknown task {t}")
                continue
            if t in seen:
                findings.append(f"duplicate task {t}")
            seen[t] = k
    for t in range(instance.N):
        if t not in seen:
            findings.append(f"uncovered task {t}")
    if plan.lengths is not None:
        if len(plan.lengths) != len(plan.routes):
            findings.append("cached lengths do not match route count")
        elif oracle is not None and not findings:
            for k, r in enumerate(plan.routes):
                true = route_length(instance, oracle, r)
                if abs(plan.lengths[k] - true) > rel_tol * max(1.0, abs(true)):
                    findings.append(f"stale cached length on route {k}: "
                                    f"{plan.lengths[k]!r} vs {true!r}")
    return findings


def dumps_plan(plan: Plan, metrics: PlanMetrics, weights: ObjectiveWeights,
               instance_id: str = "-", method: str = "-") -> str:
    lengths = plan.lengths if plan.lengths is not None else [float("nan")] * len(plan.routes)
    lines = [f"{PLAN_FORMAT} {PLAN_VERSION}",
             f"instance {instance_id}",
             f"method {method}",
             f"alpha {weights.alpha!r}",
             f"objective_j {metrics.objective_j!r}",
             f"total_distance {metrics.total_distance!r}",
             f"makespan {metrics.makespan!r}",
             f"routes {len(plan.routes)}"]
    for k, r in enumerate(plan.routes):
        seq = " ".join(str(t) for t in r.task_sequence)
        lines.append(f"route {k} length {lengths[k]!r} tasks {len(r)}" + (f" {seq}" if seq else ""))
    lines.append("end")
    return "\n".join(lines) + "\n"


@dataclass
class PlanRecord:
    plan: Plan
    metrics: PlanMetrics
    weights: ObjectiveWeights
    instance_id: str
    method: str


def loads_plan(text: str) -> PlanRecord:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not rows or rows[0] != [PLAN_FORMAT, str(PLAN_VERSION)]:
        raise ValueError(f"not a {PLAN_FORMAT} v{PLAN_VERSION} document")
    head = {r[0]: r[1] for r in rows[1:8] if len(r) == 2}
    try:
        n_routes = int(head["routes"])
        routes, lengths = [], []
        for k in range(n_routes):
            tok = rows[8 + k]
            if tok[0] != "route" or int(tok[1]) != k or tok[2] != "length" or tok[4] != "tasks":
                raise ValueError(f"malformed route line {k}")
            n = int(tok[5])
            seq = [int(t) for t in tok[6:]]
            if len(seq) != n:
                raise ValueError(f"route {k}: expected {n} tasks, got {len(seq)}")
            routes.append(RouteOrder(k, seq))
            lengths.append(float(tok[3]))
        if rows[8 + n_routes] != ["end"]:
            raise ValueError("missing end marker")
        metrics = PlanMetrics(float(head["objective_j"]), float(head["total_distance"]),
                              float(head["makespan"]))
        return PlanRecord(Plan(routes, lengths), metrics, ObjectiveWeights(float(head["alpha"])),
                          head["instance"], head["method"])
    except (KeyError, IndexError) as exc:
        raise ValueError(f"malformed plan document: {exc}") from None


def save_plan(path, plan: Plan, metrics: PlanMetrics, weights: ObjectiveWeights,
              instance_id: str = "-", method: str = "-") -> None:
    Path(path).write_text(dumps_plan(plan, metrics, weights, instance_id, method),
                          encoding="utf-8")


def load_plan(path) -> PlanRecord:
    return loads_plan(Path(path).read_text(encoding="utf-8"))
