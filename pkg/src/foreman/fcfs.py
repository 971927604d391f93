"""First-come-first-served rule-based scheduler, the deterministic baseline.

FCFS walks the precedence DAG in topological order (declaration order among
ready tasks), assigns each task to the lowest-id robot whose skills cover
it, and lowers the assignment to a sequential plan with shortest-path
connecting moves.  It is intentionally blind: no coalitions, no battery or
coverage reasoning, no post-hoc edits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .plan import Action, ActionKind, MOVE_TARGETS, Plan, PlanStep
from .scenario import Scenario, TaskSpec, cell_id, parse_cell


class UnassignableTask(ValueError):
    def __init__(self, task_id: str):
        super().__init__(f"no single robot covers the skills of task {task_id!r}")
        self.task_id = task_id


class RealizationError(ValueError):
    """The requested start times are inconsistent with travel times."""


@dataclass(frozen=True)
class Assignment:
    alpha: tuple[tuple[str, tuple[str, ...]], ...]  # task id -> robot ids
    theta: tuple[tuple[str, float], ...]  # task id -> start TU

    def robots_for(self, task_id: str) -> tuple[str, ...]:
        return dict(self.alpha)[task_id]

    def start_of(self, task_id: str) -> float:
        return dict(self.theta)[task_id]

    def to_dict(self) -> dict:
        return {
            "alpha": {t: list(r) for t, r in self.alpha},
            "theta": {t: s for t, s in self.theta},
        }


_MOVE_FOR_NODE = {node: kind for kind, node in MOVE_TARGETS.items()}


class _Lowering:
    """Shared sequential lowering used by fcfs_schedule and realize_schedule."""

    def __init__(self, s: Scenario):
        self.s = s
        self.loc = {r.id: r.start_location for r in s.robots}
        self.cargo = {r.id: r.cargo_init for r in s.robots}
        self.stock = s.stock()
        self.elapsed = 0.0
        self.templates: list[tuple[str, Action]] = []

    def _emit(self, robot: str, action: Action, tu: float):
        self.templates.append((robot, action))
        self.elapsed += tu

    def travel(self, robot: str, target: str):
        s = self.s
        if self.loc[robot] == target:
            return
        if s.site.is_grid():
            moves = s.site.grid_path(parse_cell(self.loc[robot]), parse_cell(target))
            if moves is None:
                raise RealizationError(f"{target} unreachable from {self.loc[robot]}")
            cur = parse_cell(self.loc[robot])
            for kind in moves:
                from .plan import GRID_MOVES

                dx, dy = GRID_MOVES[kind]
                cur = (cur[0] + dx, cur[1] + dy)
                self._emit(robot, Action(kind), s.cost.tu_per_du)
            self.loc[robot] = cell_id(cur)
        else:
            # hop along the shortest path, one move step per edge
            path = self._named_path(self.loc[robot], target)
            if path is None:
                raise RealizationError(f"{target} unreachable from {self.loc[robot]}")
            for node, w in path:
                kind = _MOVE_FOR_NODE.get(node)
                action = Action(kind) if kind else Action(ActionKind.NAVIGATE, node)
                self._emit(robot, action, s.cost.tu_per_du * w)
                self.loc[robot] = node

    def _named_path(self, a: str, b: str) -> list[tuple[str, float]] | None:
        import heapq

        dist = {a: 0.0}
        prev: dict[str, tuple[str, float]] = {}
        heap = [(0.0, a)]
        while heap:
            d, node = heapq.heappop(heap)
            if node == b:
                hops = []
                cur = b
                while cur != a:
                    p, w = prev[cur]
                    hops.append((cur, w))
                    cur = p
                return list(reversed(hops))
            if d > dist.get(node, math.inf):
                continue
            for nbr, w in sorted(self.s.site.neighbors(node)):
                nd = d + w
                if nd < dist.get(nbr, math.inf):
                    dist[nbr] = nd
                    prev[nbr] = (node, w)
                    heapq.heappush(heap, (nd, nbr))
        return None

    def nearest_stock(self, robot: str) -> str:
        candidates = [loc for loc, mu in sorted(self.stock.items()) if mu > 0]
        if not candidates:
            raise RealizationError("no stock left anywhere")
        return min(
            candidates,
            key=lambda loc: (self.s.site.shortest_path_du(self.loc[robot], loc) or math.inf, loc),
        )

    def run_task(self, robot: str, task: TaskSpec) -> float:
        """Lower one task; returns its start time theta (first arrival at the site)."""
        s = self.s
        theta: float | None = None
        if task.type is ActionKind.BUILD:
            remaining = task.demand
            while remaining > 0:
                if self.cargo[robot] == 0:
                    stock_loc = self.nearest_stock(robot)
                    self.travel(robot, stock_loc)
                    moved = min(3, s.robot(robot).payload_capacity, self.stock[stock_loc])
                    self.stock[stock_loc] -= moved
                    self.cargo[robot] += moved
                    self._emit(robot, Action(ActionKind.PICK), s.cost.pick_build_tu_per_3mu if moved else 0.0)
                self.travel(robot, task.location)
                if theta is None:
                    theta = self.elapsed
                moved = min(3, self.cargo[robot])
                self.cargo[robot] -= moved
                remaining -= moved
                self._emit(robot, Action(ActionKind.BUILD), s.cost.pick_build_tu_per_3mu if moved else 0.0)
                if moved == 0:
                    raise RealizationError(f"task {task.id}: no material available to build")
        elif task.type is ActionKind.NAVIGATE:
            self.travel(robot, task.location)
            theta = self.elapsed
        elif task.type in (ActionKind.SCAN, ActionKind.INSPECT, ActionKind.MARK_LAYOUT):
            self.travel(robot, task.location)
            theta = self.elapsed
            tu = s.cost.scan_tu_per_su if task.type is ActionKind.SCAN else 1.0
            self._emit(robot, Action(task.type), tu)
        else:
            raise RealizationError(f"task {task.id}: cannot lower task type {task.type.value}")
        return theta if theta is not None else self.elapsed

    def to_plan(self) -> Plan:
        counters: dict[str, int] = {}
        multi = len(self.s.robots) > 1
        steps = []
        for robot, action in self.templates:
            counters[robot] = counters.get(robot, 0) + 1
            steps.append(
                PlanStep(counters[robot], robot if multi else None, "?", action, 0, 0, 0.0)
            )
        from .repair import plan_templates, reconcile_plan

        plan, _ = reconcile_plan(self.s, plan_templates(Plan(tuple(steps))))
        return plan


def fcfs_schedule(s: Scenario) -> tuple[Assignment, Plan]:
    """Schedule tasks FCFS and lower to an executable sequential plan.

    Raises UnassignableTask when no single robot covers a task's skills
    (the baseline never forms coalitions).
    """
    order = s.dag.topological_order([t.id for t in s.tasks])
    if order is None:  # load_scenario guarantees acyclicity; belt and braces
        raise RealizationError("precedence graph has a cycle")
    by_id = {t.id: t for t in s.tasks}
    lowering = _Lowering(s)
    alpha = []
    theta = []
    for task_id in order:
        task = by_id[task_id]
        capable = [r for r in sorted(s.robots, key=lambda r: r.id) if task.required_skills <= r.skills]
        if not capable:
            raise UnassignableTask(task_id)
        robot = capable[0].id  # sequential execution: every robot is idle, lowest id wins
        alpha.append((task_id, (robot,)))
        theta.append((task_id, lowering.run_task(robot, task)))
    return Assignment(tuple(alpha), tuple(theta)), lowering.to_plan()


def realize_schedule(s: Scenario, assignment: Assignment) -> Plan:
    """Lower an Assignment to the canonical plan realizing it.

    Tasks run in theta order with shortest-path connecting moves; IDLE
    steps pad early arrivals.  Raises RealizationError if a requested
    start time is earlier than the robot can physically arrive.
    """
    by_id = {t.id: t for t in s.tasks}
    order = sorted(assignment.theta, key=lambda kv: (kv[1], kv[0]))
    lowering = _Lowering(s)
    for task_id, start in order:
        task = by_id[task_id]
        robots = assignment.robots_for(task_id)
        if not robots:
            raise RealizationError(f"task {task_id} assigned to an empty robot set")
        robot = robots[0]
        if not task.required_skills <= s.robot(robot).skills:
            raise RealizationError(f"robot {robot} cannot perform task {task_id}")
        before = len(lowering.templates)
        arrival = lowering.run_task(robot, task)
        if arrival > start:
            raise RealizationError(
                f"task {task_id}: theta {start} TU unreachable (earliest arrival {arrival} TU)"
            )
        # pad the gap with IDLE so completion events occur in theta order
        gap = start - arrival
        idles = int(round(gap / 1.0))
        for _ in range(idles):
            lowering.templates.insert(before, (robot, Action(ActionKind.IDLE)))
            lowering.elapsed += 1.0
    return lowering.to_plan()
