"""LP-based branch and bound for small mixed-integer linear programs.

Search is best-bound with depth-first plunging: after branching we dive
into one child and park the other on a heap keyed by its parent bound.
Targets allow early exits: ``target_primal`` stops once the incumbent is at
least as good as the target, ``target_dual`` once the bound proves the
target unreachable.  The reported dual bound is always valid for the whole
problem.
"""

from __future__ import annotations

import enum
import heapq
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .lp import LinearProgram, LPStatus, solve_lp

INT_TOL = 1e-6
FEAS_TOL = 1e-7


class MipStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    LIMIT = "limit"


@dataclass
class MipProblem:
    lp: LinearProgram
    integer: np.ndarray

    def __post_init__(self):
        self.integer = np.asarray(self.integer, dtype=bool).ravel()
        if self.integer.size != self.lp.n:
            raise ValueError("integrality mask does not match the variable count")
        lb, ub = self.lp.lb[self.integer], self.lp.ub[self.integer]
        if not (np.all(np.isfinite(lb)) and np.all(np.isfinite(ub))):
            raise ValueError("integer variables need finite bounds")

    def is_feasible(self, x: np.ndarray, tol: float = FEAS_TOL) -> bool:
        if self.lp.max_violation(x) > tol:
            return False
        xi = x[self.integer]
        return bool(np.all(np.abs(xi - np.round(xi)) <= INT_TOL))


@dataclass(frozen=True)
class MipLimits:
    node_limit: int = 100_000
    time_limit: float = math.inf
    target_primal: float | None = None
    target_dual: float | None = None
    abs_gap: float = 1e-9


@dataclass
class MipSolution:
    status: MipStatus
    x: np.ndarray | None
    objective: float
    dual_bound: float
    gap: float
    nodes: int
    reason: str = ""
    bound_history: tuple[float, ...] = ()


Heuristic = Callable[[np.ndarray], "np.ndarray | None"]


@dataclass(order=True)
class _Node:
    key: float
    order: int
    lb: np.ndarray = None  # type: ignore[assignment]
    ub: np.ndarray = None  # type: ignore[assignment]
    depth: int = 0


def _relative_gap(primal: float, dual: float) -> float:
    if not math.isfinite(primal) or not math.isfinite(dual):
        return math.inf
    return abs(primal - dual) / max(1.0, abs(primal))


def solve_mip(
    prob: MipProblem,
    limits: MipLimits | None = None,
    heuristic: Heuristic | None = None,
) -> MipSolution:
    """Branch and bound on ``prob``.

    ``heuristic`` receives each node's LP solution and may return a candidate
    point; it is accepted only if it passes the feasibility check.
    """
    limits = limits or MipLimits()
    lp = prob.lp
    sense = -1.0 if lp.maximize else 1.0  # internal objective is minimized
    start = time.perf_counter()

    incumbent: np.ndarray | None = None
    inc_val = math.inf  # internal (minimization) objective
    closed_lb = math.inf  # min bound over nodes dropped while still below the incumbent
    heap: list[_Node] = []
    order = 0
    nodes = 0
    reported_bound = -math.inf
    history: list[float] = []

    def internal(x: np.ndarray) -> float:
        return sense * float(lp.c @ x)

    def try_incumbent(x: np.ndarray | None) -> bool:
        nonlocal incumbent, inc_val
        if x is None:
            return False
        x = np.asarray(x, dtype=float).copy()
        x[prob.integer] = np.round(x[prob.integer])
        if not prob.is_feasible(x):
            return False
        val = internal(x)
        if val < inc_val - 1e-12:
            incumbent, inc_val = x, val
            return True
        return False

    def global_bound(current_key: float) -> float:
        open_min = heap[0].key if heap else math.inf
        return min(open_min, current_key, closed_lb, inc_val)

    def primal_target_hit() -> bool:
        if limits.target_primal is None or incumbent is None:
            return False
        return sense * inc_val >= limits.target_primal if lp.maximize else inc_val <= limits.target_primal

    def dual_target_hit(bound: float) -> bool:
        if limits.target_dual is None:
            return False
        value = sense * bound
        return value < limits.target_dual if lp.maximize else value > limits.target_dual

    def finish(status: MipStatus, bound: float, reason: str) -> MipSolution:
        bound = min(bound, inc_val)
        obj = sense * inc_val if incumbent is not None else (-math.inf if lp.maximize else math.inf)
        dual = sense * bound
        if status is MipStatus.INFEASIBLE:
            dual = -math.inf if lp.maximize else math.inf
        return MipSolution(
            status,
            incumbent,
            obj,
            dual,
            _relative_gap(inc_val, bound) if incumbent is not None else math.inf,
            nodes,
            reason,
            tuple(history),
        )

    current: _Node | None = _Node(-math.inf, order, lp.lb.copy(), lp.ub.copy(), 0)
    while True:
        if current is None:
            if not heap:
                break
            current = heapq.heappop(heap)
        bound_now = global_bound(current.key)
        reported_bound = max(reported_bound, bound_now)
        history.append(sense * reported_bound)

        if incumbent is not None and inc_val - reported_bound <= limits.abs_gap:
            return finish(MipStatus.OPTIMAL, reported_bound, "gap")
        if primal_target_hit():
            return finish(MipStatus.LIMIT, reported_bound, "target_primal")
        if dual_target_hit(reported_bound):
            return finish(MipStatus.LIMIT, reported_bound, "target_dual")
        if nodes >= limits.node_limit:
            return finish(MipStatus.LIMIT, reported_bound, "node_limit")
        if time.perf_counter() - start > limits.time_limit:
            return finish(MipStatus.LIMIT, reported_bound, "time_limit")

        node, current = current, None
        if node.key >= inc_val - limits.abs_gap:
            continue
        nodes += 1
        sol = solve_lp(lp.with_bounds(node.lb, node.ub))
        if sol.status is LPStatus.INFEASIBLE:
            continue
        if sol.status is LPStatus.UNBOUNDED:
            if incumbent is None and nodes == 1:
                return MipSolution(MipStatus.UNBOUNDED, None, math.nan, sense * -math.inf, math.inf, nodes, "unbounded")
            closed_lb = -math.inf
            continue
        if sol.status is not LPStatus.OPTIMAL:
            closed_lb = min(closed_lb, node.key)
            continue

        x = sol.x
        node_val = max(internal(x), node.key)
        if node_val >= inc_val - limits.abs_gap:
            continue

        xi = x[prob.integer]
        frac = np.abs(xi - np.round(xi))
        if np.all(frac <= INT_TOL):
            try_incumbent(x)
            continue
        if heuristic is not None:
            try_incumbent(heuristic(x))
            if node_val >= inc_val - limits.abs_gap:
                continue

        int_idx = np.flatnonzero(prob.integer)
        # most fractional, lowest index on ties
        scores = np.abs(frac - 0.5)
        j = int(int_idx[int(np.argmin(scores))])
        v = x[j]
        down_ub = node.ub.copy()
        down_ub[j] = math.floor(v)
        up_lb = node.lb.copy()
        up_lb[j] = math.ceil(v)
        down = _Node(node_val, 0, node.lb.copy(), down_ub, node.depth + 1)
        up = _Node(node_val, 0, up_lb, node.ub.copy(), node.depth + 1)
        first, second = (up, down) if v - math.floor(v) >= 0.5 else (down, up)
        order += 1
        second.order = order
        heapq.heappush(heap, second)
        order += 1
        first.order = order
        current = first

    if incumbent is None:
        if math.isfinite(closed_lb):
            return finish(MipStatus.LIMIT, closed_lb, "numerical")
        return finish(MipStatus.INFEASIBLE, math.inf, "exhausted")
    return finish(MipStatus.OPTIMAL, min(inc_val, closed_lb), "exhausted")
