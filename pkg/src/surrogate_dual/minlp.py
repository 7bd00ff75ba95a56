"""Spatial branch and bound for surrogate sub-problems.

A sub-problem keeps the linear part of a :class:`~surrogate_dual.model.Model`
(linear rows, refined rows, primal cutoff, integrality, boxes) and replaces
the nonlinear constraints by ``K`` aggregated polynomials ``h_k(x) <= 0``.
In Lagrangian mode an extra polynomial is moved into the objective through
an epigraph variable.

Node relaxations are LPs over the extended variable vector of
:mod:`surrogate_dual.relax`.  Integer branching goes first; otherwise the
atom with the largest envelope violation picks the variable to split.
"""

from __future__ import annotations

import enum
import heapq
import math
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .lp import EQ, LE, LinearProgram, LPStatus, solve_lp
from .model import Model, Polynomial, aggregate
from .relax import Reformulation, build_reformulation, cuts_to_arrays, emit_cuts

FEAS_TOL = 1e-7
INT_TOL = 1e-6
_LOCAL_SEARCH_NODES = 6
_LOCAL_SEARCH_EVERY = 10
_PROPAGATION_ROUNDS = 5


class SubStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    EARLY_STOPPED = "early_stopped"
    INFEASIBLE = "infeasible"
    LIMIT = "limit"


@dataclass(frozen=True)
class SolveLimits:
    """Stopping rules for one sub-solve.

    ``early_stop_at``: return as soon as a feasible point with objective at
    most this value is known.
    """

    time_limit: float = math.inf
    node_limit: int = 20_000
    gap_limit: float = 1e-4
    early_stop_at: float | None = None

    def __post_init__(self):
        if not self.gap_limit > 0:
            raise ValueError("gap_limit must be positive")

    def with_early_stop(self, value: float | None) -> "SolveLimits":
        return replace(self, early_stop_at=value)


@dataclass(frozen=True)
class SubProblem:
    model: Model
    aggregated: tuple[Polynomial, ...] = ()
    objective_poly: Polynomial | None = None
    boxes: tuple[tuple[float, float], ...] | None = None

    @property
    def K(self) -> int:
        return len(self.aggregated)

    def local_boxes(self) -> np.ndarray:
        return np.array(self.boxes if self.boxes is not None else self.model.boxes, dtype=float)


@dataclass
class SubSolveOutcome:
    status: SubStatus
    dual_bound: float
    x: np.ndarray | None
    objective: float
    gap: float
    nodes: int = 0
    bound_history: list[float] = field(default_factory=list, repr=False)

    @property
    def has_point(self) -> bool:
        return self.x is not None


def relative_gap(primal: float, dual: float) -> float:
    """``(primal - dual) / max(1, |primal|)``; infinite without both bounds."""
    if not (math.isfinite(primal) and math.isfinite(dual)):
        return math.inf
    return max(0.0, primal - dual) / max(1.0, abs(primal))


@dataclass(order=True)
class _Node:
    key: float
    order: int
    boxes: np.ndarray = field(compare=False)
    depth: int = field(compare=False, default=0)


class _Tree:
    """One spatial branch-and-bound run; single use."""

    def __init__(self, sp: SubProblem, limits: SolveLimits):
        self.sp = sp
        self.limits = limits
        model = sp.model
        self.model = model
        self.n = model.n
        self.boxes = sp.local_boxes()
        self.trivially_infeasible = False

        cons = []
        for poly in sp.aggregated:
            if poly.degree == 0:
                if poly.constant > FEAS_TOL:
                    self.trivially_infeasible = True
                continue
            cons.append(poly)
        self.cons = cons
        self.obj_poly = sp.objective_poly if sp.objective_poly and not sp.objective_poly.is_zero() else None

        family = cons + ([self.obj_poly] if self.obj_poly is not None else [])
        self.reform: Reformulation = build_reformulation(family, self.boxes)
        n_ext = self.reform.n_ext
        self.n_cols = n_ext + (1 if self.obj_poly is not None else 0)
        self.t_index = n_ext if self.obj_poly is not None else None

        self.lin_rows = model.all_linear_rows()
        lin_A = np.array([row.dense(self.n) for row in self.lin_rows]).reshape(-1, self.n)
        lin_b = np.array([row.rhs for row in self.lin_rows])
        self.lin_A, self.lin_b = lin_A, lin_b

        rows, rhs = [], []
        for r in range(lin_A.shape[0]):
            row = np.zeros(self.n_cols)
            row[: self.n] = lin_A[r]
            rows.append(row)
            rhs.append(lin_b[r])
        for poly in cons:
            coeffs, const = self.reform.linearize(poly)
            row = np.zeros(self.n_cols)
            row[:n_ext] = coeffs
            rows.append(row)
            rhs.append(-const)
        if self.obj_poly is not None:
            coeffs, const = self.reform.linearize(self.obj_poly)
            row = np.zeros(self.n_cols)
            row[:n_ext] = coeffs
            row[self.t_index] = -1.0
            rows.append(row)
            rhs.append(-const)
            self.obj_linear = (coeffs, const)
        self.static_A = np.array(rows).reshape(-1, self.n_cols)
        self.static_b = np.array(rhs, dtype=float)
        n_prop = lin_A.shape[0] + len(cons)  # the epigraph row is not propagated
        self.prop_rows = []
        for r in range(n_prop):
            idx = np.flatnonzero(self.static_A[r, :n_ext])
            if idx.size:
                self.prop_rows.append((idx, self.static_A[r, idx], float(self.static_b[r])))

        self.cost = np.zeros(self.n_cols)
        self.cost[: self.n] = model.objective
        if self.t_index is not None:
            self.cost[self.t_index] = 1.0

        self.integer = model.integrality.copy()
        self.incumbent: np.ndarray | None = None
        self.inc_val = math.inf
        self.closed_lb = math.inf
        self.nodes = 0
        self.history: list[float] = []

    # ------------------------------------------------------------------ LP

    def _t_bounds(self, ext: np.ndarray) -> tuple[float, float]:
        coeffs, const = self.obj_linear
        lo = hi = const
        for j in np.flatnonzero(coeffs):
            a = coeffs[j]
            lo += min(a * ext[j, 0], a * ext[j, 1])
            hi += max(a * ext[j, 0], a * ext[j, 1])
        return lo, hi

    def propagate(self, boxes: np.ndarray) -> np.ndarray | None:
        """Interval bound tightening over the extended vector; ``None`` if infeasible.

        Each row ``sum a_j z_j <= rhs`` bounds every ``z_j`` by the minimum
        activity of the others; power atoms pass bounds back to their base
        variable, and products are recomputed forward.
        """
        reform = self.reform
        ext = reform.extended_boxes(boxes)
        for _ in range(_PROPAGATION_ROUNDS):
            changed = False
            for idx, coef, rhs in self.prop_rows:
                lo, hi = ext[idx, 0], ext[idx, 1]
                mins = np.where(coef > 0, coef * lo, coef * hi)
                total = mins.sum()
                scale = np.abs(mins).sum() + abs(rhs)
                if total > rhs + 1e-9 * max(1.0, scale):
                    return None
                for k, j in enumerate(idx):
                    others = total - mins[k]
                    slack = 1e-12 * (np.abs(mins).sum() - abs(mins[k]) + abs(rhs))
                    bound = (rhs - others + slack) / coef[k]
                    if coef[k] > 0 and bound < ext[j, 1] - 1e-9 * max(1.0, abs(ext[j, 1])):
                        ext[j, 1] = bound
                        changed = True
                    elif coef[k] < 0 and bound > ext[j, 0] + 1e-9 * max(1.0, abs(ext[j, 0])):
                        ext[j, 0] = bound
                        changed = True
            for atom in reform.atoms:
                if atom.kind == "bilinear":
                    continue
                u, k = atom.args[0], atom.power
                wlo, whi = ext[atom.out]
                if k % 2 == 1:
                    new = (np.cbrt(wlo) if k == 3 else math.copysign(abs(wlo) ** (1 / k), wlo),
                           np.cbrt(whi) if k == 3 else math.copysign(abs(whi) ** (1 / k), whi))
                    new = (new[0] - 1e-12 * abs(new[0]), new[1] + 1e-12 * abs(new[1]))
                else:
                    if whi < 0:
                        return None
                    r = whi ** (1 / k) * (1 + 1e-12)
                    new = (-r, r)
                if new[0] > ext[u, 0] + 1e-9 * max(1.0, abs(ext[u, 0])):
                    ext[u, 0] = new[0]
                    changed = True
                if new[1] < ext[u, 1] - 1e-9 * max(1.0, abs(ext[u, 1])):
                    ext[u, 1] = new[1]
                    changed = True
            orig = ext[: self.n]
            orig[self.integer, 0] = np.ceil(orig[self.integer, 0] - INT_TOL)
            orig[self.integer, 1] = np.floor(orig[self.integer, 1] + INT_TOL)
            if np.any(ext[:, 0] > ext[:, 1] + 1e-9 * np.maximum(1.0, np.abs(ext[:, 1]))):
                return None
            ext[:, 1] = np.maximum(ext[:, 0], ext[:, 1])
            forward = reform.extended_boxes(ext[: self.n])
            ext[self.n :, 0] = np.maximum(ext[self.n :, 0], forward[self.n :, 0])
            ext[self.n :, 1] = np.minimum(ext[self.n :, 1], forward[self.n :, 1])
            if np.any(ext[:, 0] > ext[:, 1] + 1e-9 * np.maximum(1.0, np.abs(ext[:, 1]))):
                return None
            ext[:, 1] = np.maximum(ext[:, 0], ext[:, 1])
            if not changed:
                break
        return ext

    def node_lp(self, ext: np.ndarray) -> LinearProgram:
        cuts = emit_cuts(self.reform, ext)
        cut_A, cut_b, cut_eq = cuts_to_arrays(cuts, self.n_cols)
        lb = np.empty(self.n_cols)
        ub = np.empty(self.n_cols)
        lb[: ext.shape[0]], ub[: ext.shape[0]] = ext[:, 0], ext[:, 1]
        if self.t_index is not None:
            lb[self.t_index], ub[self.t_index] = self._t_bounds(ext)
        A = np.vstack([self.static_A, cut_A])
        b = np.concatenate([self.static_b, cut_b])
        senses = [LE] * self.static_b.size + [EQ if e else LE for e in cut_eq]
        return LinearProgram(self.cost, A, senses, b, lb, ub)

    # -------------------------------------------------------------- primal

    def objective_of(self, x: np.ndarray) -> float:
        val = float(self.model.objective @ x)
        if self.obj_poly is not None:
            val += self.obj_poly.evaluate(x)
        return val

    def is_feasible(self, x: np.ndarray) -> bool:
        if np.any(x < self.boxes[:, 0] - 1e-9) or np.any(x > self.boxes[:, 1] + 1e-9):
            return False
        xi = x[self.integer]
        if np.any(np.abs(xi - np.round(xi)) > INT_TOL):
            return False
        if self.lin_b.size and np.any(self.lin_A @ x > self.lin_b + FEAS_TOL):
            return False
        return all(poly.evaluate(x) <= FEAS_TOL for poly in self.cons)

    def offer(self, x: np.ndarray | None) -> bool:
        if x is None:
            return False
        x = np.clip(np.asarray(x, dtype=float)[: self.n], self.boxes[:, 0], self.boxes[:, 1])
        x[self.integer] = np.round(x[self.integer])
        if not self.is_feasible(x):
            return False
        val = self.objective_of(x)
        if val < self.inc_val - 1e-12:
            self.incumbent, self.inc_val = x, val
            return True
        return False

    def local_search(self, x0: np.ndarray, boxes: np.ndarray) -> np.ndarray | None:
        """SLSQP from ``x0`` with integer variables fixed at rounded values."""
        x0 = np.clip(x0[: self.n], boxes[:, 0], boxes[:, 1])
        base = x0.copy()
        base[self.integer] = np.clip(np.round(base[self.integer]), boxes[self.integer, 0], boxes[self.integer, 1])
        free = (~self.integer) & (boxes[:, 1] > boxes[:, 0])
        if not free.any():
            return base
        idx = np.flatnonzero(free)

        def full(y):
            x = base.copy()
            x[idx] = y
            return x

        c = self.model.objective
        obj_poly = self.obj_poly

        def f(y):
            x = full(y)
            return float(c @ x) + (obj_poly.evaluate(x) if obj_poly is not None else 0.0)

        def df(y):
            x = full(y)
            g = c.copy()
            if obj_poly is not None:
                g = g + obj_poly.gradient(x)
            return g[idx]

        constraints = []
        if self.cons:
            constraints.append(
                {
                    "type": "ineq",
                    "fun": lambda y: np.array([-p.evaluate(full(y)) for p in self.cons]),
                    "jac": lambda y: np.array([-p.gradient(full(y))[idx] for p in self.cons]),
                }
            )
        if self.lin_b.size:
            A = self.lin_A
            constraints.append(
                {
                    "type": "ineq",
                    "fun": lambda y: self.lin_b - A @ full(y),
                    "jac": lambda y: -A[:, idx],
                }
            )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                res = minimize(
                    f,
                    base[idx],
                    jac=df,
                    method="SLSQP",
                    bounds=list(map(tuple, boxes[idx])),
                    constraints=constraints,
                    options={"maxiter": 200, "ftol": 1e-12},
                )
            except (ValueError, ArithmeticError, np.linalg.LinAlgError):
                return None
        if not np.all(np.isfinite(res.x)):
            return None
        return full(res.x)

    # ----------------------------------------------------------- branching

    def choose_branch(self, z: np.ndarray, boxes: np.ndarray) -> tuple[int, float] | None:
        x = z[: self.n]
        widths = boxes[:, 1] - boxes[:, 0]
        if self.integer.any():
            frac = np.abs(x - np.round(x))
            frac[~self.integer] = 0.0
            frac[widths <= 0] = 0.0
            if frac.max() > INT_TOL:
                score = np.where(frac > INT_TOL, np.abs(frac - 0.5), np.inf)
                j = int(np.argmin(score))
                return j, float(x[j])

        best, best_viol = None, 0.0
        for atom in self.reform.atoms:
            viol = abs(z[atom.out] - atom.value(z))
            if viol > best_viol:
                best, best_viol = atom, viol
        candidates: Sequence[int]
        if best is None or best_viol <= 1e-12:
            candidates = range(self.n)
        else:
            candidates = self.reform.original_support(best.out)
        j, width = None, 0.0
        for var in candidates:
            tiny = 1e-9 * max(1.0, abs(boxes[var, 0]), abs(boxes[var, 1]))
            if widths[var] > max(width, tiny):
                j, width = var, widths[var]
        if j is None and best is not None:
            # the violated atom's variables are pinned; fall back to any open variable
            for var in range(self.n):
                tiny = 1e-9 * max(1.0, abs(boxes[var, 0]), abs(boxes[var, 1]))
                if widths[var] > max(width, tiny):
                    j, width = var, widths[var]
        if j is None:
            return None
        lo, hi = boxes[j]
        point = min(max(x[j], lo + 0.1 * width), hi - 0.1 * width)
        return j, float(point)

    def children(self, boxes: np.ndarray, j: int, point: float) -> list[np.ndarray]:
        lo, hi = boxes[j]
        left, right = boxes.copy(), boxes.copy()
        if self.integer[j]:
            split = min(max(math.floor(point), lo), hi - 1)
            left[j, 1] = split
            right[j, 0] = split + 1
        else:
            left[j, 1] = point
            right[j, 0] = point
        return [left, right]

    # ---------------------------------------------------------------- main

    def global_bound(self, heap: list[_Node]) -> float:
        open_min = heap[0].key if heap else math.inf
        return min(open_min, self.closed_lb, self.inc_val)

    def outcome(self, status: SubStatus, heap: list[_Node]) -> SubSolveOutcome:
        if status is SubStatus.INFEASIBLE:
            return SubSolveOutcome(status, math.inf, None, math.inf, math.inf, self.nodes, self.history)
        bound = self.global_bound(heap)
        return SubSolveOutcome(
            status,
            bound,
            None if self.incumbent is None else self.incumbent.copy(),
            self.inc_val,
            relative_gap(self.inc_val, bound),
            self.nodes,
            self.history,
        )

    def early_stop_hit(self) -> bool:
        target = self.limits.early_stop_at
        return target is not None and self.incumbent is not None and self.inc_val <= target

    def solve(self) -> SubSolveOutcome:
        if self.trivially_infeasible:
            return self.outcome(SubStatus.INFEASIBLE, [])
        start = time.perf_counter()
        limits = self.limits
        heap: list[_Node] = [_Node(-math.inf, 0, self.boxes.copy(), 0)]
        order = 0
        last_bound = -math.inf
        while heap:
            bound = self.global_bound(heap)
            last_bound = max(last_bound, bound)
            self.history.append(last_bound)
            if self.incumbent is not None and relative_gap(self.inc_val, bound) <= limits.gap_limit:
                return self.outcome(SubStatus.OPTIMAL, heap)
            if self.nodes >= limits.node_limit or time.perf_counter() - start > limits.time_limit:
                return self.outcome(SubStatus.LIMIT, heap)

            node = heapq.heappop(heap)
            if node.key >= self.inc_val:
                continue
            self.nodes += 1
            ext = self.propagate(node.boxes)
            if ext is None:
                continue
            boxes = ext[: self.n].copy()
            sol = solve_lp(self.node_lp(ext))
            if sol.status is LPStatus.INFEASIBLE:
                continue
            if sol.status is not LPStatus.OPTIMAL:
                self.closed_lb = min(self.closed_lb, node.key)
                continue
            z = sol.x
            value = max(float(sol.objective), node.key)

            self.offer(z[: self.n])
            if value < self.inc_val and (
                self.nodes <= _LOCAL_SEARCH_NODES or self.nodes % _LOCAL_SEARCH_EVERY == 0
            ):
                self.offer(self.local_search(z, boxes))
            if self.early_stop_hit():
                heapq.heappush(heap, _Node(value, order, boxes, node.depth))
                return self.outcome(SubStatus.EARLY_STOPPED, heap)
            if value >= self.inc_val:
                continue

            choice = self.choose_branch(z, boxes)
            if choice is None:
                self.closed_lb = min(self.closed_lb, value)
                continue
            for child in self.children(boxes, *choice):
                order += 1
                heapq.heappush(heap, _Node(value, order, child, node.depth + 1))

        if self.incumbent is None:
            if math.isfinite(self.closed_lb):
                return self.outcome(SubStatus.LIMIT, heap)
            return self.outcome(SubStatus.INFEASIBLE, heap)
        return self.outcome(SubStatus.OPTIMAL, heap)


def solve_subproblem(sp: SubProblem, limits: SolveLimits | None = None) -> SubSolveOutcome:
    """Globally minimize ``c^T x`` (plus the epigraph term) over the sub-problem.

    ``dual_bound`` is always a valid lower bound; ``x`` is the best feasible
    point found (``None`` when infeasible or when no point was found).
    """
    return _Tree(sp, limits or SolveLimits()).solve()


def lagrangian_value(
    model: Model, lambda_row: Sequence[float], limits: SolveLimits | None = None
) -> float:
    """Lower bound on ``min_{x in X} c^T x + sum_i lambda_i g_i(x)`` within the gap limit."""
    return lagrangian_outcome(model, lambda_row, limits).dual_bound


def lagrangian_outcome(
    model: Model, lambda_row: Sequence[float], limits: SolveLimits | None = None
) -> SubSolveOutcome:
    penalty = aggregate(model, lambda_row)
    return solve_subproblem(SubProblem(model, (), objective_poly=penalty), limits)


def identity_subproblem(model: Model) -> SubProblem:
    """All constraints kept separately (unit-vector aggregation): the MINLP itself."""
    return SubProblem(model, tuple(model.nonlinear))
