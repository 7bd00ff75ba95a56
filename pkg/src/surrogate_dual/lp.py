"""Dense linear programming front-end.

The LP layer is a thin contract over HiGHS (through :func:`scipy.optimize.linprog`):
status-tagged results, row duals in the caller's orientation, and a
``stalled`` status for solver breakdowns instead of exceptions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

LE, EQ, GE = "<=", "==", ">="

_HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-9,
    "dual_feasibility_tolerance": 1e-9,
}


class LPStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    STALLED = "stalled"


@dataclass
class LinearProgram:
    """``min`` (or ``max``) ``c^T x`` s.t. ``A x  (<=|==|>=)  b``, ``lb <= x <= ub``.

    ``senses`` holds one of ``"<="``, ``"=="``, ``">="`` per row.  Bounds may be
    infinite.
    """

    c: np.ndarray
    A: np.ndarray
    senses: Sequence[str]
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    maximize: bool = False

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.senses = tuple(self.senses)
        self.lb = np.broadcast_to(np.asarray(self.lb, dtype=float), (n,)).copy()
        self.ub = np.broadcast_to(np.asarray(self.ub, dtype=float), (n,)).copy()
        if self.A.shape[0] != self.b.size or len(self.senses) != self.b.size:
            raise ValueError("row count mismatch between A, senses and b")
        bad = set(self.senses) - {LE, EQ, GE}
        if bad:
            raise ValueError(f"unknown row relation(s) {sorted(bad)}")

    @classmethod
    def from_rows(
        cls,
        c: Sequence[float],
        rows: Sequence[tuple[Sequence[float], str, float]] = (),
        bounds: Sequence[tuple[float, float]] | None = None,
        maximize: bool = False,
    ) -> "LinearProgram":
        n = len(c)
        A = np.array([r[0] for r in rows], dtype=float).reshape(-1, n)
        senses = [r[1] for r in rows]
        b = np.array([r[2] for r in rows], dtype=float)
        if bounds is None:
            lb, ub = np.zeros(n), np.full(n, np.inf)
        else:
            lb = np.array([-np.inf if lo is None else lo for lo, _ in bounds], dtype=float)
            ub = np.array([np.inf if hi is None else hi for _, hi in bounds], dtype=float)
        return cls(c, A, senses, b, lb, ub, maximize)

    @property
    def n(self) -> int:
        return self.c.size

    def row_activity(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x

    def max_violation(self, x: np.ndarray) -> float:
        """Largest violation of rows and bounds at ``x`` (0 when feasible)."""
        act = self.A @ x
        senses = np.array(self.senses)
        viol = np.zeros_like(act)
        viol = np.where(senses == LE, act - self.b, viol)
        viol = np.where(senses == GE, self.b - act, viol)
        viol = np.where(senses == EQ, np.abs(act - self.b), viol)
        bound_viol = np.maximum(self.lb - x, x - self.ub)
        return float(max(viol.max(initial=0.0), bound_viol.max(initial=0.0), 0.0))

    def with_rows(self, A: np.ndarray, senses: Sequence[str], b: np.ndarray) -> "LinearProgram":
        return LinearProgram(
            self.c,
            np.vstack([self.A, np.asarray(A, dtype=float).reshape(-1, self.n)]),
            tuple(self.senses) + tuple(senses),
            np.concatenate([self.b, np.asarray(b, dtype=float).ravel()]),
            self.lb,
            self.ub,
            self.maximize,
        )

    def with_bounds(self, lb: np.ndarray, ub: np.ndarray) -> "LinearProgram":
        return LinearProgram(self.c, self.A, self.senses, self.b, lb, ub, self.maximize)


@dataclass
class LpSolution:
    status: LPStatus
    objective: float = float("nan")
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    bound_duals: np.ndarray | None = None
    message: str = ""
    dual_objective: float = float("nan")
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status is LPStatus.OPTIMAL


def solve_lp(lp: LinearProgram) -> LpSolution:
    """Solve ``lp``; never raises on solver trouble (status ``stalled`` instead).

    ``duals[i]`` is the sensitivity of the optimal objective to ``b[i]`` and
    ``bound_duals[j]`` that of the active bound on ``x_j``, so
    ``objective == duals @ b + bound_duals @ active_bounds`` (strong duality).
    """
    sign = -1.0 if lp.maximize else 1.0
    senses = np.array(lp.senses, dtype=object)
    le, ge, eq = senses == LE, senses == GE, senses == EQ
    A_ub = np.vstack([lp.A[le], -lp.A[ge]]) if (le.any() or ge.any()) else None
    b_ub = np.concatenate([lp.b[le], -lp.b[ge]]) if A_ub is not None else None
    A_eq = lp.A[eq] if eq.any() else None
    b_eq = lp.b[eq] if eq.any() else None
    bounds = np.column_stack([lp.lb, lp.ub])
    bounds = [(None if np.isneginf(lo) else lo, None if np.isposinf(hi) else hi) for lo, hi in bounds]

    try:
        res = linprog(
            sign * lp.c,
            A_ub=A_ub,
            b_ub=b_ub,
            A_eq=A_eq,
            b_eq=b_eq,
            bounds=bounds,
            method="highs",
            options=_HIGHS_OPTIONS,
        )
    except (ValueError, np.linalg.LinAlgError) as exc:
        return LpSolution(LPStatus.STALLED, message=str(exc))

    if res.status == 2:
        return LpSolution(LPStatus.INFEASIBLE, message=res.message)
    if res.status == 3:
        return LpSolution(LPStatus.UNBOUNDED, message=res.message)
    if res.status != 0 or res.x is None:
        return LpSolution(LPStatus.STALLED, message=res.message)

    x = np.asarray(res.x, dtype=float)
    duals = np.zeros(lp.b.size)
    n_le = int(le.sum())
    if A_ub is not None:
        marg = np.asarray(res.ineqlin.marginals, dtype=float)
        duals[np.flatnonzero(le)] = marg[:n_le]
        duals[np.flatnonzero(ge)] = -marg[n_le:]
    if A_eq is not None:
        duals[np.flatnonzero(eq)] = np.asarray(res.eqlin.marginals, dtype=float)
    bound_duals = np.asarray(res.lower.marginals, dtype=float) + np.asarray(res.upper.marginals, dtype=float)
    duals *= sign
    bound_duals *= sign

    lower_part = np.where(np.isfinite(lp.lb), lp.lb, 0.0) * np.asarray(res.lower.marginals) * sign
    upper_part = np.where(np.isfinite(lp.ub), lp.ub, 0.0) * np.asarray(res.upper.marginals) * sign
    dual_obj = float(duals @ lp.b + lower_part.sum() + upper_part.sum())

    return LpSolution(
        LPStatus.OPTIMAL,
        objective=float(lp.c @ x),
        x=x,
        duals=duals,
        bound_duals=bound_duals,
        message=res.message,
        dual_objective=dual_obj,
    )
