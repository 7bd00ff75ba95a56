"""Benders-type search for (K-)surrogate multipliers.

Each iteration solves the sub-problem at the current aggregation, records
its solution ``x`` in the point set, and asks a master problem for the
multipliers that make every recorded point violate some aggregated
constraint by as much as possible (the violation ``psi``).  ``K = 1`` uses a
plain LP master; ``K >= 2`` uses a big-M MILP where binaries choose which
aggregation cuts off each point.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .lp import EQ, GE, LE, LinearProgram, LPStatus, solve_lp
from .minlp import SolveLimits, SubProblem, SubSolveOutcome, SubStatus, solve_subproblem
from .mip import MipLimits, MipProblem, MipStatus, solve_mip
from .model import AggregationMatrix, Model, aggregate

SYMMETRY_MODES = ("none", "first", "diag")
DEDUP_TOL = 1e-9

TERMINATION_REASONS = (
    "psi_below_epsilon",
    "iteration_limit",
    "time_limit",
    "target_reached",
    "sub_infeasible",
    "sub_failure",
    "master_failure",
)


@dataclass(frozen=True)
class BendersConfig:
    K: int = 1
    epsilon: float = 1e-6
    alpha: float = 0.2
    stall_limit: int = 20
    trust_radius: float = 0.1
    max_iterations: int = 50
    time_limit: float = math.inf
    target_bound: float | None = None
    symmetry: str = "first"
    stabilize: bool = True
    sub_limits: SolveLimits = field(default_factory=SolveLimits)
    master_node_limit: int = 20_000

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0 < self.trust_radius < 1:
            raise ValueError("trust_radius must lie in (0, 1)")
        if self.symmetry not in SYMMETRY_MODES:
            raise ValueError(f"symmetry must be one of {SYMMETRY_MODES}")
        if self.stall_limit < 1:
            raise ValueError("stall_limit must be positive")


@dataclass
class MasterState:
    """Point set of the master plus the stabilization state.

    ``support`` is a ``K x m`` mask of entries allowed to be nonzero and
    ``trust`` a ``K x m x 2`` array of entry intervals; either may be ``None``.
    """

    m: int
    points: list[np.ndarray] = field(default_factory=list)
    gvals: list[np.ndarray] = field(default_factory=list)
    psi_history: list[float] = field(default_factory=list)
    best_bound: float = -math.inf
    best_lambda: AggregationMatrix | None = None
    stall_counter: int = 0
    support: np.ndarray | None = None
    trust: np.ndarray | None = None
    psi_cap: float = math.inf

    def add_point(self, x: Sequence[float], g: Sequence[float]) -> bool:
        """Append ``x`` unless it duplicates a stored point (inf-norm ``1e-9``)."""
        x = np.asarray(x, dtype=float)
        for old in self.points:
            if np.max(np.abs(old - x), initial=0.0) <= DEDUP_TOL:
                return False
        g = np.asarray(g, dtype=float)
        if g.size != self.m:
            raise ValueError("constraint value vector has the wrong length")
        self.points.append(x.copy())
        self.gvals.append(g.copy())
        return True

    def add_values(self, g: Sequence[float]) -> None:
        """Add a point known only by its constraint values (test and oracle use)."""
        self.points.append(np.full(1, float(len(self.points))))
        self.gvals.append(np.asarray(g, dtype=float).copy())

    @property
    def G(self) -> np.ndarray:
        return np.array(self.gvals, dtype=float).reshape(-1, self.m)

    @property
    def stabilized(self) -> bool:
        return self.support is not None or self.trust is not None

    def set_stabilization(self, lam: AggregationMatrix, radius: float) -> None:
        arr = lam.as_array()
        self.support = arr > 0
        box = np.empty(arr.shape + (2,))
        box[..., 0] = np.maximum(0.0, arr - radius)
        box[..., 1] = np.minimum(1.0, arr + radius)
        self.trust = box

    def clear_stabilization(self) -> None:
        self.support = None
        self.trust = None

    def lambda_bounds(self, K: int) -> np.ndarray:
        """``(K*m, 2)`` entry bounds from the active restrictions."""
        bounds = np.zeros((K, self.m, 2))
        bounds[..., 1] = 1.0
        if self.trust is not None:
            bounds[..., 0] = np.maximum(bounds[..., 0], self.trust[..., 0])
            bounds[..., 1] = np.minimum(bounds[..., 1], self.trust[..., 1])
        if self.support is not None:
            bounds[~self.support] = 0.0
        return bounds.reshape(K * self.m, 2)


@dataclass
class IterationRecord:
    iteration: int
    lam: np.ndarray
    sub_status: str
    sub_bound: float
    D: float
    psi: float = math.nan
    psi_primal: float = math.nan
    restricted: bool = False
    exact_master: bool = True
    points: int = 0
    sub_nodes: int = 0
    master_nodes: int = 0
    seconds: float = 0.0


@dataclass
class BendersReport:
    K: int
    m: int
    records: list[IterationRecord]
    bound: float
    best_lambda: AggregationMatrix
    reason: str
    seconds: float
    state: MasterState = field(repr=False)

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def psi_history(self) -> list[float]:
        return [r.psi for r in self.records]

    @property
    def bound_history(self) -> list[float]:
        return [r.D for r in self.records]


# ---------------------------------------------------------------- masters


def solve_master_lp(state: MasterState, model: Model | None = None) -> tuple[np.ndarray, float]:
    """Exact single-aggregation master: ``max psi`` s.t. ``lambda . g(x) >= psi`` for all points.

    ``model`` is accepted for interface symmetry; only the cached values are used.
    """
    G = state.G
    if G.shape[0] == 0:
        raise ValueError("the master needs at least one point")
    m = state.m
    c = np.zeros(m + 1)
    c[m] = 1.0
    rows = [(np.append(-g, 1.0), LE, 0.0) for g in G]
    rows.append((np.append(np.ones(m), 0.0), LE, 1.0))
    bounds = [tuple(b) for b in state.lambda_bounds(1)] + [(0.0, None)]
    sol = solve_lp(LinearProgram.from_rows(c, rows, bounds, maximize=True))
    if sol.status is not LPStatus.OPTIMAL:
        raise RuntimeError(f"master LP failed: {sol.status.value} {sol.message}")
    lam = np.maximum(sol.x[:m], 0.0)
    return lam, max(0.0, float(sol.objective))


def psi_upper_bound(G: np.ndarray) -> float:
    """Largest violation any normalized multiplier row can reach at every point."""
    if G.shape[0] == 0:
        return 0.0
    return float(np.min(np.maximum(0.0, G.max(axis=1))))


def big_m_values(G: np.ndarray, psi_ub: float) -> np.ndarray:
    """Per-point ``M`` making the deactivated big-M rows redundant."""
    return psi_ub + np.maximum(0.0, -G.min(axis=1))


@dataclass(frozen=True)
class MasterLayout:
    """Column and row positions inside the big-M master."""

    K: int
    m: int
    n_points: int

    def lam(self, k: int, i: int) -> int:
        return k * self.m + i

    @property
    def psi(self) -> int:
        return self.K * self.m

    def z(self, p: int, k: int) -> int:
        return self.K * self.m + 1 + p * self.K + k

    @property
    def n_cols(self) -> int:
        return self.K * self.m + 1 + self.n_points * self.K

    @property
    def big_m_rows(self) -> slice:
        return slice(0, self.n_points * self.K)

    @property
    def assignment_rows(self) -> slice:
        start = self.n_points * self.K
        return slice(start, start + self.n_points)

    @property
    def norm_rows(self) -> slice:
        start = self.n_points * (self.K + 1)
        return slice(start, start + self.K)

    @property
    def symmetry_start(self) -> int:
        return self.n_points * (self.K + 1) + self.K


def symmetry_rows(K: int, m: int, mode: str) -> list[tuple[int, int]]:
    """Pairs ``(a, b)`` of lambda columns meaning ``lambda[a] >= lambda[b]``."""
    lay = MasterLayout(K, m, 0)
    if mode == "first":
        return [(lay.lam(k, 0), lay.lam(k + 1, 0)) for k in range(K - 1)]
    if mode == "diag":
        return [(lay.lam(k, k), lay.lam(j, k)) for k in range(min(K, m)) for j in range(k + 1, K)]
    return []


def build_master_milp(state: MasterState, model: Model | None, cfg: BendersConfig) -> MipProblem:
    """Big-M master for ``K >= 2``.

    Columns: lambda (row-major, ``K*m``), psi, then ``z[p, k]`` point-major.
    Rows: big-M rows, assignment rows, norm rows, symmetry rows.  Active
    support and trust restrictions become column bounds.
    """
    K, m = cfg.K, state.m
    G = state.G
    N = G.shape[0]
    lay = MasterLayout(K, m, N)
    psi_ub = min(psi_upper_bound(G), state.psi_cap)
    M = big_m_values(G, psi_ub)

    A = np.zeros((N * K + N + K, lay.n_cols))
    senses: list[str] = []
    b: list[float] = []
    for p in range(N):
        for k in range(K):
            r = p * K + k
            A[r, lay.lam(k, 0) : lay.lam(k, 0) + m] = -G[p]
            A[r, lay.psi] = 1.0
            A[r, lay.z(p, k)] = M[p]
            senses.append(LE)
            b.append(M[p])
    for p in range(N):
        r = N * K + p
        A[r, lay.z(p, 0) : lay.z(p, 0) + K] = 1.0
        senses.append(EQ)
        b.append(1.0)
    for k in range(K):
        r = N * K + N + k
        A[r, lay.lam(k, 0) : lay.lam(k, 0) + m] = 1.0
        senses.append(LE)
        b.append(1.0)
    sym = symmetry_rows(K, m, cfg.symmetry)
    if sym:
        S = np.zeros((len(sym), lay.n_cols))
        for r, (hi, lo) in enumerate(sym):
            S[r, hi], S[r, lo] = 1.0, -1.0
        A = np.vstack([A, S])
        senses += [GE] * len(sym)
        b += [0.0] * len(sym)

    lb = np.zeros(lay.n_cols)
    ub = np.ones(lay.n_cols)
    lam_bounds = state.lambda_bounds(K)
    lb[: K * m], ub[: K * m] = lam_bounds[:, 0], lam_bounds[:, 1]
    lb[lay.psi], ub[lay.psi] = 0.0, psi_ub
    c = np.zeros(lay.n_cols)
    c[lay.psi] = 1.0
    integer = np.zeros(lay.n_cols, dtype=bool)
    integer[lay.psi + 1 :] = True
    return MipProblem(LinearProgram(c, A, senses, b, lb, ub, maximize=True), integer)


def _assignment_heuristic(G: np.ndarray, K: int, m: int, psi_ub: float):
    """Keep the LP multipliers; send each point to its most violated aggregation."""
    lay = MasterLayout(K, m, G.shape[0])

    def heuristic(x: np.ndarray) -> np.ndarray | None:
        lam = np.clip(x[: K * m], 0.0, None).reshape(K, m)
        acts = G @ lam.T  # points x K
        best = acts.argmax(axis=1)
        psi = float(acts.max(axis=1).min(initial=math.inf)) if G.shape[0] else 0.0
        if psi < 0:
            return None
        y = np.zeros(lay.n_cols)
        y[: K * m] = lam.ravel()
        y[lay.psi] = min(psi, psi_ub)
        for p, k in enumerate(best):
            y[lay.z(p, int(k))] = 1.0
        return y

    return heuristic


@dataclass
class MasterResult:
    lam: np.ndarray  # K x m
    psi_dual: float
    psi_primal: float
    exact: bool
    restricted: bool
    nodes: int


def solve_master(state: MasterState, cfg: BendersConfig, psi_prev: float | None) -> MasterResult:
    """One master solve under the current restrictions (no fallback logic)."""
    K, m = cfg.K, state.m
    restricted = state.stabilized
    if K == 1:
        lam, psi = solve_master_lp(state)
        return MasterResult(lam.reshape(1, m), psi, psi, True, restricted, 0)
    prob = build_master_milp(state, None, cfg)
    psi_ub = float(prob.lp.ub[K * m])
    target = cfg.alpha * psi_prev if (psi_prev is not None and cfg.alpha < 1 and psi_prev > 0) else None
    limits = MipLimits(node_limit=cfg.master_node_limit, target_primal=target)
    sol = solve_mip(prob, limits, heuristic=_assignment_heuristic(state.G, K, m, psi_ub))
    if sol.status is MipStatus.INFEASIBLE:
        return MasterResult(np.zeros((K, m)), -math.inf, -math.inf, True, restricted, sol.nodes)
    if sol.x is None:
        raise RuntimeError(f"master MILP returned no point ({sol.reason})")
    lam = np.clip(sol.x[: K * m], 0.0, None).reshape(K, m)
    exact = sol.status is MipStatus.OPTIMAL
    return MasterResult(lam, float(sol.dual_bound), float(sol.objective), exact, restricted, sol.nodes)


# ------------------------------------------------------------ evaluation


def aggregated_rows(model: Model, lam: AggregationMatrix) -> tuple:
    """Aggregated polynomials for the nonzero rows of ``lam``."""
    return tuple(aggregate(model, row) for row in lam.as_array() if np.any(row > 0))


def surrogate_outcome(
    model: Model, lam: AggregationMatrix | Sequence, limits: SolveLimits | None = None
) -> SubSolveOutcome:
    if not isinstance(lam, AggregationMatrix):
        lam = AggregationMatrix.from_array(np.atleast_2d(np.asarray(lam, dtype=float)))
    return solve_subproblem(SubProblem(model, aggregated_rows(model, lam)), limits)


def evaluate_K_surrogate(
    model: Model, lam: AggregationMatrix | Sequence, limits: SolveLimits | None = None
) -> float:
    """Dual bound ``F^K(lambda)``: ``+inf`` when the relaxation is infeasible."""
    return surrogate_outcome(model, lam, limits).dual_bound


# ------------------------------------------------------------------ loop


def _initial_lambda(model: Model, K: int, warm_start: AggregationMatrix | None) -> AggregationMatrix:
    if warm_start is None:
        return AggregationMatrix.zeros(K, model.m)
    if warm_start.m != model.m:
        raise ValueError("warm start has the wrong number of columns")
    arr = warm_start.normalized().as_array()
    if arr.shape[0] > K:
        arr = arr[:K]
    return AggregationMatrix.from_array(arr).padded(K)


def run_benders(
    model: Model,
    cfg: BendersConfig | None = None,
    warm_start: AggregationMatrix | None = None,
) -> BendersReport:
    """Benders loop for the (K-)surrogate dual; never raises on solver trouble."""
    cfg = cfg or BendersConfig()
    K, m = cfg.K, model.m
    start = time.perf_counter()
    state = MasterState(m)
    lam = _initial_lambda(model, K, warm_start)
    state.best_lambda = lam
    records: list[IterationRecord] = []
    psi_prev: float | None = None
    reason = "iteration_limit"
    stabilizing = cfg.stabilize and K >= 2

    for it in range(1, cfg.max_iterations + 1):
        elapsed = time.perf_counter() - start
        if elapsed > cfg.time_limit:
            reason = "time_limit"
            break
        t0 = time.perf_counter()
        D = state.best_bound
        stop_at = D if cfg.target_bound is None else max(D, cfg.target_bound)
        limits = cfg.sub_limits.with_early_stop(stop_at if math.isfinite(stop_at) else None)
        if math.isfinite(cfg.time_limit):
            remaining = max(0.0, cfg.time_limit - elapsed)
            limits = SolveLimits(
                min(limits.time_limit, remaining), limits.node_limit, limits.gap_limit, limits.early_stop_at
            )
        out = solve_subproblem(SubProblem(model, aggregated_rows(model, lam)), limits)

        improved = out.dual_bound > state.best_bound
        if improved:
            state.best_bound = out.dual_bound
            state.best_lambda = lam
            state.stall_counter = 0
        else:
            state.stall_counter += 1
        rec = IterationRecord(
            it, lam.as_array().copy(), out.status.value, out.dual_bound, state.best_bound, sub_nodes=out.nodes
        )
        records.append(rec)

        if cfg.target_bound is not None and state.best_bound >= cfg.target_bound:
            reason = "target_reached"
            rec.seconds = time.perf_counter() - t0
            break
        if out.status is SubStatus.INFEASIBLE:
            reason = "sub_infeasible"
            rec.seconds = time.perf_counter() - t0
            break
        if out.x is None:
            reason = "sub_failure"
            rec.seconds = time.perf_counter() - t0
            break
        state.add_point(out.x, model.constraint_values(out.x))
        rec.points = len(state.points)

        if stabilizing:
            if improved and np.any(lam.as_array() > 0):
                state.set_stabilization(lam, cfg.trust_radius)
            elif state.stall_counter >= cfg.stall_limit and state.stabilized:
                state.clear_stabilization()
                state.stall_counter = 0

        try:
            res = solve_master(state, cfg, psi_prev)
            if res.restricted and (res.psi_dual < cfg.epsilon or not math.isfinite(res.psi_dual)):
                state.clear_stabilization()
                res = solve_master(state, cfg, psi_prev)
        except RuntimeError:
            reason = "master_failure"
            rec.seconds = time.perf_counter() - t0
            break
        if not res.restricted and K >= 2:
            state.psi_cap = min(state.psi_cap, res.psi_dual)
        psi_prev = res.psi_dual
        state.psi_history.append(res.psi_dual)
        rec.psi, rec.psi_primal = res.psi_dual, res.psi_primal
        rec.restricted, rec.exact_master, rec.master_nodes = res.restricted, res.exact, res.nodes
        rec.seconds = time.perf_counter() - t0
        if res.psi_dual < cfg.epsilon:
            reason = "psi_below_epsilon"
            break
        lam = AggregationMatrix.from_array(res.lam).normalized()

    return BendersReport(
        K,
        m,
        records,
        state.best_bound,
        state.best_lambda,
        reason,
        time.perf_counter() - start,
        state,
    )
