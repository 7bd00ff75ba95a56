"""Reuse of root aggregations as local dual bounds inside a branch-and-bound tree.

At a node the local MILP bound ``F_v(0)`` is computed first.  Pool
candidates inherited from the parent are then tried in order; the first
one that beats the MILP bound is returned together with the surviving
candidates, and candidates proven useless are dropped for the subtree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .minlp import SolveLimits, SubProblem, SubStatus, solve_subproblem
from .model import AggregationMatrix, Model
from .surrogate import BendersReport, aggregated_rows

IMPROVE_TOL = 1e-9


@dataclass(frozen=True)
class PoolEntry:
    lam: AggregationMatrix
    root_bound: float


@dataclass(frozen=True)
class AggregationPool:
    """Aggregations that beat the root MILP bound, strongest first."""

    entries: tuple[PoolEntry, ...] = ()
    root_milp_bound: float = -math.inf

    @classmethod
    def build(
        cls,
        candidates: Iterable[tuple[AggregationMatrix, float]],
        root_milp_bound: float,
        size: int | None = None,
    ) -> "AggregationPool":
        seen: set = set()
        admitted = []
        for lam, bound in candidates:
            if not bound > root_milp_bound + IMPROVE_TOL * max(1.0, abs(root_milp_bound)):
                continue
            key = lam.normalized().rows
            if key in seen:
                continue
            seen.add(key)
            admitted.append(PoolEntry(lam.normalized(), float(bound)))
        admitted.sort(key=lambda e: -e.root_bound)  # stable: ties keep discovery order
        if size is not None:
            admitted = admitted[: max(0, size)]
        return cls(tuple(admitted), root_milp_bound)

    @classmethod
    def from_reports(
        cls, reports: Sequence[BendersReport], root_milp_bound: float, size: int | None = None
    ) -> "AggregationPool":
        candidates = []
        for rep in reports:
            for rec in rep.records:
                if math.isfinite(rec.sub_bound):
                    candidates.append((AggregationMatrix.from_array(rec.lam), rec.sub_bound))
        return cls.build(candidates, root_milp_bound, size)

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, idx: int) -> PoolEntry:
        return self.entries[idx]

    @property
    def all_indices(self) -> tuple[int, ...]:
        return tuple(range(len(self.entries)))


@dataclass(frozen=True)
class NodeContext:
    node_id: int
    boxes: tuple[tuple[float, float], ...]
    candidates: tuple[int, ...]
    depth: int = 0
    parent: int | None = None

    @classmethod
    def root(cls, model: Model, pool: AggregationPool) -> "NodeContext":
        return cls(0, tuple(model.boxes), pool.all_indices)


def milp_bound(model: Model, boxes, limits: SolveLimits | None = None) -> float:
    """``F_v(0)``: the linear relaxation with integrality over the local box."""
    return solve_subproblem(SubProblem(model, (), boxes=tuple(map(tuple, boxes))), limits).dual_bound


def local_bound(
    node: NodeContext,
    model: Model,
    pool: AggregationPool,
    limits: SolveLimits | None = None,
) -> tuple[float, tuple[int, ...]]:
    """Local dual bound and the candidate set handed to the children."""
    limits = limits or SolveLimits()
    boxes = tuple(map(tuple, node.boxes))
    D = milp_bound(model, boxes, limits.with_early_stop(None))
    if not math.isfinite(D):
        return D, ()
    remaining = list(node.candidates)
    for idx in list(node.candidates):
        sp = SubProblem(model, aggregated_rows(model, pool[idx].lam), boxes=boxes)
        out = solve_subproblem(sp, limits.with_early_stop(D))
        if out.dual_bound > D + IMPROVE_TOL * max(1.0, abs(D)):
            return out.dual_bound, tuple(remaining)
        if out.status is SubStatus.LIMIT:
            continue  # not a proof of non-improvement
        remaining.remove(idx)
    return D, tuple(remaining)


@dataclass
class NodeRecord:
    node_id: int
    parent: int | None
    depth: int
    n_candidates: int
    bound: float
    milp_bound: float
    pruned: bool
    boxes: tuple[tuple[float, float], ...] = field(repr=False)


def split_widest(boxes: Sequence[Sequence[float]], integer: np.ndarray) -> list[tuple]:
    """Bisect the widest variable (lowest index on ties)."""
    arr = np.array(boxes, dtype=float)
    widths = arr[:, 1] - arr[:, 0]
    j = int(np.argmax(widths))
    if widths[j] <= 0:
        return []
    lo, hi = arr[j]
    left, right = arr.copy(), arr.copy()
    if integer[j]:
        mid = math.floor(0.5 * (lo + hi))
        left[j, 1], right[j, 0] = mid, mid + 1
    else:
        mid = 0.5 * (lo + hi)
        left[j, 1], right[j, 0] = mid, mid
    return [tuple(map(tuple, left)), tuple(map(tuple, right))]


def tree_demo(
    model: Model,
    pool: AggregationPool,
    primal: float,
    max_depth: int = 3,
    limits: SolveLimits | None = None,
) -> list[NodeRecord]:
    """Breadth-first tree that calls :func:`local_bound` at each node.

    A node is pruned when its bound exceeds ``primal``; otherwise it is split
    until ``max_depth``.
    """
    limits = limits or SolveLimits()
    queue = [NodeContext.root(model, pool)]
    records: list[NodeRecord] = []
    next_id = 1
    while queue:
        node = queue.pop(0)
        bound, cands = local_bound(node, model, pool, limits)
        base = milp_bound(model, node.boxes, limits.with_early_stop(None))
        pruned = bound > primal + IMPROVE_TOL * max(1.0, abs(primal))
        records.append(NodeRecord(node.node_id, node.parent, node.depth, len(cands), bound, base, pruned, node.boxes))
        if pruned or node.depth >= max_depth:
            continue
        for child in split_widest(node.boxes, model.integrality):
            queue.append(NodeContext(next_id, child, cands, node.depth + 1, node.node_id))
            next_id += 1
    return records
