"""Benchmark arithmetic: gap closed, shifted geometric mean, target bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

TARGET_FRACTION = 0.2


@dataclass(frozen=True)
class GapRecord:
    p: float
    d1: float
    d2: float

    def __post_init__(self):
        if not math.isfinite(self.p):
            raise ValueError("primal reference must be finite")

    @property
    def gap_closed(self) -> float:
        return gap_closed(self.p, self.d1, self.d2)


def gap_closed(p: float, d1: float, d2: float) -> float:
    """Relative improvement of ``d1`` over ``d2`` towards the primal value ``p``.

    Lies in ``[-1, 1]`` and is positive exactly when ``d1 > d2``.  When
    ``d2 == p`` and ``d1 > d2`` the ratio is undefined; we return 1.
    """
    if d1 == d2:
        return 0.0
    if d1 > d2:
        if p == d2:
            return 1.0
        return 1.0 - (p - d1) / (p - d2)
    if p == d1:
        return -1.0
    return -1.0 + (p - d2) / (p - d1)


def shifted_geomean(values: Sequence[float], shift: float = 0.0) -> float:
    """``(prod(v + s))^(1/N) - s``, computed in log space."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("values must be non-empty")
    if shift < 0 or np.any(arr < 0):
        raise ValueError("values and shift must be nonnegative")
    if np.all(arr == arr[0]):
        return float(arr[0])
    shifted = arr + shift
    if np.any(shifted == 0):
        return 0.0  # only reachable with shift 0
    return float(math.exp(np.mean(np.log(shifted))) - shift)


def target_bound(D: float, P: float, fraction: float = TARGET_FRACTION) -> float:
    """Dual bound that closes ``fraction`` of the gap between ``D`` and ``P``."""
    if D > P:
        raise ValueError("dual bound exceeds primal bound")
    return D + (P - D) * fraction
