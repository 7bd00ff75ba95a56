"""Term-wise linear relaxations of polynomials over boxes.

Every monomial of degree >= 2 is rewritten as a chain of atoms, each
defining one auxiliary variable:

* ``power``: ``w = u**k`` for a single original variable (``k = 2`` is a square),
* ``bilinear``: ``w = u * v`` where ``u`` and ``v`` are earlier variables.

The extended variable vector is ``(x_0, ..., x_{n-1}, w_0, w_1, ...)``.
:func:`emit_cuts` produces linear inequalities over that vector that are
valid for every atom on a given box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .model import Monomial, Polynomial

ROUNDING = 1e-12


class Cut(NamedTuple):
    """``sum coef[k] * z[index[k]] (<= | ==) rhs``."""

    index: tuple[int, ...]
    coef: tuple[float, ...]
    rhs: float
    equality: bool = False


@dataclass(frozen=True)
class Atom:
    kind: str  # "bilinear", "square" or "power"
    out: int
    args: tuple[int, ...]
    power: int = 1

    def value(self, z: Sequence[float]) -> float:
        if self.kind == "bilinear":
            return z[self.args[0]] * z[self.args[1]]
        return z[self.args[0]] ** self.power


def _outward(lo: float, hi: float) -> tuple[float, float]:
    return lo - ROUNDING * abs(lo), hi + ROUNDING * abs(hi)


def power_interval(lo: float, hi: float, k: int) -> tuple[float, float]:
    if k % 2 == 1:
        return lo**k, hi**k
    if lo >= 0:
        return lo**k, hi**k
    if hi <= 0:
        return hi**k, lo**k
    return 0.0, max(lo**k, hi**k)


def product_interval(a: tuple[float, float], b: tuple[float, float]) -> tuple[float, float]:
    prods = (a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1])
    return min(prods), max(prods)


@dataclass
class Reformulation:
    """Registry of auxiliary variables shared by a family of polynomials."""

    n: int
    atoms: list[Atom] = field(default_factory=list)
    index: dict[Monomial, int] = field(default_factory=dict)
    boxes: np.ndarray | None = None

    @property
    def n_ext(self) -> int:
        return self.n + len(self.atoms)

    @property
    def n_aux(self) -> int:
        return len(self.atoms)

    def variable(self, mono: Monomial) -> int:
        """Extended-vector index representing ``mono`` (registers it if new)."""
        if len(mono) == 1 and mono[0][1] == 1:
            return mono[0][0]
        if mono in self.index:
            return self.index[mono]
        if len(mono) == 1:
            var, k = mono[0]
            atom = Atom("square" if k == 2 else "power", self.n_ext, (var,), k)
        else:
            prefix_var = self.variable(mono[:1])
            for end in range(2, len(mono) + 1):
                prefix = mono[:end]
                if prefix in self.index:
                    prefix_var = self.index[prefix]
                    continue
                factor = self.variable(mono[end - 1 : end])
                atom = Atom("bilinear", self.n_ext, (prefix_var, factor))
                self.atoms.append(atom)
                self.index[prefix] = atom.out
                prefix_var = atom.out
            return prefix_var
        self.atoms.append(atom)
        self.index[mono] = atom.out
        return atom.out

    def add(self, poly: Polynomial) -> None:
        for mono in poly.terms:
            if mono:
                self.variable(mono)

    def linearize(self, poly: Polynomial) -> tuple[np.ndarray, float]:
        """Coefficients over the extended vector and the constant term."""
        row = np.zeros(self.n_ext)
        const = 0.0
        for mono, coef in poly.terms.items():
            if not mono:
                const += coef
            else:
                row[self.variable(mono)] += coef
        return row, const

    def extended_boxes(self, boxes: np.ndarray) -> np.ndarray:
        """Boxes for original + auxiliary variables by interval arithmetic."""
        boxes = np.asarray(boxes, dtype=float).reshape(-1, 2)
        ext = np.empty((self.n_ext, 2))
        ext[: self.n] = boxes[: self.n]
        for atom in self.atoms:
            if atom.kind == "bilinear":
                lo, hi = product_interval(tuple(ext[atom.args[0]]), tuple(ext[atom.args[1]]))
            else:
                lo, hi = power_interval(ext[atom.args[0], 0], ext[atom.args[0], 1], atom.power)
            ext[atom.out] = _outward(lo, hi)
        return ext

    def extend_point(self, x: Sequence[float]) -> np.ndarray:
        """Lift an original point to the extended space (exact atom values)."""
        z = np.empty(self.n_ext)
        z[: self.n] = np.asarray(x, dtype=float)[: self.n]
        for atom in self.atoms:
            z[atom.out] = atom.value(z)
        return z

    def original_support(self, var: int) -> tuple[int, ...]:
        """Original variables an extended variable depends on."""
        if var < self.n:
            return (var,)
        atom = self.atoms[var - self.n]
        found: set[int] = set()
        for arg in atom.args:
            found.update(self.original_support(arg))
        return tuple(sorted(found))


def build_reformulation(polys: Iterable[Polynomial], boxes: np.ndarray) -> Reformulation:
    """Decompose all monomials of ``polys`` (lexicographic, deterministic).

    ``boxes`` are the global variable boxes; ``reform.boxes`` holds the
    extended boxes derived from them.
    """
    boxes = np.asarray(boxes, dtype=float).reshape(-1, 2)
    reform = Reformulation(boxes.shape[0])
    monos = sorted({mono for poly in polys for mono in poly.terms if mono})
    for mono in monos:
        reform.variable(mono)
    reform.boxes = reform.extended_boxes(boxes)
    return reform


# --------------------------------------------------------------------------
# envelopes
# --------------------------------------------------------------------------


def _tangent(u: int, w: int, k: int, p: float, under: bool) -> Cut:
    # w >= p^k + k p^(k-1) (u - p)   (under)   or   <=   (over)
    slope = k * p ** (k - 1)
    intercept = p**k - slope * p
    if under:
        return Cut((u, w), (slope, -1.0), -intercept)
    return Cut((u, w), (-slope, 1.0), intercept)


def _secant(u: int, w: int, k: int, a: float, b: float, under: bool) -> Cut:
    slope = (b**k - a**k) / (b - a)
    intercept = a**k - slope * a
    if under:
        return Cut((u, w), (slope, -1.0), -intercept)
    return Cut((u, w), (-slope, 1.0), intercept)


_ODD_ROOTS: dict[int, float] = {}


def _odd_tangent_ratio(k: int) -> float:
    """Root ``r`` of ``(k-1) r^k + k r^(k-1) = 1`` on ``(0, 1]``, rounded up.

    For ``u**k`` on ``[a, b]`` with ``a < 0`` the tangent touching at ``-a*r``
    passes through ``(a, a**k)``.
    """
    if k not in _ODD_ROOTS:
        lo, hi = 0.0, 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if (k - 1) * mid**k + k * mid ** (k - 1) >= 1.0:
                hi = mid
            else:
                lo = mid
        _ODD_ROOTS[k] = hi * (1.0 + 1e-12)
    return _ODD_ROOTS[k]


def _convex_power_cuts(u: int, w: int, k: int, a: float, b: float) -> list[Cut]:
    mid = 0.5 * (a + b)
    cuts = [_tangent(u, w, k, p, under=True) for p in (a, mid, b)]
    cuts.append(_secant(u, w, k, a, b, under=False))
    return cuts


def _power_cuts(atom: Atom, a: float, b: float) -> list[Cut]:
    u, w, k = atom.args[0], atom.out, atom.power
    if a == b:
        return [Cut((w,), (1.0,), a**k, equality=True)]
    if k % 2 == 0 or a >= 0:
        return _convex_power_cuts(u, w, k, a, b)
    if b <= 0:
        mid = 0.5 * (a + b)
        cuts = [_tangent(u, w, k, p, under=False) for p in (a, mid, b)]
        cuts.append(_secant(u, w, k, a, b, under=True))
        return cuts

    # odd power with a < 0 < b: concave on [a, 0], convex on [0, b]
    r = _odd_tangent_ratio(k)
    cuts = []
    t = -a * r
    if t >= b:
        cuts.append(_secant(u, w, k, a, b, under=True))
    else:
        for p in (t, 0.5 * (t + b), b):
            cuts.append(_tangent(u, w, k, p, under=True))
    s = -b * r
    if s <= a:
        cuts.append(_secant(u, w, k, a, b, under=False))
    else:
        for p in (s, 0.5 * (a + s), a):
            cuts.append(_tangent(u, w, k, p, under=False))
    return cuts


def _bilinear_cuts(atom: Atom, box_u: Sequence[float], box_v: Sequence[float]) -> list[Cut]:
    u, v = atom.args
    w = atom.out
    a, b = box_u
    c, d = box_v
    if a == b:
        return [Cut((w, v), (1.0, -a), 0.0, equality=True)]
    if c == d:
        return [Cut((w, u), (1.0, -c), 0.0, equality=True)]
    return [
        # w >= c u + a v - a c
        Cut((u, v, w), (c, a, -1.0), a * c),
        # w >= d u + b v - b d
        Cut((u, v, w), (d, b, -1.0), b * d),
        # w <= d u + a v - a d
        Cut((u, v, w), (-d, -a, 1.0), -a * d),
        # w <= c u + b v - b c
        Cut((u, v, w), (-c, -b, 1.0), -b * c),
    ]


def atom_cuts(atom: Atom, ext_boxes: np.ndarray) -> list[Cut]:
    if atom.kind == "bilinear":
        return _bilinear_cuts(atom, ext_boxes[atom.args[0]], ext_boxes[atom.args[1]])
    a, b = ext_boxes[atom.args[0]]
    return _power_cuts(atom, float(a), float(b))


def emit_cuts(reform: Reformulation, local_boxes: np.ndarray) -> list[Cut]:
    """Envelope inequalities for every atom over ``local_boxes``.

    ``local_boxes`` may cover only the original variables (auxiliary boxes are
    then derived) or the full extended vector.
    """
    boxes = np.asarray(local_boxes, dtype=float).reshape(-1, 2)
    ext = reform.extended_boxes(boxes) if boxes.shape[0] == reform.n else boxes
    cuts: list[Cut] = []
    for atom in reform.atoms:
        cuts.extend(atom_cuts(atom, ext))
    return cuts


def cuts_to_arrays(cuts: Sequence[Cut], n_cols: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense ``(A, b, is_equality)`` for a list of cuts."""
    A = np.zeros((len(cuts), n_cols))
    b = np.empty(len(cuts))
    eq = np.zeros(len(cuts), dtype=bool)
    for r, cut in enumerate(cuts):
        for j, a in zip(cut.index, cut.coef):
            A[r, j] += a
        b[r] = cut.rhs
        eq[r] = cut.equality
    return A, b, eq


def cut_violation(cut: Cut, z: Sequence[float]) -> float:
    act = math.fsum(a * z[j] for j, a in zip(cut.index, cut.coef))
    return abs(act - cut.rhs) if cut.equality else act - cut.rhs
