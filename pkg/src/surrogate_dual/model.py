"""Polynomial MINLP data model and the JSON instance format.

A model is ``min c^T x`` over a compact mixed-integer box-constrained linear
set, subject to polynomial constraints ``g_i(x) <= 0``.  Everything here is
immutable after construction so solvers can share instances freely.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

# A monomial is a tuple of (variable index, positive exponent) pairs sorted by
# variable index.  The empty tuple is the constant monomial.
Monomial = tuple[tuple[int, int], ...]

CONSTANT: Monomial = ()

NORMALIZATION_TOL = 1e-9


class ModelError(ValueError):
    """Raised for malformed instance documents; ``path`` locates the problem."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


def make_monomial(exps: Mapping[int, int] | Iterable[tuple[int, int]]) -> Monomial:
    items = exps.items() if isinstance(exps, Mapping) else exps
    merged: dict[int, int] = {}
    for var, e in items:
        var, e = int(var), int(e)
        if e < 0:
            raise ValueError(f"negative exponent {e} on x{var}")
        if e:
            merged[var] = merged.get(var, 0) + e
    return tuple(sorted(merged.items()))


def monomial_degree(mono: Monomial) -> int:
    return sum(e for _, e in mono)


def monomial_str(mono: Monomial) -> str:
    if not mono:
        return "1"
    return "*".join(f"x{v}" if e == 1 else f"x{v}^{e}" for v, e in mono)


class Polynomial:
    """Sparse multivariate polynomial: a read-only map ``Monomial -> coef``.

    Zero coefficients are never stored, so two polynomials are equal exactly
    when their term maps are.
    """

    __slots__ = ("_terms", "_compiled")

    def __init__(self, terms: Mapping[Monomial, float] | None = None):
        clean: dict[Monomial, float] = {}
        for mono, coef in (terms or {}).items():
            key = make_monomial(mono)
            clean[key] = clean.get(key, 0.0) + float(coef)
        self._terms = MappingProxyType({m: c for m, c in sorted(clean.items()) if c != 0.0})
        self._compiled: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    @classmethod
    def from_terms(cls, pairs: Iterable[tuple[Mapping[int, int], float]]) -> "Polynomial":
        acc: dict[Monomial, float] = {}
        for exps, coef in pairs:
            mono = make_monomial(exps)
            acc[mono] = acc.get(mono, 0.0) + float(coef)
        return cls(acc)

    @property
    def terms(self) -> Mapping[Monomial, float]:
        return self._terms

    def __len__(self) -> int:
        return len(self._terms)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return dict(self._terms) == dict(other._terms)

    def __hash__(self) -> int:
        return hash(tuple(self._terms.items()))

    def __repr__(self) -> str:
        return f"Polynomial({str(self)!r})"

    def __str__(self) -> str:
        if not self._terms:
            return "0"
        return " + ".join(f"{c:g}*{monomial_str(m)}" for m, c in self._terms.items())

    def __add__(self, other: "Polynomial") -> "Polynomial":
        acc = dict(self._terms)
        for mono, coef in other._terms.items():
            acc[mono] = acc.get(mono, 0.0) + coef
        return Polynomial(acc)

    def __mul__(self, scalar: float) -> "Polynomial":
        scalar = float(scalar)
        return Polynomial({m: c * scalar for m, c in self._terms.items()})

    __rmul__ = __mul__

    def is_zero(self) -> bool:
        return not self._terms

    @property
    def constant(self) -> float:
        return self._terms.get(CONSTANT, 0.0)

    @property
    def degree(self) -> int:
        return max((monomial_degree(m) for m in self._terms), default=0)

    @property
    def variables(self) -> frozenset[int]:
        return frozenset(v for m in self._terms for v, _ in m)

    def coefficient(self, exps: Mapping[int, int] | Monomial) -> float:
        return self._terms.get(make_monomial(exps), 0.0)

    def evaluate(self, point: Sequence[float]) -> float:
        total = 0.0
        for mono, coef in self._terms.items():
            term = coef
            for var, e in mono:
                term *= point[var] ** e
            total += term
        return total

    def _arrays(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        if n not in self._compiled:
            coefs = np.array(list(self._terms.values()), dtype=float)
            exps = np.zeros((len(self._terms), n), dtype=np.int64)
            for row, mono in enumerate(self._terms):
                for var, e in mono:
                    exps[row, var] = e
            self._compiled[n] = (coefs, exps)
        return self._compiled[n]

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at each row of ``points`` (shape ``(N, n)``)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        coefs, exps = self._arrays(points.shape[1])
        if coefs.size == 0:
            return np.zeros(points.shape[0])
        powers = np.prod(points[:, None, :] ** exps[None, :, :], axis=2)
        return powers @ coefs

    def gradient(self, point: Sequence[float]) -> np.ndarray:
        x = np.asarray(point, dtype=float)
        grad = np.zeros(x.size)
        for mono, coef in self._terms.items():
            for k, (var, e) in enumerate(mono):
                term = coef * e * x[var] ** (e - 1)
                for j, (other, f) in enumerate(mono):
                    if j != k:
                        term *= x[other] ** f
                grad[var] += term
        return grad

    def to_json(self) -> dict:
        return {
            "terms": [
                {"exps": {str(v): e for v, e in mono}, "coef": coef}
                for mono, coef in self._terms.items()
            ]
        }


ZERO = Polynomial()


@dataclass(frozen=True)
class LinearRow:
    """Sparse row ``sum_j coeffs[j] * x_j <= rhs``."""

    coeffs: tuple[tuple[int, float], ...]
    rhs: float

    @classmethod
    def from_mapping(cls, coeffs: Mapping[int, float], rhs: float) -> "LinearRow":
        items = tuple(sorted((int(j), float(a)) for j, a in coeffs.items() if float(a) != 0.0))
        return cls(items, float(rhs))

    def dense(self, n: int) -> np.ndarray:
        row = np.zeros(n)
        for j, a in self.coeffs:
            row[j] += a
        return row

    def activity(self, point: Sequence[float]) -> float:
        return sum(a * point[j] for j, a in self.coeffs)


@dataclass(frozen=True)
class Model:
    """Polynomial MINLP ``min c^T x`` over ``X`` with ``g_i(x) <= 0``.

    ``refined_rows`` are extra valid inequalities (``A'x <= b'``) and
    ``primal_cutoff`` adds ``c^T x <= cutoff``; both only tighten the linear
    part used by relaxations.
    """

    n: int
    c: tuple[float, ...]
    boxes: tuple[tuple[float, float], ...]
    nonlinear: tuple[Polynomial, ...]
    integer: frozenset[int] = frozenset()
    linear_rows: tuple[LinearRow, ...] = ()
    refined_rows: tuple[LinearRow, ...] = ()
    primal_cutoff: float | None = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        validate_model(self)

    @property
    def m(self) -> int:
        return len(self.nonlinear)

    @property
    def p(self) -> int:
        return len(self.integer)

    @cached_property
    def objective(self) -> np.ndarray:
        return np.array(self.c, dtype=float)

    @cached_property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.boxes], dtype=float)

    @cached_property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.boxes], dtype=float)

    @cached_property
    def integrality(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[list(self.integer)] = True
        return mask

    def constraint_values(self, point: Sequence[float]) -> np.ndarray:
        """``(g_1(x), ..., g_m(x))``."""
        return np.array([g.evaluate(point) for g in self.nonlinear])

    def objective_value(self, point: Sequence[float]) -> float:
        return float(self.objective @ np.asarray(point, dtype=float))

    def all_linear_rows(self) -> tuple[LinearRow, ...]:
        rows = self.linear_rows + self.refined_rows
        if self.primal_cutoff is not None:
            rows += (LinearRow.from_mapping(dict(enumerate(self.c)), self.primal_cutoff),)
        return rows

    def is_feasible(self, point: Sequence[float], tol: float = 1e-7) -> bool:
        x = np.asarray(point, dtype=float)
        if np.any(x < self.lower - tol) or np.any(x > self.upper + tol):
            return False
        if np.any(np.abs(x[self.integrality] - np.round(x[self.integrality])) > 1e-6):
            return False
        if any(row.activity(x) > row.rhs + tol for row in self.linear_rows):
            return False
        return bool(np.all(self.constraint_values(x) <= tol))

    def with_boxes(self, boxes: Sequence[Sequence[float]]) -> "Model":
        return Model(
            n=self.n,
            c=self.c,
            boxes=tuple((float(lo), float(hi)) for lo, hi in boxes),
            nonlinear=self.nonlinear,
            integer=self.integer,
            linear_rows=self.linear_rows,
            refined_rows=self.refined_rows,
            primal_cutoff=self.primal_cutoff,
            name=self.name,
        )


def validate_model(model: Model) -> None:
    if model.n < 1:
        raise ModelError("n", "model needs at least one variable")
    if len(model.c) != model.n:
        raise ModelError("objective", f"expected {model.n} coefficients, got {len(model.c)}")
    if len(model.boxes) != model.n:
        raise ModelError("boxes", f"expected {model.n} boxes, got {len(model.boxes)}")
    for j, (lo, hi) in enumerate(model.boxes):
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ModelError(f"boxes[{j}]", "unbounded variable")
        if lo > hi:
            raise ModelError(f"boxes[{j}]", f"empty box [{lo}, {hi}]")
    for j in model.integer:
        if not 0 <= j < model.n:
            raise ModelError("integer", f"index {j} out of range")
    if not model.nonlinear:
        raise ModelError("nonlinear", "no nonlinear constraints")
    for i, g in enumerate(model.nonlinear):
        for var in g.variables:
            if not 0 <= var < model.n:
                raise ModelError(f"nonlinear[{i}]", f"variable index {var} out of range")
    for label, rows in (("linear", model.linear_rows), ("refined", model.refined_rows)):
        for r, row in enumerate(rows):
            for j, _ in row.coeffs:
                if not 0 <= j < model.n:
                    raise ModelError(f"{label}[{r}].coeffs", f"variable index {j} out of range")


@dataclass(frozen=True)
class AggregationMatrix:
    """``K`` nonnegative multiplier rows, one per aggregated constraint."""

    rows: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        arr = np.asarray(self.rows, dtype=float)
        if arr.ndim != 2:
            raise ValueError("aggregation matrix must be two-dimensional")
        if np.any(arr < 0):
            raise ValueError("aggregation multipliers must be nonnegative")

    @classmethod
    def from_array(cls, values: Sequence[Sequence[float]] | np.ndarray) -> "AggregationMatrix":
        arr = np.atleast_2d(np.asarray(values, dtype=float))
        arr = np.where(np.abs(arr) < 1e-15, 0.0, arr)
        return cls(tuple(tuple(float(v) for v in row) for row in arr))

    @classmethod
    def zeros(cls, K: int, m: int) -> "AggregationMatrix":
        return cls.from_array(np.zeros((K, m)))

    @property
    def K(self) -> int:
        return len(self.rows)

    @property
    def m(self) -> int:
        return len(self.rows[0]) if self.rows else 0

    def as_array(self) -> np.ndarray:
        return np.array(self.rows, dtype=float).reshape(self.K, self.m)

    def normalized(self) -> "AggregationMatrix":
        """Scale each row to 1-norm at most one (rows never grow)."""
        arr = self.as_array()
        norms = arr.sum(axis=1, keepdims=True)
        arr = np.where(norms > 1.0, arr / np.where(norms > 0, norms, 1.0), arr)
        return AggregationMatrix.from_array(arr)

    def is_normalized(self) -> bool:
        return bool(np.all(self.as_array().sum(axis=1) <= 1.0 + NORMALIZATION_TOL))

    def padded(self, K: int) -> "AggregationMatrix":
        """Append zero rows up to ``K`` rows; a zero row leaves the relaxation unchanged."""
        arr = self.as_array()
        if K < arr.shape[0]:
            raise ValueError("cannot pad to fewer rows")
        return AggregationMatrix.from_array(np.vstack([arr, np.zeros((K - arr.shape[0], arr.shape[1]))]))


def aggregate(model: Model, lambda_row: Sequence[float]) -> Polynomial:
    """The surrogate constraint function ``sum_i lambda_i * g_i``."""
    lam = [float(v) for v in lambda_row]
    if len(lam) != model.m:
        raise ValueError(f"expected {model.m} multipliers, got {len(lam)}")
    if any(v < 0 for v in lam):
        raise ValueError("aggregation multipliers must be nonnegative")
    acc: dict[Monomial, float] = {}
    for weight, g in zip(lam, model.nonlinear):
        if weight == 0.0:
            continue
        for mono, coef in g.terms.items():
            acc[mono] = acc.get(mono, 0.0) + weight * coef
    return Polynomial(acc)


def evaluate(poly: Polynomial, point: Sequence[float]) -> float:
    return poly.evaluate(point)


# --------------------------------------------------------------------------
# JSON instance format
# --------------------------------------------------------------------------


def _number(value, path: str, allow_inf: bool = False) -> float:
    if isinstance(value, bool):
        raise ModelError(path, "expected a number")
    if isinstance(value, str):
        try:
            value = float(value)
        except ValueError:
            raise ModelError(path, f"expected a number, got {value!r}") from None
    if value is None:
        value = math.inf
    if not isinstance(value, (int, float)):
        raise ModelError(path, f"expected a number, got {type(value).__name__}")
    value = float(value)
    if math.isnan(value):
        raise ModelError(path, "NaN is not allowed")
    if not allow_inf and math.isinf(value):
        raise ModelError(path, "infinite value")
    return value


def _index(key, n: int, path: str) -> int:
    try:
        j = int(key)
    except (TypeError, ValueError):
        raise ModelError(path, f"bad variable index {key!r}") from None
    if not 0 <= j < n:
        raise ModelError(path, f"dimension mismatch: index {j} outside 0..{n - 1}")
    return j


def _rows(doc, key: str, n: int) -> tuple[LinearRow, ...]:
    raw = doc.get(key, [])
    if not isinstance(raw, list):
        raise ModelError(key, "expected a list")
    rows = []
    for r, entry in enumerate(raw):
        path = f"{key}[{r}]"
        if not isinstance(entry, dict) or "coeffs" not in entry or "rhs" not in entry:
            raise ModelError(path, "expected an object with 'coeffs' and 'rhs'")
        if not isinstance(entry["coeffs"], dict):
            raise ModelError(f"{path}.coeffs", "expected an object")
        coeffs = {
            _index(j, n, f"{path}.coeffs"): _number(a, f"{path}.coeffs[{j}]")
            for j, a in entry["coeffs"].items()
        }
        rows.append(LinearRow.from_mapping(coeffs, _number(entry["rhs"], f"{path}.rhs")))
    return tuple(rows)


def model_from_dict(doc: Mapping) -> Model:
    if not isinstance(doc, Mapping):
        raise ModelError("", "instance document must be a JSON object")
    for key in ("n", "objective", "boxes", "nonlinear"):
        if key not in doc:
            raise ModelError(key, "missing required field")
    n = doc["n"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ModelError("n", "expected a positive integer")

    objective = doc["objective"]
    if not isinstance(objective, list):
        raise ModelError("objective", "nonlinear objectives are not supported; expected a coefficient list")
    if len(objective) != n:
        raise ModelError("objective", f"dimension mismatch: expected {n} coefficients, got {len(objective)}")
    c = tuple(_number(v, f"objective[{j}]") for j, v in enumerate(objective))

    boxes_raw = doc["boxes"]
    if not isinstance(boxes_raw, list) or len(boxes_raw) != n:
        raise ModelError("boxes", f"dimension mismatch: expected {n} boxes")
    boxes = []
    for j, box in enumerate(boxes_raw):
        if not isinstance(box, list) or len(box) != 2:
            raise ModelError(f"boxes[{j}]", "expected [lo, hi]")
        lo = _number(box[0], f"boxes[{j}][0]", allow_inf=True)
        hi = _number(box[1], f"boxes[{j}][1]", allow_inf=True)
        if math.isinf(lo) or math.isinf(hi):
            raise ModelError(f"boxes[{j}]", "unbounded variable")
        if lo > hi:
            raise ModelError(f"boxes[{j}]", f"empty box [{lo}, {hi}]")
        boxes.append((lo, hi))

    integer_raw = doc.get("integer", [])
    if not isinstance(integer_raw, list):
        raise ModelError("integer", "expected a list of indices")
    integer = frozenset(_index(j, n, f"integer[{k}]") for k, j in enumerate(integer_raw))

    nonlinear_raw = doc["nonlinear"]
    if not isinstance(nonlinear_raw, list):
        raise ModelError("nonlinear", "expected a list")
    if not nonlinear_raw:
        raise ModelError("nonlinear", "no nonlinear constraints")
    polys = []
    for i, entry in enumerate(nonlinear_raw):
        path = f"nonlinear[{i}]"
        if not isinstance(entry, dict) or not isinstance(entry.get("terms"), list):
            raise ModelError(path, "expected an object with a 'terms' list")
        pairs = []
        for t, term in enumerate(entry["terms"]):
            tpath = f"{path}.terms[{t}]"
            if not isinstance(term, dict) or "coef" not in term:
                raise ModelError(tpath, "expected an object with 'coef'")
            exps_raw = term.get("exps", {})
            if not isinstance(exps_raw, dict):
                raise ModelError(f"{tpath}.exps", "expected an object")
            exps = {}
            for j, e in exps_raw.items():
                if not isinstance(e, int) or isinstance(e, bool) or e < 0:
                    raise ModelError(f"{tpath}.exps[{j}]", "exponent must be a nonnegative integer")
                exps[_index(j, n, f"{tpath}.exps")] = e
            pairs.append((exps, _number(term["coef"], f"{tpath}.coef")))
        polys.append(Polynomial.from_terms(pairs))

    cutoff = doc.get("primal_cutoff")
    if cutoff is not None:
        cutoff = _number(cutoff, "primal_cutoff")

    return Model(
        n=n,
        c=c,
        boxes=tuple(boxes),
        nonlinear=tuple(polys),
        integer=integer,
        linear_rows=_rows(doc, "linear", n),
        refined_rows=_rows(doc, "refined", n),
        primal_cutoff=cutoff,
        name=str(doc.get("name", "")),
    )


def parse_model(text: str) -> Model:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError("", f"invalid JSON: {exc}") from None
    return model_from_dict(doc)


def load_model(path) -> Model:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


def model_to_dict(model: Model) -> dict:
    def rows(rs):
        return [{"coeffs": {str(j): a for j, a in row.coeffs}, "rhs": row.rhs} for row in rs]

    doc = {
        "n": model.n,
        "integer": sorted(model.integer),
        "objective": list(model.c),
        "boxes": [[lo, hi] for lo, hi in model.boxes],
        "linear": rows(model.linear_rows),
        "refined": rows(model.refined_rows),
        "nonlinear": [g.to_json() for g in model.nonlinear],
    }
    if model.primal_cutoff is not None:
        doc["primal_cutoff"] = model.primal_cutoff
    if model.name:
        doc["name"] = model.name
    return doc


def dump_model(model: Model) -> str:
    return json.dumps(model_to_dict(model), indent=2)
