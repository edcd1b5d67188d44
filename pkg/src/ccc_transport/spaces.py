"""Finite measure spaces, functions on them, metric spaces and couplings.

JSON documents:

* ``{"weights": [...]}``: a :class:`WeightedSpace` or :class:`DiscreteMeasure`
* ``{"values": [...]}``: a :class:`SampleFunction`
* ``{"n": k, "dist": [[...], ...]}`` or ``{"points": [[x, y], ...]}``: a
  :class:`FiniteMetricSpace`

Distance matrices may also be given as CSV, one row per line.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Union

import numpy as np

from .errors import ValidationError

NORMALIZE_TOL = 1e-6
SUM_TOL = 1e-12
MARGINAL_TOL = 1e-9
TRIANGLE_SKIP_MIN_N = 512


def _vector(raw, label: str) -> np.ndarray:
    try:
        a = np.asarray(raw, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(f"{label}: expected a list of numbers") from None
    if a.ndim != 1 or a.size == 0:
        raise ValidationError(f"{label}: expected a non-empty flat list")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{label}: entries must be finite")
    return a


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class WeightedSpace:
    """Finite measure space: point ``i`` carries mass ``weights[i]``."""

    weights: np.ndarray
    total_mass: float = field(init=False)

    def __post_init__(self):
        w = _vector(self.weights, "weights")
        if np.any(w < 0):
            raise ValidationError(f"weights: negative entry at index {int(np.argmax(w < 0))}")
        if not np.any(w > 0):
            raise ValidationError("weights: at least one weight must be positive")
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "total_mass", float(np.sum(w)))

    @property
    def n(self) -> int:
        return self.weights.size

    def __eq__(self, other):
        return isinstance(other, WeightedSpace) and np.array_equal(self.weights, other.weights)

    def to_document(self) -> dict:
        return {"weights": self.weights.tolist()}


@dataclass(frozen=True, eq=False)
class SampleFunction:
    """Real function on a finite space, one value per point."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(_vector(self.values, "values")))

    @property
    def n(self) -> int:
        return self.values.size

    def check_bound(self, space: WeightedSpace) -> None:
        if self.n != space.n:
            raise ValidationError(f"function has {self.n} values but the space has {space.n} points")

    def __eq__(self, other):
        return isinstance(other, SampleFunction) and np.array_equal(self.values, other.values)

    def to_document(self) -> dict:
        return {"values": self.values.tolist()}


@dataclass(frozen=True, eq=False)
class FiniteMetricSpace:
    """Points ``0..n-1`` with distance matrix ``dist``.

    Symmetry, zero diagonal, nonnegativity and the triangle inequality are
    validated on construction. The O(n^3) triangle check may be switched off
    with ``check_triangle=False`` only for more than ``TRIANGLE_SKIP_MIN_N``
    points.
    """

    dist: np.ndarray
    check_triangle: bool = field(default=True, repr=False)

    def __post_init__(self):
        try:
            d = np.array(self.dist, dtype=float)
        except (TypeError, ValueError):
            raise ValidationError("dist: expected a square matrix of numbers") from None
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] == 0:
            raise ValidationError(f"dist: expected a non-empty square matrix, got shape {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValidationError("dist: entries must be finite")
        if np.any(d < 0):
            i, j = np.argwhere(d < 0)[0]
            raise ValidationError(f"dist: negative entry at ({i}, {j})")
        if np.any(np.diag(d) != 0):
            i = int(np.argmax(np.diag(d) != 0))
            raise ValidationError(f"dist: nonzero diagonal at ({i}, {i})")
        if not np.array_equal(d, d.T):
            i, j = np.argwhere(d != d.T)[0]
            i, j = sorted((int(i), int(j)))
            raise ValidationError(f"dist: asymmetric at ({i}, {j}): {d[i, j]!r} != {d[j, i]!r}")
        if self.check_triangle or d.shape[0] <= TRIANGLE_SKIP_MIN_N:
            witness = triangle_violation(d)
            if witness is not None:
                i, j, k = witness
                raise ValidationError(
                    f"dist: triangle inequality fails for ({i}, {j}, {k}): "
                    f"d[{i},{k}]={d[i, k]!r} > d[{i},{j}]+d[{j},{k}]={d[i, j] + d[j, k]!r}"
                )
        object.__setattr__(self, "dist", _frozen(d))

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    def __eq__(self, other):
        return isinstance(other, FiniteMetricSpace) and np.array_equal(self.dist, other.dist)

    def to_document(self) -> dict:
        return {"n": self.n, "dist": self.dist.tolist()}

    @classmethod
    def from_points(cls, points, **kwargs) -> FiniteMetricSpace:
        """Euclidean distances between 1-d or 2-d points."""
        p = np.asarray(points, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if p.ndim != 2 or p.shape[0] == 0:
            raise ValidationError("points: expected a list of coordinates")
        diff = p[:, None, :] - p[None, :, :]
        d = np.sqrt(np.sum(diff * diff, axis=-1))
        return cls(d, **kwargs)


def triangle_violation(d: np.ndarray, rtol: float = 1e-12):
    """First ``(i, j, k)`` with ``d[i,k] > d[i,j] + d[j,k]``, or None."""
    slack = rtol * max(float(np.max(d)), 1.0)
    for j in range(d.shape[0]):
        bad = d > d[:, j, None] + d[None, j, :] + slack
        if np.any(bad):
            i, k = np.argwhere(bad)[0]
            return int(i), j, int(k)
    return None


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability vector over the points of a finite space.

    Sums within ``NORMALIZE_TOL`` of 1 are renormalized; sums already within
    ``SUM_TOL`` are kept bit-for-bit.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = _vector(self.weights, "weights")
        if np.any(w < 0):
            raise ValidationError(f"weights: negative entry at index {int(np.argmax(w < 0))}")
        total = math.fsum(w)
        if abs(total - 1.0) > NORMALIZE_TOL:
            raise ValidationError(f"weights: sum {total!r} is not 1 (tolerance {NORMALIZE_TOL})")
        if abs(total - 1.0) > SUM_TOL:
            w = w / total
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def n(self) -> int:
        return self.weights.size

    def __eq__(self, other):
        return isinstance(other, DiscreteMeasure) and np.array_equal(self.weights, other.weights)

    def to_document(self) -> dict:
        return {"weights": self.weights.tolist()}

    @classmethod
    def point_mass(cls, n: int, i: int) -> DiscreteMeasure:
        w = np.zeros(n)
        w[i] = 1.0
        return cls(w)


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Coupling matrix ``q`` with cached marginals."""

    q: np.ndarray
    row_marginal: np.ndarray = field(init=False)
    col_marginal: np.ndarray = field(init=False)

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if q.ndim != 2:
            raise ValidationError("plan must be a matrix")
        if not np.all(np.isfinite(q)) or np.any(q < 0):
            raise ValidationError("plan entries must be finite and nonnegative")
        object.__setattr__(self, "q", _frozen(q))
        object.__setattr__(self, "row_marginal", _frozen(q.sum(axis=1)))
        object.__setattr__(self, "col_marginal", _frozen(q.sum(axis=0)))

    def check_marginals(self, mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = MARGINAL_TOL) -> None:
        if self.q.shape != (mu.n, nu.n):
            raise ValidationError(f"plan shape {self.q.shape} does not match marginals ({mu.n}, {nu.n})")
        row_err = float(np.max(np.abs(self.row_marginal - mu.weights)))
        col_err = float(np.max(np.abs(self.col_marginal - nu.weights)))
        if row_err > tol or col_err > tol:
            raise ValidationError(f"plan marginals off by {max(row_err, col_err)!r}")

    def to_document(self) -> dict:
        return {"q": self.q.tolist()}


Loaded = Union[WeightedSpace, FiniteMetricSpace, DiscreteMeasure, SampleFunction]
_KINDS = ("space", "measure", "metric", "function")


def _read_document(source) -> tuple[Any, str]:
    """Return ``(parsed, format)`` for a path, JSON text, or already-parsed dict."""
    if isinstance(source, dict):
        return source, "json"
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith(("{", "["))):
        path = Path(source)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ValidationError(f"cannot read {path}: {exc.strerror}") from None
        fmt = "csv" if path.suffix.lower() == ".csv" else "json"
    else:
        text, fmt = source, "json"
    if fmt == "csv":
        try:
            rows = [[float(c) for c in row] for row in csv.reader(io.StringIO(text)) if row]
        except ValueError as exc:
            raise ValidationError(f"bad CSV distance matrix: {exc}") from None
        return rows, "csv"
    try:
        return json.loads(text), "json"
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON: {exc}") from None


def load_space(source, kind: str | None = None, check_triangle: bool = True) -> Loaded:
    """Load and validate a document.

    ``kind`` is one of ``space``, ``measure``, ``metric``, ``function``. When
    omitted it comes from the document's ``"kind"`` key or, failing that, its
    fields (``weights`` alone loads a :class:`WeightedSpace`).
    """
    doc, fmt = _read_document(source)
    if kind is not None and kind not in _KINDS:
        raise ValidationError(f"unknown kind {kind!r}; expected one of {_KINDS}")
    if fmt == "csv":
        if kind not in (None, "metric"):
            raise ValidationError("CSV input is only accepted for distance matrices")
        return FiniteMetricSpace(doc, check_triangle=check_triangle)
    if not isinstance(doc, dict):
        raise ValidationError("expected a JSON object")
    kind = kind or doc.get("kind")
    if kind is None:
        if "dist" in doc or "points" in doc:
            kind = "metric"
        elif "values" in doc:
            kind = "function"
        elif "weights" in doc:
            kind = "space"
        else:
            raise ValidationError("document has none of the keys weights, values, dist, points")
    if kind == "metric":
        if "points" in doc:
            return FiniteMetricSpace.from_points(doc["points"], check_triangle=check_triangle)
        if "dist" not in doc:
            raise ValidationError("metric document needs 'dist' or 'points'")
        space = FiniteMetricSpace(doc["dist"], check_triangle=check_triangle)
        if "n" in doc and doc["n"] != space.n:
            raise ValidationError(f"'n' is {doc['n']!r} but dist has {space.n} rows")
        return space
    key = "values" if kind == "function" else "weights"
    if key not in doc:
        raise ValidationError(f"{kind} document needs '{key}'")
    cls = {"space": WeightedSpace, "measure": DiscreteMeasure, "function": SampleFunction}[kind]
    return cls(doc[key])


def dump_document(obj: Loaded | TransportPlan) -> str:
    """Serialize to the JSON schema accepted by :func:`load_space`."""
    return json.dumps(obj.to_document())
