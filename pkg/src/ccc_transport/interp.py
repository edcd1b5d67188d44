"""Monotone piecewise-cubic tabulations with bisection inverse."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from .errors import ExtrapolationError, ValidationError

INVERSE_XTOL = 1e-12


def limit_slopes(x: np.ndarray, y: np.ndarray, slopes: np.ndarray) -> np.ndarray:
    """Clip knot slopes into the Fritsch-Carlson monotone region.

    Each slope is clamped to ``[0, 3 * min(adjacent secants)]``; with both
    end slopes of a cell inside ``[0, 3 * secant]`` the cubic Hermite piece
    is monotone.
    """
    secants = np.diff(y) / np.diff(x)
    cap = np.empty_like(slopes)
    cap[0] = 3.0 * secants[0]
    cap[-1] = 3.0 * secants[-1]
    cap[1:-1] = 3.0 * np.minimum(secants[:-1], secants[1:])
    return np.clip(slopes, 0.0, cap)


def end_slope(x: np.ndarray, y: np.ndarray, inner_slope: float) -> float:
    """Slope at ``x[0]`` of the quadratic through the first cell.

    Used where the true derivative at the left end is unknown or infinite.
    """
    secant = (y[1] - y[0]) / (x[1] - x[0])
    return float(max(0.0, 2.0 * secant - inner_slope))


@dataclass(frozen=True, eq=False)
class TabulatedMonotone:
    """Strictly increasing function tabulated on ``grid`` with ``grid[0] == 0``.

    Between knots the function is a cubic Hermite piece. When ``slopes`` is
    given, they are used (after monotone limiting); otherwise PCHIP slopes
    are computed from the data.

    With ``power_head`` the first cell ``[0, grid[1]]`` is the power law
    ``values[1] * (r / grid[1]) ** beta`` matching the value and slope at
    ``grid[1]``. A cubic cannot follow ``sqrt``-type behaviour at 0; the
    power law reproduces it and any linear or pure power head exactly.
    """

    grid: np.ndarray
    values: np.ndarray
    slopes: np.ndarray | None = None
    power_head: bool = False
    head_exponent: float | None = field(init=False, default=None)
    _spline: CubicHermiteSpline = field(init=False, repr=False)

    def __post_init__(self):
        x = np.asarray(self.grid, dtype=float)
        y = np.asarray(self.values, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise ValidationError("grid and values must be 1-d arrays of equal length >= 2")
        if x[0] != 0.0 or y[0] != 0.0:
            raise ValidationError("tabulation must start at (0, 0)")
        if not (np.all(np.diff(x) > 0) and np.all(np.diff(y) > 0)):
            raise ValidationError("grid and values must be strictly increasing")
        if self.slopes is None:
            m = PchipInterpolator(x, y).derivative()(x)
        else:
            m = np.asarray(self.slopes, dtype=float)
            if m.shape != x.shape or not np.all(np.isfinite(m)):
                raise ValidationError("slopes must be finite and match the grid")
        m = limit_slopes(x, y, m)
        x.setflags(write=False)
        y.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "grid", x)
        object.__setattr__(self, "values", y)
        object.__setattr__(self, "slopes", m)
        object.__setattr__(self, "_spline", CubicHermiteSpline(x, y, m, extrapolate=False))
        if self.power_head:
            beta = float(x[1] * m[1] / y[1])
            if beta > 0 and np.isfinite(beta):
                object.__setattr__(self, "head_exponent", beta)

    def _eval(self, r: np.ndarray, nu: int = 0) -> np.ndarray:
        out = self._spline(r, nu)
        beta = self.head_exponent
        if beta is None:
            return out
        head = r < self.grid[1]
        if np.any(head):
            x1, y1 = self.grid[1], self.values[1]
            z = r[head] / x1
            with np.errstate(divide="ignore"):
                if nu == 0:
                    h = y1 * z**beta
                elif nu == 1:
                    h = y1 * beta / x1 * z ** (beta - 1.0)
                else:
                    h = y1 * beta * (beta - 1.0) / x1**2 * z ** (beta - 2.0)
            out = np.array(out, dtype=float)
            out[head] = h
        return out

    @property
    def x_max(self) -> float:
        return float(self.grid[-1])

    @property
    def y_max(self) -> float:
        return float(self.values[-1])

    def __call__(self, r, nu: int = 0):
        r = np.asarray(r, dtype=float)
        top = self.x_max
        # rounding slack at the right end
        r = np.where((r > top) & (r <= top * (1 + 1e-13)), top, r)
        if np.any(r < 0) or np.any(r > top):
            bad = r[(r < 0) | (r > top)]
            raise ExtrapolationError(
                f"argument {float(bad.flat[0])!r} outside tabulated range [0, {top!r}]"
            )
        out = self._eval(r, nu)
        if nu == 0:
            out = np.where(r == top, self.y_max, out)
        return float(out) if out.ndim == 0 else out

    def inverse(self, v):
        """Invert by bisection on the interpolant to ``INVERSE_XTOL`` absolute."""
        v = np.asarray(v, dtype=float)
        scalar = v.ndim == 0
        v = np.atleast_1d(v)
        if np.any(v < 0) or np.any(v > self.y_max):
            raise ExtrapolationError(
                f"inverse requested outside value range [0, {self.y_max!r}]"
            )
        k = np.clip(np.searchsorted(self.values, v, side="right") - 1, 0, self.grid.size - 2)
        lo = self.grid[k].copy()
        hi = self.grid[k + 1].copy()
        out = np.empty_like(v)
        at_knot = self.values[k] == v
        out[at_knot] = lo[at_knot]
        todo = ~at_knot
        if self.head_exponent is not None:
            head = todo & (k == 0)
            out[head] = self.grid[1] * (v[head] / self.values[1]) ** (1.0 / self.head_exponent)
            todo &= ~head
        if np.any(todo):
            lo, hi, target = lo[todo], hi[todo], v[todo]
            for _ in range(200):
                if np.max(hi - lo) <= INVERSE_XTOL:
                    break
                mid = 0.5 * (lo + hi)
                below = self._eval(mid) <= target
                lo = np.where(below, mid, lo)
                hi = np.where(below, hi, mid)
            out[todo] = 0.5 * (lo + hi)
        return float(out[0]) if scalar else out

    def second_differences(self) -> np.ndarray:
        """Differences of consecutive secant slopes, one per interior knot."""
        return np.diff(np.diff(self.values) / np.diff(self.grid))
