"""Scale functions and their minimal convex-concave factorizations.

A scale function ``theta`` is strictly increasing on ``[0, inf)`` with
``theta(0) = 0``. It factors as ``phi o psi`` with ``phi`` convex and ``psi``
concave. The minimal factorization puts as little concavity into ``psi`` as
possible: the log-derivative density of its concave factor is the negative
part of ``(log theta')'``, so

    psi_hat(x) = int_0^x exp(int_1^y min(theta'', 0) / theta' dz) dy

and ``phi_check = theta o psi_hat^{-1}``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import (
    DomainError,
    ExtrapolationError,
    InvalidScaleError,
    NotFactorizableError,
    PreconditionError,
    TabulationDomainError,
    ValidationError,
    ZeroDerivativeError,
)
from .interp import TabulatedMonotone, end_slope

DEFAULT_GRID_POINTS = 2048
DEFAULT_R_MAX = 10.0
GRID_FLOOR = 1e-6
SHAPE_TOL = 1e-8
FD_RTOL = 5e-2
SUBGRID_DECADES = 8


# ---------------------------------------------------------------------------
# Scale specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScaleSpec:
    """Base class. Subclasses implement :meth:`_derivs` on arrays in range."""

    domain_cap: float = field(default=1e4, kw_only=True)

    def _derivs(self, r: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        raise NotImplementedError

    def _check_domain(self, r: np.ndarray) -> None:
        if np.any(~np.isfinite(r)) or np.any(r < 0):
            raise DomainError(f"{self.name}: arguments must be finite and >= 0")
        if np.any(r > self.domain_cap):
            raise DomainError(
                f"{self.name}: argument {float(np.max(r))!r} exceeds domain_cap {self.domain_cap!r}"
            )

    def derivs(self, r):
        """Return ``(theta, theta', theta'')`` evaluated at ``r``."""
        r = np.asarray(r, dtype=float)
        self._check_domain(r)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return self._derivs(r)

    def __call__(self, r):
        v = self.derivs(r)[0]
        return float(v) if np.ndim(v) == 0 else v

    @property
    def name(self) -> str:
        return type(self).__name__.lower()


@dataclass(frozen=True)
class Power(ScaleSpec):
    p: float = 1.0

    def __post_init__(self):
        if not (self.p > 0 and math.isfinite(self.p)):
            raise InvalidScaleError(f"power exponent must be positive, got {self.p!r}")

    def _derivs(self, r):
        p = self.p
        v = r**p
        if p == 1.0:
            return v, np.ones_like(r), np.zeros_like(r)
        d1 = p * r ** (p - 1)
        d2 = p * (p - 1) * r ** (p - 2)
        return v, d1, d2

    @property
    def name(self):
        return f"power:{self.p!r}"


@dataclass(frozen=True)
class ExpMinusOne(ScaleSpec):
    """``r -> exp(rate * r) - 1``."""

    rate: float = 1.0
    domain_cap: float = field(default=700.0, kw_only=True)

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise InvalidScaleError(f"exp_minus_one rate must be positive, got {self.rate!r}")

    def _derivs(self, r):
        a = self.rate
        e = np.exp(a * r)
        return np.expm1(a * r), a * e, a * a * e

    @property
    def name(self):
        return "exp_minus_one" if self.rate == 1.0 else f"exp_minus_one:{self.rate!r}"


@dataclass(frozen=True)
class Log1p(ScaleSpec):
    def _derivs(self, r):
        return np.log1p(r), 1.0 / (1.0 + r), -1.0 / (1.0 + r) ** 2

    @property
    def name(self):
        return "log1p"


@dataclass(frozen=True)
class ExpSqrt(ScaleSpec):
    """``r -> exp(sqrt(r)) - 1``."""

    domain_cap: float = field(default=4.9e5, kw_only=True)

    def _derivs(self, r):
        s = np.sqrt(r)
        e = np.exp(s)
        return np.expm1(s), e / (2 * s), e * (s - 1) / (4 * s**3)

    @property
    def name(self):
        return "exp_sqrt"


@dataclass(frozen=True)
class Composed(ScaleSpec):
    """``outer o inner``."""

    outer: ScaleSpec = None
    inner: ScaleSpec = None

    def __post_init__(self):
        if self.outer is None or self.inner is None:
            raise InvalidScaleError("composed scale needs outer and inner")
        object.__setattr__(self, "domain_cap", min(self.domain_cap, self.inner.domain_cap))

    def _derivs(self, r):
        i0, i1, i2 = self.inner.derivs(r)
        o0, o1, o2 = self.outer.derivs(i0)
        return o0, o1 * i1, o2 * i1 * i1 + o1 * i2

    @property
    def name(self):
        return f"compose:{self.outer.name},{self.inner.name}"


@dataclass(frozen=True, eq=False)
class Tabulated(ScaleSpec):
    """Scale function given by samples of value and first two derivatives.

    Off-knot values use cubic Hermite pieces (value with ``d1`` slopes,
    ``d1`` with ``d2`` slopes); ``d2`` is interpolated linearly.
    """

    grid: np.ndarray = None
    values: np.ndarray = None
    d1: np.ndarray = None
    d2: np.ndarray = None
    source: str = "tabulated"
    check_fd: bool = True
    _value_spline: CubicHermiteSpline = field(init=False, repr=False, compare=False, default=None)
    _slope_spline: CubicHermiteSpline = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        arrs = [np.asarray(a, dtype=float) for a in (self.grid, self.values, self.d1, self.d2)]
        x, y, d1, d2 = arrs
        if x.ndim != 1 or x.size < 3 or any(a.shape != x.shape for a in arrs):
            raise InvalidScaleError("tabulated scale needs >= 3 rows of r, theta, d1, d2")
        if not all(np.all(np.isfinite(a)) for a in arrs):
            raise InvalidScaleError("tabulated scale contains non-finite entries")
        if x[0] != 0.0 or y[0] != 0.0:
            raise InvalidScaleError("tabulated scale must start with r = 0, theta = 0")
        if not np.all(np.diff(x) > 0):
            raise InvalidScaleError("tabulated r column must be strictly increasing")
        if not np.all(np.diff(y) > 0):
            raise InvalidScaleError("tabulated theta must be strictly increasing")
        if not np.all(d1[1:-1] > 0):
            k = int(np.argmax(~(d1[1:-1] > 0))) + 1
            raise InvalidScaleError(f"tabulated d1 must be positive on the open grid (row {k})")
        if self.check_fd:
            _check_fd(x, y, d1, "d1")
            _check_fd(x, d1, d2, "d2")
        for a in arrs:
            a.setflags(write=False)
        for name, a in zip(("grid", "values", "d1", "d2"), arrs):
            object.__setattr__(self, name, a)
        object.__setattr__(self, "domain_cap", min(self.domain_cap, float(x[-1])))
        object.__setattr__(self, "_value_spline", CubicHermiteSpline(x, y, d1))
        object.__setattr__(self, "_slope_spline", CubicHermiteSpline(x, d1, d2))

    def _check_domain(self, r):
        top = float(self.grid[-1])
        # rounding slack at the right end, as for TabulatedMonotone
        if np.any(r < 0) or np.any(r > top * (1 + 1e-13)):
            raise ExtrapolationError(
                f"{self.source}: argument outside tabulated range [0, {float(self.grid[-1])!r}]"
            )
        super()._check_domain(np.minimum(r, top))

    def _derivs(self, r):
        x = self.grid
        r = np.minimum(r, x[-1])
        v = self._value_spline(r)
        d1 = self._slope_spline(r)
        d2 = np.interp(r, x, self.d2)
        return v, d1, d2

    @property
    def name(self):
        return f"tabulated:{self.source}"


def _check_fd(x, y, dy, label):
    fd = np.gradient(y, x)
    scale = np.maximum(np.abs(dy), np.abs(fd))
    scale = np.maximum(scale, 1e-12 * max(1.0, float(np.max(np.abs(dy)))))
    err = np.abs(fd - dy)[1:-1] / scale[1:-1]
    if err.size and np.max(err) > FD_RTOL:
        k = int(np.argmax(err)) + 1
        raise InvalidScaleError(
            f"tabulated {label} inconsistent with finite differences at r={float(x[k])!r}"
        )


def load_tabulated(path: str | Path, **kwargs) -> Tabulated:
    """Read a CSV with header ``r,theta,d1,d2``."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != ["r", "theta", "d1", "d2"]:
            raise ValidationError(f"{path}: expected header r,theta,d1,d2, got {header}")
        try:
            rows = [[float(c) for c in row] for row in reader if row]
        except ValueError as exc:
            raise ValidationError(f"{path}: {exc}") from None
    if any(len(row) != 4 for row in rows):
        raise ValidationError(f"{path}: every row needs 4 columns")
    a = np.array(rows, dtype=float).reshape(-1, 4)
    return Tabulated(grid=a[:, 0], values=a[:, 1], d1=a[:, 2], d2=a[:, 3], source=str(path), **kwargs)


def eval_scale(spec: ScaleSpec, r, order: int = 0):
    """Value (``order=0``) or derivative of order 1 or 2 of ``spec`` at ``r``."""
    if order not in (0, 1, 2):
        raise ValidationError(f"order must be 0, 1 or 2, got {order!r}")
    out = spec.derivs(r)[order]
    if order == 0:
        out = np.where(np.asarray(r) == 0, 0.0, out)
    return float(out) if np.ndim(out) == 0 else out


_CATALOG = {
    "power": lambda arg: Power(p=_parse_float(arg, "power")),
    "identity": lambda arg: Power(p=1.0),
    "exp_minus_one": lambda arg: ExpMinusOne() if arg is None else ExpMinusOne(rate=_parse_float(arg, "exp_minus_one")),
    "log1p": lambda arg: Log1p(),
    "exp_sqrt": lambda arg: ExpSqrt(),
}


def _parse_float(arg, name):
    if arg is None:
        raise ValidationError(f"{name} needs a parameter, e.g. {name}:2")
    try:
        if "/" in arg:
            num, den = arg.split("/", 1)
            return float(num) / float(den)
        return float(arg)
    except ValueError:
        raise ValidationError(f"bad parameter {arg!r} for {name}") from None


def parse_scale(text: str) -> ScaleSpec:
    """Parse the ``name[:param]`` mini-language.

    ``compose:outer,inner`` nests one level; ``tabulated:<path>`` loads CSV.
    """
    text = text.strip()
    name, _, arg = text.partition(":")
    arg = arg or None
    if name == "compose":
        if not arg or "," not in arg:
            raise ValidationError("compose needs two comma-separated scale specs")
        outer, inner = arg.split(",", 1)
        return Composed(outer=parse_scale(outer), inner=parse_scale(inner))
    if name == "tabulated":
        if not arg:
            raise ValidationError("tabulated needs a CSV path")
        return load_tabulated(arg)
    try:
        factory = _CATALOG[name]
    except KeyError:
        raise ValidationError(f"unknown scale function {name!r}") from None
    return factory(arg)


# ---------------------------------------------------------------------------
# Factorization
# ---------------------------------------------------------------------------


def geometric_grid(r_max: float, grid_points: int, anchor: float = 1.0) -> np.ndarray:
    """Node 0 plus ``grid_points`` geometric nodes on ``[r_max * 1e-6, r_max]``.

    ``anchor`` is inserted when it lies strictly inside the range.
    """
    if grid_points < 2:
        raise ValidationError("grid_points must be >= 2")
    nodes = np.geomspace(r_max * GRID_FLOOR, r_max, grid_points)
    nodes[-1] = r_max
    if nodes[0] < anchor < r_max and not np.any(nodes == anchor):
        nodes = np.insert(nodes, np.searchsorted(nodes, anchor), anchor)
    return np.concatenate(([0.0], nodes))


def _cumtrapz(y, x):
    out = np.zeros_like(y)
    np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x), out=out[1:])
    return out


@dataclass(frozen=True, eq=False)
class Factorization:
    """Tabulated pair (convex ``phi_check``, concave ``psi_hat``) with
    ``phi_check(psi_hat(x)) == theta(x)``.

    ``nu_minus`` and ``nu_plus`` hold the densities of the negative and
    positive parts of ``(log theta')'`` at the ``psi_hat`` knots.
    ``linear_tail`` records that ``theta`` has no concave part on
    ``[r_max, domain_cap]``, so ``psi_hat`` continues linearly past its table
    and ``phi_check`` can be evaluated there through ``theta``.
    """

    psi_hat: TabulatedMonotone
    phi_check: TabulatedMonotone
    phi_check_inv_at_1: float
    source: ScaleSpec
    nu_minus: np.ndarray = field(repr=False, default=None)
    nu_plus: np.ndarray = field(repr=False, default=None)
    check_shape: bool = field(repr=False, default=True)
    linear_tail: bool = field(repr=False, default=False)

    def __post_init__(self):
        if self.check_shape:
            check_factor_shapes(self.psi_hat, self.phi_check)

    @property
    def r_max(self) -> float:
        return self.psi_hat.x_max

    @property
    def s_max(self) -> float:
        return self.phi_check.x_max

    @property
    def is_concave(self) -> bool:
        """True when the convex factor is linear (``theta`` itself concave)."""
        return self.nu_plus is not None and not np.any(self.nu_plus > 0)

    def psi(self, r):
        try:
            return self.psi_hat(r)
        except ExtrapolationError:
            raise TabulationDomainError(
                f"argument {float(np.max(r))!r} beyond psi_hat tabulation [0, {self.r_max!r}]; "
                f"re-run with r_max >= {float(np.max(r))!r}",
                required=float(np.max(r)),
            ) from None

    def phi(self, s):
        try:
            return self.phi_check(s)
        except ExtrapolationError:
            need = float(np.max(s))
            raise TabulationDomainError(
                f"argument {need!r} beyond phi_check tabulation [0, {self.s_max!r}]",
                required=need,
            ) from None

    def phi_lower(self, s) -> tuple[np.ndarray, bool]:
        """``phi_check`` extended past its tabulation by the tangent at the end.

        Returns ``(values, exact)``. Convexity makes the extension a lower
        bound, so ``exact`` is False exactly when some value is only a bound.
        A linear ``phi_check`` (concave source) extends exactly.
        """
        s = np.asarray(s, dtype=float)
        over = s > self.s_max
        if not np.any(over):
            return np.asarray(self.phi_check(s)), True
        if self.is_concave:
            return s * (self.phi_check.y_max / self.s_max), True
        inside = np.where(over, self.s_max, s)
        out = np.asarray(self.phi_check(inside), dtype=float).copy()
        slope = float(self.phi_check.slopes[-1])
        out[over] = self.phi_check.y_max + slope * (s[over] - self.s_max)
        if not self.linear_tail:
            return out, False
        # psi_hat(r) = s_max + psi_slope * (r - r_max) past the table
        r = self.r_max + (s - self.s_max) / float(self.psi_hat.slopes[-1])
        ok = over & (r <= self.source.domain_cap)
        if np.any(ok):
            out[ok] = self.source(r[ok])
        return out, bool(np.all(ok == over))

    def phi_inv(self, v):
        try:
            return self.phi_check.inverse(v)
        except ExtrapolationError:
            raise TabulationDomainError(
                f"value beyond phi_check range [0, {self.phi_check.y_max!r}]",
                required=float(np.max(v)),
            ) from None

    def concavity_density(self, t):
        """``-psi_hat'' / psi_hat'`` from the source scale, i.e. the negative
        part of ``(log theta')'``."""
        _, d1, d2 = self.source.derivs(t)
        return np.maximum(0.0, -d2 / d1)

    def scaled(self, lam: float) -> Factorization:
        """The equivalent factorization ``(phi_check(lam * .), psi_hat / lam)``."""
        if not lam > 0:
            raise ValidationError("scaling factor must be positive")
        psi = TabulatedMonotone(self.psi_hat.grid, self.psi_hat.values / lam, self.psi_hat.slopes / lam, power_head=True)
        phi = TabulatedMonotone(self.phi_check.grid / lam, self.phi_check.values, self.phi_check.slopes * lam, power_head=True)
        return Factorization(
            psi_hat=psi,
            phi_check=phi,
            phi_check_inv_at_1=self.phi_check_inv_at_1 / lam,
            source=self.source,
            nu_minus=self.nu_minus,
            nu_plus=self.nu_plus,
            check_shape=False,
            linear_tail=self.linear_tail,
        )

    def psi_spec(self) -> Tabulated:
        """``psi_hat`` as a tabulated scale with exact second derivatives at knots."""
        psi = self.psi_hat
        d1 = np.array(psi.slopes)
        d2 = -d1 * self.nu_minus
        return Tabulated(grid=psi.grid, values=psi.values, d1=d1, d2=d2, source="psi_hat", check_fd=False)

    def phi_spec(self) -> Tabulated:
        """``phi_check`` as a tabulated scale with exact second derivatives at knots."""
        phi = self.phi_check
        d1 = np.array(phi.slopes)
        # (log phi')'(psi(x)) * psi'(x) = nu_plus(x)
        d2 = d1 * self.nu_plus / np.maximum(self.psi_hat.slopes, np.finfo(float).tiny)
        return Tabulated(grid=phi.grid, values=phi.values, d1=d1, d2=d2, source="phi_check", check_fd=False)


def check_factor_shapes(psi: TabulatedMonotone, phi: TabulatedMonotone, tol: float = SHAPE_TOL) -> None:
    """Raise unless ``psi`` is discretely concave and ``phi`` convex.

    Second differences of secant slopes, scaled by the local spacing, are
    compared against ``tol`` times the local function value.
    """
    for label, tab, sign in (("psi_hat", psi, 1.0), ("phi_check", phi, -1.0)):
        dd = tab.second_differences()
        h = 0.5 * (tab.grid[2:] - tab.grid[:-2])
        local = np.maximum(np.abs(tab.values[1:-1]), np.abs(tab.values[2:]))
        excess = sign * dd * h - tol * local
        if np.any(excess > 0):
            k = int(np.argmax(excess)) + 1
            kind = "concave" if sign > 0 else "convex"
            raise NotFactorizableError(
                f"{label} not {kind} at knot {float(tab.grid[k])!r} (second difference {float(dd[k - 1])!r})"
            )


def minimal_factorization(
    spec: ScaleSpec,
    grid_points: int = DEFAULT_GRID_POINTS,
    r_max: float = DEFAULT_R_MAX,
) -> Factorization:
    """Tabulate the minimal factorization of ``spec`` on ``[0, r_max]``.

    Inner log-density integrals use the trapezoid rule in ``log r``; the
    outer integral uses the trapezoid rule in ``r`` with a power-law fit on
    the first cell ``[0, r_1]``. A concave ``spec`` gets the canonical
    representative ``(identity, spec)``; otherwise ``psi_hat'(1) = 1``
    (or at ``r_max`` when ``r_max < 1``).
    """
    if not (r_max > 0 and math.isfinite(r_max)):
        raise ValidationError("r_max must be positive and finite")
    if r_max > spec.domain_cap:
        raise DomainError(f"r_max {r_max!r} exceeds domain_cap {spec.domain_cap!r} of {spec.name}")
    anchor = min(1.0, r_max)
    x = geometric_grid(r_max, grid_points, anchor)
    xs = x[1:]
    v, d1, d2 = spec.derivs(xs)
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(d1)) and np.all(np.isfinite(d2))):
        raise InvalidScaleError(f"{spec.name}: non-finite values on (0, {r_max!r}]")
    if np.any(d1 <= 0):
        k = int(np.argmax(d1 <= 0))
        raise InvalidScaleError(f"{spec.name}: derivative not positive at r={float(xs[k])!r}")
    if not np.all(np.diff(v) > 0):
        raise InvalidScaleError(f"{spec.name}: values not strictly increasing on the grid")
    if v[-1] < 1.0:
        raise InvalidScaleError(
            f"{spec.name}: theta(r_max) = {float(v[-1])!r} < 1; increase r_max so the unit level is tabulated"
        )
    log_density = d2 / d1
    nu_minus = np.concatenate(([0.0], np.maximum(0.0, -log_density)))
    nu_plus = np.concatenate(([0.0], np.maximum(0.0, log_density)))
    nu_minus[0], nu_plus[0] = nu_minus[1], nu_plus[1]
    values = np.concatenate(([0.0], v))

    if not np.any(log_density > 0):
        psi = TabulatedMonotone(x, values, np.concatenate(([end_slope(x, values, d1[0])], d1)), power_head=True)
        phi = TabulatedMonotone(values, values, np.ones_like(values), power_head=True)
    else:
        # Continue the geometric grid SUBGRID_DECADES below xs[0] so the
        # first cell is integrated like every other one; only a power-law
        # tail below the extension is extrapolated.
        ratio = xs[1] / xs[0]
        n_sub = int(math.ceil(SUBGRID_DECADES * math.log(10) / math.log(ratio)))
        sub = xs[0] * ratio ** -np.arange(n_sub, 0, -1, dtype=float)
        xe = np.concatenate((sub, xs))
        _, sd1, sd2 = spec.derivs(sub)
        if np.any(~(sd1 > 0)) or not np.all(np.isfinite(sd2)):
            raise InvalidScaleError(f"{spec.name}: derivative not positive near 0")
        dens = np.concatenate((sd2 / sd1, log_density))
        inner = _cumtrapz(np.minimum(dens, 0.0) * xe, np.log(xe))
        inner -= inner[n_sub + int(np.searchsorted(xs, anchor))]
        with np.errstate(over="ignore"):
            slope_e = np.exp(inner)
        if not np.all(np.isfinite(slope_e)) or np.any(slope_e <= 0):
            raise NotFactorizableError(f"{spec.name}: concave-factor density overflows on the grid")
        alpha = math.log(slope_e[1] / slope_e[0]) / math.log(xe[1] / xe[0])
        if not alpha > -1.0 + 1e-3:
            raise NotFactorizableError(
                f"{spec.name}: not factorizable at this resolution "
                f"(psi_hat' ~ r^{alpha:.3f} near 0, integral diverges)"
            )
        tail = slope_e[0] * xe[0] / (1.0 + alpha)
        slope = slope_e[n_sub:]
        psi_vals = np.concatenate(([0.0], (tail + _cumtrapz(slope_e, xe))[n_sub:]))
        psi_slopes = np.concatenate(([end_slope(x, psi_vals, slope[0])], slope))
        psi = TabulatedMonotone(x, psi_vals, psi_slopes, power_head=True)
        phi_slopes = d1 / slope
        phi = TabulatedMonotone(
            psi_vals,
            values,
            np.concatenate(([end_slope(psi_vals, values, phi_slopes[0])], phi_slopes)),
            power_head=True,
        )

    inv1 = phi.inverse(1.0)
    return Factorization(
        psi_hat=psi,
        phi_check=phi,
        phi_check_inv_at_1=inv1,
        source=spec,
        nu_minus=nu_minus,
        nu_plus=nu_plus,
        linear_tail=_convex_beyond(spec, r_max),
    )


def _convex_beyond(spec: ScaleSpec, r_max: float, probes: int = 512) -> bool:
    """Whether ``theta'' >= 0`` on sampled points of ``[r_max, domain_cap]``."""
    cap = spec.domain_cap
    if not cap > r_max:
        return False
    t = np.geomspace(r_max, cap, probes)
    _, d1, d2 = spec.derivs(t)
    ok = np.isfinite(d1) & np.isfinite(d2) & (d1 > 0)
    return bool(np.all(ok) and np.all(d2 >= -1e-12 * np.abs(d1)))


def _log_derivative(spec: ScaleSpec, t: np.ndarray, label: str):
    _, d1, d2 = spec.derivs(t)
    bad = ~(np.abs(d1) > 0)
    if np.any(bad):
        loc = float(np.asarray(t)[np.argmax(bad)])
        raise ZeroDerivativeError(f"{label}: zero derivative at t={loc!r}", location=loc)
    return d2 / d1, d1


def verify_factorization(spec: ScaleSpec, phi: ScaleSpec, psi: ScaleSpec, grid) -> float:
    """Sup over ``grid`` of the log-derivative residual of ``theta = phi o psi``.

    The residual at ``t`` is
    ``(log theta')'(t) - (log phi')'(psi(t)) * psi'(t) - (log psi')'(t)``.
    """
    t = np.atleast_1d(np.asarray(grid, dtype=float))
    lt, _ = _log_derivative(spec, t, spec.name)
    lpsi, psi1 = _log_derivative(psi, t, psi.name)
    if np.any(psi1 <= 0):
        raise PreconditionError(f"{psi.name}: inner factor must be strictly increasing")
    lphi, _ = _log_derivative(phi, np.asarray(psi(t)), phi.name)
    return float(np.max(np.abs(lt - lphi * psi1 - lpsi)))


def minimality_gap(candidate_psi: ScaleSpec, fact: Factorization, grid, tol: float = 1e-8) -> np.ndarray:
    """Concavity density of ``psi_hat`` minus that of a candidate concave factor.

    Minimality of ``fact`` means the result is ``<= tol`` everywhere. The
    candidate must be concave and induce a convex ``theta o candidate^-1``;
    otherwise :class:`PreconditionError` is raised.
    """
    t = np.atleast_1d(np.asarray(grid, dtype=float))
    lt, _ = _log_derivative(fact.source, t, fact.source.name)
    lc, c1 = _log_derivative(candidate_psi, t, candidate_psi.name)
    scale = np.maximum(1.0, np.abs(lt))
    if np.any(c1 <= 0) or np.any(lc > tol * scale):
        raise PreconditionError(f"{candidate_psi.name} is not an increasing concave factor on the grid")
    # (log phi~')'(psi~) * psi~' = (log theta')' - (log psi~')' must be >= 0
    if np.any(lt - lc < -tol * scale):
        k = int(np.argmax(lc - lt))
        raise PreconditionError(
            f"{candidate_psi.name} does not factor {fact.source.name}: induced outer factor "
            f"is not convex at t={float(t[k])!r}"
        )
    own = fact.concavity_density(t)
    return own + lc

