"""Generalized Orlicz distance on a finite weighted space.

``d(f, g) = inf{t > 0 : sum_i mu_i * phi(psi(|f_i - g_i|) / t) <= 1}`` with
``(phi, psi)`` the minimal factorization of the scale function. The value
depends on the factorization used; only the minimal one (up to the linear
rescaling it is unique for) is supported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DivergenceError, PreconditionError, TabulationDomainError, ValidationError
from .interp import TabulatedMonotone
from .scale import Composed, ExpMinusOne, Factorization, Power, ScaleSpec
from .spaces import SampleFunction, WeightedSpace

DEFAULT_TOL = 1e-9
MAX_DOUBLINGS = 60
MAX_HALVINGS = 1100


@dataclass(frozen=True)
class GaugeResult:
    distance: float
    modular_at_t: float
    bisection_iterations: int
    bracket: tuple[float, float]


def _differences(f: SampleFunction, g: SampleFunction, space: WeightedSpace):
    f.check_bound(space)
    g.check_bound(space)
    r = np.abs(f.values - g.values)
    w = space.weights
    keep = w > 0
    return r[keep], w[keep]


def modular(
    f: SampleFunction,
    g: SampleFunction,
    t: float,
    fact: Factorization,
    space: WeightedSpace,
) -> float:
    """``sum_i mu_i * phi_check(psi_hat(|f_i - g_i|) / t)``."""
    if not t > 0:
        raise ValidationError(f"t must be positive, got {t!r}")
    r, w = _differences(f, g, space)
    s = np.asarray(fact.psi(r)) / t
    return math.fsum(w * np.asarray(fact.phi(s)))


def _lower_modular(h: np.ndarray, w: np.ndarray, t: float, phi_lower) -> float:
    """Modular of ``h / t`` where ``phi_lower`` may only bound ``phi`` from below.

    Raises when the bound is too weak to decide whether the modular exceeds 1.
    """
    s = h / t
    vals, exact = phi_lower(s)
    total = math.fsum(w * vals)
    if not exact and total <= 1.0:
        need = float(np.max(s))
        raise TabulationDomainError(
            f"modular at t={t!r} needs the convex factor tabulated up to {need!r}",
            required=need,
        )
    return total


def _bisect_gauge(evaluate: Callable[[float], float], t0: float, tol: float) -> GaugeResult:
    """Smallest ``t`` with ``evaluate(t) <= 1`` for non-increasing ``evaluate``.

    The returned distance is the upper bracket end, where the modular is
    known to be at most 1.
    """
    t_hi = t0
    m_hi = evaluate(t_hi)
    doublings = 0
    while m_hi > 1.0:
        doublings += 1
        if doublings > MAX_DOUBLINGS:
            raise DivergenceError(f"modular still {m_hi!r} > 1 after {MAX_DOUBLINGS} doublings")
        t_hi *= 2.0
        m_hi = evaluate(t_hi)

    iterations = 0
    t_lo = 0.5 * t_hi
    while True:
        iterations += 1
        if iterations > MAX_HALVINGS:
            raise DivergenceError("no lower bracket found; modular stays <= 1 as t -> 0")
        m_lo = evaluate(t_lo)
        if m_lo > 1.0:
            break
        t_hi, m_hi = t_lo, m_lo
        t_lo *= 0.5

    while t_hi - t_lo > tol * t_hi:
        iterations += 1
        mid = 0.5 * (t_lo + t_hi)
        m_mid = evaluate(mid)
        if m_mid <= 1.0:
            t_hi, m_hi = mid, m_mid
        else:
            t_lo = mid
    return GaugeResult(distance=t_hi, modular_at_t=m_hi, bisection_iterations=iterations, bracket=(t_lo, t_hi))


def _initial_t(top: float, total_mass: float, phi_inv, phi_max: float, phi_inv_at_1: float) -> float:
    # modular(t) <= total_mass * phi(top / t), so top / phi^-1(1 / total_mass) works
    target = 1.0 / total_mass
    if target <= phi_max:
        return top / phi_inv(target)
    return top / phi_inv_at_1


def orlicz_distance(
    f: SampleFunction,
    g: SampleFunction,
    fact: Factorization,
    space: WeightedSpace,
    tol: float = DEFAULT_TOL,
) -> GaugeResult:
    """Gauge distance ``d(f, g)``, to relative bracket width ``tol``.

    Points of zero weight are ignored, so functions equal almost everywhere
    are at distance 0.
    """
    if not tol > 0:
        raise ValidationError("tol must be positive")
    r, w = _differences(f, g, space)
    if not np.any(r > 0):
        return GaugeResult(distance=0.0, modular_at_t=0.0, bisection_iterations=0, bracket=(0.0, 0.0))
    h = np.asarray(fact.psi(r), dtype=float)
    t0 = _initial_t(float(np.max(h)), space.total_mass, fact.phi_inv, fact.phi_check.y_max, fact.phi_check_inv_at_1)
    return _bisect_gauge(lambda t: _lower_modular(h, w, t, fact.phi_lower), t0, tol)


def luxemburg_norm(
    values,
    phi: TabulatedMonotone,
    space: WeightedSpace,
    tol: float = DEFAULT_TOL,
) -> GaugeResult:
    """Luxemburg norm ``inf{t : sum_i mu_i phi(|h_i| / t) <= 1}`` of ``values``
    in the Orlicz space of a tabulated convex ``phi``."""
    h = np.abs(np.asarray(values, dtype=float))
    if h.shape != (space.n,):
        raise ValidationError(f"expected {space.n} values, got shape {h.shape}")
    keep = space.weights > 0
    h, w = h[keep], space.weights[keep]
    if not np.any(h > 0):
        return GaugeResult(distance=0.0, modular_at_t=0.0, bisection_iterations=0, bracket=(0.0, 0.0))
    slope = float(phi.slopes[-1])
    # a linear table extends exactly; otherwise the tangent is a lower bound
    linear = not np.any(phi.second_differences())

    def phi_lower(s):
        over = s > phi.x_max
        if not np.any(over):
            return np.asarray(phi(s)), True
        out = np.asarray(phi(np.where(over, phi.x_max, s)), dtype=float).copy()
        out[over] = phi.y_max + slope * (s[over] - phi.x_max)
        return out, linear

    top = float(np.max(h))
    if 1.0 > phi.y_max:
        raise TabulationDomainError("convex factor does not reach the unit level", required=None)
    t0 = _initial_t(top, space.total_mass, phi.inverse, phi.y_max, phi.inverse(1.0))
    return _bisect_gauge(lambda t: _lower_modular(h, w, t, phi_lower), t0, tol)


def _is_concave(spec: ScaleSpec, r: np.ndarray) -> bool:
    top = float(np.max(r))
    probe = np.concatenate((np.geomspace(top * 1e-6, top, 256), r[r > 0]))
    _, _, d2 = spec.derivs(probe)
    return bool(np.all(d2 <= 0))


def orlicz_distance_concave(
    f: SampleFunction,
    g: SampleFunction,
    spec: ScaleSpec,
    space: WeightedSpace,
    fact: Factorization | None = None,
) -> float:
    """``sum_i mu_i * theta(|f_i - g_i|)``, valid for concave ``theta`` only.

    Concavity is taken from ``fact`` when given, otherwise probed through
    ``theta''`` on ``(0, max|f - g|]``.
    """
    r, w = _differences(f, g, space)
    if not np.any(r > 0):
        return 0.0
    concave = fact.is_concave if fact is not None else _is_concave(spec, r)
    if not concave:
        raise PreconditionError(f"{spec.name} is not concave; use orlicz_distance")
    return math.fsum(w * np.asarray(spec(r)))


JENSEN_OUTER = {
    "square": Power(p=2.0),
    "cube": Power(p=3.0),
    "exp2": ExpMinusOne(rate=math.log(2.0)),
}


def _jensen_outer(outer: str | ScaleSpec) -> ScaleSpec:
    phi = JENSEN_OUTER[outer] if isinstance(outer, str) else outer
    if abs(phi(1.0) - 1.0) > 1e-12:
        raise PreconditionError(f"{phi.name}: needs Phi^-1(1) = 1, got Phi(1) = {phi(1.0)!r}")
    probe = np.linspace(0.0, 10.0, 201)[1:]
    if np.any(phi.derivs(probe)[2] < 0):
        raise PreconditionError(f"{phi.name} is not convex")
    return phi


def jensen_lift(spec: ScaleSpec, outer: str | ScaleSpec = "square") -> Composed:
    """``Phi o theta`` for a convex ``Phi`` with ``Phi(1) = 1``.

    ``outer`` is a key of ``JENSEN_OUTER`` or a scale spec; the unit
    normalization is enforced to 1e-12.
    """
    return Composed(outer=_jensen_outer(outer), inner=spec)


def jensen_factorization(fact: Factorization, outer: str | ScaleSpec = "square") -> Factorization:
    """The factorization ``(Phi o phi_check, psi_hat)`` of ``Phi o theta``.

    It keeps the concave factor of ``theta``, which is what the comparison
    ``d_{Phi o theta} >= d_theta`` on probability spaces relies on. It is
    not the minimal factorization of ``Phi o theta`` in general: for
    ``theta = sqrt`` and ``Phi(x) = x^2`` the minimal one is
    ``(identity, identity)``, and the comparison fails for it whenever
    ``|f - g| < 1``.
    """
    phi_outer = _jensen_outer(outer)
    tab = fact.phi_check
    v, d1, d2 = phi_outer.derivs(tab.values)
    phi = TabulatedMonotone(tab.grid, np.where(tab.values == 0, 0.0, v), d1 * tab.slopes, power_head=True)
    # log-density of the new outer factor along x: (log Phi')'(theta) theta' on top of nu_plus
    x = fact.psi_hat.grid.copy()
    x[0] = x[1]
    theta_d1 = fact.source.derivs(x)[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        extra = np.where(d1 > 0, d2 / d1, 0.0) * theta_d1
    nu_plus = fact.nu_plus + np.maximum(0.0, np.nan_to_num(extra))
    return Factorization(
        psi_hat=fact.psi_hat,
        phi_check=phi,
        phi_check_inv_at_1=phi.inverse(1.0),
        source=Composed(outer=phi_outer, inner=fact.source),
        nu_minus=fact.nu_minus,
        nu_plus=nu_plus,
        linear_tail=fact.linear_tail,
    )
