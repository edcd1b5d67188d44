"""Exact discrete transport and the Wasserstein-type distance ``W_theta``.

For a scale parameter ``t`` the transport modular is

    T(t) = min over couplings q of sum_ij q_ij * phi(psi(d_ij) / t)

which is non-increasing in ``t``; ``W_theta = inf{t : T(t) <= 1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import TabulationDomainError, ValidationError
from .scale import Factorization, ScaleSpec
from .simplex import certificate, transport_simplex
from .spaces import DiscreteMeasure, FiniteMetricSpace, TransportPlan

DEFAULT_TOL = 1e-6


@dataclass(frozen=True)
class OTResult:
    plan: TransportPlan
    cost: float
    dual_gap_or_certificate: float
    basis: tuple = field(repr=False, default=())
    iterations: int = 0


@dataclass(frozen=True)
class WassersteinResult:
    distance: float
    optimal_plan: TransportPlan
    transport_modular_at_w: float
    lp_solves: int
    bracket: tuple[float, float] = (0.0, 0.0)
    below_resolution: bool = False


def solve_ot(cost, mu: DiscreteMeasure, nu: DiscreteMeasure, basis=None) -> OTResult:
    """Exact minimum-cost coupling of ``mu`` and ``nu``.

    The plan is a vertex of the transportation polytope. ``basis`` may carry
    the ``basis`` of an earlier result for a warm start.
    """
    C = np.asarray(cost, dtype=float)
    if C.shape != (mu.n, nu.n):
        raise ValidationError(f"cost shape {C.shape} does not match measures ({mu.n}, {nu.n})")
    if np.any(np.isnan(C)):
        raise ValidationError("cost contains NaN")
    if np.any(C < 0):
        raise ValidationError("cost entries must be nonnegative")
    res = transport_simplex(C, mu.weights, nu.weights, basis=basis)
    plan = TransportPlan(res.flow)
    cost_value = math.fsum((res.flow * C).ravel())
    return OTResult(
        plan=plan,
        cost=cost_value,
        dual_gap_or_certificate=certificate(res, C, mu.weights, nu.weights),
        basis=res.basis,
        iterations=res.iterations,
    )


def _check_pair(mu: DiscreteMeasure, nu: DiscreteMeasure, space: FiniteMetricSpace) -> None:
    if mu.n != space.n or nu.n != space.n:
        raise ValidationError(f"measures of sizes {mu.n}, {nu.n} on a space of {space.n} points")


def transport_modular(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    space: FiniteMetricSpace,
    t: float,
    fact: Factorization,
) -> tuple[float, TransportPlan]:
    """``T(t)`` and a minimizing plan for the cost ``phi(psi(d) / t)``.

    Cells beyond the convex factor's tabulation are fine as long as the
    optimal plan does not use them; otherwise :class:`TabulationDomainError`
    reports the extension needed.
    """
    if not t > 0:
        raise ValidationError(f"t must be positive, got {t!r}")
    _check_pair(mu, nu, space)
    value, res, exact = _ModularOracle(mu, nu, space, fact).evaluate(t)
    if not exact:
        raise _domain_error(t, res.need)
    return value, res.plan


def _domain_error(t: float, need: float) -> TabulationDomainError:
    return TabulationDomainError(
        f"transport modular at t={t!r} needs the convex factor tabulated up to {need!r}",
        required=need,
    )


@dataclass(frozen=True)
class _Evaluation:
    plan: TransportPlan
    basis: tuple
    need: float


class _ModularOracle:
    """Evaluates ``T(t)`` for one measure pair, reusing the last basis.

    Past its tabulation the convex factor is replaced by its tangent, a
    lower bound. With ``q`` optimal for the bounded cost,
    ``T(t) >= sum q * bound``, with equality when ``q`` only uses exactly
    tabulated cells. So a bounded minimum above 1 decides ``T(t) > 1``, and
    the value is exact whenever the plan stays inside the table.
    """

    def __init__(self, mu, nu, space, fact):
        self.mu, self.nu, self.fact = mu, nu, fact
        self.psi_d = np.asarray(fact.psi(space.dist), dtype=float)
        self.basis = None
        self.solves = 0

    def evaluate(self, t: float) -> tuple[float, _Evaluation, bool]:
        s = self.psi_d / t
        cost, exact = self.fact.phi_lower(s)
        res = solve_ot(cost, self.mu, self.nu, basis=self.basis)
        self.basis = res.basis
        self.solves += 1
        need = 0.0
        if not exact:
            used = (res.plan.q > 0) & (s > self.fact.s_max)
            if np.any(used):
                need = float(np.max(s[used]))
                exact = False
            else:
                exact = True
        return res.cost, _Evaluation(res.plan, res.basis, need), exact

    def __call__(self, t: float) -> tuple[float, _Evaluation]:
        value, res, exact = self.evaluate(t)
        if not exact and value <= 1.0:
            raise _domain_error(t, res.need)
        return value, res


def wasserstein_distance(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    space: FiniteMetricSpace,
    fact: Factorization,
    tol: float = DEFAULT_TOL,
) -> WassersteinResult:
    """``W_theta(mu, nu)`` by bisection on ``t`` to relative bracket width ``tol``.

    The reported distance is the upper bracket end, so the returned plan
    certifies ``T(distance) <= 1``. If no ``t`` down to ``tol`` times the
    initial bracket has ``T(t) > 1``, the result is flagged
    ``below_resolution``.
    """
    if not tol > 0:
        raise ValidationError("tol must be positive")
    _check_pair(mu, nu, space)
    if np.array_equal(mu.weights, nu.weights):
        plan = TransportPlan(np.diag(mu.weights))
        return WassersteinResult(0.0, plan, 0.0, 0)

    T = _ModularOracle(mu, nu, space, fact)
    top = float(np.max(T.psi_d))
    t_hi = top / fact.phi_check_inv_at_1
    t_start = t_hi
    m_hi, res_hi = T(t_hi)
    while m_hi > 1.0:
        # only rounding can push T above 1 at the pointwise bound
        t_hi *= 1.0 + 1e-12
        m_hi, res_hi = T(t_hi)

    t_lo = 0.5 * t_hi
    while True:
        if t_lo < tol * t_start:
            return WassersteinResult(t_hi, res_hi.plan, m_hi, T.solves, (0.0, t_hi), True)
        m_lo, res_lo = T(t_lo)
        if m_lo > 1.0:
            break
        t_hi, m_hi, res_hi = t_lo, m_lo, res_lo
        t_lo *= 0.5

    while t_hi - t_lo > tol * t_hi:
        mid = 0.5 * (t_lo + t_hi)
        m_mid, res_mid = T(mid)
        if m_mid <= 1.0:
            t_hi, m_hi, res_hi = mid, m_mid, res_mid
        else:
            t_lo = mid
    return WassersteinResult(t_hi, res_hi.plan, m_hi, T.solves, (t_lo, t_hi))


def optimal_coupling(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    space: FiniteMetricSpace,
    fact: Factorization,
    tol: float = DEFAULT_TOL,
) -> TransportPlan:
    """A coupling whose modular at ``W_theta(mu, nu)`` is at most 1."""
    return wasserstein_distance(mu, nu, space, fact, tol).optimal_plan


def check_unit_ball_equivalence(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    space: FiniteMetricSpace,
    spec: ScaleSpec,
    fact: Factorization,
    tol: float = DEFAULT_TOL,
) -> tuple[bool, bool]:
    """``(W_theta(mu, nu) <= 1, min_q sum q_ij theta(d_ij) <= 1)``.

    The two agree except possibly when either quantity is within the
    numerical tolerance of 1.
    """
    w = wasserstein_distance(mu, nu, space, fact, tol).distance
    direct = solve_ot(spec(space.dist), mu, nu).cost
    return w <= 1.0, direct <= 1.0
