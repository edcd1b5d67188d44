import math

import numpy as np
import pytest
from conftest import CATALOG, CONCAVE_CATALOG, CONVEX_CATALOG, factorization
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import exp_sqrt_concave_factor_at_1, exp_sqrt_concave_factor_closed

from ccc_transport import (
    Composed,
    ExpMinusOne,
    ExpSqrt,
    InvalidScaleError,
    Log1p,
    NotFactorizableError,
    Power,
    PreconditionError,
    ScaleSpec,
    Tabulated,
    ValidationError,
    eval_scale,
    load_tabulated,
    minimal_factorization,
    minimality_gap,
    parse_scale,
    verify_factorization,
)
from ccc_transport.errors import DomainError, ExtrapolationError
from ccc_transport.scale import check_factor_shapes, geometric_grid

# ---------------------------------------------------------------------------
# evaluation and parsing
# ---------------------------------------------------------------------------


def test_eval_power_square():
    assert eval_scale(Power(2.0), 3.0, 0) == 9.0
    assert eval_scale(Power(2.0), 0.0, 0) == 0.0


def test_eval_exp_sqrt_derivative_against_finite_difference():
    h = 1e-6
    f = lambda r: math.expm1(math.sqrt(r))  # noqa: E731
    central = (f(1 + h) - f(1 - h)) / (2 * h)
    value = eval_scale(ExpSqrt(), 1.0, 1)
    assert value == pytest.approx(math.e / 2, rel=1e-14)
    assert value == pytest.approx(central, rel=1e-8)


@pytest.mark.parametrize("spec", [Power(0.5), Power(3.0), ExpMinusOne(), Log1p(), ExpSqrt(), Composed(Power(2.0), Log1p())])
def test_derivatives_match_finite_differences(spec):
    r = np.linspace(0.2, 5.0, 50)
    h = 1e-5
    v, d1, d2 = spec.derivs(r)
    fd1 = (spec(r + h) - spec(r - h)) / (2 * h)
    fd2 = (spec.derivs(r + h)[1] - spec.derivs(r - h)[1]) / (2 * h)
    assert np.allclose(d1, fd1, rtol=1e-7)
    assert np.allclose(d2, fd2, rtol=1e-6, atol=1e-9)


def test_domain_cap_enforced():
    with pytest.raises(DomainError):
        ExpMinusOne()(800.0)
    with pytest.raises(DomainError):
        Power(2.0)(-1.0)


def test_eval_rejects_bad_order():
    with pytest.raises(ValidationError):
        eval_scale(Power(2.0), 1.0, 3)


@pytest.mark.parametrize(
    "text, probe, expected",
    [
        ("power:2", 3.0, 9.0),
        ("power:1/2", 4.0, 2.0),
        ("identity", 2.5, 2.5),
        ("exp_minus_one", 1.0, math.e - 1),
        ("exp_minus_one:2", 1.0, math.e**2 - 1),
        ("log1p", math.e - 1, 1.0),
        ("exp_sqrt", 4.0, math.e**2 - 1),
        ("compose:power:2,log1p", math.e - 1, 1.0),
    ],
)
def test_parse_scale(text, probe, expected):
    assert parse_scale(text)(probe) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("text", ["", "power", "power:x", "power:-1", "cosh", "compose:power:2", "tabulated:"])
def test_parse_scale_rejects(text):
    with pytest.raises(ValidationError):
        parse_scale(text)


def test_composed_chain_rule():
    spec = Composed(outer=Power(2.0), inner=ExpSqrt())
    r = np.array([0.3, 1.0, 2.5])
    v, d1, d2 = spec.derivs(r)
    g = np.expm1(np.sqrt(r))
    gp = np.exp(np.sqrt(r)) / (2 * np.sqrt(r))
    assert np.allclose(v, g**2)
    assert np.allclose(d1, 2 * g * gp)


# ---------------------------------------------------------------------------
# tabulated scale functions
# ---------------------------------------------------------------------------


def _write_square_csv(path, n=200, r_max=10.0, d2_scale=1.0):
    r = np.linspace(0.0, r_max, n)
    rows = ["r,theta,d1,d2"] + [f"{x!r},{x * x!r},{2 * x!r},{2.0 * d2_scale!r}" for x in r.tolist()]
    path.write_text("\n".join(rows) + "\n")
    return path


def test_tabulated_csv_round_trip(tmp_path):
    spec = load_tabulated(_write_square_csv(tmp_path / "sq.csv"))
    r = np.linspace(0.0, 10.0, 77)
    assert np.allclose(spec(r), r * r, rtol=1e-12, atol=1e-12)
    via_parser = parse_scale(f"tabulated:{tmp_path / 'sq.csv'}")
    assert via_parser(3.0) == pytest.approx(9.0)


def test_tabulated_factorization_matches_analytic(tmp_path):
    spec = load_tabulated(_write_square_csv(tmp_path / "sq.csv"))
    fact = minimal_factorization(spec)
    grid = fact.psi_hat.grid
    assert np.max(np.abs(fact.psi_hat(grid) - grid)) < 1e-6


def test_tabulated_off_grid_raises(tmp_path):
    spec = load_tabulated(_write_square_csv(tmp_path / "sq.csv"))
    with pytest.raises(ExtrapolationError):
        spec(10.5)


def test_tabulated_inconsistent_derivative_rejected(tmp_path):
    with pytest.raises(InvalidScaleError):
        load_tabulated(_write_square_csv(tmp_path / "bad.csv", d2_scale=3.0))


def test_tabulated_bad_header(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("x,y\n0,0\n1,1\n")
    with pytest.raises(ValidationError):
        load_tabulated(path)


@pytest.mark.parametrize(
    "grid, values",
    [([0.0, 2.0, 1.0], [0.0, 1.0, 2.0]), ([0.0, 1.0, 2.0], [0.0, 2.0, 1.0]), ([0.5, 1.0, 2.0], [0.0, 1.0, 2.0])],
)
def test_tabulated_invariants(grid, values):
    with pytest.raises(InvalidScaleError):
        Tabulated(grid=grid, values=values, d1=[1.0, 1.0, 1.0], d2=[0.0, 0.0, 0.0], check_fd=False)


# ---------------------------------------------------------------------------
# minimal factorization
# ---------------------------------------------------------------------------


def test_grid_layout():
    x = geometric_grid(10.0, 2048)
    assert x[0] == 0.0 and x[1] == pytest.approx(1e-5) and x[-1] == 10.0
    assert 1.0 in x
    assert np.all(np.diff(x) > 0)


def test_convex_source_gives_identity_concave_factor():
    fact = factorization("power:2")
    r = np.linspace(0.0, 10.0, 10001)
    assert np.max(np.abs(fact.psi_hat(r) - r)) <= 1e-6


def test_concave_source_gives_identity_convex_factor():
    fact = factorization("power:0.5")
    s = np.linspace(0.0, fact.s_max, 10001)
    assert np.max(np.abs(fact.phi_check(s) - s)) <= 1e-6


def test_exp_sqrt_against_dense_quadrature():
    fact = factorization("exp_sqrt")
    oracle = exp_sqrt_concave_factor_at_1()
    assert fact.psi_hat(1.0) == pytest.approx(oracle, rel=1e-5)
    assert oracle == pytest.approx(2 * (1 - math.exp(-1)), rel=1e-12)


@pytest.mark.parametrize("x", [1e-6, 1e-4, 0.01, 0.3, 1.0])
def test_exp_sqrt_against_closed_form(x):
    # below the first grid node the power-law head is only approximate
    rel = 1e-3 if x < 1e-5 else 1e-5
    assert factorization("exp_sqrt").psi_hat(x) == pytest.approx(exp_sqrt_concave_factor_closed(x), rel=rel)


@pytest.mark.parametrize("text", CATALOG)
def test_factor_shapes(text):
    fact = factorization(text)
    check_factor_shapes(fact.psi_hat, fact.phi_check)
    assert np.all(np.diff(fact.psi_hat.values) > 0)
    assert np.all(np.diff(fact.phi_check.values) > 0)


@pytest.mark.parametrize("text", CATALOG)
def test_composition_reproduces_source(text):
    fact = factorization(text)
    r = np.concatenate((fact.psi_hat.grid, np.linspace(0.0, 10.0, 4001)))
    theta = fact.source(r)
    comp = fact.phi_check(fact.psi_hat(r))
    assert np.max(np.abs(comp - theta) / np.maximum(theta, 1e-12)) <= 1e-6


@pytest.mark.parametrize("text", CONVEX_CATALOG)
def test_convex_catalog_identity(text):
    fact = factorization(text)
    r = np.linspace(0.0, 10.0, 5001)
    assert np.max(np.abs(fact.psi_hat(r) - r)) <= 1e-6


@pytest.mark.parametrize("text", CONCAVE_CATALOG)
def test_concave_catalog_identity(text):
    fact = factorization(text)
    s = np.linspace(0.0, fact.s_max, 5001)
    assert np.max(np.abs(fact.phi_check(s) - s)) <= 1e-6


@pytest.mark.parametrize("lam", [0.25, 0.5, 2.0, 3.7, 10.0])
@pytest.mark.parametrize("text", ["exp_sqrt", "power:2", "log1p"])
def test_scaling_leaves_composition_unchanged(text, lam):
    fact = factorization(text)
    other = fact.scaled(lam)
    x = fact.psi_hat.grid
    assert np.array_equal(other.phi_check(other.psi_hat(x)), fact.phi_check(fact.psi_hat(x)))


def _normalized(fn, h=1e-6):
    # divide by the slope at 1 so different factorizations are comparable
    slope = (fn(1 + h) - fn(1 - h)) / (2 * h)
    return lambda x: fn(x) / slope


@pytest.mark.parametrize(
    "text, candidates",
    [
        ("exp_sqrt", [lambda x: 2 * np.sqrt(x), lambda x: np.sqrt(x) / 0.5]),
        ("power:2", [lambda x: x, lambda x: 2 * np.sqrt(x), lambda x: 3 * np.cbrt(x)]),
        ("power:3", [lambda x: x, lambda x: 2 * np.sqrt(x)]),
        ("power:0.5", [lambda x: 2 * np.sqrt(x), lambda x: 4 * x**0.25]),
        ("log1p", [lambda x: 2 * np.log1p(x)]),
        ("exp_minus_one", [lambda x: x]),
    ],
)
def test_concave_factor_below_every_other_concave_factor(text, candidates):
    fact = factorization(text)
    psi_hat = _normalized(lambda x: np.asarray(fact.psi_hat(x)))
    x = np.linspace(0.0, 1.0, 2001)
    for psi in candidates:
        assert np.all(psi_hat(x) <= psi(x) + 1e-6)


@pytest.mark.parametrize("text", CATALOG)
def test_minimal_factorization_residual(text):
    fact = factorization(text)
    grid = np.geomspace(0.05, 10.0, 600)
    assert verify_factorization(fact.source, fact.phi_spec(), fact.psi_spec(), grid) <= 1e-3


def test_runtime_and_determinism():
    a = minimal_factorization(ExpSqrt())
    b = minimal_factorization(ExpSqrt())
    assert np.array_equal(a.psi_hat.values, b.psi_hat.values)
    assert a.phi_check_inv_at_1 == b.phi_check_inv_at_1


def test_rejects_nonpositive_derivative():
    class Plateau(ScaleSpec):
        # (r - 1)^3 + 1 has a stationary point at 1
        def _derivs(self, r):
            return (r - 1) ** 3 + 1, 3 * (r - 1) ** 2, 6 * (r - 1)

    with pytest.raises(InvalidScaleError):
        minimal_factorization(Plateau())


def test_rejects_scale_below_unit_level():
    with pytest.raises(InvalidScaleError):
        minimal_factorization(Power(2.0), r_max=0.5)


def test_divergent_inner_integral():
    class Singular(ScaleSpec):
        # log-density -2/r near 0 plus a convex part: psi_hat' ~ r^-2
        def _derivs(self, r):
            return r, np.ones_like(r), -2.0 / r + 4.0 * r

    with pytest.raises(NotFactorizableError):
        minimal_factorization(Singular())


# ---------------------------------------------------------------------------
# verification and minimality
# ---------------------------------------------------------------------------


def test_verify_exact_convex_case():
    grid = np.linspace(0.05, 4.0, 200)
    assert verify_factorization(Power(2.0), Power(2.0), Power(1.0), grid) <= 1e-8


def test_verify_analytic_factorization():
    grid = np.linspace(0.05, 4.0, 200)
    assert verify_factorization(ExpSqrt(), ExpMinusOne(), Power(0.5), grid) <= 1e-6


def test_verify_detects_wrong_factorization():
    grid = np.linspace(0.1, 4.0, 200)
    # residual is 3/(2t) - 1/(2 sqrt t), about 13.4 at t = 0.1
    assert verify_factorization(Power(2.0), ExpMinusOne(), Power(0.5), grid) > 0.1


def test_minimality_gap_self_comparison():
    fact = factorization("exp_sqrt")
    grid = fact.psi_hat.grid[1:]
    assert np.max(np.abs(minimality_gap(fact.psi_spec(), fact, grid))) <= 1e-10


def test_minimality_gap_concave_source():
    fact = factorization("power:0.5")
    grid = np.geomspace(1e-3, 10.0, 300)
    assert np.max(np.abs(minimality_gap(Power(0.5), fact, grid))) <= 1e-6


def test_minimality_gap_strictly_negative_for_nonminimal_candidate():
    fact = factorization("power:2")
    grid = np.geomspace(1e-3, 10.0, 300)
    gap = minimality_gap(Power(0.5), fact, grid)
    assert np.all(gap < 0)
    assert np.allclose(gap, -1.0 / (2.0 * grid), rtol=1e-12)


def test_minimality_gap_exp_sqrt_candidate():
    fact = factorization("exp_sqrt")
    grid = np.geomspace(1e-3, 10.0, 300)
    assert np.all(minimality_gap(Power(0.5), fact, grid) <= 1e-8)


def test_minimality_gap_rejects_non_factor():
    fact = factorization("power:0.5")
    with pytest.raises(PreconditionError):
        minimality_gap(Power(2.0), fact, np.linspace(0.1, 2.0, 20))
    with pytest.raises(PreconditionError):
        # identity would need theta o id^-1 = sqrt to be convex
        minimality_gap(Power(1.0), fact, np.linspace(0.1, 2.0, 20))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.15, 0.95), st.floats(1.0, 4.0))
def test_power_composition_factorizes_exactly(q, p):
    # theta = r^(p q) factors as (x^p, x^q); the minimal one is (theta, id) or (id, theta)
    fact = minimal_factorization(Power(p * q), grid_points=512)
    r = fact.psi_hat.grid
    theta = r ** (p * q)
    assert np.max(np.abs(fact.phi_check(fact.psi_hat(r)) - theta) / np.maximum(theta, 1e-12)) <= 1e-10
    if p * q >= 1:
        assert np.max(np.abs(fact.psi_hat(r) - r)) <= 1e-9
    else:
        assert fact.is_concave


@pytest.mark.parametrize("text", ["exp_sqrt", "power:2", "exp_minus_one"])
def test_convex_tail_extends_exactly(text):
    short = factorization(text)
    long = minimal_factorization(parse_scale(text), r_max=30.0, grid_points=4096)
    assert short.linear_tail
    s = np.linspace(short.s_max, long.s_max, 50)
    values, exact = short.phi_lower(s)
    assert exact
    assert np.allclose(values, long.phi_check(s), rtol=1e-6)


def test_tail_of_concave_part_is_only_a_bound():
    # log1p(r)^2 is convex near 0 and concave for r > e - 1
    fact = minimal_factorization(parse_scale("compose:power:2,log1p"))
    assert not fact.linear_tail and not fact.is_concave
    values, exact = fact.phi_lower(np.array([fact.s_max * 2]))
    assert not exact
