import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ccc_transport import (  # noqa: E402
    DiscreteMeasure,
    FiniteMetricSpace,
    SampleFunction,
    minimal_factorization,
    parse_scale,
)

CATALOG = ("power:0.5", "power:1", "power:2", "power:3", "exp_minus_one", "log1p", "exp_sqrt")
CONVEX_CATALOG = ("power:1", "power:2", "power:3", "exp_minus_one")
CONCAVE_CATALOG = ("power:0.5", "power:1", "log1p")

_FACTS = {}
ACCEPTANCE_LINES = []


def factorization(text, **kwargs):
    """Cached minimal factorization of a parsed scale spec."""
    key = (text, tuple(sorted(kwargs.items())))
    if key not in _FACTS:
        _FACTS[key] = minimal_factorization(parse_scale(text), **kwargs)
    return _FACTS[key]


def random_functions(rng, n, count=2, high=3.0):
    """``count`` sample functions with values in ``[0, high]``."""
    return [SampleFunction(rng.uniform(0.0, high, n)) for _ in range(count)]


def random_probability(rng, n, floor=0.0):
    """Dirichlet weights; a fraction ``floor`` of the mass is spread evenly,
    so every weight is at least ``floor / n``."""
    return (1.0 - floor) * rng.dirichlet(np.ones(n)) + floor / n


def random_measure(rng, n, sparsity=0.0):
    """Random probability measure; each point is dropped with probability
    ``sparsity`` (at least one point keeps mass)."""
    w = rng.dirichlet(np.ones(n))
    if sparsity:
        w[rng.random(n) < sparsity] = 0.0
        if not np.any(w > 0):
            w[rng.integers(n)] = 1.0
        w /= math.fsum(w)
    return DiscreteMeasure(w)


def random_metric(rng, n, dim=2, scale=1.0):
    return FiniteMetricSpace.from_points(rng.uniform(0.0, scale, (n, dim)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def report():
    """Record one acceptance line; printed in the terminal summary."""

    def _report(number, title, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] AC{number:>2} {title}: {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
