"""Convex-concave scale functions, generalized Orlicz gauges and
Wasserstein-type distances on finite spaces."""

from .errors import (
    CCCError,
    DivergenceError,
    DomainError,
    InvalidScaleError,
    NotFactorizableError,
    NumericalError,
    PreconditionError,
    TabulationDomainError,
    ValidationError,
)
from .gauge import (
    GaugeResult,
    jensen_factorization,
    jensen_lift,
    luxemburg_norm,
    modular,
    orlicz_distance,
    orlicz_distance_concave,
)
from .interp import TabulatedMonotone
from .scale import (
    Composed,
    ExpMinusOne,
    ExpSqrt,
    Factorization,
    Log1p,
    Power,
    ScaleSpec,
    Tabulated,
    eval_scale,
    load_tabulated,
    minimal_factorization,
    minimality_gap,
    parse_scale,
    verify_factorization,
)
from .spaces import (
    DiscreteMeasure,
    FiniteMetricSpace,
    SampleFunction,
    TransportPlan,
    WeightedSpace,
    dump_document,
    load_space,
)
from .transport import (
    OTResult,
    WassersteinResult,
    check_unit_ball_equivalence,
    optimal_coupling,
    solve_ot,
    transport_modular,
    wasserstein_distance,
)

__version__ = "0.1.0"
