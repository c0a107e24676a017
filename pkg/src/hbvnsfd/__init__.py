"""Generalized hepatitis B epidemic model with a dynamically consistent NSFD scheme."""

from .incidence import (
    DomainError,
    Family,
    HypothesisReport,
    IncidenceSpec,
    check_hypotheses,
    eval_f,
    eval_fstar,
    eval_partials,
)
from .model import (
    EquilibriumError,
    EquilibriumReport,
    FeasibleBounds,
    ModelParams,
    State,
    Verdict,
    basic_reproduction_number,
    classify_local_stability,
    dfe,
    endemic_equilibrium,
    equilibrium_report,
    feasible_bounds,
    jacobian,
    vector_field,
)
from .solvers import (
    IDENTITY,
    DenominatorFunction,
    PhiKind,
    Scheme,
    SchemeConfig,
    Trajectory,
    euler_step,
    nsfd_step,
    rk2_step,
    simulate,
)

__version__ = "0.1.0"
