import math
import time

import numpy as np
import pytest

from hbvnsfd import IncidenceSpec, ModelParams, basic_reproduction_number

SEED = 20240917

EXAMPLE1 = ModelParams(
    Lambda=0.8, mu0=0.000232, mu1=0.0000547, beta=0.8, nu=0.001,
    incidence=IncidenceSpec.crowley_martin(0.5, 0.8, 0.9, 0.95),
)
EXAMPLE2 = ModelParams(
    Lambda=0.232, mu0=0.000232, mu1=0.0000547, beta=0.25, nu=0.0016,
    incidence=IncidenceSpec.crowley_martin(0.0009, 0.25, 0.5, 0.75),
)
EXAMPLE3 = ModelParams(
    Lambda=0.2, mu0=0.000232, mu1=0.0000547, beta=0.025, nu=0.0016,
    incidence=IncidenceSpec.crowley_martin(0.005, 0.5, 0.1, 0.2),
)
# closed-form endemic state (2, 3, 5), R0 = 2.5
BILINEAR = ModelParams(
    Lambda=1.0, mu0=0.1, mu1=0.0, beta=0.1, nu=0.1,
    incidence=IncidenceSpec.bilinear(0.1),
)


def _lu(rng, lo, hi):
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def random_incidence(rng, family=None):
    families = ["bilinear", "saturated_i", "saturated_si", "crowley_martin", "hill_gamma"]
    family = family or families[rng.integers(len(families))]
    alpha = _lu(rng, 1e-3, 2.0)
    if family == "bilinear":
        return IncidenceSpec.bilinear(alpha)
    if family == "saturated_i":
        return IncidenceSpec.saturated_i(alpha, _lu(rng, 1e-3, 2.0))
    if family == "saturated_si":
        return IncidenceSpec.saturated_si(alpha, _lu(rng, 1e-3, 2.0), _lu(rng, 1e-3, 2.0))
    if family == "crowley_martin":
        return IncidenceSpec.crowley_martin(
            alpha, _lu(rng, 1e-3, 2.0), _lu(rng, 1e-3, 2.0), _lu(rng, 1e-3, 2.0)
        )
    return IncidenceSpec.hill_gamma(alpha, _lu(rng, 1e-3, 2.0))


def random_params(rng, family=None, mu0_range=(1e-4, 0.5), r0=None, max_tries=10_000):
    """Log-uniform parameter draw; r0 in {None, 'above', 'below'} filters by threshold."""
    for _ in range(max_tries):
        p = ModelParams(
            Lambda=_lu(rng, 0.05, 10.0),
            mu0=_lu(rng, *mu0_range),
            mu1=_lu(rng, 1e-5, 0.5),
            beta=_lu(rng, 1e-3, 1.0),
            nu=_lu(rng, 1e-4, 1.0),
            incidence=random_incidence(rng, family),
        )
        R0 = basic_reproduction_number(p)
        if r0 is None or (r0 == "above" and R0 > 1.0 + 1e-6) or (r0 == "below" and R0 <= 1.0):
            return p
    raise RuntimeError("could not draw parameters with the requested R0")


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


# acceptance criteria summary -------------------------------------------------

ACCEPTANCE_LINES = []
_SESSION_START = []


def pytest_sessionstart(session):
    _SESSION_START.append(time.perf_counter())


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    elapsed = time.perf_counter() - _SESSION_START[0]
    lines = []
    for line in ACCEPTANCE_LINES:
        # criterion 10 also carries the full-suite time budget
        if line.startswith("criterion 10:") and elapsed >= 120:
            line = line.replace("PASS", "FAIL", 1)
        if line.startswith("criterion 10:"):
            line += f", suite runtime {elapsed:.1f} s (< 120 s)"
        lines.append(line)
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
