"""Continuous SIR-type hepatitis B model with a general incidence function.

    S' = Lambda - f(S, I) - (mu0 + nu) S
    I' = f(S, I) - (mu0 + mu1 + beta) I
    R' = beta I + nu S - mu0 R
"""

from __future__ import annotations

import cmath
import hashlib
import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np

from .incidence import DomainError, IncidenceSpec

__all__ = [
    "EquilibriumError",
    "ModelParams",
    "State",
    "FeasibleBounds",
    "Verdict",
    "StabilityVerdict",
    "EquilibriumReport",
    "vector_field",
    "dfe",
    "basic_reproduction_number",
    "endemic_equilibrium",
    "jacobian",
    "classify_local_stability",
    "feasible_bounds",
    "equilibrium_report",
]

MARGINAL_TOL = 1e-10


class EquilibriumError(RuntimeError):
    """The endemic root could not be bracketed (H5 violated or R0 inconsistent)."""


class State(NamedTuple):
    S: float
    I: float
    R: float


def _check_state(x):
    for name, v in zip("SIR", x):
        if not math.isfinite(v) or v < 0:
            raise DomainError(f"{name} must be finite and non-negative, got {v!r}")


_PARAM_KEYS = ("lambda", "mu0", "mu1", "beta", "nu", "incidence")


@dataclass(frozen=True)
class ModelParams:
    Lambda: float
    mu0: float
    mu1: float
    beta: float
    nu: float
    incidence: IncidenceSpec

    def __post_init__(self):
        for name in ("Lambda", "mu0", "mu1", "beta", "nu"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise DomainError(f"{name} must be a number")
            v = float(v)
            if not math.isfinite(v):
                raise DomainError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if self.Lambda <= 0 or self.mu0 <= 0:
            raise DomainError("Lambda and mu0 must be positive")
        if min(self.mu1, self.beta, self.nu) < 0:
            raise DomainError("mu1, beta and nu must be non-negative")
        if not isinstance(self.incidence, IncidenceSpec):
            raise DomainError("incidence must be an IncidenceSpec")

    # total outflow rates of S and I
    @property
    def s_out(self):
        return self.mu0 + self.nu

    @property
    def i_out(self):
        return self.mu0 + self.mu1 + self.beta

    @property
    def p(self):
        return max(self.s_out, self.i_out)

    @property
    def q(self):
        return min(self.s_out, self.i_out)

    @property
    def r1(self):
        return min(self.beta, self.nu)

    @property
    def r2(self):
        return max(self.beta, self.nu)

    def to_dict(self):
        return {
            "lambda": self.Lambda,
            "mu0": self.mu0,
            "mu1": self.mu1,
            "beta": self.beta,
            "nu": self.nu,
            "incidence": self.incidence.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ValueError("params block must be an object")
        unknown = sorted(set(doc) - set(_PARAM_KEYS))
        if unknown:
            raise ValueError(f"unknown params keys: {', '.join(unknown)}")
        missing = [k for k in _PARAM_KEYS if k not in doc]
        if missing:
            raise ValueError(f"missing params keys: {', '.join(missing)}")
        return cls(
            Lambda=doc["lambda"],
            mu0=doc["mu0"],
            mu1=doc["mu1"],
            beta=doc["beta"],
            nu=doc["nu"],
            incidence=IncidenceSpec.from_dict(doc["incidence"]),
        )

    def fingerprint(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **changes):
        kw = dict(
            Lambda=self.Lambda, mu0=self.mu0, mu1=self.mu1,
            beta=self.beta, nu=self.nu, incidence=self.incidence,
        )
        kw.update(changes)
        return ModelParams(**kw)


def _rhs(params, S, I, R):
    # unchecked; the reference schemes call this outside the positive cone
    f = params.incidence._value(S, I)
    return (
        params.Lambda - f - params.s_out * S,
        f - params.i_out * I,
        params.beta * I + params.nu * S - params.mu0 * R,
    )


def vector_field(params, x):
    """(dS/dt, dI/dt, dR/dt) at a non-negative state."""
    _check_state(x)
    return _rhs(params, *x)


def dfe(params):
    S0 = params.Lambda / params.s_out
    return State(S0, 0.0, params.nu * params.Lambda / (params.mu0 * params.s_out))


def basic_reproduction_number(params):
    S0 = params.Lambda / params.s_out
    return params.incidence.dfdI_at_zero(S0) / params.i_out


def _pair_residual(params, S, I):
    f = params.incidence._value(S, I)
    return max(abs(params.Lambda - f - params.s_out * S), abs(f - params.i_out * I))


def _bisect(F, lo, hi, max_iter):
    # F(lo) > 0 > F(hi); returns both ends of the final bracket
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if F(mid) > 0:
            lo = mid
        else:
            hi = mid
    return lo, hi


def endemic_equilibrium(params, max_iter=200):
    """Unique endemic state, or None when R0 <= 1.

    Bisection on F(I) = f(S(I), I)/I - (mu0+mu1+beta) with
    S(I) = (Lambda - (mu0+mu1+beta) I)/(mu0+nu); F is strictly decreasing
    under H5, so a single sign change brackets the root. When R0 is large
    S* is tiny and S(I) loses digits to cancellation, so the same sign
    change is also bisected with S as the unknown and the candidate with
    the smaller residual is kept.
    """
    if basic_reproduction_number(params) <= 1.0:
        return None
    Lam, m, k = params.Lambda, params.i_out, params.s_out
    top = Lam / m
    eps = 1e-14 * top
    lo, hi = eps, top - eps

    def F(I):
        S = (Lam - m * I) / k
        return params.incidence._value(S, I) / I - m

    if not (F(lo) > 0 > F(hi)):
        raise EquilibriumError(
            f"endemic root not bracketed on ({lo:.3g}, {hi:.3g}): "
            f"F(lo)={F(lo):.3g}, F(hi)={F(hi):.3g}"
        )
    candidates = []
    for I in _bisect(F, lo, hi, max_iter):
        candidates.append(((Lam - m * I) / k, I))

    def G(S):
        # F(I(S)) is increasing in S, negate so the bracket reads G(lo) > 0 > G(hi)
        I = (Lam - k * S) / m
        return -(params.incidence._value(S, I) / I - m)

    S_top = Lam / k
    s_lo, s_hi = 1e-14 * S_top, S_top * (1 - 1e-14)
    if G(s_lo) > 0 > G(s_hi):
        for S in _bisect(G, s_lo, s_hi, max_iter):
            candidates.append((S, (Lam - k * S) / m))

    S, I = min(candidates, key=lambda c: _pair_residual(params, *c))
    resid = _pair_residual(params, S, I)
    if resid > 1e-12 * Lam:
        raise EquilibriumError(f"bisection stalled with residual {resid:.3g}")
    return State(S, I, (params.beta * I + params.nu * S) / params.mu0)


def jacobian(params, x):
    """3x3 Jacobian of the vector field at x (analytic partials of f)."""
    _check_state(x)
    fS, fI = params.incidence._partials(x[0], x[1])
    return np.array(
        [
            [-fS - params.s_out, -fI, 0.0],
            [fS, fI - params.i_out, 0.0],
            [params.nu, params.beta, -params.mu0],
        ]
    )


def _block_eigenvalues(trace, det):
    disc = cmath.sqrt(trace * trace / 4.0 - det)
    return (trace / 2.0 + disc, trace / 2.0 - disc)


class Verdict(str, Enum):
    LOCALLY_STABLE = "LocallyStable"
    UNSTABLE = "Unstable"
    MARGINAL = "Marginal"


@dataclass(frozen=True)
class StabilityVerdict:
    which: str
    verdict: Verdict
    eigenvalues: tuple
    trace: float
    det: float
    eigen_consistent: bool = True

    def to_dict(self):
        return {
            "which": self.which,
            "verdict": self.verdict.value,
            "eigenvalues": [[z.real, z.imag] for z in self.eigenvalues],
            "trace": self.trace,
            "det": self.det,
            "eigen_consistent": self.eigen_consistent,
        }


def classify_local_stability(params, which="DFE"):
    """Local stability of the DFE or DEE from the structure of the Jacobian.

    The R column is (0, 0, -mu0), so one eigenvalue is always -mu0 and the
    other two belong to the upper-left 2x2 block.
    """
    which = which.upper()
    if which == "DFE":
        x = dfe(params)
        J = jacobian(params, x)
        tr, det = J[0, 0] + J[1, 1], J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        r0 = basic_reproduction_number(params)
        lam2 = params.incidence.dfdI_at_zero(x.S) - params.i_out
        eig = (complex(-params.s_out), complex(lam2), complex(-params.mu0))
        if abs(r0 - 1.0) <= MARGINAL_TOL:
            verdict = Verdict.MARGINAL
        elif r0 < 1.0:
            verdict = Verdict.LOCALLY_STABLE
        else:
            verdict = Verdict.UNSTABLE
        consistent = (max(z.real for z in eig) < 0) == (verdict is Verdict.LOCALLY_STABLE) or (
            verdict is Verdict.MARGINAL
        )
        return StabilityVerdict("DFE", verdict, eig, float(tr), float(det), consistent)
    if which == "DEE":
        x = endemic_equilibrium(params)
        if x is None:
            raise ValueError("DEE requested but R0 <= 1, no endemic equilibrium exists")
        J = jacobian(params, x)
        tr = float(J[0, 0] + J[1, 1])
        det = float(J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0])
        l1, l2 = _block_eigenvalues(tr, det)
        eig = (l1, l2, complex(-params.mu0))
        stable = tr < 0 and det > 0
        verdict = Verdict.LOCALLY_STABLE if stable else Verdict.UNSTABLE
        consistent = (max(z.real for z in eig) < 0) == stable
        return StabilityVerdict("DEE", verdict, eig, tr, det, consistent)
    raise ValueError(f"which must be 'DFE' or 'DEE', got {which!r}")


@dataclass(frozen=True)
class FeasibleBounds:
    S_max: float
    SI_min: float
    SI_max: float
    R_min: float
    R_max: float


def feasible_bounds(params):
    Lam, mu0 = params.Lambda, params.mu0
    p, q = params.p, params.q
    return FeasibleBounds(
        S_max=Lam / params.s_out,
        SI_min=Lam / p,
        SI_max=Lam / q,
        R_min=params.r1 * Lam / (p * mu0),
        R_max=params.r2 * Lam / (q * mu0),
    )


@dataclass(frozen=True)
class EquilibriumReport:
    dfe: State
    r0: float
    dee: Optional[State]
    dfe_stability: StabilityVerdict
    dee_stability: Optional[StabilityVerdict]

    @property
    def gas(self):
        """The globally attracting equilibrium: DEE when it exists, else DFE."""
        return self.dee if self.dee is not None else self.dfe

    def to_dict(self):
        return {
            "r0": self.r0,
            "dfe": list(self.dfe),
            "dee": None if self.dee is None else list(self.dee),
            "dfe_stability": self.dfe_stability.to_dict(),
            "dee_stability": None if self.dee_stability is None else self.dee_stability.to_dict(),
            "gas": "DEE" if self.dee is not None else "DFE",
        }

    @classmethod
    def from_dict(cls, doc):
        def verdict(d):
            if d is None:
                return None
            return StabilityVerdict(
                d["which"], Verdict(d["verdict"]),
                tuple(complex(re, im) for re, im in d["eigenvalues"]),
                d["trace"], d["det"], d["eigen_consistent"],
            )

        return cls(
            dfe=State(*doc["dfe"]),
            r0=doc["r0"],
            dee=None if doc["dee"] is None else State(*doc["dee"]),
            dfe_stability=verdict(doc["dfe_stability"]),
            dee_stability=verdict(doc["dee_stability"]),
        )

    def to_text(self):
        def fmt(x):
            return "(" + ", ".join(f"{v:.2f}" for v in x) + ")"

        def eigs(v):
            return ", ".join(
                f"{z.real:.6g}" if z.imag == 0 else f"{z.real:.6g}{z.imag:+.6g}j" for z in v.eigenvalues
            )

        lines = [
            f"R0 = {self.r0:.4f}",
            f"DFE = {fmt(self.dfe)}",
            f"DFE stability = {self.dfe_stability.verdict.value}",
            f"DFE eigenvalues = {eigs(self.dfe_stability)}",
        ]
        if self.dee is None:
            lines.append("DEE = none")
        else:
            lines += [
                f"DEE = {fmt(self.dee)}",
                f"DEE stability = {self.dee_stability.verdict.value}",
                f"DEE eigenvalues = {eigs(self.dee_stability)}",
            ]
        g = "DEE" if self.dee is not None else "DFE"
        lines.append(f"GAS = {g} {fmt(self.gas)}")
        return "\n".join(lines) + "\n"


def equilibrium_report(params):
    dee = endemic_equilibrium(params)
    return EquilibriumReport(
        dfe=dfe(params),
        r0=basic_reproduction_number(params),
        dee=dee,
        dfe_stability=classify_local_stability(params, "DFE"),
        dee_stability=None if dee is None else classify_local_stability(params, "DEE"),
    )
