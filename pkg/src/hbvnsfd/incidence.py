"""Incidence functions f(S, I) and a sampled checker for hypotheses H1-H5.

Every built-in family is a special case of

    f(S, I) = alpha * S * I / (1 + a*S + b*I + c*S*I)

so values, partial derivatives and the per-susceptible rate f* share a
single closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

__all__ = [
    "DomainError",
    "Family",
    "IncidenceSpec",
    "HypothesisReport",
    "Witness",
    "eval_f",
    "eval_partials",
    "eval_fstar",
    "check_hypotheses",
    "hypothesis_grid",
]


class DomainError(ValueError):
    """Raised for negative or non-finite populations or coefficients."""


class Family(str, Enum):
    BILINEAR = "bilinear"
    SATURATED_I = "saturated_i"
    SATURATED_SI = "saturated_si"
    CROWLEY_MARTIN = "crowley_martin"
    HILL_GAMMA = "hill_gamma"


# coefficients each family reads besides alpha
_USED = {
    Family.BILINEAR: (),
    Family.SATURATED_I: ("b",),
    Family.SATURATED_SI: ("a", "b"),
    Family.CROWLEY_MARTIN: ("a", "b", "c"),
    Family.HILL_GAMMA: ("gamma",),
}
_COEFFS = ("a", "b", "c", "gamma")


@dataclass(frozen=True)
class IncidenceSpec:
    """An incidence family together with its coefficients.

    Coefficients a family does not read must be left at zero.
    """

    family: Family
    alpha: float
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    gamma: float = 0.0
    # effective (a, b, c) of the common rational form
    _abc: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        family = Family(self.family)
        object.__setattr__(self, "family", family)
        for name in ("alpha",) + _COEFFS:
            value = float(getattr(self, name))
            if not math.isfinite(value) or value < 0:
                raise DomainError(f"{name} must be finite and non-negative, got {value!r}")
            object.__setattr__(self, name, value)
        for name in _COEFFS:
            if name not in _USED[family] and getattr(self, name) != 0.0:
                raise DomainError(f"{family.value} does not use coefficient {name!r}")
        if family is Family.HILL_GAMMA:
            abc = (0.0, self.gamma, 0.0)
        else:
            abc = (self.a, self.b, self.c)
        object.__setattr__(self, "_abc", abc)

    # constructors -------------------------------------------------------

    @classmethod
    def bilinear(cls, alpha):
        return cls(Family.BILINEAR, alpha)

    @classmethod
    def saturated_i(cls, alpha, b):
        return cls(Family.SATURATED_I, alpha, b=b)

    @classmethod
    def saturated_si(cls, alpha, a, b):
        return cls(Family.SATURATED_SI, alpha, a=a, b=b)

    @classmethod
    def crowley_martin(cls, alpha, a, b, c):
        return cls(Family.CROWLEY_MARTIN, alpha, a=a, b=b, c=c)

    @classmethod
    def hill_gamma(cls, alpha, gamma):
        return cls(Family.HILL_GAMMA, alpha, gamma=gamma)

    # canonical textual form ---------------------------------------------

    def to_dict(self):
        out = {"family": self.family.value, "alpha": self.alpha}
        for name in _USED[self.family]:
            out[name] = getattr(self, name)
        return out

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ValueError("incidence block must be an object")
        if "family" not in doc:
            raise ValueError("incidence block is missing 'family'")
        try:
            family = Family(doc["family"])
        except ValueError:
            known = ", ".join(f.value for f in Family)
            raise ValueError(f"unknown incidence family {doc['family']!r} (known: {known})") from None
        allowed = {"family", "alpha", *_USED[family]}
        unknown = sorted(set(doc) - allowed)
        if unknown:
            raise ValueError(f"keys not used by {family.value}: {', '.join(unknown)}")
        missing = sorted(allowed - set(doc))
        if missing:
            raise ValueError(f"{family.value} requires: {', '.join(missing)}")
        kwargs = {k: doc[k] for k in allowed if k != "family"}
        for k, v in kwargs.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ValueError(f"incidence.{k} must be a number")
        return cls(family, **kwargs)

    # unchecked evaluation (scalars or numpy arrays) ---------------------

    def _denominator(self, S, I):
        a, b, c = self._abc
        return 1.0 + a * S + b * I + c * S * I

    def _fstar(self, S, I):
        val = self.alpha * I / self._denominator(S, I)
        if isinstance(S, np.ndarray):
            return np.where(S > 0, val, 0.0)
        return val if S > 0 else 0.0

    def _partials(self, S, I):
        a, b, c = self._abc
        D = self._denominator(S, I)
        D2 = D * D
        return self.alpha * I * (1.0 + b * I) / D2, self.alpha * S * (1.0 + a * S) / D2

    def _value(self, S, I):
        # f = S * f*, so S * eval_fstar reproduces eval_f bit for bit
        return S * (self.alpha * I / self._denominator(S, I))

    # checked scalar API -------------------------------------------------

    def value(self, S, I):
        _check_pair(S, I)
        return self._value(S, I)

    def partials(self, S, I):
        _check_pair(S, I)
        return self._partials(S, I)

    def fstar(self, S, I):
        _check_pair(S, I)
        return self._fstar(S, I)

    def fstar_limit(self, I):
        """Right limit of f*(S, I) as S -> 0+."""
        return self.alpha * I / (1.0 + self._abc[1] * I)

    def eta_bound(self, I_max):
        """sup of f(S, I)/S over S >= 0, 0 <= I <= I_max (attained at S = 0)."""
        b = self._abc[1]
        return self.alpha * I_max / (1.0 + b * I_max)

    def dfdI_at_zero(self, S):
        """df/dI on the line I = 0, i.e. alpha*S/(1 + a*S)."""
        return self._partials(S, 0.0)[1]


def _check_pair(S, I):
    for name, v in (("S", S), ("I", I)):
        if not math.isfinite(v) or v < 0:
            raise DomainError(f"{name} must be finite and non-negative, got {v!r}")


def eval_f(spec, S, I):
    """Incidence flow f(S, I); exactly zero when S or I is zero."""
    return spec.value(S, I)


def eval_partials(spec, S, I):
    """Analytic (df/dS, df/dI)."""
    return spec.partials(S, I)


def eval_fstar(spec, S, I):
    """Per-susceptible rate f(S, I)/S, defined as 0 at S = 0."""
    return spec.fstar(S, I)


# ---------------------------------------------------------------------------
# hypothesis checker


@dataclass(frozen=True)
class Witness:
    hypothesis: str
    S: float
    I: float
    value: float


@dataclass
class HypothesisReport:
    verdicts: dict
    eta_estimate: float
    eta_analytic: Optional[float]
    dfdS_sup: float
    witnesses: list
    grid_n: int
    S_max: float
    I_max: float

    @property
    def all_pass(self):
        return all(self.verdicts.values())

    def to_dict(self):
        return {
            "verdicts": {k: ("pass" if v else "fail") for k, v in self.verdicts.items()},
            "eta_estimate": self.eta_estimate,
            "eta_analytic": self.eta_analytic,
            "dfdS_sup": self.dfdS_sup,
            "witnesses": [
                {"hypothesis": w.hypothesis, "S": w.S, "I": w.I, "value": w.value}
                for w in self.witnesses
            ],
            "grid_n": self.grid_n,
            "S_max": self.S_max,
            "I_max": self.I_max,
        }


def hypothesis_grid(upper, n, lower_ratio=1e-6):
    """0 followed by n-1 log-spaced points ending at `upper`."""
    return np.concatenate(([0.0], np.geomspace(upper * lower_ratio, upper, n - 1)))


def check_hypotheses(spec, S_max, I_max, grid_n=64):
    """Scan H1-H5 on a grid_n x grid_n log grid over [0, S_max] x [0, I_max].

    `spec` may be any object exposing ``value(S, I)`` and ``partials(S, I)``;
    this is how test-only incidence functions are fed in. H2 is an existence
    claim, so on the box it holds when sup f/S is finite; when the spec also
    offers ``eta_bound(I_max)`` the scanned supremum must not exceed it.
    Only the first counterexample per hypothesis is kept as a witness.
    The I = 0 line is excluded from the H3 scan since df/dS vanishes there
    for every family of this form.
    """
    if not (S_max > 0 and I_max > 0):
        raise ValueError("S_max and I_max must be positive")
    if grid_n < 16:
        raise ValueError("grid_n must be at least 16")

    S_axis = hypothesis_grid(S_max, grid_n)
    I_axis = hypothesis_grid(I_max, grid_n)
    bound_fn = getattr(spec, "eta_bound", None)
    eta_bound = float(bound_fn(I_max)) if bound_fn is not None else math.inf
    ok = {h: True for h in ("H1", "H2", "H3", "H4", "H5")}
    witnesses = []
    eta = 0.0
    fs_sup = 0.0

    def fail(h, S, I, value):
        if ok[h]:
            ok[h] = False
            witnesses.append(Witness(h, float(S), float(I), float(value)))

    for S in S_axis:
        for I in I_axis:
            S, I = float(S), float(I)
            f = spec.value(S, I)
            fS, fI = spec.partials(S, I)
            # H1: zero on the axes, positive inside
            if S == 0.0 or I == 0.0:
                if f != 0.0:
                    fail("H1", S, I, f)
            elif not f > 0.0:
                fail("H1", S, I, f)
            if S > 0.0:
                ratio = f / S
                eta = max(eta, ratio)
                if not math.isfinite(ratio) or ratio > eta_bound * (1.0 + 1e-12):
                    fail("H2", S, I, ratio)
            if I > 0.0:
                if not (fS > 0.0 and math.isfinite(fS)):
                    fail("H3", S, I, fS)
                else:
                    fs_sup = max(fs_sup, fS)
            if not fI >= 0.0:
                fail("H4", S, I, fI)
            h5 = I * fI - f
            if h5 > 1e-12 * max(1.0, abs(f)):
                fail("H5", S, I, h5)

    return HypothesisReport(
        verdicts=ok,
        eta_estimate=eta,
        eta_analytic=None if bound_fn is None else eta_bound,
        dfdS_sup=fs_sup,
        witnesses=witnesses,
        grid_n=grid_n,
        S_max=float(S_max),
        I_max=float(I_max),
    )
