"""Time stepping: the positivity-preserving NSFD map plus Euler and RK2.

The NSFD update is explicit but sequential: S first, then I using the new
S, then R using both.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .model import State, _check_state, _rhs

__all__ = [
    "PhiKind",
    "DenominatorFunction",
    "IDENTITY",
    "Scheme",
    "SchemeConfig",
    "Trajectory",
    "nsfd_step",
    "euler_step",
    "rk2_step",
    "simulate",
    "RK2_TABLEAU",
]

# k1 = F(x), k2 = F(x + dt k1), x + dt/2 (k1 + k2)
RK2_TABLEAU = "explicit-trapezoid (k2 at x+dt*k1, weights 1/2,1/2)"


class PhiKind(str, Enum):
    IDENTITY = "identity"
    EXP_RELAXATION = "exp_relaxation"


@dataclass(frozen=True)
class DenominatorFunction:
    """phi(dt) used in place of dt in the difference quotients."""

    kind: PhiKind = PhiKind.IDENTITY
    rate: float = 0.0

    def __post_init__(self):
        kind = PhiKind(self.kind)
        object.__setattr__(self, "kind", kind)
        rate = float(self.rate)
        if kind is PhiKind.EXP_RELAXATION:
            if not (math.isfinite(rate) and rate > 0):
                raise ValueError("exp_relaxation needs a positive finite rate")
        elif rate != 0.0:
            raise ValueError("identity phi takes no rate")
        object.__setattr__(self, "rate", rate)

    def __call__(self, dt):
        if self.kind is PhiKind.IDENTITY:
            return dt
        return -math.expm1(-self.rate * dt) / self.rate

    def to_dict(self):
        if self.kind is PhiKind.IDENTITY:
            return {"kind": "identity"}
        return {"kind": self.kind.value, "rate": self.rate}

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict) or "kind" not in doc:
            raise ValueError("phi must be an object with a 'kind'")
        unknown = sorted(set(doc) - {"kind", "rate"})
        if unknown:
            raise ValueError(f"unknown phi keys: {', '.join(unknown)}")
        try:
            kind = PhiKind(doc["kind"])
        except ValueError:
            raise ValueError(f"unknown phi kind {doc['kind']!r}") from None
        if kind is PhiKind.IDENTITY and "rate" in doc:
            raise ValueError("identity phi takes no rate")
        if kind is PhiKind.EXP_RELAXATION and "rate" not in doc:
            raise ValueError("exp_relaxation phi needs a rate")
        return cls(kind, doc.get("rate", 0.0))


IDENTITY = DenominatorFunction()


class Scheme(str, Enum):
    NSFD = "nsfd"
    EULER = "euler"
    RK2 = "rk2"


@dataclass(frozen=True)
class SchemeConfig:
    scheme: Scheme
    dt: float
    steps: int
    phi: Optional[DenominatorFunction] = None
    stride: int = 1

    def __post_init__(self):
        scheme = Scheme(self.scheme)
        object.__setattr__(self, "scheme", scheme)
        dt = float(self.dt)
        if not (math.isfinite(dt) and dt > 0):
            raise ValueError(f"dt must be finite and positive, got {self.dt!r}")
        object.__setattr__(self, "dt", dt)
        if isinstance(self.steps, bool) or int(self.steps) != self.steps or self.steps < 0:
            raise ValueError(f"steps must be a non-negative integer, got {self.steps!r}")
        object.__setattr__(self, "steps", int(self.steps))
        if int(self.stride) != self.stride or self.stride < 1:
            raise ValueError("stride must be a positive integer")
        if scheme is Scheme.NSFD:
            if self.phi is None:
                object.__setattr__(self, "phi", IDENTITY)
        elif self.phi is not None:
            raise ValueError("phi is only meaningful for the nsfd scheme")

    def to_dict(self):
        out = {"scheme": self.scheme.value, "dt": self.dt, "steps": self.steps}
        if self.phi is not None:
            out["phi"] = self.phi.to_dict()
        if self.stride != 1:
            out["stride"] = self.stride
        if self.scheme is Scheme.RK2:
            out["tableau"] = RK2_TABLEAU
        return out

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ValueError("scheme config must be an object")
        allowed = {"scheme", "dt", "steps", "phi", "stride", "tableau"}
        unknown = sorted(set(doc) - allowed)
        if unknown:
            raise ValueError(f"unknown scheme keys: {', '.join(unknown)}")
        for key in ("scheme", "dt", "steps"):
            if key not in doc:
                raise ValueError(f"scheme config is missing {key!r}")
        try:
            scheme = Scheme(doc["scheme"])
        except ValueError:
            raise ValueError(f"unknown scheme {doc['scheme']!r}") from None
        if "tableau" in doc and (scheme is not Scheme.RK2 or doc["tableau"] != RK2_TABLEAU):
            raise ValueError("tableau does not match the built-in RK2 tableau")
        phi = DenominatorFunction.from_dict(doc["phi"]) if "phi" in doc else None
        return cls(scheme, doc["dt"], doc["steps"], phi, doc.get("stride", 1))


# ---------------------------------------------------------------------------
# single steps (unchecked kernels first)


def _nsfd(params, S, I, R, ph):
    g = params.incidence._fstar(S, I)
    S1 = (S + ph * params.Lambda) / (1.0 + ph * g + ph * params.s_out)
    I1 = (I + ph * S1 * g) / (1.0 + ph * params.i_out)
    R1 = (R + ph * params.beta * I1 + ph * params.nu * S1) / (1.0 + ph * params.mu0)
    return S1, I1, R1


def _euler(params, S, I, R, dt):
    dS, dI, dR = _rhs(params, S, I, R)
    return S + dt * dS, I + dt * dI, R + dt * dR


def _rk2(params, S, I, R, dt):
    a1, b1, c1 = _rhs(params, S, I, R)
    a2, b2, c2 = _rhs(params, S + dt * a1, I + dt * b1, R + dt * c1)
    h = 0.5 * dt
    return S + h * (a1 + a2), I + h * (b1 + b2), R + h * (c1 + c2)


def nsfd_step(params, x, dt, phi=IDENTITY):
    """One NSFD step; non-negative for every dt > 0 and x >= 0."""
    _check_state(x)
    if not dt > 0:
        raise ValueError("dt must be positive")
    return State(*_nsfd(params, *x, phi(dt)))


def euler_step(params, x, dt):
    return State(*_euler(params, *x, dt))


def rk2_step(params, x, dt):
    return State(*_rk2(params, *x, dt))


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray
    config: SchemeConfig
    params_fingerprint: str
    blew_up: bool = False
    blow_up_step: Optional[int] = None

    def __len__(self):
        return len(self.t)

    @property
    def final(self):
        return State(*map(float, self.states[-1]))

    def min_component(self):
        return float(self.states.min())

    def to_csv(self, dest=None):
        """Write `t,S,I,R` rows using round-trip float formatting.

        Returns the text when `dest` is None.
        """
        buf = io.StringIO()
        buf.write("t,S,I,R\n")
        for t, (S, I, R) in zip(self.t.tolist(), self.states.tolist()):
            buf.write(f"{t!r},{S!r},{I!r},{R!r}\n")
        text = buf.getvalue()
        if dest is None:
            return text
        with open(dest, "w", newline="") as fh:
            fh.write(text)
        return None


def read_csv(path):
    """Inverse of Trajectory.to_csv: returns (t, states)."""
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "t,S,I,R":
            raise ValueError(f"unexpected CSV header {header!r}")
        rows = [list(map(float, line.split(","))) for line in fh if line.strip()]
    arr = np.array(rows, dtype=float).reshape(-1, 4)
    return arr[:, 0], arr[:, 1:]


_KERNELS = {Scheme.NSFD: _nsfd, Scheme.EULER: _euler, Scheme.RK2: _rk2}


def simulate(params, x0, config):
    """Iterate `config.steps` steps from x0, keeping every `stride`-th state.

    A non-finite component stops the run; the trajectory is truncated at the
    last finite state and flagged.
    """
    _check_state(x0)
    step = _KERNELS[config.scheme]
    h = config.phi(config.dt) if config.scheme is Scheme.NSFD else config.dt
    stride = config.stride
    S, I, R = map(float, x0)
    ts = [0.0]
    xs = [(S, I, R)]
    blew_up, where = False, None
    isfinite = math.isfinite
    for n in range(1, config.steps + 1):
        try:
            S, I, R = step(params, S, I, R, h)
        except (ZeroDivisionError, OverflowError):
            S = I = R = math.nan
        if not (isfinite(S) and isfinite(I) and isfinite(R)):
            blew_up, where = True, n
            break
        if n % stride == 0:
            ts.append(n * config.dt)
            xs.append((S, I, R))
    return Trajectory(
        t=np.array(ts),
        states=np.array(xs, dtype=float).reshape(-1, 3),
        config=config,
        params_fingerprint=params.fingerprint(),
        blew_up=blew_up,
        blow_up_step=where,
    )
